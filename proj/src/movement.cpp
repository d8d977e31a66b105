#include "becsim/movement.hpp"

#include <algorithm>
#include <set>

namespace becsim::movement {

std::string to_string(RpmCase c) {
  switch (c) {
    case RpmCase::kErased: return "erased";
    case RpmCase::kAllDelivered: return "all-delivered";
    case RpmCase::kListenerShift: return "listener-shift";
    case RpmCase::kMergeUp: return "merge-up";
    case RpmCase::kIgnored: return "ignored";
    case RpmCase::kShrunkShift: return "shrunk-shift";
  }
  return "unknown";
}

UserSet tilde_l(const ControlSpec& spec, int n_users) {
  const int nu = spec.size();
  if (nu <= 1) return UserSet::all(n_users);
  UserSet out;
  for (int u = 0; u < n_users; ++u) {
    int count = 0;
    for (const auto& q : spec.pairs()) count += q.listeners.contains(u) ? 1 : 0;
    if (count >= nu - 1) out.insert(u);
  }
  return out;
}

namespace {

void listener_shift(const ControlSpec& spec, UserSet s, int n_users, Route& r) {
  const UserSet s_tilde = s & tilde_l(spec, n_users);
  for (std::size_t k = 0; k < spec.pairs().size(); ++k) {
    const QueueIndex& q = spec[k];
    PairFate& fate = r.pairs[k];
    const UserSet remaining = q.destinations - s;
    if (remaining.empty()) {
      fate.kind = PairFate::Kind::kExit;
      continue;
    }
    const QueueIndex target{q.listeners | (q.destinations & s) | s_tilde, remaining};
    if (!core::validate_cc(target, n_users)) {
      throw Error(Error::Code::kInternal, "listener shift produced " + target.to_string());
    }
    fate.target = target;
    fate.kind = target == q ? PairFate::Kind::kStay : PairFate::Kind::kMove;
  }
}

}  // namespace

Route route(const ControlSpec& spec, UserSet received, int n_users) {
  Route r;
  r.received = received;
  r.effective = received;
  r.pairs.resize(spec.pairs().size());
  for (std::size_t k = 0; k < spec.pairs().size(); ++k) {
    r.pairs[k].decoders = spec[k].destinations & received;
  }
  if (received.empty()) {
    r.rpm_case = RpmCase::kErased;
    r.retransmit = true;
    return r;
  }
  const UserSet all_d = coding::destinations_of(spec);
  const UserSet involved = coding::involved_users(spec);
  if (all_d.is_subset_of(received)) {
    r.rpm_case = RpmCase::kAllDelivered;
    for (auto& f : r.pairs) f.kind = PairFate::Kind::kExit;
    return r;
  }
  const UserSet outsiders = received - involved;
  if (outsiders.empty()) {
    r.rpm_case = RpmCase::kListenerShift;
    listener_shift(spec, received, n_users, r);
    return r;
  }

  const QueueIndex merged{coding::listeners_intersection(spec) | received, all_d - received};
  int widest = 0;
  for (const auto& q : spec.pairs()) widest = std::max(widest, q.level());
  const bool cut_formula = merged.level() > widest;
  const bool cut = spec.size() == 1 || cut_formula;
  if (spec.size() == 1 && !cut_formula) {
    throw Error(Error::Code::kInternal, "single-pair merge test failed for " + spec.label());
  }
  if (cut) {
    if (!core::validate_cc(merged, n_users)) {
      throw Error(Error::Code::kInternal, "merge produced " + merged.to_string());
    }
    r.rpm_case = RpmCase::kMergeUp;
    r.merged_target = merged;
    for (auto& f : r.pairs) {
      f.kind = PairFate::Kind::kMerged;
      f.target = merged;
    }
    return r;
  }

  const UserSet shrunk = received & involved;
  if (shrunk.empty()) {
    r.rpm_case = RpmCase::kIgnored;
    r.effective = UserSet{};
    for (auto& f : r.pairs) f.kind = PairFate::Kind::kStay;
    return r;
  }
  Route again = route(spec, shrunk, n_users);
  if (again.rpm_case != RpmCase::kListenerShift) {
    throw Error(Error::Code::kInternal, "shrunk reception set for " + spec.label() +
                                            " landed in case " + to_string(again.rpm_case));
  }
  again.rpm_case = RpmCase::kShrunkShift;
  again.received = received;
  return again;
}

MovementPlan apply_rpm(const NetworkState& state, const ControlSpec& spec,
                       const std::vector<const RealPacket*>& chosen, UserSet received) {
  auto fail = [](const std::string& what) {
    throw Error(Error::Code::kPrecondition, "apply_rpm: " + what);
  };
  const int n = state.n_users();
  if (!coding::validate_bcr(spec, n)) fail(spec.label() + " violates the coding rule");
  if (chosen.size() != spec.pairs().size()) fail("one packet per pair required");
  if (!received.is_subset_of(UserSet::all(n))) fail("reception set outside the user range");

  // own[k][d]: the unknown native for destination d carried by chosen[k].
  std::vector<std::vector<std::pair<int, NativePacketId>>> own(chosen.size());
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const RealPacket* p = chosen[k];
    if (p == nullptr || p->location != spec[k]) fail("packet not in " + spec[k].to_string());
    const auto* dq = state.queue(spec[k]);
    const bool present = dq != nullptr && std::any_of(dq->begin(), dq->end(), [&](const auto& x) {
                           return x.id == p->id;
                         });
    if (!present) fail("packet " + std::to_string(p->id) + " missing from its queue");
    int unknown_total = 0;
    for (const auto& c : p->constituents) unknown_total += state.is_outstanding(c) ? 1 : 0;
    for (int d : spec[k].destinations.members()) {
      auto native = state.unknown_native(*p, d);
      if (!native) fail("destination " + std::to_string(d + 1) + " has no unknown native");
      own[k].emplace_back(d, *native);
    }
    if (unknown_total != spec[k].destinations.size()) {
      fail("packet " + std::to_string(p->id) + " hides natives from non-destinations");
    }
  }

  const Route r = route(spec, received, n);
  MovementPlan plan;
  plan.rpm_case = r.rpm_case;
  plan.received = received;
  plan.effective = r.effective;
  plan.retransmit = r.retransmit;
  if (r.rpm_case == RpmCase::kErased || r.rpm_case == RpmCase::kIgnored) return plan;

  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const PairFate& fate = r.pairs[k];
    const QueueIndex& from = spec[k];
    for (const auto& [d, native] : own[k]) {
      const VirtualAddress source{from, d};
      if (fate.decoders.contains(d)) {
        plan.decoded.push_back({d, native});
        plan.token_moves.push_back({native, source, std::nullopt});
      } else if (fate.kind == PairFate::Kind::kMove || fate.kind == PairFate::Kind::kMerged) {
        plan.token_moves.push_back({native, source, VirtualAddress{fate.target, d}});
      } else if (fate.kind == PairFate::Kind::kExit) {
        throw Error(Error::Code::kInternal, "exiting packet still carries a token");
      }
    }
    switch (fate.kind) {
      case PairFate::Kind::kStay: break;
      case PairFate::Kind::kExit:
        plan.real_moves.push_back({chosen[k]->id, from, RealMove::Kind::kExit, {}});
        break;
      case PairFate::Kind::kMove:
        plan.real_moves.push_back({chosen[k]->id, from, RealMove::Kind::kMove, fate.target});
        break;
      case PairFate::Kind::kMerged:
        plan.real_moves.push_back({chosen[k]->id, from, RealMove::Kind::kMerged, fate.target});
        break;
    }
  }

  if (r.merged_target) {
    MergedPacket merged;
    merged.to = *r.merged_target;
    for (const RealPacket* p : chosen) {
      merged.constituents = core::xor_constituents(merged.constituents, p->constituents);
      merged.sources.push_back(p->id);
    }
    for (const auto& per_pair : own) {
      for (const auto& [d, native] : per_pair) {
        if (!std::binary_search(merged.constituents.begin(), merged.constituents.end(), native)) {
          throw Error(Error::Code::kInternal, "merge cancelled an undecoded native");
        }
      }
    }
    plan.merged = std::move(merged);
  }
  return plan;
}

void commit(NetworkState& state, const MovementPlan& plan) {
  for (const auto& t : plan.token_moves) state.remove_token(t.from, t.native);
  for (const auto& d : plan.decoded) state.mark_decoded(d.user, d.native);
  for (const auto& m : plan.real_moves) {
    RealPacket p = state.take_packet(m.from, m.packet_id);
    if (m.kind == RealMove::Kind::kMove) state.push_packet(m.to, std::move(p));
  }
  if (plan.merged) {
    state.push_packet(plan.merged->to,
                      RealPacket{state.next_packet_id(), plan.merged->constituents, plan.merged->to});
  }
  for (const auto& t : plan.token_moves) {
    if (t.to) state.push_token(*t.to, t.native);
  }
}

std::vector<const RealPacket*> head_packets(const NetworkState& state, const ControlSpec& spec) {
  std::vector<const RealPacket*> out;
  out.reserve(spec.pairs().size());
  for (const auto& q : spec.pairs()) {
    const auto* dq = state.queue(q);
    if (dq == nullptr || dq->empty()) return {};
    out.push_back(&dq->front());
  }
  return out;
}

Transmission transmit(NetworkState& state, const ControlSpec& spec, UserSet received) {
  Transmission tx;
  const auto chosen = head_packets(state, spec);
  if (chosen.empty()) {
    throw Error(Error::Code::kPrecondition, "transmit: " + spec.label() + " has an empty queue");
  }
  for (const RealPacket* p : chosen) {
    tx.composite = core::xor_constituents(tx.composite, p->constituents);
    tx.packet_ids.push_back(p->id);
  }
  tx.plan = apply_rpm(state, spec, chosen, received);

  UserSet unknown_owners;
  for (const auto& c : tx.composite) {
    if (state.is_outstanding(c)) unknown_owners.insert(c.owner);
  }
  if (unknown_owners != coding::destinations_of(spec)) {
    tx.violations.push_back("composite for " + spec.label() + " hides natives from " +
                            unknown_owners.to_string());
  }

  if (state.tracks_receivers()) {
    for (int i : received.members()) {
      NativePacketId got{};
      const auto result = state.receiver(i).receive(tx.composite, &got);
      auto expected = std::find_if(tx.plan.decoded.begin(), tx.plan.decoded.end(),
                                   [&](const Decoding& d) { return d.user == i; });
      const bool should_decode = unknown_owners.contains(i);
      const std::string who = "user " + std::to_string(i + 1) + " on " + spec.label();
      if (result == core::Receiver::Result::kUndecodable) {
        tx.violations.push_back(who + ": composite not instantly decodable");
      } else if (should_decode && result != core::Receiver::Result::kDecoded) {
        tx.violations.push_back(who + ": expected to decode");
      } else if (result == core::Receiver::Result::kDecoded &&
                 (expected == tx.plan.decoded.end() || expected->native != got)) {
        tx.violations.push_back(who + ": receiver and transmitter disagree on decoding");
      }
    }
  }
  commit(state, tx.plan);
  return tx;
}

NetworkState canonical_state(const ControlSpec& spec, int n_users, bool track_receivers,
                             int filler) {
  NetworkState state(n_users, track_receivers);
  for (int f = 0; f < filler; ++f) {
    for (int u = 0; u < n_users; ++u) state.admit(u);
  }
  for (const auto& q : spec.pairs()) state.place_packet(q);
  return state;
}

std::uint64_t factorial(int k) {
  std::uint64_t out = 1;
  for (int i = 2; i <= k; ++i) out *= static_cast<std::uint64_t>(i);
  return out;
}

std::vector<std::string> check_stored_overhead(const NetworkState& state) {
  std::vector<std::string> out;
  for (const auto& [index, packets] : state.real_queues()) {
    const int level = index.level();
    if (level < 2) continue;
    const std::uint64_t bound = factorial(level - 1);
    for (const auto& p : packets) {
      if (overhead_of(p) > bound) {
        out.push_back(index.to_string() + " packet " + std::to_string(p.id) + " carries " +
                      std::to_string(overhead_of(p)) + " ids");
      }
    }
  }
  return out;
}

std::vector<std::string> check_progress(const MovementPlan& plan) {
  std::vector<std::string> out;
  for (const auto& m : plan.real_moves) {
    if (m.kind != RealMove::Kind::kMove) continue;
    const bool up = m.to.level() > m.from.level() ||
                    (m.to.level() == m.from.level() && m.to.sublevel() > m.from.sublevel());
    if (!up) out.push_back("move " + m.from.to_string() + " -> " + m.to.to_string() + " not upward");
  }
  if (plan.merged) {
    for (const auto& m : plan.real_moves) {
      if (m.kind == RealMove::Kind::kMerged && plan.merged->to.level() <= m.from.level()) {
        out.push_back("merge into " + plan.merged->to.to_string() + " from " + m.from.to_string() +
                      " not upward");
      }
    }
  }
  return out;
}

namespace {

std::string native_label(const NativePacketId& id) {
  return std::to_string(id.owner + 1) + "#" + std::to_string(id.sequence);
}

nlohmann::json users_json(UserSet s) {
  nlohmann::json out = nlohmann::json::array();
  for (int u : s.members()) out.push_back(u + 1);
  return out;
}

}  // namespace

nlohmann::json to_json(const MovementPlan& plan) {
  nlohmann::json decoded = nlohmann::json::array();
  for (const auto& d : plan.decoded) decoded.push_back({{"user", d.user + 1}, {"native", native_label(d.native)}});
  nlohmann::json moves = nlohmann::json::array();
  for (const auto& m : plan.real_moves) {
    nlohmann::json move = {{"packet", m.packet_id}, {"from", coding::to_json(m.from)}};
    switch (m.kind) {
      case RealMove::Kind::kExit: move["to"] = "exit"; break;
      case RealMove::Kind::kMove: move["to"] = coding::to_json(m.to); break;
      case RealMove::Kind::kMerged: move["to"] = "merged"; break;
    }
    moves.push_back(std::move(move));
  }
  nlohmann::json out = {{"case", to_string(plan.rpm_case)},
                        {"S", users_json(plan.received)},
                        {"decoded", decoded},
                        {"moves", moves},
                        {"retransmit", plan.retransmit}};
  if (plan.merged) out["merged"] = coding::to_json(plan.merged->to);
  return out;
}

}  // namespace becsim::movement
