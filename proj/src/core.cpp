#include "becsim/core.hpp"

#include <algorithm>
#include <array>

namespace becsim::core {

UserSet UserSet::of(std::initializer_list<int> users) {
  UserSet s;
  for (int u : users) s.insert(u);
  return s;
}

UserSet UserSet::of(const std::vector<int>& users) {
  UserSet s;
  for (int u : users) s.insert(u);
  return s;
}

std::vector<int> UserSet::members() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(size()));
  for (std::uint32_t b = bits_; b != 0; b &= b - 1) out.push_back(std::countr_zero(b));
  return out;
}

std::string UserSet::to_string() const {
  std::string out = "{";
  bool first_member = true;
  for (int u : members()) {
    if (!first_member) out += ',';
    out += std::to_string(u + 1);
    first_member = false;
  }
  return out + "}";
}

std::string UserSet::compact() const {
  if (empty()) return "-";
  const bool wide = (bits_ >> 9) != 0;
  std::string out;
  for (int u : members()) {
    if (wide && !out.empty()) out += '.';
    out += std::to_string(u + 1);
  }
  return out;
}

std::string QueueIndex::to_string() const {
  return "Q[" + listeners.compact() + "|" + destinations.compact() + "]";
}

std::string VirtualAddress::to_string() const {
  return "V[" + queue.listeners.compact() + "|" + queue.destinations.compact() + "](" +
         std::to_string(user + 1) + ")";
}

bool validate_cc(const QueueIndex& index, int n_users) {
  const UserSet universe = UserSet::all(n_users);
  if (!index.listeners.is_subset_of(universe) || !index.destinations.is_subset_of(universe)) {
    return false;
  }
  if (index.listeners.intersects(index.destinations)) return false;
  if (index.destinations.empty()) return false;
  if (index.listeners.empty() && index.destinations.size() != 1) return false;
  return true;
}

std::vector<NativePacketId> xor_constituents(const std::vector<NativePacketId>& a,
                                             const std::vector<NativePacketId>& b) {
  std::vector<NativePacketId> out;
  out.reserve(a.size() + b.size());
  std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out),
                                [](const NativePacketId& x, const NativePacketId& y) {
                                  return x.key() < y.key();
                                });
  return out;
}

namespace {

std::vector<std::uint64_t> keys_of(const std::vector<NativePacketId>& ids) {
  std::vector<std::uint64_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(id.key());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::uint64_t> sym_diff(const std::vector<std::uint64_t>& a,
                                    const std::vector<std::uint64_t>& b) {
  std::vector<std::uint64_t> out;
  out.reserve(a.size() + b.size());
  std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace

std::vector<std::uint64_t> KnowledgeSpan::reduce(std::vector<std::uint64_t> v) const {
  // Eliminate pivots from the top down; the residue is canonical modulo the span.
  std::vector<std::uint64_t> residue;
  while (!v.empty()) {
    const std::uint64_t top = v.back();
    auto it = rows_.find(top);
    if (it == rows_.end()) {
      residue.push_back(top);
      v.pop_back();
      continue;
    }
    v = sym_diff(v, it->second);
  }
  std::reverse(residue.begin(), residue.end());
  return residue;
}

bool KnowledgeSpan::contains(const std::vector<std::uint64_t>& combination) const {
  return reduce(combination).empty();
}

bool KnowledgeSpan::insert(const std::vector<std::uint64_t>& combination) {
  std::vector<std::uint64_t> residue = reduce(combination);
  if (residue.empty()) return false;
  rows_.emplace(residue.back(), std::move(residue));
  return true;
}

Receiver::Result Receiver::receive(const std::vector<NativePacketId>& constituents,
                                   NativePacketId* decoded) {
  std::vector<NativePacketId> unknown;
  for (const auto& c : constituents) {
    if (c.owner == user_ && decoded_.count(c.key()) == 0) unknown.push_back(c);
  }
  const std::vector<std::uint64_t> keys = keys_of(constituents);
  if (unknown.empty()) {
    span_.insert(keys);
    return Result::kNothingNew;
  }
  Result result = Result::kUndecodable;
  if (unknown.size() == 1 && can_reconstruct_without(constituents, unknown.front())) {
    decoded_.insert(unknown.front().key());
    if (decoded != nullptr) *decoded = unknown.front();
    result = Result::kDecoded;
  }
  span_.insert(keys);
  return result;
}

bool Receiver::can_reconstruct(const std::vector<NativePacketId>& constituents) const {
  return span_.contains(keys_of(constituents));
}

bool Receiver::can_reconstruct_without(const std::vector<NativePacketId>& constituents,
                                       NativePacketId own) const {
  std::vector<std::uint64_t> keys = keys_of(constituents);
  auto it = std::lower_bound(keys.begin(), keys.end(), own.key());
  if (it == keys.end() || *it != own.key()) return false;
  keys.erase(it);
  return span_.contains(keys);
}

void Receiver::learn(const std::vector<NativePacketId>& constituents) {
  span_.insert(keys_of(constituents));
}

void Receiver::flush() {
  span_.clear();
  decoded_.clear();
}

NetworkState::NetworkState(int n_users, bool track_receivers)
    : n_users_(n_users),
      track_receivers_(track_receivers),
      next_sequence_(static_cast<std::size_t>(n_users), 0),
      delivered_(static_cast<std::size_t>(n_users), 0) {
  if (n_users < 1 || n_users > kMaxUsers) {
    throw Error(Error::Code::kConfig, "n_users must be in 1..16");
  }
  receivers_.reserve(static_cast<std::size_t>(n_users));
  for (int u = 0; u < n_users; ++u) receivers_.emplace_back(u);
}

NativePacketId NetworkState::admit(int user) {
  const NativePacketId id{static_cast<std::uint8_t>(user),
                          next_sequence_[static_cast<std::size_t>(user)]++};
  outstanding_.insert(id.key());
  ++arrivals_;
  const QueueIndex q{UserSet{}, UserSet::single(user)};
  push_packet(q, RealPacket{next_packet_id(), {id}, q});
  push_token(VirtualAddress{q, user}, id);
  return id;
}

std::uint64_t NetworkState::place_packet(const QueueIndex& queue) {
  if (!validate_cc(queue, n_users_)) {
    throw Error(Error::Code::kPrecondition, "place_packet: invalid queue " + queue.to_string());
  }
  std::vector<NativePacketId> natives;
  for (int d : queue.destinations.members()) {
    const NativePacketId id{static_cast<std::uint8_t>(d),
                            next_sequence_[static_cast<std::size_t>(d)]++};
    outstanding_.insert(id.key());
    ++arrivals_;
    natives.push_back(id);
  }
  std::sort(natives.begin(), natives.end(),
            [](const NativePacketId& a, const NativePacketId& b) { return a.key() < b.key(); });
  if (track_receivers_) {
    for (int l : queue.listeners.members()) receiver(l).learn(natives);
    for (const auto& own : natives) {
      for (const auto& other : natives) {
        if (other != own) receiver(own.owner).learn({other});
      }
    }
  }
  const std::uint64_t id = next_packet_id();
  push_packet(queue, RealPacket{id, natives, queue});
  for (const auto& n : natives) push_token(VirtualAddress{queue, n.owner}, n);
  return id;
}

const std::deque<RealPacket>* NetworkState::queue(const QueueIndex& index) const {
  auto it = real_.find(index);
  return it == real_.end() ? nullptr : &it->second;
}

std::size_t NetworkState::queue_length(const QueueIndex& index) const {
  auto it = real_.find(index);
  return it == real_.end() ? 0 : it->second.size();
}

std::uint32_t NetworkState::counter(const VirtualAddress& address) const {
  auto it = counters_.find(address.key());
  return it == counters_.end() ? 0 : it->second;
}

bool NetworkState::is_decoded(NativePacketId id) const {
  if (id.owner >= n_users_) return false;
  return id.sequence < next_sequence_[id.owner] && outstanding_.count(id.key()) == 0;
}

std::optional<NativePacketId> NetworkState::unknown_native(const RealPacket& packet,
                                                           int user) const {
  for (const auto& c : packet.constituents) {
    if (c.owner == user && outstanding_.count(c.key()) != 0) return c;
  }
  return std::nullopt;
}

RealPacket NetworkState::take_packet(const QueueIndex& queue, std::uint64_t packet_id) {
  auto it = real_.find(queue);
  if (it == real_.end()) {
    throw Error(Error::Code::kInternal, "take_packet: empty queue " + queue.to_string());
  }
  auto& dq = it->second;
  auto pos = std::find_if(dq.begin(), dq.end(),
                          [&](const RealPacket& p) { return p.id == packet_id; });
  if (pos == dq.end()) {
    throw Error(Error::Code::kInternal, "take_packet: packet not in " + queue.to_string());
  }
  RealPacket out = std::move(*pos);
  dq.erase(pos);
  if (dq.empty()) real_.erase(it);
  --q_hat_;
  return out;
}

void NetworkState::push_packet(const QueueIndex& queue, RealPacket packet) {
  packet.location = queue;
  real_[queue].push_back(std::move(packet));
  ++q_hat_;
}

void NetworkState::remove_token(const VirtualAddress& address, NativePacketId native) {
  auto it = virtual_.find(address);
  if (it == virtual_.end()) {
    throw Error(Error::Code::kInternal, "remove_token: empty " + address.to_string());
  }
  auto& dq = it->second;
  auto pos = std::find(dq.begin(), dq.end(), native);
  if (pos == dq.end()) {
    throw Error(Error::Code::kInternal, "remove_token: token not in " + address.to_string());
  }
  dq.erase(pos);
  if (dq.empty()) virtual_.erase(it);
  auto c = counters_.find(address.key());
  if (c != counters_.end() && --c->second == 0) counters_.erase(c);
  --v_hat_;
}

void NetworkState::push_token(const VirtualAddress& address, NativePacketId native) {
  virtual_[address].push_back(native);
  ++counters_[address.key()];
  ++v_hat_;
}

void NetworkState::mark_decoded(int user, NativePacketId native) {
  if (native.owner != user || outstanding_.erase(native.key()) == 0) {
    throw Error(Error::Code::kInternal, "mark_decoded: native not outstanding for user " +
                                            std::to_string(user + 1));
  }
  ++decodings_;
  ++delivered_[static_cast<std::size_t>(user)];
}

void NetworkState::flush_receivers() {
  if (!empty()) throw Error(Error::Code::kInternal, "flush with nonempty queues");
  for (auto& r : receivers_) r.flush();
}

void NetworkState::debug_set_counter(const VirtualAddress& address, std::uint32_t value) {
  if (value == 0) {
    counters_.erase(address.key());
  } else {
    counters_[address.key()] = value;
  }
}

std::string to_string(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::kCounterMismatch: return "counter-mismatch";
    case Violation::Kind::kQueueCounterMismatch: return "queue-counter-mismatch";
    case Violation::Kind::kSandwich: return "backlog-sandwich";
    case Violation::Kind::kCompatibility: return "queue-index";
    case Violation::Kind::kConstituents: return "constituents";
    case Violation::Kind::kDestination: return "destination";
    case Violation::Kind::kListener: return "listener";
    case Violation::Kind::kTokenUniqueness: return "token-uniqueness";
    case Violation::Kind::kTokenConservation: return "token-conservation";
  }
  return "unknown";
}

std::vector<Violation> audit_state(const NetworkState& state) {
  std::vector<Violation> out;
  auto report = [&](Violation::Kind kind, std::string where) {
    out.push_back({kind, std::move(where)});
  };

  std::uint64_t token_total = 0;
  for (const auto& [address, tokens] : state.virtual_queues()) {
    token_total += tokens.size();
    if (!address.queue.destinations.contains(address.user)) {
      report(Violation::Kind::kCompatibility, address.to_string() + " user not a destination");
    }
    if (state.counter(address) != tokens.size()) {
      report(Violation::Kind::kCounterMismatch,
             address.to_string() + " K=" + std::to_string(state.counter(address)) +
                 " tokens=" + std::to_string(tokens.size()));
    }
    if (state.queue_length(address.queue) == 0) {
      report(Violation::Kind::kQueueCounterMismatch, address.to_string() + " tokens without packets");
    }
  }
  std::uint64_t counter_total = 0;
  for (const auto& [key, value] : state.counters()) {
    counter_total += value;
    const QueueIndex q{UserSet::from_bits(static_cast<std::uint32_t>(key >> 24) & 0xFFFFu),
                       UserSet::from_bits(static_cast<std::uint32_t>(key >> 8) & 0xFFFFu)};
    const VirtualAddress address{q, static_cast<int>(key & 0xFF)};
    if (value != 0 && state.virtual_queues().count(address) == 0) {
      report(Violation::Kind::kCounterMismatch, address.to_string() + " counter without tokens");
    }
  }

  std::uint64_t packet_total = 0;
  std::unordered_map<std::uint64_t, int> unknown_seen;
  for (const auto& [index, packets] : state.real_queues()) {
    packet_total += packets.size();
    if (!validate_cc(index, state.n_users())) {
      report(Violation::Kind::kCompatibility, index.to_string());
    }
    for (int i : index.destinations.members()) {
      const VirtualAddress address{index, i};
      if (state.counter(address) != packets.size()) {
        report(Violation::Kind::kQueueCounterMismatch, address.to_string() + " K=" +
                                             std::to_string(state.counter(address)) +
                                             " |Q|=" + std::to_string(packets.size()));
      }
    }
    std::array<std::vector<NativePacketId>, kMaxUsers> expected_tokens;
    for (const auto& p : packets) {
      auto where = [&] { return index.to_string() + " packet " + std::to_string(p.id); };
      if (p.location != index) report(Violation::Kind::kConstituents, where() + " location");
      if (p.constituents.empty()) report(Violation::Kind::kConstituents, where() + " empty");
      for (std::size_t k = 1; k < p.constituents.size(); ++k) {
        if (p.constituents[k - 1].key() >= p.constituents[k].key()) {
          report(Violation::Kind::kConstituents, where() + " not a set");
        }
      }
      std::array<int, kMaxUsers> unknown_per_user{};
      for (const auto& c : p.constituents) {
        if (!state.is_outstanding(c)) continue;
        ++unknown_per_user[c.owner];
        ++unknown_seen[c.key()];
        if (!index.destinations.contains(c.owner)) {
          report(Violation::Kind::kDestination,
                 where() + " unknown native for non-destination " + std::to_string(c.owner + 1));
        }
        expected_tokens[c.owner].push_back(c);
      }
      for (int i : index.destinations.members()) {
        if (unknown_per_user[static_cast<std::size_t>(i)] != 1) {
          report(Violation::Kind::kDestination,
                 where() + " user " + std::to_string(i + 1) + " has " +
                     std::to_string(unknown_per_user[static_cast<std::size_t>(i)]) +
                     " unknown natives");
        }
      }
      if (state.tracks_receivers()) {
        for (int l : index.listeners.members()) {
          if (!state.receiver(l).can_reconstruct(p.constituents)) {
            report(Violation::Kind::kListener, where() + " listener " + std::to_string(l + 1));
          }
        }
        for (int d : index.destinations.members()) {
          auto own = state.unknown_native(p, d);
          if (own && !state.receiver(d).can_reconstruct_without(p.constituents, *own)) {
            report(Violation::Kind::kListener,
                   where() + " destination " + std::to_string(d + 1) + " lacks remainder");
          }
        }
      }
    }
    for (int i : index.destinations.members()) {
      auto it = state.virtual_queues().find(VirtualAddress{index, i});
      const auto& expected = expected_tokens[static_cast<std::size_t>(i)];
      const bool match = it != state.virtual_queues().end() &&
                         std::equal(expected.begin(), expected.end(), it->second.begin(),
                                    it->second.end());
      if (!match) {
        report(Violation::Kind::kTokenUniqueness,
               VirtualAddress{index, i}.to_string() + " tokens differ from stored packets");
      }
    }
  }

  for (std::uint64_t key : state.outstanding()) {
    auto it = unknown_seen.find(key);
    const int seen = it == unknown_seen.end() ? 0 : it->second;
    if (seen != 1) {
      const auto id = NativePacketId::from_key(key);
      report(Violation::Kind::kTokenUniqueness,
             "native " + std::to_string(id.owner + 1) + "#" + std::to_string(id.sequence) +
                 " stored in " + std::to_string(seen) + " packets");
    }
  }
  if (unknown_seen.size() != state.outstanding().size()) {
    report(Violation::Kind::kTokenUniqueness, "stored unknown natives not all outstanding");
  }
  if (token_total != state.outstanding().size() ||
      state.arrivals() - state.decodings() != state.outstanding().size()) {
    report(Violation::Kind::kTokenConservation,
           "tokens=" + std::to_string(token_total) +
               " arrivals-decodings=" + std::to_string(state.arrivals() - state.decodings()));
  }
  if (packet_total != state.q_hat() || token_total != state.v_hat() ||
      counter_total != state.v_hat()) {
    report(Violation::Kind::kCounterMismatch, "backlog totals out of sync");
  }
  const std::uint64_t q = packet_total;
  const std::uint64_t v = token_total;
  if (q > v || v > static_cast<std::uint64_t>(state.n_users()) * q) {
    report(Violation::Kind::kSandwich,
           "Q=" + std::to_string(q) + " V=" + std::to_string(v));
  }
  return out;
}

}  // namespace becsim::core
