#include "becsim/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "becsim/movement.hpp"

namespace becsim::scheduler {

namespace {

bool same_target(const Edge& a, const Edge& b) {
  return a.kind == b.kind && (a.kind != Edge::Kind::kNode || a.to == b.to);
}

bool edge_order(const Edge& a, const Edge& b) {
  if (a.kind != b.kind) return a.kind < b.kind;
  return a.to < b.to;
}

// Fate of the token for (pair k, destination d) under a plan.
Edge fate_of(const movement::MovementPlan& plan, const VirtualAddress& node,
             core::NativePacketId native) {
  Edge e;
  for (const auto& t : plan.token_moves) {
    if (t.native != native) continue;
    if (t.from != node) break;
    if (!t.to) {
      e.kind = Edge::Kind::kDelivered;
    } else if (*t.to != node) {
      e.kind = Edge::Kind::kNode;
      e.to = *t.to;
    }
    return e;
  }
  return e;
}

std::vector<Edge> fates_for(const core::NetworkState& state, const ControlSpec& spec,
                            UserSet received, const std::vector<VirtualAddress>& nodes) {
  const auto chosen = movement::head_packets(state, spec);
  const auto plan = movement::apply_rpm(state, spec, chosen, received);
  std::vector<Edge> out;
  for (const auto& node : nodes) {
    std::size_t k = 0;
    while (spec[k] != node.queue) ++k;
    const auto native = state.unknown_native(*chosen[k], node.user);
    out.push_back(fate_of(plan, node, *native));
  }
  return out;
}

}  // namespace

double NodeTransitions::probability_to(const Edge& target) const {
  for (const auto& e : edges) {
    if (same_target(e, target)) return e.probability;
  }
  return 0.0;
}

double NodeTransitions::self_probability() const {
  return probability_to(Edge{Edge::Kind::kSelf, {}, 0.0, {}});
}

const ControlTransitions* TransitionTable::find(const ControlSpec& spec) const {
  for (const auto& c : controls) {
    if (c.control == spec) return &c;
  }
  return nullptr;
}

ControlTransitions derive_transitions(const ControlSpec& spec, const channel::ErasureModel& model) {
  const int n = model.n_users();
  if (!coding::validate_bcr(spec, n)) {
    throw Error(Error::Code::kPrecondition, "derive_transitions: invalid control " + spec.label());
  }
  ControlTransitions out;
  out.control = spec;
  std::vector<VirtualAddress> nodes;
  for (const auto& q : spec.pairs()) {
    for (int d : q.destinations.members()) nodes.push_back({q, d});
  }
  for (const auto& node : nodes) out.nodes.push_back({node, {}});

  // Two differently populated canonical states must agree on every fate.
  const core::NetworkState primary = movement::canonical_state(spec, n);
  const core::NetworkState shifted = movement::canonical_state(spec, n, false, 2);
  const std::uint32_t outcomes = 1u << n;
  for (std::uint32_t bits = 0; bits < outcomes; ++bits) {
    const UserSet s = UserSet::from_bits(bits);
    const auto fates = fates_for(primary, spec, s, nodes);
    const auto check = fates_for(shifted, spec, s, nodes);
    const double p = model.reception_probability(s);
    for (std::size_t m = 0; m < nodes.size(); ++m) {
      if (!same_target(fates[m], check[m])) {
        throw Error(Error::Code::kInternal,
                    "canonical states disagree for " + spec.label() + " S=" + s.to_string());
      }
      auto& edges = out.nodes[m].edges;
      auto it = std::find_if(edges.begin(), edges.end(),
                             [&](const Edge& e) { return same_target(e, fates[m]); });
      if (it == edges.end()) {
        edges.push_back(fates[m]);
        it = edges.end() - 1;
      }
      it->probability += p;
      it->outcomes.push_back(s);
    }
  }
  for (auto& node : out.nodes) std::sort(node.edges.begin(), node.edges.end(), edge_order);
  return out;
}

TransitionTable derive_table(const ControlCatalog& catalog, const channel::ErasureModel& model) {
  if (catalog.n_users != model.n_users()) {
    throw Error(Error::Code::kConfig, "catalog and erasure model disagree on the user count");
  }
  TransitionTable table;
  table.n_users = catalog.n_users;
  table.controls.reserve(catalog.controls.size());
  for (const auto& c : catalog.controls) table.controls.push_back(derive_transitions(c, model));
  return table;
}

std::vector<std::string> check_row_stochastic(const TransitionTable& table, double tol) {
  std::vector<std::string> out;
  for (const auto& c : table.controls) {
    for (const auto& node : c.nodes) {
      double total = 0.0;
      for (const auto& e : node.edges) total += e.probability;
      if (std::abs(total - 1.0) > tol) {
        out.push_back(c.control.label() + " " + node.node.to_string() + " sums to " +
                      std::to_string(total));
      }
    }
  }
  return out;
}

std::optional<std::pair<UserSet, UserSet>> symbolic_form(const std::vector<UserSet>& outcomes,
                                                         int n_users) {
  if (outcomes.empty()) return std::nullopt;
  UserSet always = UserSet::all(n_users);
  UserSet ever;
  for (UserSet r : outcomes) {
    always = always & r;
    ever = ever | r;
  }
  const UserSet never = UserSet::all(n_users) - ever;
  const int free_users = n_users - always.size() - never.size();
  if (outcomes.size() != (std::size_t{1} << free_users)) return std::nullopt;
  return std::make_pair(never, always);
}

nlohmann::json to_json(const TransitionTable& table) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& c : table.controls) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& node : c.nodes) {
      nlohmann::json edges = nlohmann::json::array();
      for (const auto& e : node.edges) {
        nlohmann::json edge;
        switch (e.kind) {
          case Edge::Kind::kSelf: edge["to"] = "self"; break;
          case Edge::Kind::kDelivered: edge["to"] = "d"; break;
          case Edge::Kind::kNode: {
            edge["to"] = coding::to_json(e.to.queue);
            edge["to"]["user"] = e.to.user + 1;
            break;
          }
        }
        edge["p"] = e.probability;
        nlohmann::json outcomes = nlohmann::json::array();
        for (UserSet r : e.outcomes) {
          nlohmann::json users = nlohmann::json::array();
          for (int u : r.members()) users.push_back(u + 1);
          outcomes.push_back(users);
        }
        edge["outcomes"] = outcomes;
        if (auto form = symbolic_form(e.outcomes, table.n_users)) {
          edge["symbolic"] = "P[" + form->first.to_string() + "," + form->second.to_string() + "]";
        }
        edges.push_back(std::move(edge));
      }
      nlohmann::json entry = coding::to_json(node.node.queue);
      entry["user"] = node.node.user + 1;
      nodes.push_back({{"node", entry}, {"edges", edges}});
    }
    out[c.control.label()] = {{"pairs", coding::to_json(c.control)}, {"nodes", nodes}};
  }
  return out;
}

MaxWeightScheduler::MaxWeightScheduler(const ControlCatalog& catalog, const TransitionTable& table)
    : catalog_(&catalog) {
  compiled_.reserve(catalog.controls.size());
  for (const auto& spec : catalog.controls) {
    const ControlTransitions* t = table.find(spec);
    if (t == nullptr) {
      throw Error(Error::Code::kConfig, "transition table lacks " + spec.label());
    }
    std::vector<CompiledNode> nodes;
    for (const auto& node : t->nodes) {
      CompiledNode c;
      c.source = slot_of(node.node);
      for (const auto& e : node.edges) {
        if (e.kind == Edge::Kind::kSelf) {
          c.self_probability += e.probability;
        } else if (e.kind == Edge::Kind::kNode) {
          c.edges.push_back({slot_of(e.to), e.probability});
        }
      }
      nodes.push_back(std::move(c));
    }
    compiled_.push_back(std::move(nodes));
  }
  k_.assign(addresses_.size(), 0.0);
}

int MaxWeightScheduler::slot_of(const VirtualAddress& address) {
  auto it = std::find(address_keys_.begin(), address_keys_.end(), address.key());
  if (it != address_keys_.end()) return static_cast<int>(it - address_keys_.begin());
  addresses_.push_back(address);
  address_keys_.push_back(address.key());
  return static_cast<int>(addresses_.size() - 1);
}

void MaxWeightScheduler::refresh(const NetworkState& state) {
  const auto& counters = state.counters();
  for (std::size_t s = 0; s < address_keys_.size(); ++s) {
    auto it = counters.find(address_keys_[s]);
    k_[s] = it == counters.end() ? 0.0 : static_cast<double>(it->second);
  }
}

bool MaxWeightScheduler::eligible(std::size_t control) const {
  for (const auto& node : compiled_[control]) {
    if (k_[static_cast<std::size_t>(node.source)] <= 0.0) return false;
  }
  return true;
}

double MaxWeightScheduler::reward(std::size_t control) const {
  double total = 0.0;
  for (const auto& node : compiled_[control]) {
    const double k = k_[static_cast<std::size_t>(node.source)];
    double c = k - node.self_probability * k;
    for (const auto& e : node.edges) c -= e.probability * k_[static_cast<std::size_t>(e.target)];
    total += std::max(c, 0.0);
  }
  return total;
}

std::optional<std::size_t> MaxWeightScheduler::select(const NetworkState& state) {
  refresh(state);
  std::optional<std::size_t> best;
  double best_reward = -1.0;
  for (std::size_t c = 0; c < compiled_.size(); ++c) {
    if (!eligible(c)) continue;
    const double r = reward(c);
    if (r > best_reward) {
      best_reward = r;
      best = c;
    }
  }
  return best;
}

std::vector<double> MaxWeightScheduler::rewards(const NetworkState& state) {
  refresh(state);
  std::vector<double> out(compiled_.size(), -1.0);
  for (std::size_t c = 0; c < compiled_.size(); ++c) {
    if (eligible(c)) out[c] = reward(c);
  }
  return out;
}

std::optional<ControlSpec> select_control(const NetworkState& state, const ControlCatalog& catalog,
                                          const TransitionTable& table) {
  MaxWeightScheduler scheduler(catalog, table);
  auto idx = scheduler.select(state);
  if (!idx) return std::nullopt;
  return catalog.controls[*idx];
}

std::optional<ControlSpec> random_control(const NetworkState& state, channel::Rng& rng) {
  std::vector<core::QueueIndex> nonempty;
  for (const auto& [index, packets] : state.real_queues()) {
    if (!packets.empty()) nonempty.push_back(index);
  }
  if (nonempty.empty()) return std::nullopt;
  for (std::size_t i = nonempty.size(); i > 1; --i) {
    std::swap(nonempty[i - 1], nonempty[rng.below(i)]);
  }
  std::vector<core::QueueIndex> picked;
  for (const auto& q : nonempty) {
    bool ok = true;
    for (const auto& p : picked) ok = ok && coding::compatible(p, q);
    if (ok) picked.push_back(q);
  }
  return ControlSpec(std::move(picked));
}

}  // namespace becsim::scheduler
