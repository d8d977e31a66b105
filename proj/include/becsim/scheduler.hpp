#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "becsim/channel.hpp"
#include "becsim/coding.hpp"
#include "becsim/core.hpp"

namespace becsim::scheduler {

using coding::ControlCatalog;
using coding::ControlSpec;
using core::NetworkState;
using core::UserSet;
using core::VirtualAddress;

struct Edge {
  enum class Kind { kSelf, kNode, kDelivered };
  Kind kind = Kind::kSelf;
  VirtualAddress to{};  // valid for kNode
  double probability = 0.0;
  // Reception sets that produce this edge, ascending by bitmask.
  std::vector<UserSet> outcomes{};
};

struct NodeTransitions {
  VirtualAddress node{};
  std::vector<Edge> edges{};

  double probability_to(const Edge& target) const;
  double self_probability() const;
};

struct ControlTransitions {
  ControlSpec control{};
  std::vector<NodeTransitions> nodes{};
};

struct TransitionTable {
  int n_users = 0;
  std::vector<ControlTransitions> controls{};

  const ControlTransitions* find(const ControlSpec& spec) const;
};

ControlTransitions derive_transitions(const ControlSpec& spec, const channel::ErasureModel& model);
TransitionTable derive_table(const ControlCatalog& catalog, const channel::ErasureModel& model);

// Nodes whose outgoing probabilities do not sum to 1.
std::vector<std::string> check_row_stochastic(const TransitionTable& table, double tol = 1e-12);

// (G, S) such that the outcome set is exactly {R : S ⊆ R, R ∩ G = ∅}.
std::optional<std::pair<UserSet, UserSet>> symbolic_form(const std::vector<UserSet>& outcomes,
                                                         int n_users);

nlohmann::json to_json(const TransitionTable& table);

// Max-weight selection over a fixed catalog. Counter lookups are compiled to
// dense slots once; each call refreshes them from the state.
class MaxWeightScheduler {
 public:
  MaxWeightScheduler(const ControlCatalog& catalog, const TransitionTable& table);

  // Catalog index of the best eligible control; nullopt when none is
  // eligible. Ties go to the lowest index.
  std::optional<std::size_t> select(const NetworkState& state);
  // Reward per control, or -1 when the control is not eligible.
  std::vector<double> rewards(const NetworkState& state);

  const ControlCatalog& catalog() const { return *catalog_; }

 private:
  struct CompiledEdge {
    int target = -1;
    double probability = 0.0;
  };
  struct CompiledNode {
    int source = 0;
    double self_probability = 0.0;
    std::vector<CompiledEdge> edges{};
  };

  void refresh(const NetworkState& state);
  double reward(std::size_t control) const;
  bool eligible(std::size_t control) const;
  int slot_of(const VirtualAddress& address);

  const ControlCatalog* catalog_;
  std::vector<VirtualAddress> addresses_;
  std::vector<std::uint64_t> address_keys_;
  std::vector<double> k_;
  std::vector<std::vector<CompiledNode>> compiled_;
};

std::optional<ControlSpec> select_control(const NetworkState& state, const ControlCatalog& catalog,
                                          const TransitionTable& table);

// Random nonempty queue, then greedily adds compatible nonempty queues in
// random order. Used to stress the movement rules without a catalog.
std::optional<ControlSpec> random_control(const NetworkState& state, channel::Rng& rng);

}  // namespace becsim::scheduler
