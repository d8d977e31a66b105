#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "becsim/channel.hpp"
#include "becsim/coding.hpp"
#include "becsim/fourier_motzkin.hpp"
#include "becsim/scheduler.hpp"

namespace becsim::regions {

using channel::ErasureModel;
using coding::ControlCatalog;
using coding::ControlSpec;
using core::UserSet;

struct OuterMargin {
  double margin = 0.0;
  // order[i] is the user placed at position i.
  std::vector<int> order{};
};

// max over orderings of Σ λ_σ(i) / (1 - ε of the first i users), by a DP over
// user subsets.
OuterMargin outer_bound_margin(const std::vector<double>& rates, const ErasureModel& model);

// Σ λ_σ(i) / (1 - ε_{σ(1..i)}) for one ordering.
double ordered_sum(const std::vector<double>& rates, const ErasureModel& model,
                   const std::vector<int>& order);

template <class Real>
struct CapacityMargin {
  Real margin{};
  // Largest plain ordered sum, for comparison with `margin`.
  Real outer{};
  // 2^{-L/A}·A/L at the maximizing ordering.
  Real gap{};
  std::vector<int> order{};
};

// max over orderings of (ordered sum - 2^{-L/A}·A/L) with
// A = Σ 1/(1 - ε of the first k users). `Real` may be a multiprecision type.
template <class Real>
CapacityMargin<Real> capacity_bound_margin(const std::vector<double>& rates,
                                           const ErasureModel& model, double packet_bits) {
  using std::pow;
  const int n = model.n_users();
  if (static_cast<int>(rates.size()) != n) {
    throw Error(Error::Code::kConfig, "capacity_bound_margin: one rate per user required");
  }
  if (!(packet_bits > 0.0)) throw Error(Error::Code::kConfig, "packet length must be positive");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  CapacityMargin<Real> best;
  bool first = true;
  const Real bits(packet_bits);
  do {
    Real total(0);
    Real a(0);
    UserSet prefix;
    for (int u : order) {
      prefix.insert(u);
      const double miss = model.erased_by_all(prefix);
      if (!(miss < 1.0)) throw Error(Error::Code::kConfig, "degenerate channel: ε = 1");
      const Real denom = Real(1) - Real(miss);
      total += Real(rates[static_cast<std::size_t>(u)]) / denom;
      a += Real(1) / denom;
    }
    const Real gap = pow(Real(2), Real(-bits / a)) * a / bits;
    const Real value = total - gap;
    if (first || value > best.margin) {
      best.margin = value;
      best.gap = gap;
      best.order = order;
    }
    if (first || total > best.outer) best.outer = total;
    first = false;
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

struct FlowCertificate {
  std::map<ControlSpec, double> phi{};

  double sum() const;
  double get(const ControlSpec& spec) const;
};

struct NodeBalance {
  core::VirtualAddress node{};
  double inflow = 0.0;
  double arrivals = 0.0;
  double outflow = 0.0;
  double slack = 0.0;
};

struct FeasibilityReport {
  bool feasible = true;
  double worst_slack = 0.0;
  std::string worst_node{};
  double phi_sum = 0.0;
  std::vector<NodeBalance> nodes{};
  std::vector<std::string> violations{};
};

// Flow balance at every virtual node under μ = μ̂, plus φ >= 0 and Σφ <= 1.
// Controls absent from `table` are derived on the fly.
FeasibilityReport feasibility_check(const std::vector<double>& rates, const FlowCertificate& cert,
                                    const ErasureModel& model, const ControlCatalog* catalog,
                                    const scheduler::TransitionTable* table = nullptr,
                                    double tol = 1e-9);

// Certificate for four users with common erasure probability ε and rates
// sorted in descending order. Throws on unsorted or infeasible rates.
FlowCertificate build_phi_4user_sorted(const std::vector<double>& rates, double eps);
// The same values from the explicit closed forms.
FlowCertificate phi_4user_closed_form_sorted(const std::vector<double>& rates, double eps);
// Sorts, builds, and relabels controls back to the caller's user numbering.
FlowCertificate build_phi_4user(const std::vector<double>& rates, double eps);
FlowCertificate phi_4user_closed_form(const std::vector<double>& rates, double eps);

// How far each selected value sits above the competing lower bounds it had
// to dominate; negative values mean another term was larger.
struct Phi4Diagnostics {
  double triple_margin = 0.0;
  double pair_of_pairs_margin = 0.0;
  double all_users_margin = 0.0;
  double min_phi = 0.0;
};
Phi4Diagnostics phi_4user_diagnostics(const std::vector<double>& sorted_rates, double eps);

ControlSpec relabel(const ControlSpec& spec, const std::vector<int>& user_map);

nlohmann::json to_json(const FlowCertificate& cert);

// The stability inequalities over variables "phi:<label>" and "lambda<i>":
// one flow-balance row per virtual node, φ >= 0, Σφ <= 1. `pmf` supplies
// reception-set probabilities in the scalar type.
template <class Scalar>
Polyhedron<Scalar> stability_system(const ControlCatalog& catalog,
                                    const scheduler::TransitionTable& table,
                                    const std::function<Scalar(UserSet)>& pmf);

// Sweeps rate points scale·ray/outer_margin(ray) over erasure settings and
// reports margins, plus certificate checks for four iid users on request.
// See the README for the request fields.
nlohmann::json region_sweep(const nlohmann::json& request);

std::string phi_variable(const ControlSpec& spec);
std::string lambda_variable(int user);

}  // namespace becsim::regions

#include "becsim/regions_impl.hpp"
