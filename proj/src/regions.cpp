#include "becsim/regions.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <set>

namespace becsim::regions {

using core::QueueIndex;
using core::VirtualAddress;

namespace {

void check_rates(const std::vector<double>& rates, int n_users) {
  if (static_cast<int>(rates.size()) != n_users) {
    throw Error(Error::Code::kConfig, "one rate per user required");
  }
  for (double r : rates) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw Error(Error::Code::kConfig, "rates must be >= 0");
  }
}

double service(const ErasureModel& model, UserSet prefix) {
  const double miss = model.erased_by_all(prefix);
  if (!(miss < 1.0)) {
    throw Error(Error::Code::kConfig, "degenerate channel: every user in " + prefix.to_string() +
                                          " always misses");
  }
  return 1.0 - miss;
}

}  // namespace

OuterMargin outer_bound_margin(const std::vector<double>& rates, const ErasureModel& model) {
  const int n = model.n_users();
  check_rates(rates, n);
  const std::size_t subsets = std::size_t{1} << n;
  std::vector<double> best(subsets, 0.0);
  std::vector<int> last(subsets, -1);
  for (std::size_t t = 1; t < subsets; ++t) {
    const UserSet set = UserSet::from_bits(static_cast<std::uint32_t>(t));
    const double s = service(model, set);
    best[t] = -std::numeric_limits<double>::infinity();
    for (int j : set.members()) {
      const double v = best[t & ~(std::size_t{1} << j)] + rates[static_cast<std::size_t>(j)] / s;
      if (v > best[t]) {
        best[t] = v;
        last[t] = j;
      }
    }
  }
  OuterMargin out;
  out.margin = best[subsets - 1];
  out.order.assign(static_cast<std::size_t>(n), 0);
  std::size_t t = subsets - 1;
  for (int pos = n - 1; pos >= 0; --pos) {
    out.order[static_cast<std::size_t>(pos)] = last[t];
    t &= ~(std::size_t{1} << last[t]);
  }
  return out;
}

double ordered_sum(const std::vector<double>& rates, const ErasureModel& model,
                   const std::vector<int>& order) {
  check_rates(rates, model.n_users());
  double total = 0.0;
  UserSet prefix;
  for (int u : order) {
    prefix.insert(u);
    total += rates[static_cast<std::size_t>(u)] / service(model, prefix);
  }
  return total;
}

double FlowCertificate::sum() const {
  double total = 0.0;
  for (const auto& [spec, v] : phi) total += v;
  return total;
}

double FlowCertificate::get(const ControlSpec& spec) const {
  auto it = phi.find(spec);
  return it == phi.end() ? 0.0 : it->second;
}

FeasibilityReport feasibility_check(const std::vector<double>& rates, const FlowCertificate& cert,
                                    const ErasureModel& model, const ControlCatalog* catalog,
                                    const scheduler::TransitionTable* table, double tol) {
  using scheduler::Edge;
  const int n = model.n_users();
  check_rates(rates, n);
  FeasibilityReport report;
  std::map<VirtualAddress, NodeBalance> nodes;
  for (int i = 0; i < n; ++i) {
    const VirtualAddress source{{UserSet{}, UserSet::single(i)}, i};
    nodes[source].arrivals = rates[static_cast<std::size_t>(i)];
  }
  for (const auto& [spec, phi] : cert.phi) {
    if (phi < -tol) {
      report.violations.push_back("negative flow " + std::to_string(phi) + " on " + spec.label());
    }
    if (catalog != nullptr && !catalog->index_of(spec)) {
      report.violations.push_back(spec.label() + " is not in the catalog");
    }
    if (phi == 0.0) continue;
    scheduler::ControlTransitions derived;
    const scheduler::ControlTransitions* t = table != nullptr ? table->find(spec) : nullptr;
    if (t == nullptr) {
      derived = scheduler::derive_transitions(spec, model);
      t = &derived;
    }
    for (const auto& node : t->nodes) {
      for (const auto& e : node.edges) {
        if (e.kind == Edge::Kind::kSelf) continue;
        nodes[node.node].outflow += phi * e.probability;
        if (e.kind == Edge::Kind::kNode) nodes[e.to].inflow += phi * e.probability;
      }
    }
  }
  report.phi_sum = cert.sum();
  if (report.phi_sum > 1.0 + tol) {
    report.violations.push_back("flows sum to " + std::to_string(report.phi_sum));
  }
  report.worst_slack = std::numeric_limits<double>::infinity();
  for (auto& [address, b] : nodes) {
    b.node = address;
    b.slack = b.outflow - b.inflow - b.arrivals;
    if (b.slack < report.worst_slack) {
      report.worst_slack = b.slack;
      report.worst_node = address.to_string();
    }
    if (b.slack < -tol) {
      report.violations.push_back(address.to_string() + " short by " + std::to_string(-b.slack));
    }
    report.nodes.push_back(b);
  }
  report.feasible = report.violations.empty();
  return report;
}

namespace {

// Builders for the four-user certificate. Users are 0-based and sorted so
// that user 0 has the largest rate.
struct Phi4 {
  double eps;
  std::array<double, 4> lambda;

  double a() const { return std::pow(eps, 3) * (1 - eps) / (1 - std::pow(eps, 3)); }
  double single(int i) const { return lambda[static_cast<std::size_t>(i)] / (1 - std::pow(eps, 4)); }
  double pair(int x, int y) const { return a() * single(std::min(x, y)); }
  // Control {(L={x}, D={y,z}), (L={y,z}, D={x})}.
  double pair_single(int /*x*/, int y, int z) const { return a() * pair(y, z); }

  // Candidate value for the three-user control with `x` as the anchor.
  double triple_term(int x, int y, int z) const {
    const double e2 = eps * eps;
    const double q = 1 - eps;
    return (e2 * q * q * (single(x) + pair(x, y) + pair(x, z)) +
            e2 * q * (pair_single(z, x, y) + pair_single(y, x, z))) /
               (1 - e2) -
           pair_single(x, y, z);
  }
  double triple(int i, int j, int k) const {
    std::array<int, 3> s{i, j, k};
    std::sort(s.begin(), s.end());
    return triple_term(s[0], s[1], s[2]);
  }

  // Control {(L={l}, D={i,j,k}), (L={i,j,k}, D={l})}.
  double single_triple(int /*l*/, int i, int j, int k) const {
    std::array<int, 3> s{i, j, k};
    std::sort(s.begin(), s.end());
    return a() * (pair_single(s[2], s[0], s[1]) + pair_single(s[1], s[0], s[2]) +
                  pair_single(s[0], s[1], s[2]) + triple(s[0], s[1], s[2]));
  }

  // Candidate for {(L={k,l}, D={i,j}), (L={i,j}, D={k,l})} with {i,j} as the
  // anchor pair.
  double double_term(int i, int j, int k, int l) const {
    const double e2 = eps * eps;
    const double q = 1 - eps;
    const double level3 = pair(i, j) + pair_single(k, i, j) + pair_single(l, i, j) +
                          pair_single(j, i, k) + pair_single(j, i, l) + pair_single(i, j, k) +
                          pair_single(i, j, l) + triple(i, j, k) + triple(i, j, l);
    return (e2 * q * q * level3 + e2 * q * (single_triple(l, i, j, k) + single_triple(k, i, j, l))) /
           (1 - e2);
  }
  // Anchored on the pair holding user 0.
  double pair_pair(int i, int j, int k, int l) const {
    if (k == 0 || l == 0) return double_term(k, l, i, j);
    return double_term(i, j, k, l);
  }

  std::array<int, 3> others(int i) const {
    std::array<int, 3> out{};
    int n = 0;
    for (int u = 0; u < 4; ++u) {
      if (u != i) out[static_cast<std::size_t>(n++)] = u;
    }
    return out;
  }

  // Candidate for the all-users control anchored on user i.
  double all_term(int i) const {
    const auto o = others(i);
    const double q = 1 - eps;
    double low = single(i);
    for (int x : o) low += pair(i, x);
    for (std::size_t p = 0; p < 3; ++p) {
      for (std::size_t r = p + 1; r < 3; ++r) {
        const int x = o[p];
        const int y = o[r];
        low += pair_single(i, x, y) + pair_single(y, i, x) + pair_single(x, i, y) + triple(i, x, y);
      }
    }
    double mid = 0.0;
    for (std::size_t p = 0; p < 3; ++p) {
      for (std::size_t r = p + 1; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
          if (c == p || c == r) continue;
          mid += single_triple(o[c], i, o[p], o[r]);
        }
      }
    }
    double top = 0.0;
    for (std::size_t p = 0; p < 3; ++p) {
      std::array<int, 2> rest{};
      int m = 0;
      for (std::size_t r = 0; r < 3; ++r) {
        if (r != p) rest[static_cast<std::size_t>(m++)] = o[r];
      }
      top += pair_pair(i, o[p], rest[0], rest[1]);
    }
    return eps * q * q * low + eps * q * mid + eps * top - single_triple(i, o[0], o[1], o[2]);
  }
};

QueueIndex qi(std::initializer_list<int> listeners, std::initializer_list<int> destinations) {
  return {UserSet::of(listeners), UserSet::of(destinations)};
}

void check_sorted_input(const std::vector<double>& rates, double eps) {
  if (rates.size() != 4) throw Error(Error::Code::kConfig, "four rates required");
  if (!(eps >= 0.0 && eps < 1.0)) throw Error(Error::Code::kConfig, "ε must lie in [0, 1)");
  for (double r : rates) {
    if (!(r >= 0.0)) throw Error(Error::Code::kConfig, "rates must be >= 0");
  }
  for (std::size_t i = 1; i < 4; ++i) {
    if (rates[i] > rates[i - 1]) {
      throw Error(Error::Code::kPrecondition, "rates must be sorted in descending order");
    }
  }
  double load = 0.0;
  for (std::size_t i = 0; i < 4; ++i) load += rates[i] / (1 - std::pow(eps, static_cast<int>(i + 1)));
  if (load > 1.0 + 1e-12) {
    throw Error(Error::Code::kPrecondition,
                "rates lie outside the region (load " + std::to_string(load) + ")");
  }
}

// Fills one value per control family from the two callbacks.
template <class Values>
FlowCertificate assemble(const Values& v) {
  FlowCertificate cert;
  auto put = [&](std::vector<QueueIndex> pairs, double value) {
    cert.phi[ControlSpec(std::move(pairs))] = value;
  };
  for (int i = 0; i < 4; ++i) put({qi({}, {i})}, v.single(i));
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) put({qi({j}, {i}), qi({i}, {j})}, v.pair(i, j));
  }
  for (int x = 0; x < 4; ++x) {
    for (int y = 0; y < 4; ++y) {
      for (int z = y + 1; z < 4; ++z) {
        if (y == x || z == x) continue;
        put({qi({x}, {y, z}), qi({y, z}, {x})}, v.pair_single(x, y, z));
      }
    }
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      for (int k = j + 1; k < 4; ++k) {
        put({qi({j, k}, {i}), qi({i, k}, {j}), qi({i, j}, {k})}, v.triple(i, j, k));
      }
    }
  }
  for (int l = 0; l < 4; ++l) {
    std::vector<int> rest;
    for (int u = 0; u < 4; ++u) {
      if (u != l) rest.push_back(u);
    }
    put({qi({l}, {rest[0], rest[1], rest[2]}), qi({rest[0], rest[1], rest[2]}, {l})},
        v.single_triple(l, rest[0], rest[1], rest[2]));
  }
  for (int x = 1; x < 4; ++x) {
    std::vector<int> rest;
    for (int u = 1; u < 4; ++u) {
      if (u != x) rest.push_back(u);
    }
    put({qi({rest[0], rest[1]}, {0, x}), qi({0, x}, {rest[0], rest[1]})},
        v.pair_pair(0, x, rest[0], rest[1]));
  }
  put({qi({1, 2, 3}, {0}), qi({0, 2, 3}, {1}), qi({0, 1, 3}, {2}), qi({0, 1, 2}, {3})}, v.all());
  return cert;
}

struct RecursiveValues {
  Phi4 p;
  double single(int i) const { return p.single(i); }
  double pair(int i, int j) const { return p.pair(i, j); }
  double pair_single(int x, int y, int z) const { return p.pair_single(x, y, z); }
  double triple(int i, int j, int k) const { return p.triple(i, j, k); }
  double single_triple(int l, int i, int j, int k) const { return p.single_triple(l, i, j, k); }
  double pair_pair(int i, int j, int k, int l) const { return p.pair_pair(i, j, k, l); }
  double all() const { return p.all_term(0); }
};

struct ClosedFormValues {
  double e;
  std::array<double, 4> lambda;

  double lam(int i) const { return lambda[static_cast<std::size_t>(i)]; }
  double e4() const { return 1 - std::pow(e, 4); }
  double w() const { return (1 + e + e * e) * (1 + e + e * e); }

  double single(int i) const { return lam(i) / e4(); }
  double pair(int i, int j) const {
    return std::pow(e, 3) * (1 - e) / ((1 - std::pow(e, 3)) * e4()) * lam(std::min(i, j));
  }
  double pair_single(int /*x*/, int y, int z) const {
    const double d = 1 - std::pow(e, 3);
    return std::pow(e, 6) * (1 - e) * (1 - e) / (d * d * e4()) * lam(std::min(y, z));
  }
  double triple(int i, int j, int k) const {
    std::array<int, 3> s{i, j, k};
    std::sort(s.begin(), s.end());
    return e * e / (e4() * w()) * (e4() * lam(s[0]) + e * e * lam(s[0]) - std::pow(e, 4) * lam(s[1]));
  }
  double single_triple(int /*l*/, int i, int j, int k) const {
    return std::pow(e, 5) * (1 - e + e * e) / (e4() * w()) * lam(std::min({i, j, k}));
  }
  double pair_pair(int i, int j, int k, int l) const {
    const int anchor = std::min({i, j, k, l});
    return std::pow(e, 4) * (2 - e + 2 * e * e - std::pow(e, 4)) / (e4() * (1 + e) * w()) *
           lam(anchor);
  }
  double all() const {
    const double c1 = 1 + e + 3 * e * e - 2 * std::pow(e, 3) + 4 * std::pow(e, 4) -
                      3 * std::pow(e, 5) + std::pow(e, 6) + std::pow(e, 7);
    const double c2 = std::pow(e, 4) + std::pow(e, 7);
    return (lam(0) * c1 - lam(1) * c2) * e / (e4() * (1 + e) * w());
  }
};

std::array<double, 4> to_array(const std::vector<double>& rates) {
  return {rates[0], rates[1], rates[2], rates[3]};
}

// Sorting permutation: position p holds the original user with the p-th
// largest rate. Ties keep the original order.
std::vector<int> descending_order(const std::vector<double>& rates) {
  std::vector<int> order(rates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return rates[static_cast<std::size_t>(a)] > rates[static_cast<std::size_t>(b)];
  });
  return order;
}

FlowCertificate sorted_then_relabel(const std::vector<double>& rates, double eps,
                                    FlowCertificate (*build)(const std::vector<double>&, double)) {
  if (rates.size() != 4) throw Error(Error::Code::kConfig, "four rates required");
  const auto order = descending_order(rates);
  std::vector<double> sorted;
  for (int u : order) sorted.push_back(rates[static_cast<std::size_t>(u)]);
  const FlowCertificate inner = build(sorted, eps);
  FlowCertificate out;
  for (const auto& [spec, v] : inner.phi) out.phi[relabel(spec, order)] = v;
  return out;
}

}  // namespace

FlowCertificate build_phi_4user_sorted(const std::vector<double>& rates, double eps) {
  check_sorted_input(rates, eps);
  return assemble(RecursiveValues{Phi4{eps, to_array(rates)}});
}

FlowCertificate phi_4user_closed_form_sorted(const std::vector<double>& rates, double eps) {
  check_sorted_input(rates, eps);
  return assemble(ClosedFormValues{eps, to_array(rates)});
}

FlowCertificate build_phi_4user(const std::vector<double>& rates, double eps) {
  return sorted_then_relabel(rates, eps, &build_phi_4user_sorted);
}

FlowCertificate phi_4user_closed_form(const std::vector<double>& rates, double eps) {
  return sorted_then_relabel(rates, eps, &phi_4user_closed_form_sorted);
}

Phi4Diagnostics phi_4user_diagnostics(const std::vector<double>& sorted_rates, double eps) {
  check_sorted_input(sorted_rates, eps);
  const Phi4 p{eps, to_array(sorted_rates)};
  Phi4Diagnostics d;
  d.triple_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      for (int k = j + 1; k < 4; ++k) {
        const double chosen = p.triple_term(i, j, k);
        const double rival = std::max(p.triple_term(j, i, k), p.triple_term(k, i, j));
        d.triple_margin = std::min(d.triple_margin, chosen - rival);
      }
    }
  }
  d.pair_of_pairs_margin = std::numeric_limits<double>::infinity();
  for (int x = 1; x < 4; ++x) {
    std::vector<int> rest;
    for (int u = 1; u < 4; ++u) {
      if (u != x) rest.push_back(u);
    }
    const double chosen = p.double_term(0, x, rest[0], rest[1]);
    const double rival = p.double_term(rest[0], rest[1], 0, x);
    d.pair_of_pairs_margin = std::min(d.pair_of_pairs_margin, chosen - rival);
  }
  double rival = -std::numeric_limits<double>::infinity();
  for (int i = 1; i < 4; ++i) rival = std::max(rival, p.all_term(i));
  d.all_users_margin = p.all_term(0) - rival;
  const auto cert = assemble(RecursiveValues{p});
  d.min_phi = std::numeric_limits<double>::infinity();
  for (const auto& [spec, v] : cert.phi) d.min_phi = std::min(d.min_phi, v);
  return d;
}

ControlSpec relabel(const ControlSpec& spec, const std::vector<int>& user_map) {
  auto map_set = [&](UserSet s) {
    UserSet out;
    for (int u : s.members()) out.insert(user_map.at(static_cast<std::size_t>(u)));
    return out;
  };
  std::vector<QueueIndex> pairs;
  for (const auto& q : spec.pairs()) pairs.push_back({map_set(q.listeners), map_set(q.destinations)});
  return ControlSpec(std::move(pairs));
}

nlohmann::json to_json(const FlowCertificate& cert) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [spec, v] : cert.phi) out[spec.label()] = v;
  return out;
}

std::string phi_variable(const ControlSpec& spec) { return "phi:" + spec.label(); }

std::string lambda_variable(int user) { return "lambda" + std::to_string(user + 1); }

}  // namespace becsim::regions

namespace becsim::regions {

namespace {

struct SweepChannel {
  nlohmann::json label;
  ErasureModel model;
  std::optional<double> iid_eps;
};

std::vector<SweepChannel> sweep_channels(const nlohmann::json& req, int n) {
  std::vector<SweepChannel> out;
  if (req.contains("erasure")) {
    out.push_back({req.at("erasure"), channel::erasure_from_json(req.at("erasure"), n), std::nullopt});
    return out;
  }
  std::vector<double> grid;
  const auto& eps = req.contains("eps") ? req.at("eps") : nlohmann::json(0.5);
  if (eps.is_array()) {
    grid = eps.get<std::vector<double>>();
  } else {
    grid.push_back(eps.get<double>());
  }
  for (double e : grid) out.push_back({e, ErasureModel::iid(n, e), e});
  return out;
}

}  // namespace

nlohmann::json region_sweep(const nlohmann::json& req) {
  try {
    const int n = req.value("n_users", 4);
    if (n < 1 || n > 10) throw Error(Error::Code::kConfig, "region sweeps support 1..10 users");
    const auto channels = sweep_channels(req, n);
    std::vector<std::vector<double>> rays =
        req.value("rays", std::vector<std::vector<double>>{});
    if (rays.empty()) {
      rays.emplace_back(static_cast<std::size_t>(n), 1.0);
      std::vector<double> ramp;
      for (int i = 0; i < n; ++i) ramp.push_back(static_cast<double>(n - i));
      rays.push_back(std::move(ramp));
    }
    auto rng = channel::make_rng(req.value("seed", std::uint64_t{1}), channel::Stream::kAux);
    const int random_rays = req.value("random_rays", 0);
    for (int r = 0; r < random_rays; ++r) {
      std::vector<double> ray;
      for (int i = 0; i < n; ++i) ray.push_back(0.05 + rng.uniform());
      rays.push_back(std::move(ray));
    }
    const auto scales = req.value("scales", std::vector<double>{0.5, 0.9, 0.99, 1.1});
    const bool check_cert = req.value("check_cert", false);
    const double bits = req.value("packet_bits", 0.0);
    if (check_cert && n != 4) throw Error(Error::Code::kConfig, "certificate checks need 4 users");

    std::optional<ControlCatalog> catalog;
    if (check_cert) catalog = coding::enumerate_controls(4, coding::Restriction::kTable8);

    nlohmann::json rows = nlohmann::json::array();
    for (const auto& ch : channels) {
      if (check_cert && !ch.iid_eps) {
        throw Error(Error::Code::kConfig, "certificate checks need a common erasure probability");
      }
      std::optional<scheduler::TransitionTable> table;
      if (check_cert) table = scheduler::derive_table(*catalog, ch.model);
      for (std::size_t r = 0; r < rays.size(); ++r) {
        if (static_cast<int>(rays[r].size()) != n) {
          throw Error(Error::Code::kConfig, "every ray needs one component per user");
        }
        const double base = outer_bound_margin(rays[r], ch.model).margin;
        if (!(base > 0.0)) throw Error(Error::Code::kConfig, "rays must be nonzero");
        for (double scale : scales) {
          std::vector<double> rates;
          for (double x : rays[r]) rates.push_back(scale * x / base);
          const auto outer = outer_bound_margin(rates, ch.model);
          std::vector<int> order;
          for (int u : outer.order) order.push_back(u + 1);
          nlohmann::json row = {{"eps", ch.label},
                                {"ray", r},
                                {"scale", scale},
                                {"lambda", rates},
                                {"outer_margin", outer.margin},
                                {"order", order},
                                {"inside", outer.margin <= 1.0 + 1e-12}};
          if (bits > 0.0) {
            const auto cap = capacity_bound_margin<double>(rates, ch.model, bits);
            row["capacity_margin"] = cap.margin;
          }
          if (check_cert) {
            nlohmann::json cert;
            try {
              const auto phi = build_phi_4user(rates, *ch.iid_eps);
              const auto report = feasibility_check(rates, phi, ch.model, &*catalog, &*table);
              double min_phi = 0.0;
              for (const auto& [spec, v] : phi.phi) min_phi = std::min(min_phi, v);
              cert = {{"feasible", report.feasible},
                      {"worst_slack", report.worst_slack},
                      {"worst_node", report.worst_node},
                      {"phi_sum", report.phi_sum},
                      {"min_phi", min_phi}};
            } catch (const Error& e) {
              if (e.code() != Error::Code::kPrecondition) throw;
              cert = {{"feasible", false}, {"error", e.what()}};
            }
            row["certificate"] = cert;
          }
          rows.push_back(std::move(row));
        }
      }
    }
    return {{"n_users", n}, {"rows", rows}};
  } catch (const nlohmann::json::exception& e) {
    throw Error(Error::Code::kConfig, std::string("bad region request: ") + e.what());
  }
}

}  // namespace becsim::regions
