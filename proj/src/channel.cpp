#include "becsim/channel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace becsim::channel {

Rng::Rng(std::uint64_t master_seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x5eedu};
  engine_.seed(seq);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound <= 1) return 0;
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % bound;
}

namespace {

void check_users(int n_users) {
  if (n_users < 1 || n_users > core::kMaxUsers) {
    throw Error(Error::Code::kConfig, "n_users must be in 1..16");
  }
}

}  // namespace

ErasureModel ErasureModel::independent(std::vector<double> eps) {
  check_users(static_cast<int>(eps.size()));
  ErasureModel m;
  m.n_users_ = static_cast<int>(eps.size());
  m.independent_ = true;
  for (double e : eps) {
    if (!(e >= 0.0 && e <= 1.0)) throw Error(Error::Code::kConfig, "erasure probability outside [0,1]");
  }
  m.eps_ = std::move(eps);
  const std::size_t outcomes = std::size_t{1} << m.n_users_;
  m.pmf_.assign(outcomes, 0.0);
  for (std::size_t bits = 0; bits < outcomes; ++bits) {
    double p = 1.0;
    for (int u = 0; u < m.n_users_; ++u) {
      p *= ((bits >> u) & 1u) ? 1.0 - m.eps_[static_cast<std::size_t>(u)]
                              : m.eps_[static_cast<std::size_t>(u)];
    }
    m.pmf_[bits] = p;
  }
  m.build_sampler();
  return m;
}

ErasureModel ErasureModel::iid(int n_users, double eps) {
  check_users(n_users);
  return independent(std::vector<double>(static_cast<std::size_t>(n_users), eps));
}

ErasureModel ErasureModel::joint(int n_users, std::vector<double> pmf) {
  check_users(n_users);
  if (pmf.size() != (std::size_t{1} << n_users)) {
    throw Error(Error::Code::kConfig, "joint erasure pmf needs 2^N entries");
  }
  double total = 0.0;
  for (double p : pmf) {
    if (!(p >= 0.0)) throw Error(Error::Code::kConfig, "negative reception probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw Error(Error::Code::kConfig, "joint erasure pmf does not sum to 1");
  }
  ErasureModel m;
  m.n_users_ = n_users;
  m.pmf_ = std::move(pmf);
  m.build_sampler();
  return m;
}

void ErasureModel::build_sampler() {
  cumulative_.resize(pmf_.size());
  std::partial_sum(pmf_.begin(), pmf_.end(), cumulative_.begin());
}

double ErasureModel::p_gs(UserSet g, UserSet s) const {
  if (g.intersects(s)) throw Error(Error::Code::kPrecondition, "p_gs: G and S overlap");
  if (independent_) {
    double p = 1.0;
    for (int u : g.members()) p *= eps_[static_cast<std::size_t>(u)];
    for (int u : s.members()) p *= 1.0 - eps_[static_cast<std::size_t>(u)];
    return p;
  }
  // Sum pmf over supersets R of S that avoid G: iterate the free users.
  const std::uint32_t free_mask = UserSet::all(n_users_).bits() & ~(g.bits() | s.bits());
  double p = 0.0;
  for (std::uint32_t extra = free_mask;; extra = (extra - 1) & free_mask) {
    p += pmf_[s.bits() | extra];
    if (extra == 0) break;
  }
  return p;
}

UserSet ErasureModel::sample(Rng& rng) const {
  if (independent_) {
    UserSet out;
    for (int u = 0; u < n_users_; ++u) {
      if (!rng.bernoulli(eps_[static_cast<std::size_t>(u)])) out.insert(u);
    }
    return out;
  }
  const double x = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), x);
  std::size_t idx = static_cast<std::size_t>(it - cumulative_.begin());
  if (idx >= pmf_.size()) idx = pmf_.size() - 1;
  while (pmf_[idx] == 0.0 && idx > 0) --idx;
  return UserSet::from_bits(static_cast<std::uint32_t>(idx));
}

ArrivalModel ArrivalModel::bernoulli(std::vector<double> rates) {
  check_users(static_cast<int>(rates.size()));
  for (double r : rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw Error(Error::Code::kConfig, "bernoulli rate outside [0,1]");
  }
  ArrivalModel m;
  m.mode_ = "bernoulli";
  m.rates_ = std::move(rates);
  return m;
}

ArrivalModel ArrivalModel::poisson(std::vector<double> rates) {
  check_users(static_cast<int>(rates.size()));
  for (double r : rates) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw Error(Error::Code::kConfig, "invalid poisson rate");
  }
  ArrivalModel m;
  m.mode_ = "poisson";
  m.rates_ = std::move(rates);
  return m;
}

ArrivalModel ArrivalModel::joint(int n_users, std::vector<Outcome> outcomes) {
  check_users(n_users);
  ArrivalModel m;
  m.mode_ = "joint";
  m.rates_.assign(static_cast<std::size_t>(n_users), 0.0);
  double total = 0.0;
  for (const auto& o : outcomes) {
    if (o.batch.size() != static_cast<std::size_t>(n_users) || !(o.probability >= 0.0)) {
      throw Error(Error::Code::kConfig, "malformed joint arrival outcome");
    }
    total += o.probability;
    for (int u = 0; u < n_users; ++u) {
      m.rates_[static_cast<std::size_t>(u)] += o.probability * o.batch[static_cast<std::size_t>(u)];
    }
    m.cumulative_.push_back(total);
  }
  if (total > 1.0 + 1e-12) throw Error(Error::Code::kConfig, "joint arrival pmf exceeds 1");
  m.outcomes_ = std::move(outcomes);
  return m;
}

void ArrivalModel::sample(Rng& rng, std::vector<std::uint32_t>& out) const {
  out.assign(rates_.size(), 0);
  if (mode_ == "bernoulli") {
    for (std::size_t u = 0; u < rates_.size(); ++u) out[u] = rng.bernoulli(rates_[u]) ? 1 : 0;
  } else if (mode_ == "poisson") {
    for (std::size_t u = 0; u < rates_.size(); ++u) {
      const double limit = std::exp(-rates_[u]);
      double prod = rng.uniform();
      std::uint32_t k = 0;
      while (prod > limit) {
        ++k;
        prod *= rng.uniform();
      }
      out[u] = k;
    }
  } else {
    const double x = rng.uniform();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), x);
    if (it != cumulative_.end()) out = outcomes_[static_cast<std::size_t>(it - cumulative_.begin())].batch;
  }
}

ErasureModel erasure_from_json(const nlohmann::json& j, int n_users) {
  const std::string mode = j.value("mode", "iid");
  if (mode == "independent") {
    auto values = j.at("eps").get<std::vector<double>>();
    if (values.size() != static_cast<std::size_t>(n_users)) {
      throw Error(Error::Code::kConfig, "eps needs one probability per user");
    }
    return ErasureModel::independent(std::move(values));
  }
  if (mode == "iid") {
    const auto& eps = j.at("eps");
    if (eps.is_array()) {
      auto values = eps.get<std::vector<double>>();
      if (values.size() != static_cast<std::size_t>(n_users)) {
        throw Error(Error::Code::kConfig, "eps needs one probability per user");
      }
      return ErasureModel::independent(std::move(values));
    }
    return ErasureModel::iid(n_users, eps.get<double>());
  }
  if (mode == "joint") return ErasureModel::joint(n_users, j.at("pmf").get<std::vector<double>>());
  throw Error(Error::Code::kConfig, "unknown erasure mode '" + mode + "'");
}

nlohmann::json to_json(const ErasureModel& model) {
  if (model.is_independent()) {
    std::vector<double> eps;
    for (int u = 0; u < model.n_users(); ++u) eps.push_back(model.erased_by_all(UserSet::single(u)));
    return {{"mode", "independent"}, {"eps", eps}};
  }
  return {{"mode", "joint"}, {"pmf", model.pmf()}};
}

ArrivalModel arrivals_from_json(const nlohmann::json& j, int n_users) {
  const std::string mode = j.value("mode", "bernoulli");
  if (mode == "bernoulli" || mode == "poisson") {
    auto rates = j.at("lambda").get<std::vector<double>>();
    if (rates.size() != static_cast<std::size_t>(n_users)) {
      throw Error(Error::Code::kConfig, "lambda needs one rate per user");
    }
    return mode == "bernoulli" ? ArrivalModel::bernoulli(std::move(rates))
                               : ArrivalModel::poisson(std::move(rates));
  }
  if (mode == "joint") {
    std::vector<ArrivalModel::Outcome> outcomes;
    for (const auto& o : j.at("outcomes")) {
      outcomes.push_back({o.at("batch").get<std::vector<std::uint32_t>>(), o.at("p").get<double>()});
    }
    return ArrivalModel::joint(n_users, std::move(outcomes));
  }
  throw Error(Error::Code::kConfig, "unknown arrival mode '" + mode + "'");
}

nlohmann::json to_json(const ArrivalModel& model) {
  nlohmann::json out = {{"mode", model.mode()}, {"lambda", model.rates()}};
  if (model.mode() == "joint") {
    out["outcomes"] = nlohmann::json::array();
    for (const auto& o : model.outcomes()) {
      out["outcomes"].push_back({{"batch", o.batch}, {"p", o.probability}});
    }
  }
  return out;
}

}  // namespace becsim::channel
