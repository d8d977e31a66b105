#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "becsim/core.hpp"

namespace becsim::channel {

using core::UserSet;

// Independent generator per named purpose, derived from one master seed.
class Rng {
 public:
  Rng(std::uint64_t master_seed, std::uint64_t stream);

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t below(std::uint64_t bound);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

enum class Stream : std::uint64_t { kArrivals = 1, kErasures = 2, kPolicy = 3, kAux = 4 };

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  return Rng(seed, static_cast<std::uint64_t>(stream));
}

class ErasureModel {
 public:
  // Independent erasures with per-user probability eps[i].
  static ErasureModel independent(std::vector<double> eps);
  static ErasureModel iid(int n_users, double eps);
  // pmf[bits] = probability that exactly the users in `bits` receive.
  static ErasureModel joint(int n_users, std::vector<double> pmf);

  int n_users() const { return n_users_; }
  bool is_independent() const { return independent_; }
  const std::vector<double>& pmf() const { return pmf_; }
  double reception_probability(UserSet received) const { return pmf_[received.bits()]; }

  // Probability that everyone in G misses and everyone in S receives.
  double p_gs(UserSet g, UserSet s) const;
  // ε_G: probability that every user in G misses.
  double erased_by_all(UserSet g) const { return p_gs(g, UserSet{}); }

  UserSet sample(Rng& rng) const;

 private:
  ErasureModel() = default;
  void build_sampler();

  int n_users_ = 0;
  bool independent_ = false;
  std::vector<double> eps_;
  std::vector<double> pmf_;
  std::vector<double> cumulative_;
};

class ArrivalModel {
 public:
  struct Outcome {
    std::vector<std::uint32_t> batch;
    double probability = 0.0;
  };

  static ArrivalModel bernoulli(std::vector<double> rates);
  static ArrivalModel poisson(std::vector<double> rates);
  // Batch vectors with probabilities; the remainder is the all-zero batch.
  static ArrivalModel joint(int n_users, std::vector<Outcome> outcomes);

  int n_users() const { return static_cast<int>(rates_.size()); }
  const std::vector<double>& rates() const { return rates_; }
  std::string mode() const { return mode_; }
  const std::vector<Outcome>& outcomes() const { return outcomes_; }

  void sample(Rng& rng, std::vector<std::uint32_t>& out) const;

 private:
  ArrivalModel() = default;

  std::string mode_;
  std::vector<double> rates_;
  std::vector<Outcome> outcomes_;
  std::vector<double> cumulative_;
};

ErasureModel erasure_from_json(const nlohmann::json& j, int n_users);
nlohmann::json to_json(const ErasureModel& model);
ArrivalModel arrivals_from_json(const nlohmann::json& j, int n_users);
nlohmann::json to_json(const ArrivalModel& model);

}  // namespace becsim::channel
