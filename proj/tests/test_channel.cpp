#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "becsim/channel.hpp"

using namespace becsim;
using channel::ErasureModel;
using core::UserSet;

namespace {

// Probability that G all miss and S all receive, summed from the joint pmf.
double p_gs_by_sum(const std::vector<double>& pmf, int n, UserSet g, UserSet s) {
  double p = 0.0;
  for (std::uint32_t r = 0; r < (1u << n); ++r) {
    const auto rs = UserSet::from_bits(r);
    if (s.is_subset_of(rs) && !rs.intersects(g)) p += pmf[r];
  }
  return p;
}

}  // namespace

TEST_CASE("independent model pmf and marginals") {
  const std::vector<double> eps{0.1, 0.35, 0.8};
  const auto m = ErasureModel::independent(eps);
  double total = 0.0;
  for (double p : m.pmf()) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
  for (std::uint32_t g = 0; g < 8; ++g) {
    for (std::uint32_t s = 0; s < 8; ++s) {
      if (g & s) continue;
      double closed = 1.0;
      for (int u = 0; u < 3; ++u) {
        if ((g >> u) & 1u) closed *= eps[static_cast<std::size_t>(u)];
        if ((s >> u) & 1u) closed *= 1.0 - eps[static_cast<std::size_t>(u)];
      }
      const auto G = UserSet::from_bits(g), S = UserSet::from_bits(s);
      CHECK(m.p_gs(G, S) == doctest::Approx(closed).epsilon(1e-14));
      CHECK(m.p_gs(G, S) == doctest::Approx(p_gs_by_sum(m.pmf(), 3, G, S)).epsilon(1e-14));
    }
  }
  CHECK(m.erased_by_all(UserSet::from_bits(3)) == doctest::Approx(0.1 * 0.35));
  CHECK_THROWS_AS(m.p_gs(UserSet::from_bits(1), UserSet::from_bits(1)), Error);
}

TEST_CASE("joint model sums supersets") {
  const std::vector<double> pmf{0.1, 0.05, 0.2, 0.15, 0.1, 0.1, 0.05, 0.25};
  const auto m = ErasureModel::joint(3, pmf);
  CHECK_FALSE(m.is_independent());
  for (std::uint32_t g = 0; g < 8; ++g) {
    for (std::uint32_t s = 0; s < 8; ++s) {
      if (g & s) continue;
      const auto G = UserSet::from_bits(g), S = UserSet::from_bits(s);
      CHECK(m.p_gs(G, S) == doctest::Approx(p_gs_by_sum(pmf, 3, G, S)).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(ErasureModel::joint(2, {0.5, 0.5, 0.5, 0.5}), Error);
  CHECK_THROWS_AS(ErasureModel::joint(2, {0.5, 0.5}), Error);
  CHECK_THROWS_AS(ErasureModel::independent({1.5}), Error);
}

TEST_CASE("sampling frequencies match the pmf") {
  const std::vector<double> pmf{0.1, 0.05, 0.2, 0.15, 0.1, 0.1, 0.05, 0.25};
  for (const auto& m : {ErasureModel::joint(3, pmf), ErasureModel::independent({0.2, 0.5, 0.7})}) {
    auto rng = channel::make_rng(99, channel::Stream::kErasures);
    std::vector<int> counts(8, 0);
    const int trials = 200000;
    for (int t = 0; t < trials; ++t) ++counts[m.sample(rng).bits()];
    for (std::size_t r = 0; r < 8; ++r) {
      const double p = m.pmf()[r];
      const double sigma = std::sqrt(trials * p * (1 - p));
      CHECK(std::abs(counts[r] - trials * p) <= 4 * sigma + 1);
    }
  }
}

TEST_CASE("degenerate channels") {
  auto rng = channel::make_rng(1, channel::Stream::kErasures);
  const auto perfect = ErasureModel::iid(4, 0.0);
  const auto dead = ErasureModel::iid(4, 1.0);
  for (int t = 0; t < 100; ++t) {
    CHECK(perfect.sample(rng) == UserSet::all(4));
    CHECK(dead.sample(rng).empty());
  }
}

TEST_CASE("arrival models") {
  auto rng = channel::make_rng(5, channel::Stream::kArrivals);
  std::vector<std::uint32_t> batch;
  const int trials = 100000;
  for (const auto& m : {channel::ArrivalModel::bernoulli({0.2, 0.6}),
                        channel::ArrivalModel::poisson({0.2, 1.5})}) {
    std::vector<double> sum(2, 0.0);
    for (int t = 0; t < trials; ++t) {
      m.sample(rng, batch);
      REQUIRE(batch.size() == 2);
      for (std::size_t u = 0; u < 2; ++u) sum[u] += batch[u];
    }
    for (std::size_t u = 0; u < 2; ++u) {
      const double rate = m.rates()[u];
      CHECK(std::abs(sum[u] / trials - rate) < 5 * std::sqrt(rate / trials) + 1e-9);
    }
  }
  const auto joint = channel::ArrivalModel::joint(2, {{{1, 1}, 0.25}, {{2, 0}, 0.25}});
  CHECK(joint.rates()[0] == doctest::Approx(0.75));
  CHECK(joint.rates()[1] == doctest::Approx(0.25));
  CHECK_THROWS_AS(channel::ArrivalModel::bernoulli({1.2}), Error);
}

TEST_CASE("streams are deterministic and distinct") {
  auto a = channel::make_rng(7, channel::Stream::kArrivals);
  auto b = channel::make_rng(7, channel::Stream::kArrivals);
  auto c = channel::make_rng(7, channel::Stream::kErasures);
  bool differs = false;
  for (int k = 0; k < 10; ++k) {
    const auto x = a.next();
    CHECK(x == b.next());
    differs |= x != c.next();
  }
  CHECK(differs);
  auto r = channel::make_rng(3, channel::Stream::kAux);
  for (int k = 0; k < 1000; ++k) {
    CHECK(r.below(7) < 7);
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("json round trip") {
  const auto m = channel::erasure_from_json({{"mode", "independent"}, {"eps", {0.1, 0.4}}}, 2);
  CHECK(m.p_gs(UserSet::from_bits(1), {}) == doctest::Approx(0.1));
  const auto back = channel::erasure_from_json(channel::to_json(m), 2);
  CHECK(back.pmf() == m.pmf());
  const auto iid = channel::erasure_from_json({{"mode", "iid"}, {"eps", 0.3}}, 3);
  CHECK(iid.p_gs(UserSet::from_bits(7), {}) == doctest::Approx(0.027));
  const auto a = channel::arrivals_from_json({{"mode", "poisson"}, {"lambda", {0.1, 0.2}}}, 2);
  CHECK(a.mode() == "poisson");
  CHECK_THROWS_AS(channel::arrivals_from_json({{"lambda", {0.1}}}, 2), Error);
}
