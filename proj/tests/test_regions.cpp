#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/multiprecision/cpp_int.hpp>
#include <boost/multiprecision/mpfr.hpp>
#include <cmath>
#include <random>

#include "becsim/regions.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace becsim;
using channel::ErasureModel;
using Rational = boost::multiprecision::cpp_rational;
using Mp = boost::multiprecision::mpfr_float;

namespace {

std::vector<double> random_pmf(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> pmf(std::size_t{1} << n);
  double total = 0.0;
  for (auto& p : pmf) total += (p = u(rng));
  for (auto& p : pmf) p /= total;
  return pmf;
}

// Normalizes Σ c·v <= b to bound 1 for comparison.
std::map<std::string, Rational> scaled(const regions::Inequality<Rational>& row) {
  std::map<std::string, Rational> out;
  for (const auto& [v, c] : row.coeffs) out[v] = c / row.bound;
  return out;
}

}  // namespace

TEST_CASE("outer margin agrees with full permutation enumeration") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 1; n <= 5; ++n) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto pmf = random_pmf(rng, n);
      std::vector<double> rates(static_cast<std::size_t>(n));
      for (auto& r : rates) r = u(rng);
      const auto m = ErasureModel::joint(n, pmf);
      const auto got = regions::outer_bound_margin(rates, m);
      CHECK(got.margin == doctest::Approx(oracles::outer_margin_by_permutation(rates, pmf, n)).epsilon(1e-12));
      CHECK(regions::ordered_sum(rates, m, got.order) == doctest::Approx(got.margin).epsilon(1e-12));
    }
  }
}

TEST_CASE("outer margin for iid users uses the sorted rates") {
  const auto m = ErasureModel::iid(4, 0.5);
  const double expected = 0.2 * (2.0 + 4.0 / 3.0 + 8.0 / 7.0 + 16.0 / 15.0);
  CHECK(regions::outer_bound_margin({0.2, 0.2, 0.2, 0.2}, m).margin == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(1.108571).epsilon(1e-6));
  CHECK(regions::outer_bound_margin({0, 0, 0, 0}, m).margin == 0.0);
  const std::vector<double> rates{0.05, 0.3, 0.1, 0.2};
  CHECK(regions::outer_bound_margin(rates, m).margin ==
        doctest::Approx(oracles::iid_sorted_sum(rates, 0.5)).epsilon(1e-14));
  CHECK(regions::outer_bound_margin(rates, m).order == std::vector<int>{1, 3, 2, 0});
  CHECK_THROWS_AS(regions::outer_bound_margin({0.1}, m), Error);
  CHECK_THROWS_AS(regions::outer_bound_margin({0.1, 0.1}, ErasureModel::iid(2, 1.0)), Error);
}

TEST_CASE("capacity gap in multiprecision") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 3;
    std::vector<double> eps(n), rates(n);
    for (auto& e : eps) e = u(rng);
    for (auto& r : rates) r = u(rng);
    const auto m = ErasureModel::independent(eps);
    const double outer = regions::outer_bound_margin(rates, m).margin;
    Mp previous = -1;
    for (double bits : {1e2, 1e3, 1e4}) {
      Mp::default_precision(static_cast<unsigned>(0.302 * bits + 50));
      const auto cap = regions::capacity_bound_margin<Mp>(rates, m, bits);
      const Mp diff = cap.outer - cap.margin;
      CHECK(static_cast<double>(cap.outer) == doctest::Approx(outer).epsilon(1e-12));
      CHECK(diff > 0);
      // Expected gap recomputed from the maximizing ordering.
      Mp a = 0;
      core::UserSet prefix;
      for (int user : cap.order) {
        prefix.insert(user);
        a += Mp(1) / (Mp(1) - Mp(m.erased_by_all(prefix)));
      }
      const Mp expected = boost::multiprecision::pow(Mp(2), -Mp(bits) / a) * a / Mp(bits);
      CHECK(boost::multiprecision::abs(diff - expected) <= expected * Mp("1e-40"));
      if (previous >= 0) CHECK(diff < previous);
      previous = diff;
    }
  }
}

TEST_CASE("single perfect user capacity bound") {
  Mp::default_precision(3700);
  const auto cap = regions::capacity_bound_margin<Mp>({1.0}, ErasureModel::iid(1, 0.0), 12000);
  const Mp expected = boost::multiprecision::pow(Mp(2), Mp(-12000)) / 12000;
  CHECK(cap.gap == expected);
  CHECK(cap.margin < 1);
  CHECK(cap.gap > 0);
  // Double precision underflows here, which is why the template exists.
  CHECK(regions::capacity_bound_margin<double>({1.0}, ErasureModel::iid(1, 0.0), 12000).gap == 0.0);
}

TEST_CASE("two-user region from exact elimination") {
  const Rational e1(1, 2), e2(1, 3), e12(1, 5);
  // pmf over reception sets, bit 0 = user 1.
  const std::vector<Rational> pmf{e12, e2 - e12, e1 - e12, 1 - e1 - e2 + e12};
  std::vector<double> pmf_d;
  for (const auto& p : pmf) pmf_d.push_back(static_cast<double>(p));
  const auto catalog = coding::enumerate_controls(2, coding::Restriction::kFull);
  const auto table = scheduler::derive_table(catalog, ErasureModel::joint(2, pmf_d));
  std::function<Rational(core::UserSet)> f = [&](core::UserSet s) { return pmf[s.bits()]; };
  auto poly = regions::stability_system<Rational>(catalog, table, f);
  for (const char* v :
       {"phi:I[1|2 + 2|1]", "phi:I[1|2]", "phi:I[2|1]", "phi:I[-|2]", "phi:I[-|1]"}) {
    poly = regions::fm_eliminate(poly, v);
  }
  CHECK_FALSE(regions::has_contradiction(poly));
  const auto result = regions::without_sign_rows(poly);
  std::set<std::map<std::string, Rational>> got;
  for (const auto& row : result.rows) got.insert(scaled(row));
  const std::set<std::map<std::string, Rational>> expected = {
      {{"lambda1", 1 / (1 - e1)}, {"lambda2", 1 / (1 - e12)}},
      {{"lambda1", 1 / (1 - e12)}, {"lambda2", 1 / (1 - e2)}},
  };
  CHECK(got == expected);
  CHECK(got.count({{"lambda1", Rational(2)}, {"lambda2", Rational(5, 4)}}) == 1);
  CHECK(got.count({{"lambda1", Rational(5, 4)}, {"lambda2", Rational(3, 2)}}) == 1);
}

TEST_CASE("elimination matches the exact projection on random systems") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> coef(-4, 4);
  std::uniform_int_distribution<int> bound(1, 6);
  for (int trial = 0; trial < 40; ++trial) {
    regions::Polyhedron<Rational> poly;
    for (int r = 0; r < 6; ++r) {
      poly.add({{"x", coef(rng)}, {"y", coef(rng)}, {"z", coef(rng)}}, bound(rng));
    }
    // Keep the set bounded in z.
    poly.add({{"z", 1}}, 10);
    poly.add({{"z", -1}}, 10);
    const auto projected = regions::fm_eliminate(poly, "z", false);
    for (int px = -6; px <= 6; ++px) {
      for (int py = -6; py <= 6; ++py) {
        const Rational x(px, 2), y(py, 2);
        Rational lo = -1000, hi = 1000;
        bool ok = true;
        for (const auto& row : poly.rows) {
          const Rational rest = row.bound - row.coefficient("x") * x - row.coefficient("y") * y;
          const Rational c = row.coefficient("z");
          if (c > 0) hi = std::min(hi, Rational(rest / c));
          else if (c < 0) lo = std::max(lo, Rational(rest / c));
          else ok = ok && rest >= 0;
        }
        const bool inside = ok && lo <= hi;
        CHECK(regions::contains(projected, {{"x", x}, {"y", y}}) == inside);
      }
    }
  }
}

TEST_CASE("redundant rows are removed exactly") {
  const Rational e1(1, 2), e2(1, 3), e12(1, 5);
  const std::vector<Rational> pmf{e12, e2 - e12, e1 - e12, 1 - e1 - e2 + e12};
  std::vector<double> pmf_d;
  for (const auto& p : pmf) pmf_d.push_back(static_cast<double>(p));
  const auto catalog = coding::enumerate_controls(2, coding::Restriction::kFull);
  const auto table = scheduler::derive_table(catalog, ErasureModel::joint(2, pmf_d));
  std::function<Rational(core::UserSet)> f = [&](core::UserSet s) { return pmf[s.bits()]; };
  auto poly = regions::stability_system<Rational>(catalog, table, f);
  // Catalog order leaves the average of the two facets behind.
  for (const auto& spec : catalog.controls) poly = regions::fm_eliminate(poly, regions::phi_variable(spec));
  CHECK(regions::without_sign_rows(poly).rows.size() == 3);
  const auto minimal = regions::without_sign_rows(regions::remove_redundant(poly));
  std::set<std::map<std::string, Rational>> got;
  for (const auto& row : minimal.rows) got.insert(scaled(row));
  CHECK(got == std::set<std::map<std::string, Rational>>{
                   {{"lambda1", Rational(2)}, {"lambda2", Rational(5, 4)}},
                   {{"lambda1", Rational(5, 4)}, {"lambda2", Rational(3, 2)}}});
}

TEST_CASE("redundancy removal keeps the set and leaves one row per polygon edge") {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> coef(-3, 3);
  std::uniform_int_distribution<int> bound(1, 5);
  int polygons = 0;
  for (int trial = 0; trial < 60; ++trial) {
    regions::Polyhedron<Rational> poly;
    for (int r = 0; r < 7; ++r) poly.add({{"x", coef(rng)}, {"y", coef(rng)}}, bound(rng));
    poly.add({{"x", 1}}, 8);
    poly.add({{"x", -1}}, 8);
    poly.add({{"y", 1}}, 8);
    poly.add({{"y", -1}}, 8);
    if (trial % 3 == 0) poly.nonnegative = {"x"};
    const auto minimal = regions::remove_redundant(poly);
    auto inside = [](const regions::Polyhedron<Rational>& p, const Rational& x, const Rational& y) {
      return regions::contains(p, {{"x", x}, {"y", y}}) && (!p.nonnegative.count("x") || x >= 0);
    };
    for (int px = -20; px <= 20; ++px) {
      for (int py = -20; py <= 20; ++py) {
        const Rational x(px, 2), y(py, 2);
        CHECK(inside(minimal, x, y) == inside(poly, x, y));
      }
    }
    if (!poly.nonnegative.empty()) continue;
    // Vertices from pairwise line intersections.
    std::set<std::pair<Rational, Rational>> vertices;
    for (std::size_t a = 0; a < poly.rows.size(); ++a) {
      for (std::size_t b = a + 1; b < poly.rows.size(); ++b) {
        const auto& ra = poly.rows[a];
        const auto& rb = poly.rows[b];
        const Rational det = ra.coefficient("x") * rb.coefficient("y") - ra.coefficient("y") * rb.coefficient("x");
        if (det == 0) continue;
        const Rational x = (ra.bound * rb.coefficient("y") - ra.coefficient("y") * rb.bound) / det;
        const Rational y = (ra.coefficient("x") * rb.bound - ra.bound * rb.coefficient("x")) / det;
        if (regions::contains(poly, {{"x", x}, {"y", y}})) vertices.insert({x, y});
      }
    }
    // Polygons with area have as many edges as vertices.
    if (vertices.size() < 3) continue;
    ++polygons;
    CAPTURE(trial);
    CHECK(minimal.rows.size() == vertices.size());
  }
  CHECK(polygons > 20);
  regions::Polyhedron<Rational> empty;
  empty.add({{"x", 1}}, -1);
  empty.add({{"x", -1}}, -1);
  CHECK(regions::remove_redundant(empty).rows.size() == 2);
}

TEST_CASE("double-precision elimination of the two-user system") {
  const auto catalog = coding::enumerate_controls(2, coding::Restriction::kFull);
  const auto m = ErasureModel::iid(2, 0.5);
  const auto table = scheduler::derive_table(catalog, m);
  std::function<double(core::UserSet)> f = [&](core::UserSet s) { return m.reception_probability(s); };
  auto poly = regions::stability_system<double>(catalog, table, f);
  for (const auto& spec : catalog.controls) poly = regions::fm_eliminate(poly, regions::phi_variable(spec));
  CHECK_FALSE(regions::has_contradiction(poly));
  // Corner points of the iid region: λ/(1-ε) + λ/(1-ε²) = 1 on the diagonal.
  const double edge = 1.0 / (2.0 + 4.0 / 3.0);
  CHECK(regions::contains(poly, {{"lambda1", edge * 0.999}, {"lambda2", edge * 0.999}}));
  CHECK_FALSE(regions::contains(poly, {{"lambda1", edge * 1.01}, {"lambda2", edge * 1.01}}));
}

TEST_CASE("four-user certificate on an erasure grid") {
  const auto catalog = coding::enumerate_controls(4, coding::Restriction::kTable8);
  const auto rays = oracles::sorted_rays(10, 3);
  for (int k = 1; k <= 9; k += 2) {
    const double eps = 0.1 * k;
    const auto m = ErasureModel::iid(4, eps);
    const auto table = scheduler::derive_table(catalog, m);
    for (const auto& ray : rays) {
      const double base = oracles::iid_sorted_sum(ray, eps);
      std::vector<double> rates;
      for (double x : ray) rates.push_back(0.99 * x / base);
      const auto rec = regions::build_phi_4user_sorted(rates, eps);
      const auto closed = regions::phi_4user_closed_form_sorted(rates, eps);
      CAPTURE(eps);
      CHECK(rec.phi.size() == closed.phi.size());
      double max_diff = 0.0;
      for (const auto& [spec, v] : rec.phi) {
        CHECK(v >= -1e-15);
        max_diff = std::max(max_diff, std::abs(v - closed.get(spec)));
        CHECK(catalog.index_of(spec).has_value());
      }
      CHECK(max_diff <= 1e-12);
      double load = 0.0;
      for (std::size_t i = 0; i < 4; ++i) load += rates[i] / (1 - std::pow(eps, static_cast<int>(i + 1)));
      CHECK(std::abs(rec.sum() - load) <= 1e-12);
      const auto report = regions::feasibility_check(rates, rec, m, &catalog, &table);
      CHECK(report.feasible);
      for (const auto& v : report.violations) MESSAGE(v);
    }
  }
}

TEST_CASE("unsorted rates are relabeled") {
  const std::vector<double> rates{0.05, 0.2, 0.1, 0.15};
  const double eps = 0.4;
  const auto m = ErasureModel::iid(4, eps);
  const auto cert = regions::build_phi_4user(rates, eps);
  const auto catalog = coding::enumerate_controls(4, coding::Restriction::kTable8);
  CHECK(regions::feasibility_check(rates, cert, m, &catalog).feasible);
  CHECK(cert.sum() == doctest::Approx(oracles::iid_sorted_sum(rates, eps)).epsilon(1e-12));
  CHECK_THROWS_AS(regions::build_phi_4user_sorted(rates, eps), Error);
  CHECK_THROWS_AS(regions::build_phi_4user({0.5, 0.5, 0.5, 0.5}, eps), Error);
  const auto swapped = regions::relabel(fixtures::control({"2|1"}), {1, 0, 2, 3});
  CHECK(swapped == fixtures::control({"1|2"}));
}

TEST_CASE("feasibility check rejects a starved certificate") {
  const std::vector<double> rates{0.2, 0.15, 0.1, 0.05};
  const double eps = 0.5;
  auto cert = regions::build_phi_4user_sorted(rates, eps);
  for (auto& [spec, v] : cert.phi) v *= 0.8;
  const auto catalog = coding::enumerate_controls(4, coding::Restriction::kTable8);
  const auto report = regions::feasibility_check(rates, cert, ErasureModel::iid(4, eps), &catalog);
  CHECK_FALSE(report.feasible);
  CHECK(report.worst_slack < 0);
}

TEST_CASE("competing terms stay dominated") {
  for (int k = 1; k <= 9; ++k) {
    for (const auto& ray : oracles::sorted_rays(5, 17)) {
      const double eps = 0.1 * k;
      const double base = oracles::iid_sorted_sum(ray, eps);
      std::vector<double> rates;
      for (double x : ray) rates.push_back(x / base);
      const auto d = regions::phi_4user_diagnostics(rates, eps);
      CHECK(d.min_phi >= -1e-15);
    }
  }
}

TEST_CASE("region sweep rows") {
  const nlohmann::json req = {{"n_users", 4}, {"eps", 0.5}, {"check_cert", true},
                              {"scales", {0.5, 0.99, 1.1}}, {"packet_bits", 40}};
  const auto out = regions::region_sweep(req);
  REQUIRE(out.at("rows").size() == 6);
  for (const auto& row : out.at("rows")) {
    const double scale = row.at("scale");
    CHECK(row.at("outer_margin").get<double>() == doctest::Approx(scale).epsilon(1e-12));
    CHECK(row.at("inside").get<bool>() == (scale <= 1.0));
    CHECK(row.at("certificate").at("feasible").get<bool>() == (scale <= 1.0));
    CHECK(row.at("capacity_margin").get<double>() < row.at("outer_margin").get<double>());
  }
  CHECK_THROWS_AS(regions::region_sweep({{"n_users", 3}, {"check_cert", true}}), Error);
  CHECK_THROWS_AS(regions::region_sweep({{"n_users", 2}, {"rays", {{1.0}}}}), Error);
}
