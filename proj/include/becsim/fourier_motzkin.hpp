#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

namespace becsim::regions {

// Zero tests per scalar type: exact for rationals, absolute 1e-9 for doubles.
template <class Scalar>
struct ScalarTraits {
  static bool is_zero(const Scalar& x) { return x == Scalar(0); }
  static Scalar abs(const Scalar& x) { return x < Scalar(0) ? Scalar(-x) : x; }
};

template <>
struct ScalarTraits<double> {
  static constexpr double kTolerance = 1e-9;
  static bool is_zero(double x) { return std::abs(x) <= kTolerance; }
  static double abs(double x) { return std::abs(x); }
};

// Σ coeffs[v]·v <= bound.
template <class Scalar>
struct Inequality {
  std::map<std::string, Scalar> coeffs{};
  Scalar bound{0};

  Scalar coefficient(const std::string& var) const {
    auto it = coeffs.find(var);
    return it == coeffs.end() ? Scalar(0) : it->second;
  }
};

template <class Scalar>
struct Polyhedron {
  std::vector<Inequality<Scalar>> rows{};
  // Variables known to be >= 0; used only when pruning.
  std::set<std::string> nonnegative{};

  void add(std::map<std::string, Scalar> coeffs, Scalar bound) {
    rows.push_back({std::move(coeffs), std::move(bound)});
  }
};

namespace fm_detail {

template <class Scalar>
void drop_zeros(Inequality<Scalar>& row) {
  for (auto it = row.coeffs.begin(); it != row.coeffs.end();) {
    if (ScalarTraits<Scalar>::is_zero(it->second)) {
      it = row.coeffs.erase(it);
    } else {
      ++it;
    }
  }
}

// Scale to bound ±1 when the bound is nonzero, else to a largest |coeff| of 1.
template <class Scalar>
Inequality<Scalar> normalized(Inequality<Scalar> row) {
  using T = ScalarTraits<Scalar>;
  Scalar scale(0);
  if (!T::is_zero(row.bound)) {
    scale = T::abs(row.bound);
  } else {
    for (const auto& [v, c] : row.coeffs) {
      if (T::abs(c) > scale) scale = T::abs(c);
    }
  }
  if (T::is_zero(scale)) return row;
  for (auto& [v, c] : row.coeffs) c = c / scale;
  row.bound = row.bound / scale;
  return row;
}

template <class Scalar>
bool same_row(const Inequality<Scalar>& a, const Inequality<Scalar>& b) {
  using T = ScalarTraits<Scalar>;
  if (a.coeffs.size() != b.coeffs.size()) return false;
  if (!T::is_zero(Scalar(a.bound - b.bound))) return false;
  for (const auto& [v, c] : a.coeffs) {
    auto it = b.coeffs.find(v);
    if (it == b.coeffs.end() || !T::is_zero(Scalar(c - it->second))) return false;
  }
  return true;
}

// True when `strong` with t·strong implies `weak` for some t > 0 under the
// declared sign constraints.
template <class Scalar>
bool implies(const Inequality<Scalar>& strong, const Inequality<Scalar>& weak,
             const std::set<std::string>& nonnegative) {
  using T = ScalarTraits<Scalar>;
  std::vector<Scalar> candidates;
  for (const auto& [v, c] : strong.coeffs) {
    const Scalar w = weak.coefficient(v);
    if (!T::is_zero(w) && ((c > Scalar(0)) == (w > Scalar(0)))) candidates.push_back(w / c);
  }
  if (!T::is_zero(strong.bound) && !T::is_zero(weak.bound) &&
      ((strong.bound > Scalar(0)) == (weak.bound > Scalar(0)))) {
    candidates.push_back(weak.bound / strong.bound);
  }
  for (const Scalar& t : candidates) {
    if (!(t > Scalar(0))) continue;
    bool ok = !(weak.bound < Scalar(t * strong.bound)) ||
              T::is_zero(Scalar(weak.bound - t * strong.bound));
    std::set<std::string> vars;
    for (const auto& [v, c] : strong.coeffs) vars.insert(v);
    for (const auto& [v, c] : weak.coeffs) vars.insert(v);
    for (const auto& v : vars) {
      if (!ok) break;
      const Scalar diff = Scalar(weak.coefficient(v) - t * strong.coefficient(v));
      if (T::is_zero(diff)) continue;
      // weak·x <= t·strong·x needs weak_v <= t·strong_v for x_v >= 0.
      ok = nonnegative.count(v) != 0 && diff < Scalar(0);
    }
    if (ok) return true;
  }
  return false;
}

// -x <= 0 for a declared nonnegative x.
template <class Scalar>
bool is_sign_row(const Inequality<Scalar>& row, const std::set<std::string>& nonnegative) {
  return row.coeffs.size() == 1 && !(row.bound < Scalar(0)) &&
         ScalarTraits<Scalar>::is_zero(row.bound) && row.coeffs.begin()->second < Scalar(0) &&
         nonnegative.count(row.coeffs.begin()->first) != 0;
}

}  // namespace fm_detail

// The rows that say more than the declared variable signs.
template <class Scalar>
Polyhedron<Scalar> without_sign_rows(const Polyhedron<Scalar>& poly) {
  Polyhedron<Scalar> out;
  out.nonnegative = poly.nonnegative;
  for (const auto& row : poly.rows) {
    if (!fm_detail::is_sign_row(row, poly.nonnegative)) out.rows.push_back(row);
  }
  return out;
}

// Drops trivial rows, duplicates, and rows implied by a single other row.
// Sign rows of nonnegative variables are kept since later eliminations need
// them as bounds.
template <class Scalar>
Polyhedron<Scalar> prune(const Polyhedron<Scalar>& poly) {
  std::vector<Inequality<Scalar>> kept;
  for (auto row : poly.rows) {
    fm_detail::drop_zeros(row);
    row = fm_detail::normalized(std::move(row));
    if (row.coeffs.empty() && !(row.bound < Scalar(0))) continue;
    bool duplicate = false;
    for (const auto& k : kept) duplicate = duplicate || fm_detail::same_row(k, row);
    if (!duplicate) kept.push_back(std::move(row));
  }
  std::vector<bool> drop(kept.size(), false);
  for (std::size_t a = 0; a < kept.size(); ++a) {
    for (std::size_t b = 0; b < kept.size() && !drop[a]; ++b) {
      if (a == b || drop[b]) continue;
      if (kept[a].coeffs.empty() || fm_detail::is_sign_row(kept[a], poly.nonnegative)) continue;
      if (fm_detail::implies(kept[b], kept[a], poly.nonnegative)) drop[a] = true;
    }
  }
  Polyhedron<Scalar> out;
  out.nonnegative = poly.nonnegative;
  for (std::size_t a = 0; a < kept.size(); ++a) {
    if (!drop[a]) out.rows.push_back(kept[a]);
  }
  return out;
}

namespace fm_detail {

enum class LpStatus { kOptimal, kUnbounded, kInfeasible };

template <class Scalar>
bool positive(const Scalar& x) {
  return x > Scalar(0) && !ScalarTraits<Scalar>::is_zero(x);
}

// Dense tableau with Bland's rule. Each row reads x_basis = rhs - Σ a·x_nonbasic
// and the objective reads z = value + Σ d·x_nonbasic.
template <class Scalar>
struct Tableau {
  std::vector<std::vector<Scalar>> a;
  std::vector<Scalar> rhs;
  std::vector<std::size_t> basis;
  std::vector<Scalar> d;
  Scalar value{0};
  std::vector<bool> barred;

  void pivot(std::size_t r, std::size_t c) {
    const Scalar p = a[r][c];
    for (auto& x : a[r]) x = x / p;
    rhs[r] = rhs[r] / p;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (i == r) continue;
      const Scalar f = a[i][c];
      if (ScalarTraits<Scalar>::is_zero(f)) continue;
      for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] -= Scalar(f * a[r][j]);
      rhs[i] -= Scalar(f * rhs[r]);
    }
    const Scalar f = d[c];
    for (std::size_t j = 0; j < d.size(); ++j) d[j] -= Scalar(f * a[r][j]);
    value += Scalar(f * rhs[r]);
    basis[r] = c;
  }

  bool optimize() {
    for (;;) {
      std::size_t enter = d.size();
      for (std::size_t j = 0; j < d.size() && enter == d.size(); ++j) {
        if (!barred[j] && positive(d[j])) enter = j;
      }
      if (enter == d.size()) return true;
      std::size_t leave = a.size();
      Scalar best(0);
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (!positive(a[i][enter])) continue;
        const Scalar ratio = rhs[i] / a[i][enter];
        if (leave == a.size() || ratio < best ||
            (!(best < ratio) && basis[i] < basis[leave])) {
          leave = i;
          best = ratio;
        }
      }
      if (leave == a.size()) return false;
      pivot(leave, enter);
    }
  }
};

// max c·x subject to A x <= b and x >= 0.
template <class Scalar>
std::pair<LpStatus, Scalar> lp_maximize(const std::vector<std::vector<Scalar>>& A,
                                        const std::vector<Scalar>& b, const std::vector<Scalar>& c) {
  const std::size_t m = A.size(), n = c.size();
  const std::size_t artificial = n + m;
  Tableau<Scalar> t;
  t.a.assign(m, std::vector<Scalar>(n + m + 1, Scalar(0)));
  t.rhs = b;
  t.basis.resize(m);
  t.d.assign(n + m + 1, Scalar(0));
  t.barred.assign(n + m + 1, false);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) t.a[i][j] = A[i][j];
    t.a[i][n + i] = Scalar(1);
    t.a[i][artificial] = Scalar(-1);
    t.basis[i] = n + i;
  }
  std::size_t most_negative = m;
  for (std::size_t i = 0; i < m; ++i) {
    if (t.rhs[i] < Scalar(0) && (most_negative == m || t.rhs[i] < t.rhs[most_negative])) {
      most_negative = i;
    }
  }
  if (most_negative != m) {
    // Phase one: maximize -x0 from the basis that makes every rhs nonnegative.
    t.d[artificial] = Scalar(-1);
    t.pivot(most_negative, artificial);
    t.optimize();
    if (positive(Scalar(-t.value))) return {LpStatus::kInfeasible, Scalar(0)};
    for (std::size_t i = 0; i < m; ++i) {
      if (t.basis[i] != artificial) continue;
      for (std::size_t j = 0; j < artificial; ++j) {
        if (!ScalarTraits<Scalar>::is_zero(t.a[i][j])) {
          t.pivot(i, j);
          break;
        }
      }
    }
  }
  t.barred[artificial] = true;
  t.value = Scalar(0);
  std::fill(t.d.begin(), t.d.end(), Scalar(0));
  for (std::size_t j = 0; j < n; ++j) t.d[j] = c[j];
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t v = t.basis[i];
    if (v >= n || ScalarTraits<Scalar>::is_zero(c[v])) continue;
    const Scalar f = c[v];
    for (std::size_t j = 0; j < t.d.size(); ++j) t.d[j] -= Scalar(f * t.a[i][j]);
    t.value += Scalar(f * t.rhs[i]);
  }
  if (!t.optimize()) return {LpStatus::kUnbounded, Scalar(0)};
  return {LpStatus::kOptimal, t.value};
}

}  // namespace fm_detail

// Drops every row implied by the remaining rows and the declared signs, so
// the result is a minimal description. Each test is one linear program;
// an empty polyhedron is returned unchanged.
template <class Scalar>
Polyhedron<Scalar> remove_redundant(const Polyhedron<Scalar>& poly) {
  using fm_detail::LpStatus;
  Polyhedron<Scalar> work = prune(poly);
  std::vector<std::string> vars;
  for (const auto& row : work.rows) {
    for (const auto& [v, c] : row.coeffs) {
      if (std::find(vars.begin(), vars.end(), v) == vars.end()) vars.push_back(v);
    }
  }
  // Free variables become a difference of two nonnegative columns.
  std::size_t width = 0;
  std::map<std::string, std::vector<std::pair<std::size_t, Scalar>>> column_of;
  for (const auto& v : vars) {
    column_of[v].push_back({width++, Scalar(1)});
    if (work.nonnegative.count(v) == 0) column_of[v].push_back({width++, Scalar(-1)});
  }
  auto dense = [&](const Inequality<Scalar>& row) {
    std::vector<Scalar> out(width, Scalar(0));
    for (const auto& [v, c] : row.coeffs) {
      for (const auto& [col, sign] : column_of[v]) out[col] = Scalar(sign * c);
    }
    return out;
  };

  std::vector<bool> active(work.rows.size(), true);
  for (std::size_t r = 0; r < work.rows.size(); ++r) {
    const auto& row = work.rows[r];
    if (row.coeffs.empty() || fm_detail::is_sign_row(row, work.nonnegative)) continue;
    std::vector<std::vector<Scalar>> A;
    std::vector<Scalar> b;
    for (std::size_t k = 0; k < work.rows.size(); ++k) {
      if (k == r || !active[k]) continue;
      A.push_back(dense(work.rows[k]));
      b.push_back(work.rows[k].bound);
    }
    const auto [status, best] = fm_detail::lp_maximize(A, b, dense(row));
    if (status == LpStatus::kInfeasible) return work;
    if (status == LpStatus::kOptimal && !fm_detail::positive(Scalar(best - row.bound))) {
      active[r] = false;
    }
  }
  Polyhedron<Scalar> out;
  out.nonnegative = work.nonnegative;
  for (std::size_t r = 0; r < work.rows.size(); ++r) {
    if (active[r]) out.rows.push_back(work.rows[r]);
  }
  return out;
}

// Projects out `var`: rows without it are kept, every (lower, upper) pair is
// combined so the variable cancels.
template <class Scalar>
Polyhedron<Scalar> fm_eliminate(const Polyhedron<Scalar>& poly, const std::string& var,
                                bool prune_result = true) {
  using T = ScalarTraits<Scalar>;
  Polyhedron<Scalar> out;
  out.nonnegative = poly.nonnegative;
  out.nonnegative.erase(var);
  std::vector<const Inequality<Scalar>*> upper;
  std::vector<const Inequality<Scalar>*> lower;
  for (const auto& row : poly.rows) {
    const Scalar c = row.coefficient(var);
    if (T::is_zero(c)) {
      Inequality<Scalar> copy = row;
      copy.coeffs.erase(var);
      out.rows.push_back(std::move(copy));
    } else if (c > Scalar(0)) {
      upper.push_back(&row);
    } else {
      lower.push_back(&row);
    }
  }
  for (const auto* u : upper) {
    for (const auto* l : lower) {
      const Scalar cu = u->coefficient(var);
      const Scalar cl = Scalar(-l->coefficient(var));
      Inequality<Scalar> combined;
      for (const auto& [v, c] : u->coeffs) combined.coeffs[v] += Scalar(cl * c);
      for (const auto& [v, c] : l->coeffs) combined.coeffs[v] += Scalar(cu * c);
      combined.coeffs.erase(var);
      combined.bound = Scalar(cl * u->bound + cu * l->bound);
      fm_detail::drop_zeros(combined);
      out.rows.push_back(std::move(combined));
    }
  }
  return prune_result ? prune(out) : out;
}

// A row 0 <= b with b < 0.
template <class Scalar>
bool has_contradiction(const Polyhedron<Scalar>& poly) {
  for (auto row : poly.rows) {
    fm_detail::drop_zeros(row);
    if (row.coeffs.empty() && row.bound < Scalar(0) && !ScalarTraits<Scalar>::is_zero(row.bound)) {
      return true;
    }
  }
  return false;
}

template <class Scalar>
bool contains(const Polyhedron<Scalar>& poly, const std::map<std::string, Scalar>& point) {
  using T = ScalarTraits<Scalar>;
  for (const auto& row : poly.rows) {
    Scalar lhs(0);
    for (const auto& [v, c] : row.coeffs) {
      auto it = point.find(v);
      if (it != point.end()) lhs += Scalar(c * it->second);
    }
    if (lhs > row.bound && !T::is_zero(Scalar(lhs - row.bound))) return false;
  }
  return true;
}

}  // namespace becsim::regions
