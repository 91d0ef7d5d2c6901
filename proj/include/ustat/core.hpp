#pragma once

// Reference (naive) evaluation of unconstrained, constrained, exactly
// constrained and large-gap U-statistics.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ustat/constraint.hpp"
#include "ustat/error.hpp"
#include "ustat/kernel.hpp"
#include "ustat/numeric.hpp"
#include "ustat/observations.hpp"

namespace ustat {

struct EvalOptions {
  /// Maximum number of kernel evaluations for the naive enumerator.
  std::uint64_t budget = 1'000'000'000ULL;
  /// Maximum supported arity for naive enumeration.
  std::size_t max_arity = 6;
  /// Integer kernels: skip the 128-bit fast path and use BigInt throughout.
  bool arbitrary_precision = false;
};

enum class ConstraintMode { Bounded, Exact };

/// Admissible range [lo, hi] for one consecutive index gap.
struct GapWindow {
  std::uint64_t lo = 1;
  std::uint64_t hi = std::numeric_limits<std::uint64_t>::max();
};

inline std::vector<GapWindow> gap_windows(const Constraint& d, ConstraintMode mode) {
  std::vector<GapWindow> w(d.gaps().size());
  for (std::size_t j = 0; j < w.size(); ++j) {
    const Gap g = d.gap(j);
    if (!g.is_finite()) continue;
    w[j].hi = g.value();
    if (mode == ConstraintMode::Exact) w[j].lo = g.value();
  }
  return w;
}

inline std::vector<GapWindow> gap_windows_greater_than(std::size_t ell, std::uint64_t m) {
  return std::vector<GapWindow>(ell - 1, GapWindow{m + 1, std::numeric_limits<std::uint64_t>::max()});
}

/// Number of admissible index tuples (as a double; used for budgeting).
inline double count_index_tuples(std::size_t n, std::span<const GapWindow> gaps) {
  const std::size_t ell = gaps.size() + 1;
  if (n < ell) return 0.0;
  std::vector<double> cur(n, 1.0), next(n), prefix(n + 1);
  for (const GapWindow& g : gaps) {
    prefix[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + cur[i];
    for (std::size_t i = 0; i < n; ++i) {
      // j ranges over [i - hi, i - lo]
      if (i < g.lo) {
        next[i] = 0.0;
        continue;
      }
      const std::size_t top = i - g.lo;
      const std::size_t bottom = (g.hi >= i) ? 0 : i - g.hi;
      next[i] = prefix[top + 1] - prefix[bottom];
    }
    std::swap(cur, next);
  }
  double total = 0.0;
  for (double c : cur) total += c;
  return total;
}

namespace detail {

template <ObservationSource S>
void check_compatible(const Kernel& f, const S& xs, std::size_t n_gaps, const EvalOptions& opt) {
  if (f.arity() != n_gaps + 1)
    throw ValidationError("kernel arity " + std::to_string(f.arity()) + " does not match constraint arity " +
                          std::to_string(n_gaps + 1));
  if (f.width() != xs.width())
    throw ValidationError("kernel width does not match observation width");
  if (f.arity() > opt.max_arity)
    throw BudgetExceeded("naive enumeration supports arity <= " + std::to_string(opt.max_arity));
  if constexpr (requires { xs.domain(); }) {
    const Domain& dom = xs.domain();
    if (f.domain().is_finite()) {
      if (!dom.is_finite() || dom.alphabet_size() > f.domain().alphabet_size())
        throw AlphabetMismatch("sequence alphabet does not match kernel alphabet");
    } else if (dom.is_finite() || f.as<family::PermPattern>() || f.as<family::Sign>()) {
      // Order kernels: ties are not broken arbitrarily.
      std::vector<double> v;
      for (std::size_t i = 0; i < xs.size(); ++i) v.push_back(xs.at(i)[0]);
      std::sort(v.begin(), v.end());
      if (std::adjacent_find(v.begin(), v.end()) != v.end())
        throw TieError("order kernel applied to data with ties");
    }
  }
}

/// Calls visit(args) for every admissible index tuple, where args holds the
/// concatenated observations.
template <ObservationSource S, class Visit>
void for_each_tuple(const S& xs, std::size_t ell, std::span<const GapWindow> gaps, Visit&& visit) {
  const std::size_t n = xs.size();
  if (n < ell) return;
  const std::size_t w = xs.width();
  std::vector<double> args(ell * w);
  std::vector<std::size_t> idx(ell);

  auto place = [&](std::size_t slot, std::size_t i) {
    const auto obs = xs.at(i);
    std::copy(obs.begin(), obs.end(), args.begin() + static_cast<std::ptrdiff_t>(slot * w));
  };

  // Iterative depth-first search over slots.
  std::size_t k = 0;
  idx[0] = 0;
  place(0, 0);
  while (true) {
    if (k + 1 == ell) {
      visit(std::span<const double>(args));
    } else {
      const GapWindow& g = gaps[k];
      const std::size_t first = idx[k] + g.lo;
      if (first < n) {
        ++k;
        idx[k] = first;
        place(k, first);
        continue;
      }
    }
    // advance slot k, backtracking as needed
    while (true) {
      const std::size_t next = idx[k] + 1;
      bool ok = next < n;
      if (ok && k > 0) {
        const GapWindow& g = gaps[k - 1];
        ok = (next - idx[k - 1]) <= g.hi;
      }
      if (ok) {
        idx[k] = next;
        place(k, next);
        break;
      }
      if (k == 0) return;
      --k;
    }
  }
}

template <ObservationSource S>
double evaluate(const Kernel& f, const S& xs, std::span<const GapWindow> gaps, const EvalOptions& opt) {
  check_compatible(f, xs, gaps.size(), opt);
  const double terms = count_index_tuples(xs.size(), gaps);
  if (terms > static_cast<double>(opt.budget))
    throw BudgetExceeded("naive enumeration needs " + std::to_string(terms) + " terms, budget is " +
                         std::to_string(opt.budget));
  if (f.integer_valued()) {
    ExactAccumulator acc(opt.arbitrary_precision);
    for_each_tuple(xs, f.arity(), gaps, [&](std::span<const double> a) { acc.add(static_cast<std::int64_t>(f(a))); });
    return to_double(acc.value());
  }
  // Kahan-compensated double accumulation for real kernels.
  double sum = 0.0, comp = 0.0;
  for_each_tuple(xs, f.arity(), gaps, [&](std::span<const double> a) {
    const double y = f(a) - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  });
  return sum;
}

template <ObservationSource S>
BigInt evaluate_exact(const Kernel& f, const S& xs, std::span<const GapWindow> gaps, const EvalOptions& opt) {
  if (!f.integer_valued()) throw ValidationError("exact evaluation requires an integer-valued kernel");
  check_compatible(f, xs, gaps.size(), opt);
  const double terms = count_index_tuples(xs.size(), gaps);
  if (terms > static_cast<double>(opt.budget))
    throw BudgetExceeded("naive enumeration needs " + std::to_string(terms) + " terms, budget is " +
                         std::to_string(opt.budget));
  ExactAccumulator acc(opt.arbitrary_precision);
  for_each_tuple(xs, f.arity(), gaps, [&](std::span<const double> a) { acc.add(static_cast<std::int64_t>(f(a))); });
  return acc.value();
}

}  // namespace detail

/// Sum of f over all i_1 < ... < i_ell <= n.
template <ObservationSource S>
double u_stat(const Kernel& f, const S& xs, const EvalOptions& opt = {}) {
  const auto gaps = gap_windows(Constraint::unconstrained(f.arity()), ConstraintMode::Bounded);
  return detail::evaluate(f, xs, gaps, opt);
}

/// Sum restricted to i_{j+1} - i_j <= d_j for every finite d_j.
template <ObservationSource S>
double u_stat_constrained(const Kernel& f, const Constraint& d, const S& xs, const EvalOptions& opt = {}) {
  const auto gaps = gap_windows(d, ConstraintMode::Bounded);
  return detail::evaluate(f, xs, gaps, opt);
}

/// Sum restricted to i_{j+1} - i_j = d_j for every finite d_j.
template <ObservationSource S>
double u_stat_exact_constrained(const Kernel& f, const Constraint& d, const S& xs, const EvalOptions& opt = {}) {
  const auto gaps = gap_windows(d, ConstraintMode::Exact);
  return detail::evaluate(f, xs, gaps, opt);
}

/// Sum over tuples whose consecutive gaps all exceed m.
template <ObservationSource S>
double u_stat_gap_gt(const Kernel& f, std::uint64_t m, const S& xs, const EvalOptions& opt = {}) {
  const auto gaps = gap_windows_greater_than(f.arity(), m);
  return detail::evaluate(f, xs, gaps, opt);
}

/// Exact integer versions for integer-valued kernels.
template <ObservationSource S>
BigInt u_stat_exact_count(const Kernel& f, const Constraint& d, ConstraintMode mode, const S& xs,
                          const EvalOptions& opt = {}) {
  const auto gaps = gap_windows(d, mode);
  return detail::evaluate_exact(f, xs, gaps, opt);
}

template <ObservationSource S>
BigInt u_stat_gap_gt_exact_count(const Kernel& f, std::uint64_t m, const S& xs, const EvalOptions& opt = {}) {
  const auto gaps = gap_windows_greater_than(f.arity(), m);
  return detail::evaluate_exact(f, xs, gaps, opt);
}

/// Right-hand side of the inclusion-exclusion expansion of the large-gap
/// statistic: sum over J of (-1)^|J| times the statistic constrained by D_J.
template <ObservationSource S>
BigInt gap_gt_by_inclusion_exclusion(const Kernel& f, std::uint64_t m, const S& xs, const EvalOptions& opt = {}) {
  const std::size_t ell = f.arity();
  if (m == 0) return u_stat_exact_count(f, Constraint::unconstrained(ell), ConstraintMode::Bounded, xs, opt);
  BigInt total = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << (ell - 1)); ++mask) {
    const BigInt term =
        u_stat_exact_count(f, subset_constraint(ell, mask, m), ConstraintMode::Bounded, xs, opt);
    if (std::popcount(mask) % 2) total -= term;
    else total += term;
  }
  return total;
}

}  // namespace ustat
