#pragma once

// Fast evaluators for product-form kernels (words, per-slot weights) and
// two-letter permutation patterns. These are the workhorses behind the
// simulation harness; the naive evaluators in core.hpp are their oracle.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "ustat/constraint.hpp"
#include "ustat/core.hpp"
#include "ustat/error.hpp"
#include "ustat/kernel.hpp"
#include "ustat/numeric.hpp"
#include "ustat/observations.hpp"

namespace ustat {

namespace detail {

/// Streaming layered DP. For slot k, c_k(i) = w_k(x_i) * sum_{j : i - j in
/// [lo, hi]} c_{k-1}(j), with c_0(i) = w_0(x_i). Running window sums over a
/// ring buffer of past c_{k-1} values give O(n * ell) time and O(sum d_j)
/// memory. `on_prefix(i, total)` receives the statistic of the first i + 1
/// observations after each position.
template <class V, class WeightFn, class PrefixFn>
V layered_dp(std::span<const double> xs, std::size_t ell, std::span<const GapWindow> gaps, WeightFn&& weight,
             PrefixFn&& on_prefix) {
  struct Layer {
    std::vector<V> history;  // c_{k-1}(i) at slot i % size
    std::size_t lo = 1;
    std::size_t hi = 0;
    bool bounded = false;
    V window{};
  };
  std::vector<Layer> layers(ell);
  for (std::size_t k = 1; k < ell; ++k) {
    const GapWindow& g = gaps[k - 1];
    Layer& L = layers[k];
    L.lo = static_cast<std::size_t>(g.lo);
    L.bounded = g.hi != std::numeric_limits<std::uint64_t>::max();
    L.hi = L.bounded ? static_cast<std::size_t>(g.hi) : 0;
    L.history.assign(L.bounded ? L.hi + 1 : L.lo, V{});
  }
  std::vector<V> c(ell);
  V total{};
  const std::size_t n = xs.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = xs[i];
    for (std::size_t k = 0; k < ell; ++k) {
      if (k == 0) c[k] = weight(0, x, V{1});
      else c[k] = weight(k, x, layers[k].window);
    }
    total += c[ell - 1];
    // Slide window sums to position i + 1.
    for (std::size_t k = 1; k < ell; ++k) {
      Layer& L = layers[k];
      const std::size_t size = L.history.size();
      L.history[i % size] = c[k - 1];
      // add c_{k-1}(i + 1 - lo)
      if (i + 1 >= L.lo) L.window += L.history[(i + 1 - L.lo) % size];
      // drop c_{k-1}(i - hi), which left the window [i + 1 - hi, i + 1 - lo]
      if (L.bounded && i >= L.hi) L.window -= L.history[(i - L.hi) % size];
    }
    on_prefix(i, total);
  }
  return total;
}

inline std::vector<double> word_letters_as_double(const std::vector<int>& letters) {
  return {letters.begin(), letters.end()};
}

}  // namespace detail

/// Exact number of (bounded or exactly) gap-constrained occurrences of a word.
inline BigInt count_word_dp(const std::vector<int>& word, const Constraint& d, const ObservationSequence& text,
                            ConstraintMode mode = ConstraintMode::Bounded) {
  if (word.size() != d.ell()) throw ValidationError("word length does not match constraint");
  if (!text.domain().is_finite()) throw AlphabetMismatch("word counting needs a finite-alphabet text");
  for (int c : word)
    if (c < 0 || static_cast<std::size_t>(c) >= text.domain().alphabet_size())
      throw AlphabetMismatch("word letter outside the text alphabet");
  const auto gaps = gap_windows(d, mode);
  const auto letters = detail::word_letters_as_double(word);
  auto none = [](std::size_t, const auto&) {};
  try {
    auto weight = [&](std::size_t k, double x, CheckedCount in) { return x == letters[k] ? in : CheckedCount{}; };
    const CheckedCount r = detail::layered_dp<CheckedCount>(text.values(), word.size(), gaps, weight, none);
    return from_uint128(r.v);
  } catch (const CountOverflow&) {
    auto weight = [&](std::size_t k, double x, const BigInt& in) { return x == letters[k] ? in : BigInt(0); };
    return detail::layered_dp<BigInt>(text.values(), word.size(), gaps, weight, none);
  }
}

inline BigInt count_word_dp(const Kernel& word_kernel, const Constraint& d, const ObservationSequence& text,
                            ConstraintMode mode = ConstraintMode::Bounded) {
  const auto* w = word_kernel.as<family::Word>();
  if (!w) throw ValidationError("count_word_dp needs a word kernel");
  return count_word_dp(w->letters, d, text, mode);
}

/// Number of inversions (pairs i < j with x_i > x_j) by merge sort.
inline BigInt count_inversions(std::span<const double> xs) {
  std::vector<double> a(xs.begin(), xs.end()), tmp(a.size());
  unsigned __int128 inv = 0;
  for (std::size_t width = 1; width < a.size(); width *= 2) {
    for (std::size_t lo = 0; lo < a.size(); lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, a.size());
      const std::size_t hi = std::min(lo + 2 * width, a.size());
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (a[j] < a[i]) {
          inv += mid - i;
          tmp[k++] = a[j++];
        } else {
          tmp[k++] = a[i++];
        }
      }
      while (i < mid) tmp[k++] = a[i++];
      while (j < hi) tmp[k++] = a[j++];
    }
    std::swap(a, tmp);
  }
  return from_uint128(inv);
}

/// Occurrences of the permutation pattern tau (1-based) under a constraint.
inline BigInt count_perm_pattern(const std::vector<int>& tau, const Constraint& d, const ObservationSequence& xs,
                                 ConstraintMode mode = ConstraintMode::Bounded, const EvalOptions& opt = {}) {
  const Kernel f = Kernel::perm_pattern(tau);
  if (d.ell() != tau.size()) throw ValidationError("pattern length does not match constraint");
  {
    std::vector<double> v(xs.values().begin(), xs.values().end());
    std::sort(v.begin(), v.end());
    if (std::adjacent_find(v.begin(), v.end()) != v.end()) throw TieError("permutation input contains ties");
  }
  const std::size_t n = xs.size();
  if (tau.size() == 1) return BigInt(n);
  if (tau.size() == 2 && d.is_unconstrained()) {
    const BigInt inv = count_inversions(xs.values());
    return tau[0] == 2 ? inv : BigInt(binomial(static_cast<std::int64_t>(n), 2) - inv);
  }
  return u_stat_exact_count(f, d, mode, xs, opt);
}

/// Incremental inversion counter: push values one at a time and read the
/// running count. Values are pre-ranked so a Fenwick tree can be used.
class InversionCounter {
 public:
  explicit InversionCounter(std::span<const double> values) : tree_(values.size() + 1, 0) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    for (std::size_t r = 1; r < order.size(); ++r)
      if (values[order[r]] == values[order[r - 1]]) throw TieError("permutation input contains ties");
    rank_.resize(values.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank_[order[r]] = r + 1;
  }

  /// Adds observation i (in order) and returns the inversion count so far.
  std::uint64_t push(std::size_t i) {
    const std::size_t r = rank_[i];
    std::uint64_t not_greater = 0;
    for (std::size_t p = r; p > 0; p -= p & (~p + 1)) not_greater += tree_[p];
    inversions_ += seen_ - not_greater;
    for (std::size_t p = r; p < tree_.size(); p += p & (~p + 1)) ++tree_[p];
    ++seen_;
    return inversions_;
  }

  std::uint64_t seen() const noexcept { return seen_; }

 private:
  std::vector<std::size_t> rank_;
  std::vector<std::uint64_t> tree_;
  std::uint64_t inversions_ = 0;
  std::uint64_t seen_ = 0;
};

/// Evaluates U_k for every requested prefix length k (sorted ascending) in a
/// single pass where the kernel allows it, falling back to naive evaluation.
/// Values are doubles; counts are exact while they stay below 2^53.
inline std::vector<double> prefix_statistics(const Kernel& f, const Constraint& d, ConstraintMode mode,
                                             const ObservationSequence& xs, std::span<const std::size_t> prefixes,
                                             const EvalOptions& opt = {}) {
  std::vector<double> out(prefixes.size(), 0.0);
  if (prefixes.empty()) return out;
  if (!std::is_sorted(prefixes.begin(), prefixes.end())) throw ValidationError("prefix lengths must be sorted");
  const std::size_t n_max = prefixes.back();
  if (n_max > xs.size()) throw SequenceTooShort("prefix longer than sequence");
  const std::span<const double> data = xs.values().first(n_max);
  const auto gaps = gap_windows(d, mode);

  auto run_dp = [&](auto&& weight, auto& acc_out, double scale) {
    std::size_t next = 0;
    while (next < prefixes.size() && prefixes[next] == 0) ++next;
    detail::layered_dp<double>(data, f.arity(), gaps, weight, [&](std::size_t i, double total) {
      while (next < prefixes.size() && prefixes[next] == i + 1) acc_out[next++] += scale * total;
    });
  };

  if (const auto* w = f.as<family::Word>()) {
    const auto letters = detail::word_letters_as_double(w->letters);
    run_dp([&](std::size_t k, double x, double in) { return x == letters[k] ? in : 0.0; }, out, 1.0);
    return out;
  }
  if (const auto* p = f.as<family::Product>()) {
    run_dp([&](std::size_t k, double x, double in) { return p->factors[k][static_cast<std::size_t>(x)] * in; }, out,
           1.0);
    return out;
  }
  if (const auto* t = f.as<family::Table>()) {
    const std::size_t a = t->alphabet_size;
    std::vector<double> letters(f.arity());
    for (std::size_t idx = 0; idx < t->values.size(); ++idx) {
      const double coef = t->values[idx];
      if (coef == 0.0) continue;
      std::size_t r = idx;
      for (std::size_t k = f.arity(); k-- > 0;) {
        letters[k] = static_cast<double>(r % a);
        r /= a;
      }
      run_dp([&](std::size_t k, double x, double in) { return x == letters[k] ? in : 0.0; }, out, coef);
    }
    return out;
  }
  if (const auto* lin = f.as<family::Linear>()) {
    for (const auto& term : lin->terms) {
      const auto part = prefix_statistics(*term.kernel, d, mode, xs, prefixes, opt);
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += term.coefficient * part[i];
    }
    return out;
  }
  if (const auto* p = f.as<family::PermPattern>(); p && p->tau.size() == 2 && d.is_unconstrained()) {
    InversionCounter counter(data);
    std::size_t next = 0;
    while (next < prefixes.size() && prefixes[next] == 0) ++next;
    for (std::size_t i = 0; i < n_max; ++i) {
      const auto inv = static_cast<double>(counter.push(i));
      const double k = static_cast<double>(i + 1);
      const double value = p->tau[0] == 2 ? inv : k * (k - 1) / 2 - inv;
      while (next < prefixes.size() && prefixes[next] == i + 1) out[next++] = value;
    }
    return out;
  }
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    const ObservationSequence head = xs.prefix(prefixes[i]);
    out[i] = mode == ConstraintMode::Exact ? u_stat_exact_constrained(f, d, head, opt)
                                           : u_stat_constrained(f, d, head, opt);
  }
  return out;
}

}  // namespace ustat
