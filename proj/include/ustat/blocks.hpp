#pragma once

// Block structure of a constraint and the reduction of (exactly) constrained
// U-statistics to unconstrained ones over windows Y_i = (x_i, ..., x_{i+M-1}).

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "ustat/constraint.hpp"
#include "ustat/core.hpp"
#include "ustat/error.hpp"
#include "ustat/kernel.hpp"
#include "ustat/observations.hpp"

namespace ustat {

struct BlockStructure {
  std::size_t b = 1;
  /// 1-based block starts beta_1 = 1 < ... < beta_b, plus sentinel ell + 1.
  std::vector<std::size_t> beta;
  std::vector<std::size_t> ell_q;
  /// t[q][r]: offset of slot r of block q from the block start; t[q][0] = 0.
  std::vector<std::vector<std::uint64_t>> t;
  std::vector<std::uint64_t> u;
  std::vector<std::uint64_t> v;
  std::uint64_t d_sum = 0;
  std::uint64_t window = 1;  // M

  std::size_t ell() const { return beta.back() - 1; }

  /// 0-based coordinate inside window q read by slot r.
  std::uint64_t coordinate(std::size_t q, std::size_t r) const { return v[q] + t[q][r]; }
};

inline BlockStructure block_structure(const Constraint& d) {
  BlockStructure bs;
  const std::size_t ell = d.ell();
  bs.beta.push_back(1);
  for (std::size_t j = 1; j < ell; ++j)
    if (!d.gap(j - 1).is_finite()) bs.beta.push_back(j + 1);
  bs.b = bs.beta.size();
  bs.beta.push_back(ell + 1);
  for (std::size_t q = 0; q < bs.b; ++q) {
    const std::size_t len = bs.beta[q + 1] - bs.beta[q];
    bs.ell_q.push_back(len);
    std::vector<std::uint64_t> tq(len, 0);
    for (std::size_t r = 1; r < len; ++r) tq[r] = tq[r - 1] + d.gap(bs.beta[q] + r - 2).value();
    bs.u.push_back(tq.back());
    bs.t.push_back(std::move(tq));
  }
  std::uint64_t acc = 0;
  for (std::size_t q = 0; q < bs.b; ++q) {
    bs.v.push_back(acc);
    acc += bs.u[q];
  }
  bs.d_sum = d.finite_sum();
  bs.window = bs.d_sum + 1;
  return bs;
}

/// Dependence range of the lifted sequence when the base is m-dependent.
inline std::uint64_t lifted_dependence(std::uint64_t m, std::uint64_t window) { return m + window - 1; }

/// Windows Y_i = (x_i, ..., x_{i+M-1}) as views over the base values.
/// Windows that run past the end of the base sequence (requested through
/// `count`) are padded with NaN; reduced kernels never read those cells.
class LiftedSequence {
 public:
  LiftedSequence(const ObservationSequence& base, std::size_t window, std::size_t count)
      : domain_(base.domain()), window_(window), count_(count) {
    const std::size_t n = base.size();
    const std::size_t needed = count == 0 ? 0 : count + window - 1;
    if (needed <= n) {
      values_ = base.values();
    } else {
      padded_ = std::make_shared<std::vector<double>>(base.values().begin(), base.values().end());
      padded_->resize(needed, std::numeric_limits<double>::quiet_NaN());
      values_ = *padded_;
    }
  }

  std::size_t size() const noexcept { return count_; }
  std::size_t width() const noexcept { return window_; }
  std::span<const double> at(std::size_t i) const { return values_.subspan(i, window_); }
  const Domain& domain() const noexcept { return domain_; }

 private:
  Domain domain_;
  std::size_t window_;
  std::size_t count_;
  std::span<const double> values_;
  std::shared_ptr<std::vector<double>> padded_;
};

/// All n - M + 1 complete windows. The base sequence must outlive the result.
inline LiftedSequence lift(const ObservationSequence& xs, std::size_t window) {
  if (window < 1) throw ValidationError("window width must be >= 1");
  if (xs.size() < window)
    throw SequenceTooShort("sequence of length " + std::to_string(xs.size()) + " is shorter than window " +
                           std::to_string(window));
  return LiftedSequence(xs, window, xs.size() - window + 1);
}

/// The first `count` windows, padding past the end of the base sequence.
inline LiftedSequence lift_prefix(const ObservationSequence& xs, std::size_t window, std::size_t count) {
  if (window < 1) throw ValidationError("window width must be >= 1");
  return LiftedSequence(xs, window, count);
}

namespace detail {

inline Kernel reduce_exact(const Kernel& f, const Constraint& d, std::uint64_t window) {
  const BlockStructure bs = block_structure(d);
  std::vector<std::size_t> coords;  // flattened position read by each slot of f
  for (std::size_t q = 0; q < bs.b; ++q)
    for (std::size_t r = 0; r < bs.ell_q[q]; ++r) coords.push_back(q * window + bs.coordinate(q, r));
  auto fp = std::make_shared<const Kernel>(f);
  auto eval = [fp, coords](std::span<const double> y) {
    constexpr std::size_t kInline = 16;
    if (coords.size() <= kInline) {
      std::array<double, kInline> buf;
      for (std::size_t k = 0; k < coords.size(); ++k) buf[k] = y[coords[k]];
      return (*fp)(std::span<const double>(buf.data(), coords.size()));
    }
    std::vector<double> buf(coords.size());
    for (std::size_t k = 0; k < coords.size(); ++k) buf[k] = y[coords[k]];
    return (*fp)(buf);
  };
  return Kernel::custom(bs.b, window, f.domain(), std::move(eval), "reduced[" + f.describe() + ";" + d.str() + "=]",
                        f.integer_valued());
}

}  // namespace detail

/// The kernel g on b windows of width M with
///   g(y_1, ..., y_b) = f((y_{q, v_q + t_{q,r} + 1})_{q,r})
/// for exact constraints, and g_D = sum over exact sub-constraints otherwise.
inline Kernel reduced_kernel(const Kernel& f, const Constraint& d, std::uint64_t window,
                             ConstraintMode mode = ConstraintMode::Exact) {
  if (f.width() != 1) throw ValidationError("reduction expects a kernel on single observations");
  if (f.arity() != d.ell()) throw ValidationError("kernel arity does not match constraint");
  if (window <= d.finite_sum())
    throw WindowTooSmall("window M = " + std::to_string(window) + " must exceed D = " +
                         std::to_string(d.finite_sum()));
  if (mode == ConstraintMode::Exact || d.is_unconstrained()) return detail::reduce_exact(f, d, window);
  std::vector<std::pair<double, Kernel>> terms;
  for (const Constraint& sub : exact_subconstraints(d)) terms.emplace_back(1.0, detail::reduce_exact(f, sub, window));
  if (terms.size() == 1) return terms.front().second;
  return Kernel::linear(std::move(terms));
}

/// U_{n-D}(g; Y) for the exact reduction (0 when n < D).
inline BigInt reduced_exact_count(const Kernel& f, const Constraint& d, const ObservationSequence& xs,
                                  const EvalOptions& opt = {}) {
  const std::uint64_t dsum = d.finite_sum();
  if (xs.size() < dsum) return 0;
  const Kernel g = reduced_kernel(f, d, dsum + 1, ConstraintMode::Exact);
  const LiftedSequence ys = lift_prefix(xs, dsum + 1, xs.size() - dsum);
  return u_stat_exact_count(g, Constraint::unconstrained(g.arity()), ConstraintMode::Bounded, ys, opt);
}

/// Sum over exact sub-constraints D' of U_{n-D'}(g_{D'=}; Y), all with the
/// common window M = D + 1.
inline BigInt reduced_bounded_count(const Kernel& f, const Constraint& d, const ObservationSequence& xs,
                                    const EvalOptions& opt = {}) {
  const std::uint64_t window = d.finite_sum() + 1;
  BigInt total = 0;
  for (const Constraint& sub : exact_subconstraints(d)) {
    const std::uint64_t dsub = sub.finite_sum();
    if (xs.size() < dsub) continue;
    const Kernel g = reduced_kernel(f, sub, window, ConstraintMode::Exact);
    const LiftedSequence ys = lift_prefix(xs, window, xs.size() - dsub);
    total += u_stat_exact_count(g, Constraint::unconstrained(g.arity()), ConstraintMode::Bounded, ys, opt);
  }
  return total;
}

}  // namespace ustat
