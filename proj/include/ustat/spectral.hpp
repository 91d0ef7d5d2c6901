#pragma once

// Orthogonal decomposition V = sum_k V_k of functions on A^ell under an
// i.i.d. letter law, projections, degeneracy order, and the two worked
// degenerate examples on binary and four-letter alphabets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ustat/core.hpp"
#include "ustat/error.hpp"
#include "ustat/kernel.hpp"
#include "ustat/model.hpp"
#include "ustat/moments.hpp"
#include "ustat/numeric.hpp"
#include "ustat/parallel.hpp"
#include "ustat/rng.hpp"
#include "ustat/stats.hpp"

namespace ustat {

/// Orthonormal basis phi_0 = 1, phi_1, ..., phi_{A-1} of L^2(p) on the
/// alphabet; phi_1.. span W_0 = {h : E h(xi) = 0}.
class FunctionSpaceBasis {
 public:
  FunctionSpaceBasis(std::vector<double> p, std::size_t ell) : p_(std::move(p)), ell_(ell) {
    const std::size_t a = p_.size();
    if (a == 0 || ell_ == 0) throw ValidationError("basis needs a non-empty alphabet and ell >= 1");
    for (double v : p_)
      if (!(v > 0.0)) throw ValidationError("letter probabilities must be strictly positive");
    if (saturating_pow(a, ell_) > (std::uint64_t{1} << 24)) throw BudgetExceeded("A^ell too large for the basis");
    phi_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a));
    for (std::size_t x = 0; x < a; ++x) phi_(0, static_cast<Eigen::Index>(x)) = 1.0;
    // Gram-Schmidt on 1_{x=c} - p(c), c = 1, ..., A-1 (c = 0 is the dropped symbol).
    for (std::size_t c = 1; c < a; ++c) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(a));
      for (std::size_t x = 0; x < a; ++x) v(static_cast<Eigen::Index>(x)) = (x == c ? 1.0 : 0.0) - p_[c];
      for (std::size_t k = 0; k < c; ++k) {
        const Eigen::VectorXd u = phi_.row(static_cast<Eigen::Index>(k)).transpose();
        v -= inner(u, v) * u;
      }
      v /= std::sqrt(inner(v, v));
      phi_.row(static_cast<Eigen::Index>(c)) = v.transpose();
    }
  }

  std::size_t alphabet_size() const noexcept { return p_.size(); }
  std::size_t ell() const noexcept { return ell_; }
  const std::vector<double>& p() const noexcept { return p_; }
  std::size_t table_size() const { return static_cast<std::size_t>(saturating_pow(p_.size(), ell_)); }

  /// phi_k(x).
  double phi(std::size_t k, std::size_t x) const {
    return phi_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(x));
  }

  /// <u, v> = sum_x p(x) u(x) v(x) on one letter.
  double inner(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    double s = 0.0;
    for (std::size_t x = 0; x < p_.size(); ++x) s += p_[x] * u(static_cast<Eigen::Index>(x)) * v(static_cast<Eigen::Index>(x));
    return s;
  }

  /// <f, g>_V = E f(xi_1..xi_ell) g(xi_1..xi_ell) over tables in A^ell.
  double inner(const std::vector<double>& f, const std::vector<double>& g) const {
    const std::size_t a = p_.size();
    double s = 0.0;
    for (std::size_t idx = 0; idx < f.size(); ++idx) {
      double w = 1.0;
      std::size_t r = idx;
      for (std::size_t k = 0; k < ell_; ++k) {
        w *= p_[r % a];
        r /= a;
      }
      s += w * f[idx] * g[idx];
    }
    return s;
  }

  double norm2(const std::vector<double>& f) const { return inner(f, f); }

  /// Coefficients c_K = <f, Phi_K> in the tensor basis, indexed like tables.
  std::vector<double> coefficients(const std::vector<double>& f) const {
    check(f);
    Eigen::MatrixXd q(phi_.rows(), phi_.cols());
    for (Eigen::Index k = 0; k < phi_.rows(); ++k)
      for (Eigen::Index x = 0; x < phi_.cols(); ++x) q(k, x) = p_[static_cast<std::size_t>(x)] * phi_(k, x);
    return apply_axes(f, q);
  }

  /// Table of sum_K c_K Phi_K.
  std::vector<double> reconstruct(const std::vector<double>& c) const {
    check(c);
    return apply_axes(c, phi_.transpose());
  }

  /// Bitmask of slots where multi-index K is non-constant.
  std::uint64_t support(std::size_t idx) const {
    const std::size_t a = p_.size();
    std::uint64_t mask = 0;
    for (std::size_t k = ell_; k-- > 0;) {
      if (idx % a != 0) mask |= std::uint64_t{1} << k;
      idx /= a;
    }
    return mask;
  }

  /// Orthogonal projection onto V_B (B a bitmask over slots, slot 0 is the
  /// most significant table digit and bit 0).
  std::vector<double> project_subset(const std::vector<double>& f, std::uint64_t B) const {
    auto c = coefficients(f);
    for (std::size_t idx = 0; idx < c.size(); ++idx)
      if (support(idx) != B) c[idx] = 0.0;
    return reconstruct(c);
  }

  /// Orthogonal projection onto V_k = sum_{|B| = k} V_B.
  std::vector<double> project(const std::vector<double>& f, std::size_t k) const {
    auto c = coefficients(f);
    for (std::size_t idx = 0; idx < c.size(); ++idx)
      if (static_cast<std::size_t>(std::popcount(support(idx))) != k) c[idx] = 0.0;
    return reconstruct(c);
  }

  /// ||Pi_k f||^2 for k = 0..ell.
  std::vector<double> degree_norms(const std::vector<double>& f) const {
    const auto c = coefficients(f);
    std::vector<double> out(ell_ + 1, 0.0);
    for (std::size_t idx = 0; idx < c.size(); ++idx) out[static_cast<std::size_t>(std::popcount(support(idx)))] += c[idx] * c[idx];
    return out;
  }

  /// dim V_k = C(ell, k) (A - 1)^k.
  std::uint64_t dimension(std::size_t k) const {
    return static_cast<std::uint64_t>(to_double(binomial(static_cast<std::int64_t>(ell_), static_cast<std::int64_t>(k)))) *
           saturating_pow(p_.size() - 1, k);
  }

 private:
  void check(const std::vector<double>& f) const {
    if (f.size() != table_size()) throw ValidationError("table size does not match A^ell");
  }

  /// Applies the A x A matrix m along every axis of the table.
  std::vector<double> apply_axes(std::vector<double> t, const Eigen::MatrixXd& m) const {
    const std::size_t a = p_.size();
    std::vector<double> out(t.size());
    std::size_t stride = 1;
    for (std::size_t axis = 0; axis < ell_; ++axis) {
      std::fill(out.begin(), out.end(), 0.0);
      for (std::size_t idx = 0; idx < t.size(); ++idx) {
        const std::size_t digit = (idx / stride) % a;
        const std::size_t base = idx - digit * stride;
        for (std::size_t k = 0; k < a; ++k)
          out[base + k * stride] += m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(digit)) * t[idx];
      }
      std::swap(t, out);
      stride *= a;
    }
    return t;
  }

  std::vector<double> p_;
  std::size_t ell_;
  Eigen::MatrixXd phi_;  // phi_(k, x)
};

/// Smallest k >= 1 with ||Pi_k f|| > tol; 0 when f is constant.
inline std::size_t degeneracy_order(const FunctionSpaceBasis& basis, const std::vector<double>& f, double tol = 1e-10) {
  const auto norms = basis.degree_norms(f);
  for (std::size_t k = 1; k < norms.size(); ++k)
    if (std::sqrt(norms[k]) > tol) return k;
  return 0;
}

/// Rank of the span of Pi_k applied to `count` random kernels.
inline std::size_t projection_rank(const FunctionSpaceBasis& basis, std::size_t k, std::size_t count,
                                   std::uint64_t seed) {
  const std::size_t size = basis.table_size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(count));
  for (std::size_t c = 0; c < count; ++c) {
    CounterRng rng(seed, c, 0);
    std::vector<double> f(size);
    for (std::size_t i = 0; i < size; ++i) f[i] = 2.0 * rng.uniform_at(i) - 1.0;
    const auto pf = basis.project(f, k);
    for (std::size_t i = 0; i < size; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = pf[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(1e-9);
  return static_cast<std::size_t>(qr.rank());
}

struct VarianceOrder {
  std::vector<std::size_t> n;
  std::vector<double> variance;
  double slope = 0.0;
  std::size_t order = 0;          // k*
  double expected_slope = 0.0;    // 2 ell - k*
};

/// Exact Var U_n by enumeration over all strings for n in [n_lo, n_hi], and
/// the least-squares slope of log Var against log n.
inline VarianceOrder variance_order(const Kernel& f, const SequenceModel& model, std::size_t n_lo, std::size_t n_hi,
                                    double tol = 1e-10) {
  if (!model.is_iid() || !model.is_finite()) throw ValidationError("variance_order needs an i.i.d. finite model");
  const ExactUnMoments em = exact_un_moments(f, model, n_hi);
  VarianceOrder out;
  const FunctionSpaceBasis basis(model.base_probabilities(), f.arity());
  out.order = degeneracy_order(basis, tabulate(f), tol);
  out.expected_slope = out.order == 0 ? 0.0 : 2.0 * static_cast<double>(f.arity()) - static_cast<double>(out.order);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, cnt = 0;
  for (std::size_t n = n_lo; n <= n_hi; ++n) {
    out.n.push_back(n);
    out.variance.push_back(em.variance[n]);
    if (em.variance[n] > 1e-12) {
      const double lx = std::log(static_cast<double>(n)), ly = std::log(em.variance[n]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++cnt;
    }
  }
  if (cnt >= 2) out.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  return out;
}

// ---------------------------------------------------------------------------
// Worked examples.

/// The binary kernel (1{x=1} - 1{x=0})(1{y=1} - 1{y=0}), i.e. x^ y^ on +-1.
inline Kernel e21_kernel() { return Kernel::table(2, 2, {1.0, -1.0, -1.0, 1.0}, {"0", "1"}); }

/// The four-letter kernel (eta_a(x) - eta_b(x))(eta_c(y) - eta_d(y)).
inline Kernel e4_kernel() {
  auto eta = [](std::size_t y, std::size_t x) { return x == y ? 1.0 : 0.0; };
  std::vector<double> v(16);
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t y = 0; y < 4; ++y) v[x * 4 + y] = (eta(0, x) - eta(1, x)) * (eta(2, y) - eta(3, y));
  return Kernel::table(4, 2, std::move(v), {"a", "b", "c", "d"});
}

/// Checks sum_{i<j} x_i x_j = ((sum x)^2 - n) / 2 exactly for a +-1 string.
inline bool e21_identity_check(const std::vector<int>& pm) {
  std::vector<int> sym;
  long sum = 0;
  for (int v : pm) {
    if (v != 1 && v != -1) throw ValidationError("entries must be +1 or -1");
    sym.push_back(v == 1 ? 1 : 0);
    sum += v;
  }
  const ObservationSequence xs = ObservationSequence::symbols(2, sym);
  const BigInt lhs = u_stat_exact_count(e21_kernel(), Constraint::unconstrained(2), ConstraintMode::Bounded, xs);
  const BigInt twice_rhs = BigInt(sum) * sum - static_cast<long>(pm.size());
  return 2 * lhs == twice_rhs;
}

/// Closed form ((sum x)^2 - n) / 2 of the E21 statistic.
inline double e21_closed_form(const std::vector<int>& pm) {
  long sum = 0;
  for (int v : pm) sum += v;
  return (static_cast<double>(sum) * static_cast<double>(sum) - static_cast<double>(pm.size())) / 2.0;
}

/// Symmetric discretization of
///   T h(x, t) = E int_0^t f(xi, x) h(xi, u) du + E int_t^1 f(x, xi) h(xi, u) du
/// on A x [0, 1] with N midpoints per letter: S = W^{1/2} K W^{1/2}, where
/// the diagonal t = u uses the average of the two one-sided kernels.
class Jun2Operator {
 public:
  Jun2Operator(std::vector<double> f, std::vector<double> p, std::size_t grid)
      : f_(std::move(f)), p_(std::move(p)), n_(grid) {
    if (f_.size() != p_.size() * p_.size()) throw ValidationError("operator needs an arity-2 table");
    if (grid < 1) throw ValidationError("grid size must be positive");
  }

  std::size_t size() const noexcept { return p_.size() * n_; }

  /// y = S v, O(A^2 N) by prefix sums over the grid.
  void apply(const Eigen::VectorXd& v, Eigen::VectorXd& y) const {
    const std::size_t a = p_.size();
    const double h = 1.0 / static_cast<double>(n_);
    y.setZero(static_cast<Eigen::Index>(size()));
    std::vector<double> w(a);
    for (std::size_t x = 0; x < a; ++x) w[x] = std::sqrt(p_[x]);
    std::vector<double> below(a), above(a), total(a, 0.0);
    for (std::size_t yl = 0; yl < a; ++yl)
      for (std::size_t l = 0; l < n_; ++l) total[yl] += v(static_cast<Eigen::Index>(yl * n_ + l));
    std::fill(below.begin(), below.end(), 0.0);
    for (std::size_t k = 0; k < n_; ++k) {
      for (std::size_t yl = 0; yl < a; ++yl) above[yl] = total[yl] - below[yl] - v(static_cast<Eigen::Index>(yl * n_ + k));
      for (std::size_t x = 0; x < a; ++x) {
        double s = 0.0;
        for (std::size_t yl = 0; yl < a; ++yl) {
          const double fxy = f_[x * a + yl], fyx = f_[yl * a + x];
          s += w[yl] * (fxy * above[yl] + fyx * below[yl] + 0.5 * (fxy + fyx) * v(static_cast<Eigen::Index>(yl * n_ + k)));
        }
        y(static_cast<Eigen::Index>(x * n_ + k)) = h * w[x] * s;
      }
      for (std::size_t yl = 0; yl < a; ++yl) below[yl] += v(static_cast<Eigen::Index>(yl * n_ + k));
    }
  }

  Eigen::MatrixXd dense() const {
    const std::size_t s = size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s)), col;
    for (std::size_t j = 0; j < s; ++j) {
      e(static_cast<Eigen::Index>(j)) = 1.0;
      apply(e, col);
      m.col(static_cast<Eigen::Index>(j)) = col;
      e(static_cast<Eigen::Index>(j)) = 0.0;
    }
    return m;
  }

 private:
  std::vector<double> f_;
  std::vector<double> p_;
  std::size_t n_;
};

/// Extreme eigenvalues by Lanczos with full reorthogonalization, returned
/// sorted by decreasing absolute value.
inline std::vector<double> lanczos_eigenvalues(const Jun2Operator& op, std::size_t steps, std::size_t count,
                                               std::uint64_t seed = 7) {
  const auto s = static_cast<Eigen::Index>(op.size());
  steps = std::min<std::size_t>(steps, op.size());
  Eigen::MatrixXd Q(s, static_cast<Eigen::Index>(steps + 1));
  Eigen::VectorXd q(s);
  CounterRng rng(seed);
  for (Eigen::Index i = 0; i < s; ++i) q(i) = rng.uniform_at(static_cast<std::uint64_t>(i)) - 0.5;
  q.normalize();
  Q.col(0) = q;
  std::vector<double> alpha, beta;
  Eigen::VectorXd w;
  std::size_t k = 0;
  for (; k < steps; ++k) {
    op.apply(Q.col(static_cast<Eigen::Index>(k)), w);
    const double a = Q.col(static_cast<Eigen::Index>(k)).dot(w);
    alpha.push_back(a);
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t j = 0; j <= k; ++j) w -= Q.col(static_cast<Eigen::Index>(j)).dot(w) * Q.col(static_cast<Eigen::Index>(j));
    const double bnorm = w.norm();
    if (bnorm < 1e-12) {
      ++k;
      break;
    }
    beta.push_back(bnorm);
    Q.col(static_cast<Eigen::Index>(k + 1)) = w / bnorm;
  }
  const auto m = static_cast<Eigen::Index>(alpha.size());
  Eigen::VectorXd diag(m), sub(std::max<Eigen::Index>(m - 1, 1));
  for (Eigen::Index i = 0; i < m; ++i) diag(i) = alpha[static_cast<std::size_t>(i)];
  for (Eigen::Index i = 0; i + 1 < m; ++i) sub(i) = beta[static_cast<std::size_t>(i)];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub.head(std::max<Eigen::Index>(m - 1, 0)), Eigen::EigenvaluesOnly);
  std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + m);
  std::sort(ev.begin(), ev.end(), [](double x, double y) { return std::abs(x) > std::abs(y); });
  ev.resize(std::min(count, ev.size()));
  return ev;
}

/// Leading eigenvalues (by absolute value, signed) of the discretized
/// operator for the four-letter example; the limits are 1 / ((2N + 1) pi).
inline std::vector<double> e4_operator_eigs(std::size_t grid_size, std::size_t count = 6, std::size_t steps = 160) {
  if (grid_size < 100) throw ValidationError("grid_size must be >= 100");
  const Jun2Operator op(tabulate(e4_kernel()), std::vector<double>(4, 0.25), grid_size);
  return lanczos_eigenvalues(op, steps, count);
}

struct MgfCheck {
  double s = 0.0;
  double empirical = 0.0;
  double se = 0.0;
  double analytic = 0.0;   // 1 / sqrt(cos(s / 2))
  double truncated = 0.0;  // exact MGF of the truncated series
  double mgf_minus = 0.0;  // empirical E e^{-sZ}
  double variance = 0.0;   // empirical Var Z
};

/// Samples Z = (1 / 2 pi) sum_{N < N_max} (zeta_N^2 - zeta'_N^2) / (2N + 1)
/// and compares E e^{sZ} with 1 / sqrt(cos(s / 2)).
inline MgfCheck e4_limit_mgf_check(std::size_t R, std::uint64_t seed, std::size_t n_max, double s,
                                   unsigned threads = 0) {
  if (!(std::abs(s) < std::numbers::pi)) throw ValidationError("|s| must be below pi");
  if (n_max < 50) throw ValidationError("truncation must be >= 50 terms");
  std::vector<double> z(R);
  parallel_for(
      R,
      [&](std::size_t r) {
        CounterRng rng(seed, r, 0);
        std::normal_distribution<double> normal;
        double acc = 0.0;
        for (std::size_t N = 0; N < n_max; ++N) {
          const double a = normal(rng), b = normal(rng);
          acc += (a * a - b * b) / static_cast<double>(2 * N + 1);
        }
        z[r] = acc / (2.0 * std::numbers::pi);
      },
      threads);
  MgfCheck out;
  out.s = s;
  std::vector<double> e(R), em(R);
  for (std::size_t r = 0; r < R; ++r) {
    e[r] = std::exp(s * z[r]);
    em[r] = std::exp(-s * z[r]);
  }
  const SampleSummary se = summarize(e);
  out.empirical = se.mean;
  out.se = se.mean_se;
  out.mgf_minus = summarize(em).mean;
  out.variance = summarize(z).variance;
  out.analytic = 1.0 / std::sqrt(std::cos(s / 2.0));
  double t = 1.0;
  for (std::size_t N = 0; N < n_max; ++N) {
    const double a = 1.0 / (2.0 * std::numbers::pi * static_cast<double>(2 * N + 1));
    t /= std::sqrt(1.0 - 4.0 * s * s * a * a);
  }
  out.truncated = t;
  return out;
}

}  // namespace ustat
