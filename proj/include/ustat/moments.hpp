#pragma once

// Asymptotic means, Hoeffding projections, covariance arrays and the
// asymptotic variance sigma^2, with exact, analytic and Monte Carlo routes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ustat/blocks.hpp"
#include "ustat/constraint.hpp"
#include "ustat/core.hpp"
#include "ustat/error.hpp"
#include "ustat/kernel.hpp"
#include "ustat/model.hpp"
#include "ustat/numeric.hpp"
#include "ustat/parallel.hpp"
#include "ustat/rng.hpp"

namespace ustat {

struct MomentOptions {
  /// Largest joint-state count enumerated exactly; beyond it Monte Carlo.
  std::uint64_t state_budget = 10'000'000ULL;
  std::uint64_t mc_samples = 200'000;
  std::uint64_t seed = 20240601;
  /// Degeneracy tolerance on max |b_ij| for exact results.
  double tol = 1e-10;
  /// Monte Carlo "degenerate" needs every 3 SE band below this.
  double mc_tol = 1e-3;
  unsigned threads = 0;
  bool force_mc = false;
};

enum class Method { Exact, Analytic, MonteCarlo };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Exact: return "exact";
    case Method::Analytic: return "analytic";
    default: return "monte-carlo";
  }
}

struct Estimate {
  double value = 0.0;
  double se = 0.0;
  Method method = Method::Exact;
};

// ---------------------------------------------------------------------------
// Polynomials in Beta form: sum of c * x^a * (1 - x)^b on [0, 1].

struct BetaTerm {
  Rational c;
  unsigned a = 0;
  unsigned b = 0;
};

using BetaPoly = std::vector<BetaTerm>;

/// integral_0^1 x^a (1 - x)^b dx = a! b! / (a + b + 1)!
inline Rational beta_integral(unsigned a, unsigned b) {
  return Rational(factorial(a) * factorial(b), factorial(a + b + 1));
}

inline Rational integrate(const BetaPoly& p) {
  Rational s = 0;
  for (const auto& t : p) s += t.c * beta_integral(t.a, t.b);
  return s;
}

inline BetaPoly multiply(const BetaPoly& p, const BetaPoly& q) {
  BetaPoly out;
  for (const auto& s : p)
    for (const auto& t : q) out.push_back({s.c * t.c, s.a + t.a, s.b + t.b});
  return out;
}

inline double evaluate(const BetaPoly& p, double x) {
  double v = 0.0;
  for (const auto& t : p) v += to_double(t.c) * std::pow(x, t.a) * std::pow(1.0 - x, t.b);
  return v;
}

/// (i + j - 2)! (2 ell - i - j)! / ((i - 1)! (j - 1)! (ell - i)! (ell - j)! (2 ell - 1)!)
inline Rational beta_inner(std::size_t i, std::size_t j, std::size_t ell) {
  if (i < 1 || j < 1 || i > ell || j > ell) throw ValidationError("beta_inner needs 1 <= i, j <= ell");
  const auto si = static_cast<std::int64_t>(i), sj = static_cast<std::int64_t>(j), sl = static_cast<std::int64_t>(ell);
  const BigInt num = factorial(si + sj - 2) * factorial(2 * sl - si - sj);
  const BigInt den = factorial(si - 1) * factorial(sj - 1) * factorial(sl - si) * factorial(sl - sj) * factorial(2 * sl - 1);
  return Rational(num, den);
}

inline std::vector<std::vector<Rational>> beta_table(std::size_t ell) {
  std::vector<std::vector<Rational>> t(ell, std::vector<Rational>(ell));
  for (std::size_t i = 0; i < ell; ++i)
    for (std::size_t j = 0; j < ell; ++j) t[i][j] = beta_inner(i + 1, j + 1, ell);
  return t;
}

// ---------------------------------------------------------------------------

/// One-variable projections f_i (or g_i over windows).
struct ProjectionTable {
  Method method = Method::Exact;
  std::size_t slots = 0;
  std::size_t window = 1;
  std::size_t alphabet_size = 0;
  double mu = 0.0;

  // Exact: window law support and f_i per support state.
  std::vector<std::uint64_t> codes;
  std::vector<double> probs;
  std::vector<std::vector<double>> values;

  // Analytic: uncentered polynomials P_i with f_i = P_i - mu.
  std::vector<BetaPoly> poly;
  std::optional<Rational> mu_exact;

  // Monte Carlo, width-1 real kernels: estimates on a grid of midpoints.
  std::vector<double> grid;
  std::vector<std::vector<double>> grid_values;
  std::vector<std::vector<double>> grid_se;

  std::uint64_t encode(std::span<const double> y) const {
    std::uint64_t code = 0;
    for (double v : y) code = code * alphabet_size + static_cast<std::uint64_t>(v);
    return code;
  }

  std::optional<std::size_t> state_index(std::uint64_t code) const {
    const auto it = std::lower_bound(codes.begin(), codes.end(), code);
    if (it == codes.end() || *it != code) return std::nullopt;
    return static_cast<std::size_t>(it - codes.begin());
  }

  /// f_i(y) for slot i (0-based). States of probability zero give 0.
  double operator()(std::size_t i, std::span<const double> y) const {
    if (method == Method::Analytic) return evaluate(poly.at(i), y[0]) - mu;
    if (method == Method::Exact) {
      const auto s = state_index(encode(y));
      return s ? values.at(i)[*s] : 0.0;
    }
    if (grid.empty()) throw ValidationError("Monte Carlo projections were not tabulated");
    const double x = y[0];
    std::size_t k = std::min(grid.size() - 1, static_cast<std::size_t>(x * static_cast<double>(grid.size())));
    return grid_values.at(i)[k];
  }

  /// max_i |E f_i(Y)|; zero up to rounding for exact and analytic tables.
  double centering_error() const {
    double worst = 0.0;
    if (method == Method::Exact) {
      for (const auto& v : values) {
        double s = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) s += probs[k] * v[k];
        worst = std::max(worst, std::abs(s));
      }
    } else if (method == Method::Analytic) {
      for (const auto& p : poly) worst = std::max(worst, std::abs(to_double(integrate(p) - *mu_exact)));
    }
    return worst;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"method", to_string(method)}, {"slots", slots}, {"window", window}};
    if (method == Method::Exact) {
      nlohmann::json states = nlohmann::json::array();
      for (std::size_t k = 0; k < codes.size(); ++k) {
        std::vector<std::size_t> sym(window);
        std::uint64_t c = codes[k];
        for (std::size_t w = window; w-- > 0;) {
          sym[w] = c % alphabet_size;
          c /= alphabet_size;
        }
        nlohmann::json row{{"window", sym}, {"p", probs[k]}};
        std::vector<double> vals;
        for (const auto& v : values) vals.push_back(v[k]);
        row["f"] = vals;
        states.push_back(row);
      }
      j["states"] = states;
    } else if (method == Method::Analytic) {
      nlohmann::json ps = nlohmann::json::array();
      for (const auto& p : poly) {
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& t : p) terms.push_back({{"c", to_string(t.c)}, {"a", t.a}, {"b", t.b}});
        ps.push_back(terms);
      }
      j["polynomials"] = ps;
      j["form"] = "f_i(x) = sum c x^a (1-x)^b - mu";
    } else if (!grid.empty()) {
      j["grid"] = grid;
      j["values"] = grid_values;
      j["se"] = grid_se;
    }
    return j;
  }
};

/// gamma[i][j][r] = Cov(g_i(Y_k), g_j(Y_{k+r})), |r| <= m_eff.
struct GammaArray {
  std::size_t slots = 0;
  std::size_t m_eff = 0;
  Method method = Method::Exact;
  std::vector<double> value;
  std::vector<double> se;

  GammaArray() = default;
  GammaArray(std::size_t b, std::size_t m, Method how)
      : slots(b), m_eff(m), method(how), value(b * b * (2 * m + 1), 0.0), se(value.size(), 0.0) {}

  std::size_t index(std::size_t i, std::size_t j, long r) const {
    return (i * slots + j) * (2 * m_eff + 1) + static_cast<std::size_t>(r + static_cast<long>(m_eff));
  }
  double at(std::size_t i, std::size_t j, long r) const { return value[index(i, j, r)]; }
  double& at(std::size_t i, std::size_t j, long r) { return value[index(i, j, r)]; }

  /// b_ij = sum_r gamma_ijr.
  std::vector<std::vector<double>> b_matrix() const {
    std::vector<std::vector<double>> b(slots, std::vector<double>(slots, 0.0));
    const long m = static_cast<long>(m_eff);
    for (std::size_t i = 0; i < slots; ++i)
      for (std::size_t j = 0; j < slots; ++j)
        for (long r = -m; r <= m; ++r) b[i][j] += at(i, j, r);
    return b;
  }

  /// Cov(S_i, S_j) for S_i = sum_{k < n} g_i(Y_k): sum_r (n - |r|) gamma_ijr.
  double bridge(std::size_t i, std::size_t j, std::size_t n) const {
    double s = 0.0;
    const long m = static_cast<long>(m_eff);
    for (long r = -m; r <= m; ++r) {
      const long w = static_cast<long>(n) - std::abs(r);
      if (w > 0) s += static_cast<double>(w) * at(i, j, r);
    }
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json g = nlohmann::json::array();
    const long m = static_cast<long>(m_eff);
    for (std::size_t i = 0; i < slots; ++i)
      for (std::size_t j = 0; j < slots; ++j)
        for (long r = -m; r <= m; ++r) {
          nlohmann::json e{{"i", i + 1}, {"j", j + 1}, {"r", r}, {"gamma", at(i, j, r)}};
          if (method == Method::MonteCarlo) e["se"] = se[index(i, j, r)];
          g.push_back(e);
        }
    return {{"method", to_string(method)}, {"m_eff", m_eff}, {"entries", g}};
  }
};

enum class Verdict { Degenerate, NonDegenerate, Inconclusive };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Degenerate: return "degenerate";
    case Verdict::NonDegenerate: return "non-degenerate";
    default: return "inconclusive";
  }
}

struct MomentReport {
  std::string kernel;
  std::string constraint;
  std::string mode;
  std::string model;
  std::size_t ell = 1;
  std::size_t b = 1;
  std::uint64_t window = 1;
  std::uint64_t m = 0;
  std::uint64_t m_eff = 0;

  Estimate mu;
  Estimate mu_D;
  Estimate mu_Dq;
  std::optional<Rational> mu_exact;

  ProjectionTable projections;
  GammaArray gamma;
  std::vector<std::vector<Rational>> beta;
  std::vector<std::vector<double>> B;
  std::vector<std::vector<double>> B_se;
  double max_abs_b = 0.0;
  double min_eigenvalue_B = 0.0;

  double sigma2 = 0.0;
  double sigma2_se = 0.0;
  std::optional<Rational> sigma2_exact;
  Method method = Method::Exact;
  Verdict verdict = Verdict::NonDegenerate;
  double tol = 1e-10;

  bool degenerate() const noexcept { return verdict == Verdict::Degenerate; }

  nlohmann::json to_json() const {
    auto est = [](const Estimate& e) {
      nlohmann::json j{{"value", e.value}, {"method", to_string(e.method)}};
      if (e.method == Method::MonteCarlo) j["se"] = e.se;
      return j;
    };
    nlohmann::json beta_j = nlohmann::json::array();
    for (const auto& row : beta) {
      nlohmann::json r = nlohmann::json::array();
      for (const auto& v : row) r.push_back(to_string(v));
      beta_j.push_back(r);
    }
    nlohmann::json j{{"kernel", kernel},
                     {"constraint", constraint},
                     {"mode", mode},
                     {"model", model},
                     {"ell", ell},
                     {"b", b},
                     {"window", window},
                     {"m", m},
                     {"m_eff", m_eff},
                     {"mu", est(mu)},
                     {"mu_D", est(mu_D)},
                     {"mu_Dq", est(mu_Dq)},
                     {"projections", projections.to_json()},
                     {"gamma", gamma.to_json()},
                     {"beta", beta_j},
                     {"B", B},
                     {"max_abs_b", max_abs_b},
                     {"min_eigenvalue_B", min_eigenvalue_B},
                     {"sigma2", sigma2},
                     {"method", to_string(method)},
                     {"verdict", to_string(verdict)},
                     {"tol", tol}};
    if (method == Method::MonteCarlo) {
      j["sigma2_se"] = sigma2_se;
      j["B_se"] = B_se;
    }
    if (mu_exact) j["mu_exact"] = to_string(*mu_exact);
    if (sigma2_exact) j["sigma2_exact"] = to_string(*sigma2_exact);
    return j;
  }
};

// ---------------------------------------------------------------------------

namespace detail {

/// Uncentered projection polynomials E f(U_1, ..., x, ..., U_ell) for order
/// kernels on i.i.d. uniforms, when the kernel family admits them.
inline std::optional<std::vector<BetaPoly>> analytic_projections(const Kernel& f) {
  const std::size_t ell = f.arity();
  auto pattern_poly = [&](const std::vector<int>& tau, const Rational& coef) {
    std::vector<BetaPoly> out(ell);
    for (std::size_t i = 0; i < ell; ++i) {
      const unsigned below = static_cast<unsigned>(tau[i] - 1);
      const unsigned above = static_cast<unsigned>(ell) - static_cast<unsigned>(tau[i]);
      out[i].push_back({coef / Rational(factorial(below) * factorial(above)), below, above});
    }
    return out;
  };
  auto add = [](std::vector<BetaPoly>& acc, const std::vector<BetaPoly>& p) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i].insert(acc[i].end(), p[i].begin(), p[i].end());
  };
  if (const auto* p = f.as<family::PermPattern>()) return pattern_poly(p->tau, Rational(1));
  if (f.as<family::Sign>()) {
    std::vector<BetaPoly> acc(ell);
    std::vector<int> tau(ell);
    std::iota(tau.begin(), tau.end(), 1);
    do {
      int inv = 0;
      for (std::size_t i = 0; i < ell; ++i)
        for (std::size_t j = i + 1; j < ell; ++j)
          if (tau[i] > tau[j]) ++inv;
      add(acc, pattern_poly(tau, Rational(inv % 2 ? -1 : 1)));
    } while (std::next_permutation(tau.begin(), tau.end()));
    return acc;
  }
  if (const auto* lin = f.as<family::Linear>()) {
    std::vector<BetaPoly> acc(ell);
    for (const auto& term : lin->terms) {
      auto sub = analytic_projections(*term.kernel);
      if (!sub) return std::nullopt;
      const Rational c(term.coefficient);
      for (auto& poly : *sub)
        for (auto& t : poly) t.c *= c;
      add(acc, *sub);
    }
    return acc;
  }
  return std::nullopt;
}

/// Everything derived from one window kernel g of arity b over windows of
/// width M, for a model with dependence m.
struct WindowAnalysis {
  Estimate mu;
  std::optional<Rational> mu_exact;
  ProjectionTable proj;
  GammaArray gamma;
  std::vector<std::vector<double>> B_se;
  double sigma2_se = 0.0;
  std::optional<Rational> sigma2_exact;
  Method method = Method::Exact;
};

inline bool exact_feasible(const Kernel& g, const SequenceModel& model, std::size_t window, std::size_t m_eff,
                           const MomentOptions& opt) {
  if (opt.force_mc || !model.is_finite() || !g.domain().is_finite()) return false;
  const std::size_t base = model.base_probabilities().size();
  if (saturating_pow(base, window + m_eff + model.m()) > opt.state_budget) return false;
  // Joint tuple enumeration over the window support (bounded by A^M).
  const std::uint64_t support = saturating_pow(model.alphabet_size(), window);
  return saturating_pow(support, g.arity()) <= opt.state_budget;
}

inline WindowAnalysis analyze_exact(const Kernel& g, const SequenceModel& model, std::size_t window,
                                    std::size_t m_eff, const MomentOptions& opt) {
  const std::size_t b = g.arity();
  const WindowLaw law = window_law(model, window, opt.state_budget);
  const std::size_t S = law.codes.size();
  if (saturating_pow(S, b) > opt.state_budget) throw BudgetExceeded("joint window tuples exceed the state budget");
  std::vector<std::vector<double>> decoded(S);
  for (std::size_t s = 0; s < S; ++s) decoded[s] = law.decode(law.codes[s]);

  WindowAnalysis out;
  ProjectionTable& pt = out.proj;
  pt.method = Method::Exact;
  pt.slots = b;
  pt.window = window;
  pt.alphabet_size = model.alphabet_size();
  pt.codes = law.codes;
  pt.probs = law.probs;
  pt.values.assign(b, std::vector<double>(S, 0.0));

  // One pass over S^b tuples: mu and the unnormalized conditional sums.
  std::vector<std::size_t> idx(b, 0);
  std::vector<double> args(b * window);
  double mu = 0.0;
  const std::uint64_t tuples = saturating_pow(S, b);
  for (std::uint64_t t = 0; t < tuples; ++t) {
    double w = 1.0;
    for (std::size_t k = 0; k < b; ++k) {
      w *= law.probs[idx[k]];
      std::copy(decoded[idx[k]].begin(), decoded[idx[k]].end(), args.begin() + static_cast<std::ptrdiff_t>(k * window));
    }
    const double v = w * g(args);
    mu += v;
    for (std::size_t k = 0; k < b; ++k) pt.values[k][idx[k]] += v;
    for (std::size_t k = b; k-- > 0;) {
      if (++idx[k] < S) break;
      idx[k] = 0;
    }
  }
  for (std::size_t k = 0; k < b; ++k)
    for (std::size_t s = 0; s < S; ++s) pt.values[k][s] = pt.values[k][s] / law.probs[s] - mu;
  pt.mu = mu;
  out.mu = {mu, 0.0, Method::Exact};

  // Covariances from the joint law of window + r consecutive observations.
  GammaArray gam(b, m_eff, Method::Exact);
  const std::uint64_t a = model.alphabet_size();
  for (std::size_t r = 0; r <= m_eff; ++r) {
    const WindowLaw joint = window_law(model, window + r, opt.state_budget);
    const std::uint64_t shift = saturating_pow(a, r);
    const std::uint64_t tail = saturating_pow(a, window);
    std::vector<double> acc(b * b, 0.0);
    for (std::size_t z = 0; z < joint.codes.size(); ++z) {
      const auto s0 = pt.state_index(joint.codes[z] / shift);
      const auto sr = pt.state_index(joint.codes[z] % tail);
      if (!s0 || !sr) throw ValidationError("window law is inconsistent with its extension");
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < b; ++j) acc[i * b + j] += joint.probs[z] * pt.values[i][*s0] * pt.values[j][*sr];
    }
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j) {
        gam.at(i, j, static_cast<long>(r)) = acc[i * b + j];
        gam.at(j, i, -static_cast<long>(r)) = acc[i * b + j];
      }
  }
  out.gamma = std::move(gam);
  out.B_se.assign(b, std::vector<double>(b, 0.0));
  out.method = Method::Exact;
  return out;
}

inline WindowAnalysis analyze_analytic(const Kernel& f, std::vector<BetaPoly> poly) {
  const std::size_t ell = f.arity();
  WindowAnalysis out;
  const Rational mu = integrate(poly.front());
  std::vector<std::vector<Rational>> gam(ell, std::vector<Rational>(ell));
  for (std::size_t i = 0; i < ell; ++i)
    for (std::size_t j = 0; j < ell; ++j) gam[i][j] = integrate(multiply(poly[i], poly[j])) - mu * mu;
  const auto beta = beta_table(ell);
  Rational s2 = 0;
  for (std::size_t i = 0; i < ell; ++i)
    for (std::size_t j = 0; j < ell; ++j) s2 += beta[i][j] * gam[i][j];
  out.mu = {to_double(mu), 0.0, Method::Analytic};
  out.mu_exact = mu;
  out.sigma2_exact = s2;
  out.proj.method = Method::Analytic;
  out.proj.slots = ell;
  out.proj.window = 1;
  out.proj.mu = to_double(mu);
  out.proj.mu_exact = mu;
  out.proj.poly = std::move(poly);
  out.gamma = GammaArray(ell, 0, Method::Analytic);
  for (std::size_t i = 0; i < ell; ++i)
    for (std::size_t j = 0; j < ell; ++j) out.gamma.at(i, j, 0) = to_double(gam[i][j]);
  out.B_se.assign(ell, std::vector<double>(ell, 0.0));
  out.method = Method::Analytic;
  return out;
}

/// Monte Carlo with paired completions. For each sample, a segment of
/// M + m_eff observations supplies Y_0 and Y_r, two independent completion
/// sets A and B supply the other slots, and an independent window Y' gives
/// the control G(B; Y') with E[G(B; Y') | segment] = mu. Then
///   (g(A; Y_0 at i) - g(A)) * (g(B; Y_r at j) - g(B; Y' at j))
/// is unbiased for gamma_ijr, with common random numbers across i, j, r.
inline WindowAnalysis analyze_mc(const Kernel& g, const SequenceModel& model, std::size_t window, std::size_t m_eff,
                                 const MomentOptions& opt) {
  const std::size_t b = g.arity();
  const std::size_t R = m_eff + 1;
  const std::size_t n_gamma = b * b * R;
  const auto beta = beta_table(b);
  std::vector<double> beta_d(b * b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) beta_d[i * b + j] = to_double(beta[i][j]);
  // layout: gamma (b*b*R), B (b*b), sigma2, mu
  const std::size_t width = n_gamma + b * b + 2;
  auto draw = [&](std::uint64_t sample, std::uint64_t stream, std::size_t len) {
    const ObservationSequence xs = generate(model, len, CounterRng(opt.seed, sample, stream));
    return std::vector<double>(xs.values().begin(), xs.values().end());
  };
  const MomentSums sums = chunked_moments(
      opt.mc_samples, width,
      [&](std::size_t s, std::vector<double>& x) {
        const std::vector<double> seg = draw(s, 0, window + m_eff);
        std::vector<double> A(b * window), B(b * window);
        for (std::size_t k = 0; k < b; ++k) {
          const auto wa = draw(s, 1 + k, window);
          const auto wb = draw(s, 1 + b + k, window);
          std::copy(wa.begin(), wa.end(), A.begin() + static_cast<std::ptrdiff_t>(k * window));
          std::copy(wb.begin(), wb.end(), B.begin() + static_cast<std::ptrdiff_t>(k * window));
        }
        const auto yp = draw(s, 1 + 2 * b, window);
        const double gA = g(A);
        const double gB = g(B);
        auto with = [&](std::vector<double> base, std::size_t slot, const double* y) {
          std::copy(y, y + window, base.begin() + static_cast<std::ptrdiff_t>(slot * window));
          return g(base);
        };
        std::vector<double> G1(b), G2p(b), G2(b * R);
        for (std::size_t i = 0; i < b; ++i) {
          G1[i] = with(A, i, seg.data()) - gA;
          G2p[i] = with(B, i, yp.data());
          for (std::size_t r = 0; r < R; ++r) G2[i * R + r] = with(B, i, seg.data() + r) - G2p[i];
        }
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < b; ++j)
            for (std::size_t r = 0; r < R; ++r) x[(i * b + j) * R + r] = G1[i] * G2[j * R + r];
        double s2 = 0.0;
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < b; ++j) {
            double bij = x[(i * b + j) * R];
            for (std::size_t r = 1; r < R; ++r) bij += x[(i * b + j) * R + r] + x[(j * b + i) * R + r];
            x[n_gamma + i * b + j] = bij;
            s2 += beta_d[i * b + j] * bij;
          }
        x[n_gamma + b * b] = s2;
        x[n_gamma + b * b + 1] = gB;
      },
      opt.threads);

  WindowAnalysis out;
  out.method = Method::MonteCarlo;
  out.mu = {sums.mean(width - 1), sums.se(width - 1), Method::MonteCarlo};
  out.gamma = GammaArray(b, m_eff, Method::MonteCarlo);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t r = 0; r < R; ++r) {
        const std::size_t k = (i * b + j) * R + r;
        const long rr = static_cast<long>(r);
        out.gamma.at(i, j, rr) = sums.mean(k);
        out.gamma.se[out.gamma.index(i, j, rr)] = sums.se(k);
        if (r > 0) {
          out.gamma.at(j, i, -rr) = sums.mean(k);
          out.gamma.se[out.gamma.index(j, i, -rr)] = sums.se(k);
        }
      }
  out.B_se.assign(b, std::vector<double>(b, 0.0));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) out.B_se[i][j] = sums.se(n_gamma + i * b + j);
  out.sigma2_se = sums.se(n_gamma + b * b);

  ProjectionTable& pt = out.proj;
  pt.method = Method::MonteCarlo;
  pt.slots = b;
  pt.window = window;
  pt.mu = out.mu.value;
  if (window == 1 && !model.has_finite_output()) {
    constexpr std::size_t kGrid = 16;
    const std::size_t per_point = std::max<std::size_t>(256, opt.mc_samples / 64);
    pt.grid.resize(kGrid);
    pt.grid_values.assign(b, std::vector<double>(kGrid));
    pt.grid_se.assign(b, std::vector<double>(kGrid));
    for (std::size_t k = 0; k < kGrid; ++k) {
      pt.grid[k] = (static_cast<double>(k) + 0.5) / kGrid;
      const MomentSums ps = chunked_moments(
          per_point, b,
          [&](std::size_t s, std::vector<double>& x) {
            std::vector<double> A(b);
            for (std::size_t q = 0; q < b; ++q) A[q] = draw(opt.mc_samples + k * per_point + s, 7, 1)[0];
            for (std::size_t i = 0; i < b; ++i) {
              std::vector<double> args = A;
              args[i] = pt.grid[k];
              x[i] = g(args);
            }
          },
          opt.threads);
      for (std::size_t i = 0; i < b; ++i) {
        pt.grid_values[i][k] = ps.mean(i) - pt.mu;
        pt.grid_se[i][k] = std::hypot(ps.se(i), out.mu.se);
      }
    }
  }
  return out;
}

inline WindowAnalysis analyze(const Kernel& g, const SequenceModel& model, std::size_t window, std::size_t m_eff,
                              bool allow_analytic, const MomentOptions& opt) {
  if (!g.domain().is_finite() && model.has_finite_output())
    throw AlphabetMismatch("order kernels need a real-valued model");
  if (g.domain().is_finite() && !model.has_finite_output())
    throw AlphabetMismatch("finite-alphabet kernel applied to a real-valued model");
  if (g.domain().is_finite() && g.domain().alphabet_size() < model.alphabet_size())
    throw AlphabetMismatch("model alphabet is larger than the kernel alphabet");
  if (allow_analytic && !opt.force_mc && window == 1 && model.is_iid() &&
      std::holds_alternative<IidUniform>(model.variant()))
    if (auto poly = analytic_projections(g)) return analyze_analytic(g, std::move(*poly));
  if (exact_feasible(g, model, window, m_eff, opt)) return analyze_exact(g, model, window, m_eff, opt);
  return analyze_mc(g, model, window, m_eff, opt);
}

inline Estimate window_mean(const Kernel& g, const SequenceModel& model, std::size_t window, bool allow_analytic,
                            const MomentOptions& opt, std::optional<Rational>* exact = nullptr) {
  if (allow_analytic && !opt.force_mc && window == 1 && model.is_iid() &&
      std::holds_alternative<IidUniform>(model.variant()))
    if (auto poly = analytic_projections(g)) {
      const Rational mu = integrate(poly->front());
      if (exact) *exact = mu;
      return {to_double(mu), 0.0, Method::Analytic};
    }
  if (!opt.force_mc && model.is_finite() && g.domain().is_finite()) {
    const std::uint64_t support = saturating_pow(model.alphabet_size(), window);
    if (saturating_pow(model.base_probabilities().size(), window + model.m()) <= opt.state_budget &&
        saturating_pow(support, g.arity()) <= opt.state_budget) {
      const WindowLaw law = window_law(model, window, opt.state_budget);
      const std::size_t S = law.codes.size(), b = g.arity();
      std::vector<std::vector<double>> dec(S);
      for (std::size_t s = 0; s < S; ++s) dec[s] = law.decode(law.codes[s]);
      std::vector<std::size_t> idx(b, 0);
      std::vector<double> args(b * window);
      double mu = 0.0;
      for (std::uint64_t t = 0, T = saturating_pow(S, b); t < T; ++t) {
        double w = 1.0;
        for (std::size_t k = 0; k < b; ++k) {
          w *= law.probs[idx[k]];
          std::copy(dec[idx[k]].begin(), dec[idx[k]].end(), args.begin() + static_cast<std::ptrdiff_t>(k * window));
        }
        mu += w * g(args);
        for (std::size_t k = b; k-- > 0;) {
          if (++idx[k] < S) break;
          idx[k] = 0;
        }
      }
      return {mu, 0.0, Method::Exact};
    }
  }
  const std::size_t b = g.arity();
  const MomentSums sums = chunked_moments(
      opt.mc_samples, 1,
      [&](std::size_t s, std::vector<double>& x) {
        std::vector<double> args;
        for (std::size_t k = 0; k < b; ++k) {
          const ObservationSequence w = generate(model, window, CounterRng(opt.seed, s, 1 + k));
          args.insert(args.end(), w.values().begin(), w.values().end());
        }
        x[0] = g(args);
      },
      opt.threads);
  return {sums.mean(0), sums.se(0), Method::MonteCarlo};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Means.

/// mu = E f(X^_1, ..., X^_ell) with independent copies of the marginal.
inline Estimate mu_estimate(const Kernel& f, const SequenceModel& model, const MomentOptions& opt = {}) {
  return detail::window_mean(f, model, 1, true, opt);
}

inline double mu(const Kernel& f, const SequenceModel& model, const MomentOptions& opt = {}) {
  return mu_estimate(f, model, opt).value;
}

/// mu_{D=} = E g(Y^_1, ..., Y^_b) with block-independent windows.
inline Estimate mu_exact_constrained_estimate(const Kernel& f, const Constraint& d, const SequenceModel& model,
                                              const MomentOptions& opt = {}) {
  // I.i.d.: distinct indices have the law of independent draws.
  if (d.is_unconstrained() || model.is_iid()) return mu_estimate(f, model, opt);
  const std::uint64_t window = d.finite_sum() + 1;
  return detail::window_mean(reduced_kernel(f, d, window, ConstraintMode::Exact), model, window, false, opt);
}

inline double mu_exact_constrained(const Kernel& f, const Constraint& d, const SequenceModel& model,
                                   const MomentOptions& opt = {}) {
  return mu_exact_constrained_estimate(f, d, model, opt).value;
}

/// mu_D = sum over exact sub-constraints D' of mu_{D'=}.
inline Estimate mu_constrained_estimate(const Kernel& f, const Constraint& d, const SequenceModel& model,
                                        const MomentOptions& opt = {}) {
  if (d.is_unconstrained()) return mu_estimate(f, model, opt);
  if (model.is_iid()) {
    // Each of the prod d_j exact sub-constraints contributes mu.
    Estimate e = mu_estimate(f, model, opt);
    const double count = static_cast<double>(d.finite_product());
    e.value *= count;
    e.se *= count;
    return e;
  }
  const std::uint64_t window = d.finite_sum() + 1;
  return detail::window_mean(reduced_kernel(f, d, window, ConstraintMode::Bounded), model, window, false, opt);
}

inline double mu_constrained(const Kernel& f, const Constraint& d, const SequenceModel& model,
                             const MomentOptions& opt = {}) {
  return mu_constrained_estimate(f, d, model, opt).value;
}

struct ExpectedValue {
  double value = 0.0;
  /// True when the value is E U_n itself; false for the leading term only.
  bool exact = true;
  std::string error_order;
};

/// E U_n(f; D). Exact binomial forms for i.i.d. models, leading term
/// (n^b / b!) mu_D otherwise.
inline ExpectedValue expected_un(const Kernel& f, const std::optional<Constraint>& d, std::uint64_t n,
                                 const SequenceModel& model, ConstraintMode mode = ConstraintMode::Bounded,
                                 const MomentOptions& opt = {}) {
  const Constraint D = d.value_or(Constraint::unconstrained(f.arity()));
  if (D.ell() != f.arity()) throw ValidationError("kernel arity does not match constraint");
  const auto b = static_cast<std::int64_t>(D.blocks());
  const auto sn = static_cast<std::int64_t>(n);
  if (model.is_iid()) {
    const double mu_v = mu(f, model, opt);
    if (mode == ConstraintMode::Exact || D.is_unconstrained()) {
      const auto dsum = static_cast<std::int64_t>(D.finite_sum());
      return {to_double(binomial(sn - dsum, b)) * mu_v, true, "exact"};
    }
    BigInt tuples = 0;
    for (const Constraint& sub : exact_subconstraints(D))
      tuples += binomial(sn - static_cast<std::int64_t>(sub.finite_sum()), b);
    return {to_double(tuples) * mu_v, true, "exact"};
  }
  const double mu_d = mode == ConstraintMode::Exact ? mu_exact_constrained(f, D, model, opt)
                                                    : mu_constrained(f, D, model, opt);
  const double lead = std::pow(static_cast<double>(n), static_cast<double>(b)) / to_double(factorial(b)) * mu_d;
  return {lead, false, "O(n^" + std::to_string(b - 1) + ")"};
}

// ---------------------------------------------------------------------------
// Projections and covariances.

inline ProjectionTable projections(const Kernel& f, const SequenceModel& model, const MomentOptions& opt = {}) {
  return detail::analyze(f, model, 1, model.m(), true, opt).proj;
}

inline ProjectionTable reduced_projections(const Kernel& f, const Constraint& d, const SequenceModel& model,
                                           ConstraintMode mode = ConstraintMode::Bounded,
                                           const MomentOptions& opt = {}) {
  if (d.is_unconstrained()) return projections(f, model, opt);
  const std::uint64_t window = d.finite_sum() + 1;
  const Kernel g = reduced_kernel(f, d, window, mode);
  return detail::analyze(g, model, window, lifted_dependence(model.m(), window), false, opt).proj;
}

/// gamma from an exact or analytic projection table.
inline GammaArray gamma_array(const ProjectionTable& proj, const SequenceModel& model, std::size_t m_eff,
                              const MomentOptions& opt = {}) {
  const std::size_t b = proj.slots;
  if (proj.method == Method::Analytic) {
    if (!model.is_iid()) throw ValidationError("analytic projections assume an i.i.d. model");
    GammaArray g(b, m_eff, Method::Analytic);
    const Rational mu = *proj.mu_exact;
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j)
        g.at(i, j, 0) = to_double(integrate(multiply(proj.poly[i], proj.poly[j])) - mu * mu);
    return g;
  }
  if (proj.method != Method::Exact) throw ValidationError("gamma_array needs an exact or analytic table");
  GammaArray g(b, m_eff, Method::Exact);
  const std::uint64_t a = proj.alphabet_size;
  for (std::size_t r = 0; r <= m_eff; ++r) {
    const WindowLaw joint = window_law(model, proj.window + r, opt.state_budget);
    const std::uint64_t shift = saturating_pow(a, r), tail = saturating_pow(a, proj.window);
    for (std::size_t z = 0; z < joint.codes.size(); ++z) {
      const auto s0 = proj.state_index(joint.codes[z] / shift);
      const auto sr = proj.state_index(joint.codes[z] % tail);
      if (!s0 || !sr) continue;
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < b; ++j) {
          const double v = joint.probs[z] * proj.values[i][*s0] * proj.values[j][*sr];
          g.at(i, j, static_cast<long>(r)) += v;
          if (r > 0) g.at(j, i, -static_cast<long>(r)) += v;
        }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// sigma^2 and degeneracy.

/// Degenerate iff every b_ij vanishes. Exact results compare max |b_ij| with
/// `tol`; Monte Carlo results call a kernel non-degenerate when some b_ij is
/// more than 3 SE from 0, degenerate when every 3 SE band contains 0 and is
/// narrower than `mc_tol`, and inconclusive otherwise.
inline Verdict degeneracy_test(const MomentReport& report, double tol = 1e-10, double mc_tol = 1e-3) {
  if (report.method != Method::MonteCarlo) return report.max_abs_b <= tol ? Verdict::Degenerate : Verdict::NonDegenerate;
  bool all_zero = true;
  double widest = 0.0;
  for (std::size_t i = 0; i < report.B.size(); ++i)
    for (std::size_t j = 0; j < report.B.size(); ++j) {
      const double band = 3.0 * report.B_se[i][j];
      if (std::abs(report.B[i][j]) > band && std::abs(report.B[i][j]) > tol) all_zero = false;
      widest = std::max(widest, band);
    }
  if (!all_zero) return Verdict::NonDegenerate;
  return widest <= mc_tol ? Verdict::Degenerate : Verdict::Inconclusive;
}

/// Throws Inconclusive instead of returning that verdict.
inline Verdict require_verdict(const MomentReport& report, double tol = 1e-10, double mc_tol = 1e-3) {
  const Verdict v = degeneracy_test(report, tol, mc_tol);
  if (v == Verdict::Inconclusive)
    throw Inconclusive("Monte Carlo standard errors are too large to decide degeneracy (sigma2 = " +
                       std::to_string(report.sigma2) + " +- " + std::to_string(report.sigma2_se) + ")");
  return v;
}

namespace detail {

inline void finish_report(MomentReport& rep, WindowAnalysis&& wa, const MomentOptions& opt) {
  const std::size_t b = rep.b;
  rep.method = wa.method;
  rep.projections = std::move(wa.proj);
  rep.gamma = std::move(wa.gamma);
  rep.beta = beta_table(b);
  rep.B = rep.gamma.b_matrix();
  rep.B_se = std::move(wa.B_se);
  rep.max_abs_b = 0.0;
  for (const auto& row : rep.B)
    for (double v : row) rep.max_abs_b = std::max(rep.max_abs_b, std::abs(v));
  Eigen::MatrixXd Bm(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) Bm(i, j) = 0.5 * (rep.B[i][j] + rep.B[j][i]);
  rep.min_eigenvalue_B = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Bm, Eigen::EigenvaluesOnly).eigenvalues()(0);
  double s2 = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) s2 += to_double(rep.beta[i][j]) * rep.B[i][j];
  rep.sigma2_exact = wa.sigma2_exact;
  if (rep.sigma2_exact) s2 = to_double(*rep.sigma2_exact);
  rep.sigma2_se = wa.sigma2_se;
  if (s2 < 0.0) {
    if (rep.method != Method::MonteCarlo && s2 < -1e-10)
      throw ValidationError("sigma2 = " + std::to_string(s2) + " is negative beyond rounding");
    if (rep.method != Method::MonteCarlo) s2 = 0.0;
  }
  rep.sigma2 = s2;
  rep.tol = opt.tol;
  rep.verdict = degeneracy_test(rep, opt.tol, opt.mc_tol);
}

}  // namespace detail

/// Full moment report for U_n(f; D). The constrained case works with the
/// reduced kernel g on windows of width M = D + 1 and m' = m + M - 1.
inline MomentReport sigma2(const Kernel& f, const std::optional<Constraint>& d, const SequenceModel& model,
                           ConstraintMode mode = ConstraintMode::Bounded, const MomentOptions& opt = {}) {
  const Constraint D = d.value_or(Constraint::unconstrained(f.arity()));
  if (D.ell() != f.arity()) throw ValidationError("kernel arity does not match constraint");
  MomentReport rep;
  rep.kernel = f.describe();
  rep.constraint = D.str();
  rep.mode = mode == ConstraintMode::Exact ? "exact" : "bounded";
  rep.model = model.describe();
  rep.ell = f.arity();
  rep.b = D.blocks();
  rep.window = D.finite_sum() + 1;
  rep.m = model.m();
  rep.m_eff = lifted_dependence(rep.m, rep.window);
  rep.mu = detail::window_mean(f, model, 1, true, opt, &rep.mu_exact);
  if (D.is_unconstrained()) {
    auto wa = detail::analyze(f, model, 1, rep.m_eff, true, opt);
    rep.mu_D = rep.mu_Dq = wa.mu;
    detail::finish_report(rep, std::move(wa), opt);
    return rep;
  }
  rep.mu_Dq = mu_exact_constrained_estimate(f, D, model, opt);
  const Kernel g = reduced_kernel(f, D, rep.window, mode);
  auto wa = detail::analyze(g, model, rep.window, rep.m_eff, false, opt);
  rep.mu_D = mode == ConstraintMode::Exact ? rep.mu_Dq : wa.mu;
  detail::finish_report(rep, std::move(wa), opt);
  return rep;
}

/// Var Z(t) = t^{2b-1} sigma^2 for the limiting process.
inline double var_z(double t, double sigma2_value, std::size_t b) {
  if (t < 0) throw ValidationError("t must be >= 0");
  return std::pow(t, 2.0 * static_cast<double>(b) - 1.0) * sigma2_value;
}

// ---------------------------------------------------------------------------
// Renewal variance.

struct RenewalMoments {
  Estimate nu;
  double mu_D = 0.0;
  std::size_t b = 1;
  /// gamma^2 = nu^{1 - 2b} sigma^2(G) with G = g - (mu_D / nu) sum_j h(y_j).
  double gamma2 = 0.0;
  double gamma2_se = 0.0;
  MomentReport modified;
};

/// Limit variance of the renewal-stopped statistic, computed from the
/// modified kernel G whose projections are g_j + mu_D - (mu_D / nu) h.
inline RenewalMoments renewal_moments(const Kernel& f, const std::optional<Constraint>& d, const SequenceModel& model,
                                      const std::function<double(double)>& h,
                                      ConstraintMode mode = ConstraintMode::Bounded, const MomentOptions& opt = {}) {
  const Constraint D = d.value_or(Constraint::unconstrained(f.arity()));
  RenewalMoments out;
  out.b = D.blocks();
  const Kernel hk = Kernel::custom(1, 1, model.domain(), [h](std::span<const double> x) { return h(x[0]); }, "h");
  out.nu = detail::window_mean(hk, model, 1, false, opt);
  if (!(out.nu.value > 0.0)) throw NonpositiveDrift("E h(X_1) must be positive, got " + std::to_string(out.nu.value));
  const std::uint64_t window = D.finite_sum() + 1;
  const Kernel g = D.is_unconstrained() ? f : reduced_kernel(f, D, window, mode);
  const Estimate mu_d = detail::window_mean(g, model, window, !D.is_unconstrained() ? false : true, opt);
  out.mu_D = mu_d.value;
  const double c = out.mu_D / out.nu.value;
  const std::size_t b = out.b;
  const auto gp = std::make_shared<const Kernel>(g);
  const Kernel G = Kernel::custom(
      b, window, g.domain(),
      [gp, h, c, b, window](std::span<const double> y) {
        double s = (*gp)(y);
        for (std::size_t j = 0; j < b; ++j) s -= c * h(y[j * window]);
        return s;
      },
      "renewal-modified[" + f.describe() + "]");
  MomentReport rep;
  rep.kernel = G.describe();
  rep.constraint = D.str();
  rep.mode = mode == ConstraintMode::Exact ? "exact" : "bounded";
  rep.model = model.describe();
  rep.ell = f.arity();
  rep.b = b;
  rep.window = window;
  rep.m = model.m();
  rep.m_eff = lifted_dependence(rep.m, window);
  auto wa = detail::analyze(G, model, window, rep.m_eff, false, opt);
  rep.mu = rep.mu_D = rep.mu_Dq = wa.mu;
  detail::finish_report(rep, std::move(wa), opt);
  const double scale = std::pow(out.nu.value, 1.0 - 2.0 * static_cast<double>(b));
  out.gamma2 = scale * rep.sigma2;
  out.gamma2_se = scale * rep.sigma2_se;
  out.modified = std::move(rep);
  return out;
}

// ---------------------------------------------------------------------------
// Exact finite-n moments by enumeration.

/// Mean and variance of U_n(f) for every n <= n_max, for an i.i.d. finite
/// model, by depth-first enumeration of all strings with incremental
/// subsequence counts.
struct ExactUnMoments {
  std::vector<double> mean;
  std::vector<double> variance;
};

inline ExactUnMoments exact_un_moments(const Kernel& f, const SequenceModel& model, std::size_t n_max,
                                       std::uint64_t budget = 100'000'000ULL) {
  if (!model.is_iid() || !model.is_finite()) throw ValidationError("exact enumeration needs an i.i.d. finite model");
  const std::size_t a = model.alphabet_size();
  const std::size_t ell = f.arity();
  if (saturating_pow(a, n_max) > budget) throw BudgetExceeded("A^n exceeds the enumeration budget");
  const std::vector<double> table = tabulate(f);
  const std::vector<double>& p = model.base_probabilities();
  // cnt[k][w]: number of subsequences of length k spelling w (k < ell).
  std::vector<std::size_t> sizes(ell);
  for (std::size_t k = 0; k < ell; ++k) sizes[k] = static_cast<std::size_t>(saturating_pow(a, k));
  ExactUnMoments out;
  out.mean.assign(n_max + 1, 0.0);
  out.variance.assign(n_max + 1, 0.0);
  std::vector<double> second(n_max + 1, 0.0);
  struct Frame {
    std::vector<std::vector<double>> cnt;
    double u = 0.0;
  };
  std::vector<Frame> stack(n_max + 1);
  stack[0].cnt.resize(ell);
  for (std::size_t k = 0; k < ell; ++k) stack[0].cnt[k].assign(sizes[k], 0.0);
  stack[0].cnt[0][0] = 1.0;
  std::function<void(std::size_t, double)> dfs = [&](std::size_t depth, double w) {
    out.mean[depth] += w * stack[depth].u;
    second[depth] += w * stack[depth].u * stack[depth].u;
    if (depth == n_max) return;
    const Frame& cur = stack[depth];
    Frame& nxt = stack[depth + 1];
    for (std::size_t c = 0; c < a; ++c) {
      nxt.cnt = cur.cnt;
      double add = 0.0;
      const auto& last = cur.cnt[ell - 1];
      for (std::size_t wd = 0; wd < last.size(); ++wd)
        if (last[wd] != 0.0) add += last[wd] * table[wd * a + c];
      nxt.u = cur.u + add;
      for (std::size_t k = 1; k < ell; ++k)
        for (std::size_t wd = 0; wd < sizes[k - 1]; ++wd) nxt.cnt[k][wd * a + c] += cur.cnt[k - 1][wd];
      dfs(depth + 1, w * p[c]);
    }
  };
  dfs(0, 1.0);
  for (std::size_t n = 0; n <= n_max; ++n) out.variance[n] = second[n] - out.mean[n] * out.mean[n];
  return out;
}

/// Cov(S_i, S_j) with S_i = sum_{k < n} g_i(Y_k), by enumerating the joint
/// law of the n windows. Oracle for GammaArray::bridge.
inline std::vector<std::vector<double>> projection_sum_covariance(const ProjectionTable& proj,
                                                                  const SequenceModel& model, std::size_t n,
                                                                  std::uint64_t budget = 10'000'000ULL) {
  if (proj.method != Method::Exact) throw ValidationError("needs an exact projection table");
  const std::size_t b = proj.slots;
  const WindowLaw law = window_law(model, n + proj.window - 1, budget);
  std::vector<std::vector<double>> cov(b, std::vector<double>(b, 0.0));
  std::vector<double> s(b);
  for (std::size_t z = 0; z < law.codes.size(); ++z) {
    const auto x = law.decode(law.codes[z]);
    std::fill(s.begin(), s.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < b; ++i) s[i] += proj(i, std::span<const double>(x).subspan(k, proj.window));
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j) cov[i][j] += law.probs[z] * s[i] * s[j];
  }
  return cov;
}

}  // namespace ustat
