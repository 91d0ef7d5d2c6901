#pragma once

// Monte Carlo harness for the limit theorems: fixed-n CLT and moments,
// degenerate rescalings, functional paths and renewal stopping.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ustat/constraint.hpp"
#include "ustat/counting.hpp"
#include "ustat/error.hpp"
#include "ustat/kernel.hpp"
#include "ustat/model.hpp"
#include "ustat/moments.hpp"
#include "ustat/parallel.hpp"
#include "ustat/rng.hpp"
#include "ustat/stats.hpp"

namespace ustat {

/// The statistic being sampled: U_n(f; D) in bounded or exact mode.
struct StatisticSpec {
  Kernel f;
  Constraint constraint;
  ConstraintMode mode = ConstraintMode::Bounded;

  std::size_t b() const { return constraint.blocks(); }
};

struct SimulationOptions {
  unsigned threads = 0;
  /// Keep the standardized samples in the summary.
  bool keep_samples = true;
  EvalOptions eval;
};

/// Per-n results of a fixed-n experiment.
struct SimulationPoint {
  std::uint64_t n = 0;
  std::size_t replicates = 0;
  double center = 0.0;
  std::string center_method;
  double scale = 1.0;
  /// Raw statistics U_n, one per replicate.
  std::vector<double> raw;
  /// (U_n - center) / scale.
  std::vector<double> standardized;
  SampleSummary summary;
  /// Kolmogorov distance of the standardized samples to N(0, sigma2).
  std::optional<double> d_k;
};

struct SimulationSummary {
  std::string statistic;
  std::string model;
  std::uint64_t seed = 0;
  std::size_t replicates = 0;
  double sigma2 = 0.0;
  std::vector<SimulationPoint> points;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : points) {
      nlohmann::json j{{"n", p.n},
                       {"replicates", p.replicates},
                       {"center", p.center},
                       {"center_method", p.center_method},
                       {"scale", p.scale},
                       {"mean", p.summary.mean},
                       {"mean_se", p.summary.mean_se},
                       {"variance", p.summary.variance},
                       {"variance_se", p.summary.variance_se},
                       {"m2", p.summary.m2},
                       {"m2_se", p.summary.m2_se},
                       {"m4", p.summary.m4},
                       {"m4_se", p.summary.m4_se}};
      if (p.d_k) j["d_k"] = *p.d_k;
      pts.push_back(j);
    }
    return {{"statistic", statistic}, {"model", model}, {"seed", seed}, {"replicates", replicates},
            {"sigma2", sigma2},       {"points", pts}};
  }
};

namespace detail {

/// U_k for every k in `prefixes`, on the sequence of replicate r.
inline std::vector<double> replicate_prefix_stats(const StatisticSpec& s, const SequenceModel& model,
                                                  std::span<const std::size_t> prefixes, std::uint64_t seed,
                                                  std::uint64_t r, const EvalOptions& eval) {
  const ObservationSequence xs = generate(model, prefixes.empty() ? 0 : prefixes.back(), CounterRng(seed, r, 0));
  return prefix_statistics(s.f, s.constraint, s.mode, xs, prefixes, eval);
}

/// Raw statistics [replicate][prefix], in replicate order.
inline std::vector<std::vector<double>> sample_prefix_stats(const StatisticSpec& s, const SequenceModel& model,
                                                            std::span<const std::size_t> prefixes, std::size_t R,
                                                            std::uint64_t seed, const SimulationOptions& opt) {
  std::vector<std::vector<double>> out(R);
  parallel_for(
      R, [&](std::size_t r) { out[r] = replicate_prefix_stats(s, model, prefixes, seed, r, opt.eval); }, opt.threads);
  return out;
}

inline double replicate_mean(const std::vector<std::vector<double>>& raw, std::size_t k) {
  std::vector<double> col(raw.size());
  for (std::size_t r = 0; r < raw.size(); ++r) col[r] = raw[r][k];
  return pairwise_sum(col) / static_cast<double>(col.size());
}

/// Exact E U_n for i.i.d. models; otherwise the replicate mean.
inline std::pair<double, std::string> center_for(const StatisticSpec& s, const SequenceModel& model, std::uint64_t n,
                                                 const std::vector<std::vector<double>>& raw, std::size_t k) {
  if (model.is_iid()) {
    const ExpectedValue e = expected_un(s.f, s.constraint, n, model, s.mode);
    return {e.value, "exact"};
  }
  return {replicate_mean(raw, k), "replicate-mean (biased by O(1/R) in the variance)"};
}

}  // namespace detail

/// Samples (U_n - E U_n) / n^{b - 1/2} over R replicates for each n.
inline SimulationSummary mc_clt(const StatisticSpec& s, const SequenceModel& model, std::vector<std::size_t> n_grid,
                                std::size_t R, std::uint64_t seed, std::optional<double> sigma2_value = std::nullopt,
                                const SimulationOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  std::sort(n_grid.begin(), n_grid.end());
  if (R == 0) throw ValidationError("replicate count must be positive");
  const std::size_t b = s.b();
  const auto raw = detail::sample_prefix_stats(s, model, n_grid, R, seed, opt);
  SimulationSummary out;
  out.statistic = s.f.describe() + " D=" + s.constraint.str();
  out.model = model.describe();
  out.seed = seed;
  out.replicates = R;
  out.sigma2 = sigma2_value.value_or(0.0);
  for (std::size_t k = 0; k < n_grid.size(); ++k) {
    SimulationPoint p;
    p.n = n_grid[k];
    p.replicates = R;
    std::tie(p.center, p.center_method) = detail::center_for(s, model, p.n, raw, k);
    p.scale = std::pow(static_cast<double>(p.n), static_cast<double>(b) - 0.5);
    p.raw.resize(R);
    p.standardized.resize(R);
    for (std::size_t r = 0; r < R; ++r) {
      p.raw[r] = raw[r][k];
      p.standardized[r] = p.scale > 0 ? (raw[r][k] - p.center) / p.scale : 0.0;
    }
    p.summary = summarize(p.standardized);
    if (sigma2_value) {
      if (!(*sigma2_value > 0.0))
        throw DegenerateTarget("sigma2 = 0: the normal comparison is void; use the degenerate diagnostics");
      p.d_k = kolmogorov_distance(p.standardized, *sigma2_value);
    }
    if (!opt.keep_samples) {
      p.raw.clear();
      p.standardized.clear();
    }
    out.points.push_back(std::move(p));
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Samples n^{-scale_exponent} (U_n - center) for degenerate statistics.
/// The default exponent is b - 1, half a power below the normal scale, and
/// the default center is 0; for two-block kernels this is n^{-1} U_n.
inline SimulationSummary mc_degenerate(const StatisticSpec& s, const SequenceModel& model,
                                       std::vector<std::size_t> n_grid, std::size_t R, std::uint64_t seed,
                                       std::optional<double> scale_exponent = std::nullopt, bool center = false,
                                       const SimulationOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  std::sort(n_grid.begin(), n_grid.end());
  const double e = scale_exponent.value_or(static_cast<double>(s.b()) - 1.0);
  const auto raw = detail::sample_prefix_stats(s, model, n_grid, R, seed, opt);
  SimulationSummary out;
  out.statistic = s.f.describe() + " D=" + s.constraint.str();
  out.model = model.describe();
  out.seed = seed;
  out.replicates = R;
  for (std::size_t k = 0; k < n_grid.size(); ++k) {
    SimulationPoint p;
    p.n = n_grid[k];
    p.replicates = R;
    if (center) std::tie(p.center, p.center_method) = detail::center_for(s, model, p.n, raw, k);
    else p.center_method = "none";
    p.scale = std::pow(static_cast<double>(p.n), e);
    p.raw.resize(R);
    p.standardized.resize(R);
    for (std::size_t r = 0; r < R; ++r) {
      p.raw[r] = raw[r][k];
      p.standardized[r] = (raw[r][k] - p.center) / p.scale;
    }
    p.summary = summarize(p.standardized);
    if (!opt.keep_samples) {
      p.raw.clear();
      p.standardized.clear();
    }
    out.points.push_back(std::move(p));
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

struct PathPoint {
  double t = 0.0;
  std::uint64_t k = 0;  // floor(n t)
  SampleSummary summary;
  double predicted_variance = 0.0;  // t^{2b-1} sigma^2
};

struct PathSummary {
  std::uint64_t n = 0;
  std::size_t replicates = 0;
  std::vector<PathPoint> points;
  /// paths[r][t]: (U_{floor(nt)} - E U_{floor(nt)}) / n^{b - 1/2}.
  std::vector<std::vector<double>> paths;
};

/// Samples t -> (U_{floor(nt)} - E U_{floor(nt)}) / n^{b - 1/2} on a grid of t.
inline PathSummary functional_paths(const StatisticSpec& s, const SequenceModel& model, std::uint64_t n,
                                    const std::vector<double>& t_grid, std::size_t R, std::uint64_t seed,
                                    std::optional<double> sigma2_value = std::nullopt,
                                    const SimulationOptions& opt = {}) {
  std::vector<std::size_t> ks;
  for (double t : t_grid) {
    if (t < 0) throw ValidationError("path times must be >= 0");
    ks.push_back(static_cast<std::size_t>(std::floor(static_cast<double>(n) * t)));
  }
  std::vector<std::size_t> order(ks.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return ks[a] < ks[c]; });
  std::vector<std::size_t> sorted_ks;
  for (std::size_t i : order) sorted_ks.push_back(ks[i]);
  const auto raw = detail::sample_prefix_stats(s, model, sorted_ks, R, seed, opt);
  const double scale = std::pow(static_cast<double>(n), static_cast<double>(s.b()) - 0.5);
  PathSummary out;
  out.n = n;
  out.replicates = R;
  out.paths.assign(R, std::vector<double>(t_grid.size(), 0.0));
  for (std::size_t q = 0; q < order.size(); ++q) {
    const std::size_t ti = order[q];
    const auto [center, how] = detail::center_for(s, model, ks[ti], raw, q);
    for (std::size_t r = 0; r < R; ++r) out.paths[r][ti] = (raw[r][q] - center) / scale;
  }
  for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
    PathPoint p;
    p.t = t_grid[ti];
    p.k = ks[ti];
    std::vector<double> col(R);
    for (std::size_t r = 0; r < R; ++r) col[r] = out.paths[r][ti];
    p.summary = summarize(col);
    if (sigma2_value) p.predicted_variance = var_z(p.t, *sigma2_value, s.b());
    out.points.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Renewal stopping.

enum class Side { Minus, Plus };

struct RenewalOptions {
  /// Lower bound -B on h; nullopt means unbounded below.
  std::optional<double> h_lower_bound = 0.0;
  double margin = 0.0;
  /// Standard deviation of h, used by the heuristic rule for unbounded h.
  double h_sd = 1.0;
  std::size_t max_length = 1ULL << 28;
};

struct StopResult {
  std::uint64_t n_minus = 0;
  std::uint64_t n_plus = 0;
  double s_minus = 0.0;       // S_{N_-}
  double s_minus_next = 0.0;  // S_{N_- + 1}
  double s_plus = 0.0;        // S_{N_+}
  double s_plus_prev = 0.0;   // S_{N_+ - 1}
  bool certified = true;
  std::uint64_t scanned = 0;

  std::uint64_t n(Side side) const { return side == Side::Minus ? n_minus : n_plus; }
  double s(Side side) const { return side == Side::Minus ? s_minus : s_plus; }

  /// S_{N_-} <= x < S_{N_- + 1} and S_{N_+ - 1} <= x < S_{N_+}.
  bool sandwich(double x) const {
    const bool minus = s_minus <= x && x < s_minus_next;
    const bool plus = (n_plus == 0 || s_plus_prev <= x) && x < s_plus;
    return minus && plus;
  }
};

/// N_-(x) = sup{n >= 0 : S_n <= x} and N_+(x) = inf{n >= 0 : S_n > x} for
/// S_n = sum_{i <= n} h(X_i), scanning the stream until the stop is
/// certified: with h >= -B, once S_n > x + B (m + 1) + margin.
inline StopResult renewal_stop(ObservationStream& xs, std::uint64_t m, const std::function<double(double)>& h,
                               double x, const RenewalOptions& opt = {}) {
  StopResult r;
  double threshold = x;
  if (opt.h_lower_bound) {
    const double B = std::max(0.0, -*opt.h_lower_bound);
    threshold = x + B * static_cast<double>(m + 1) + opt.margin;
    r.certified = B == 0.0;
  } else {
    threshold = x + 20.0 * opt.h_sd + opt.margin;
    r.certified = false;
  }
  double s = 0.0;
  bool have_plus = false;
  bool minus_open = true;  // S_{N_- + 1} not yet recorded
  if (s > x) {
    have_plus = true;
    r.n_plus = 0;
    r.s_plus = s;
  } else {
    r.n_minus = 0;
    r.s_minus = s;
  }
  std::uint64_t n = 0;
  double prev = s;
  while (true) {
    if (have_plus && s > threshold && !minus_open) break;
    if (n >= opt.max_length) throw BudgetExceeded("renewal scan exceeded max_length");
    prev = s;
    s += h(xs(n));
    ++n;
    if (minus_open && n == r.n_minus + 1) {
      r.s_minus_next = s;
      if (s > x) minus_open = false;
    }
    if (s <= x) {
      r.n_minus = n;
      r.s_minus = s;
      minus_open = true;
    }
    if (!have_plus && s > x) {
      have_plus = true;
      r.n_plus = n;
      r.s_plus = s;
      r.s_plus_prev = prev;
    }
  }
  r.scanned = n;
  return r;
}

inline StopResult renewal_stop(const SequenceModel& model, const std::function<double(double)>& h, double x,
                               std::uint64_t seed, std::uint64_t replicate = 0, const RenewalOptions& opt = {}) {
  ObservationStream xs(model, CounterRng(seed, replicate, 0));
  return renewal_stop(xs, model.m(), h, x, opt);
}

struct RenewalPoint {
  double x = 0.0;
  Side side = Side::Minus;
  std::size_t replicates = 0;
  double center = 0.0;
  double scale = 1.0;
  std::vector<double> raw;           // U_{N(x)}
  std::vector<std::uint64_t> stops;  // N(x)
  std::vector<double> standardized;
  SampleSummary summary;
  std::size_t sandwich_violations = 0;
  std::size_t uncertified = 0;
  std::uint64_t attempts = 0;  // conditioned mode
  double acceptance = 1.0;
};

struct RenewalSummary {
  double nu = 0.0;
  double mu_D = 0.0;
  std::size_t b = 1;
  std::uint64_t seed = 0;
  bool conditioned = false;
  /// nu^{1-2b} sigma^2(G), when computable.
  std::optional<double> gamma2_formula;
  std::optional<double> gamma2_formula_se;
  std::vector<RenewalPoint> points;

  nlohmann::json to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : points) {
      pts.push_back({{"x", p.x},
                     {"side", p.side == Side::Minus ? "minus" : "plus"},
                     {"replicates", p.replicates},
                     {"center", p.center},
                     {"scale", p.scale},
                     {"mean", p.summary.mean},
                     {"mean_se", p.summary.mean_se},
                     {"variance", p.summary.variance},
                     {"variance_se", p.summary.variance_se},
                     {"m4", p.summary.m4},
                     {"m4_se", p.summary.m4_se},
                     {"sandwich_violations", p.sandwich_violations},
                     {"uncertified", p.uncertified},
                     {"attempts", p.attempts},
                     {"acceptance", p.acceptance}});
    }
    nlohmann::json j{{"nu", nu}, {"mu_D", mu_D}, {"b", b}, {"seed", seed}, {"conditioned", conditioned}, {"points", pts}};
    if (gamma2_formula) j["gamma2_formula"] = *gamma2_formula;
    if (gamma2_formula_se) j["gamma2_formula_se"] = *gamma2_formula_se;
    return j;
  }
};

namespace detail {

/// Whether S_n = x is reachable for integer h >= 0 with the given support.
inline bool lattice_reachable(const std::vector<long>& steps, long x) {
  if (x < 0) return false;
  std::vector<char> ok(static_cast<std::size_t>(x) + 1, 0);
  ok[0] = 1;
  for (long v = 1; v <= x; ++v)
    for (long s : steps)
      if (s > 0 && s <= v && ok[static_cast<std::size_t>(v - s)]) {
        ok[static_cast<std::size_t>(v)] = 1;
        break;
      }
  return ok[static_cast<std::size_t>(x)] != 0;
}

}  // namespace detail

struct RenewalExperiment {
  StatisticSpec statistic;
  std::function<double(double)> h;
  std::vector<double> x_grid;
  std::vector<Side> sides{Side::Minus, Side::Plus};
  bool conditioned = false;
  double min_acceptance = 1e-4;
  RenewalOptions stop;
};

/// Samples (U_{N(x)} - mu_D nu^{-b} (b!)^{-1} x^b) / x^{b - 1/2}.
inline RenewalSummary mc_renewal(const RenewalExperiment& ex, const SequenceModel& model, std::size_t R,
                                 std::uint64_t seed, const MomentOptions& mopt = {},
                                 const SimulationOptions& opt = {}) {
  const StatisticSpec& s = ex.statistic;
  const std::size_t b = s.b();
  RenewalSummary out;
  out.b = b;
  out.seed = seed;
  out.conditioned = ex.conditioned;
  const Kernel hk = Kernel::custom(1, 1, model.domain(), [h = ex.h](std::span<const double> v) { return h(v[0]); }, "h");
  const Estimate nu = mu_estimate(hk, model, mopt);
  if (!(nu.value > 0.0)) throw NonpositiveDrift("E h(X_1) must be positive");
  out.nu = nu.value;
  out.mu_D = s.mode == ConstraintMode::Exact ? mu_exact_constrained(s.f, s.constraint, model, mopt)
                                             : mu_constrained(s.f, s.constraint, model, mopt);
  try {
    const RenewalMoments rm = renewal_moments(s.f, s.constraint, model, ex.h, s.mode, mopt);
    out.gamma2_formula = rm.gamma2;
    if (rm.modified.method == Method::MonteCarlo) out.gamma2_formula_se = rm.gamma2_se;
  } catch (const BudgetExceeded&) {
  }

  std::vector<long> steps;
  if (ex.conditioned) {
    if (!model.is_iid() || !model.is_finite())
      throw ValidationError("conditioned renewal needs an i.i.d. finite-alphabet model");
    for (std::size_t a = 0; a < model.alphabet_size(); ++a) {
      const double v = ex.h(static_cast<double>(a));
      if (v != std::floor(v)) throw ValidationError("conditioned renewal needs integer-valued h");
      steps.push_back(static_cast<long>(v));
    }
  }
  const double center_coef =
      out.mu_D * std::pow(out.nu, -static_cast<double>(b)) / to_double(factorial(static_cast<std::int64_t>(b)));

  for (double x : ex.x_grid) {
    const bool nonneg = std::all_of(steps.begin(), steps.end(), [](long v) { return v >= 0; });
    if (ex.conditioned && nonneg && !detail::lattice_reachable(steps, static_cast<long>(std::floor(x))))
      throw ConditioningImpossible("S_{N_-(x)} = x has probability 0 for x = " + std::to_string(x));
    if (ex.conditioned && x != std::floor(x)) throw ConditioningImpossible("conditioning needs an integer level x");
    struct Rep {
      StopResult stop;
      double u_minus = 0.0, u_plus = 0.0;
      std::uint64_t attempts = 0;
    };
    std::vector<Rep> reps(R);
    const std::uint64_t max_attempts = static_cast<std::uint64_t>(std::ceil(1.0 / ex.min_acceptance));
    parallel_for(
        R,
        [&](std::size_t r) {
          Rep& rep = reps[r];
          for (std::uint64_t a = 0;; ++a) {
            // Attempt a of replicate r uses its own stream; unconditioned runs use stream 0.
            ObservationStream xs(model, CounterRng(seed, r, a));
            rep.stop = renewal_stop(xs, model.m(), ex.h, x, ex.stop);
            rep.attempts = a + 1;
            if (!ex.conditioned || rep.stop.s_minus == x) {
              std::vector<std::size_t> pre{rep.stop.n_minus, rep.stop.n_plus};
              const bool swapped = pre[0] > pre[1];
              if (swapped) std::swap(pre[0], pre[1]);
              const ObservationSequence seq = xs.prefix(pre[1]);
              const auto u = prefix_statistics(s.f, s.constraint, s.mode, seq, pre, opt.eval);
              rep.u_minus = swapped ? u[1] : u[0];
              rep.u_plus = swapped ? u[0] : u[1];
              return;
            }
            if (a + 1 >= max_attempts) {
              throw ConditioningImpossible("conditioned renewal acceptance fell below " +
                                           std::to_string(ex.min_acceptance));
            }
          }
        },
        opt.threads);
    for (Side side : ex.sides) {
      RenewalPoint p;
      p.x = x;
      p.side = side;
      p.replicates = R;
      p.center = center_coef * std::pow(x, static_cast<double>(b));
      p.scale = std::pow(x, static_cast<double>(b) - 0.5);
      for (const Rep& rep : reps) {
        const double u = side == Side::Minus ? rep.u_minus : rep.u_plus;
        p.raw.push_back(u);
        p.stops.push_back(rep.stop.n(side));
        p.standardized.push_back((u - p.center) / p.scale);
        if (!rep.stop.sandwich(x)) ++p.sandwich_violations;
        if (!rep.stop.certified) ++p.uncertified;
        p.attempts += rep.attempts;
      }
      p.acceptance = static_cast<double>(R) / static_cast<double>(std::max<std::uint64_t>(1, p.attempts));
      if (ex.conditioned && p.acceptance < ex.min_acceptance)
        throw ConditioningImpossible("conditioned renewal acceptance " + std::to_string(p.acceptance) +
                                     " is below " + std::to_string(ex.min_acceptance));
      p.summary = summarize(p.standardized);
      if (!opt.keep_samples) {
        p.raw.clear();
        p.standardized.clear();
      }
      out.points.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace ustat
