// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ustat/blocks.hpp"
#include "ustat/core.hpp"
#include "ustat/counting.hpp"
#include "ustat/examples.hpp"
#include "ustat/moments.hpp"
#include "ustat/simulate.hpp"
#include "ustat/spectral.hpp"

using namespace ustat;

namespace {

struct Verdict_ {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::mt19937_64& rng() {
  static std::mt19937_64 g(0xacce97ULL);
  return g;
}

std::size_t uni(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng()); }

Kernel random_int_table(std::size_t a, std::size_t ell) {
  std::size_t size = 1;
  for (std::size_t k = 0; k < ell; ++k) size *= a;
  std::vector<double> v(size);
  for (auto& x : v) x = static_cast<double>(static_cast<int>(uni(0, 5)) - 2);
  return Kernel::table(a, ell, std::move(v));
}

std::vector<double> random_real_table(std::size_t size) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(size);
  for (auto& x : v) x = d(rng());
  return v;
}

ObservationSequence random_symbols(std::size_t a, std::size_t n) {
  std::vector<int> xs(n);
  for (auto& x : xs) x = static_cast<int>(uni(0, a - 1));
  return ObservationSequence::symbols(a, xs);
}

Constraint random_constraint(std::size_t ell) {
  std::vector<Gap> gaps;
  for (std::size_t j = 0; j + 1 < ell; ++j) {
    const std::size_t g = uni(0, 3);
    gaps.push_back(g == 0 ? Gap::infinite() : Gap::finite(g));
  }
  return Constraint(ell, std::move(gaps));
}

const SequenceModel kBinary = SequenceModel::uniform_finite(2);

// ---------------------------------------------------------------------------

Verdict_ criterion1() {
  Verdict_ v;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t cases = 0, dp = 0, dec = 0, ie = 0, red = 0;
  bool ok_dp = true, ok_dec = true, ok_ie = true, ok_red = true;
  while (cases < 10000) {
    const std::size_t a = uni(2, 3), ell = uni(1, 4);
    const std::size_t n = uni(0, 50);
    const Constraint d = random_constraint(ell);
    const auto xs = random_symbols(a, n);
    const Kernel f = random_int_table(a, ell);
    switch (cases % 4) {
      case 0: {
        std::vector<int> word(ell);
        for (auto& c : word) c = static_cast<int>(uni(0, a - 1));
        const Kernel w = Kernel::word(word, a);
        for (auto mode : {ConstraintMode::Bounded, ConstraintMode::Exact})
          ok_dp = ok_dp && count_word_dp(word, d, xs, mode) == u_stat_exact_count(w, d, mode, xs);
        ++dp;
        break;
      }
      case 1: {
        BigInt sum = 0;
        for (const auto& sub : exact_subconstraints(d)) sum += u_stat_exact_count(f, sub, ConstraintMode::Exact, xs);
        ok_dec = ok_dec && sum == u_stat_exact_count(f, d, ConstraintMode::Bounded, xs);
        ++dec;
        break;
      }
      case 2: {
        const std::uint64_t m = uni(0, 3);
        ok_ie = ok_ie && gap_gt_by_inclusion_exclusion(f, m, xs) == u_stat_gap_gt_exact_count(f, m, xs);
        ++ie;
        break;
      }
      default: {
        ok_red = ok_red && reduced_exact_count(f, d, xs) == u_stat_exact_count(f, d, ConstraintMode::Exact, xs);
        ++red;
        break;
      }
    }
    ++cases;
  }
  const double secs = seconds_since(t0);
  v.require(ok_dp, "DP vs naive");
  v.require(ok_dec, "decomposition");
  v.require(ok_ie, "inclusion-exclusion");
  v.require(ok_red, "reduction identity");
  v.require(secs < 60.0, "runtime under 1 min");
  v.detail << "cases=" << cases << " (dp=" << dp << ", decomposition=" << dec << ", inclusion-exclusion=" << ie
           << ", reduction=" << red << ") in " << g17(secs) << " s";
  return v;
}

Verdict_ criterion2() {
  Verdict_ v;
  const Kernel w = Kernel::word("01", "01");
  BigInt total = 0;
  for (unsigned mask = 0; mask < 1024; ++mask) {
    std::vector<int> s(10);
    for (unsigned i = 0; i < 10; ++i) s[i] = static_cast<int>((mask >> i) & 1U);
    total += u_stat_exact_count(w, Constraint::unconstrained(2), ConstraintMode::Bounded,
                                ObservationSequence::symbols(2, s));
  }
  const double mean = static_cast<double>(total) / 1024.0;
  const ExpectedValue e = expected_un(w, std::nullopt, 10, kBinary);
  v.require(total == BigInt(11520), "enumerated total 11520");
  v.require(mean == 11.25, "mean 11.25");
  v.require(e.exact && e.value == 11.25, "expected_un exact 11.25");
  v.detail << "enumerated mean=" << g17(mean) << " expected_un=" << g17(e.value) << " C(10,2)/4=" << g17(45.0 / 4);
  return v;
}

Verdict_ criterion3() {
  Verdict_ v;
  const MomentReport r = sigma2(Kernel::perm_pattern({2, 1}), std::nullopt, SequenceModel::iid_uniform());
  v.require(std::abs(r.sigma2 - 1.0 / 36) <= 1e-12, "sigma2 within 1e-12 of 1/36");
  v.require(r.sigma2_exact && *r.sigma2_exact == Rational(1, 36), "exact rational 1/36");
  bool enum_ok = true;
  for (long n = 2; n <= 8; ++n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = static_cast<int>(i);
    long long N = 0, s1 = 0, s2 = 0;
    do {
      long long inv = 0;
      for (long i = 0; i < n; ++i)
        for (long j = i + 1; j < n; ++j) inv += p[static_cast<std::size_t>(i)] > p[static_cast<std::size_t>(j)];
      ++N;
      s1 += inv;
      s2 += inv * inv;
    } while (std::next_permutation(p.begin(), p.end()));
    // 72 Var = n(n-1)(2n+5), cleared of denominators.
    enum_ok = enum_ok && 72 * (N * s2 - s1 * s1) == N * N * n * (n - 1) * (2 * n + 5);
  }
  v.require(enum_ok, "Var N_n(21) = n(n-1)(2n+5)/72 for n <= 8");
  v.detail << "sigma2=" << g17(r.sigma2) << " method=" << to_string(r.method) << " enumeration n<=8 "
           << (enum_ok ? "matches" : "differs");
  return v;
}

Verdict_ criterion4() {
  Verdict_ v;
  const Constraint D = Constraint::parse("1,inf");
  const MomentReport r = sigma2(e0_kernel(), D, kBinary);
  v.require(r.verdict == Verdict::Degenerate, "verdict degenerate");
  v.require(r.max_abs_b < 1e-12, "max|b| < 1e-12");
  std::size_t identity_ok = 0;
  for (std::uint64_t rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 3 + rep % 200;
    const auto xs = generate(kBinary, n, 4242, rep);
    BigInt rhs = 0;
    for (std::size_t j = 3; j <= n; ++j)
      rhs += static_cast<long>(xs[0] * xs[j - 1]) - static_cast<long>(xs[j - 2] * xs[j - 1]);
    identity_ok += u_stat_exact_count(e0_kernel(), D, ConstraintMode::Bounded, xs) == rhs;
  }
  v.require(identity_ok == 1000, "identity on 1000 strings");
  const StatisticSpec spec{e0_kernel(), D};
  const auto s = mc_degenerate(spec, kBinary, {100000}, 10000, 31337);
  const auto& z = s.points[0].standardized;
  std::size_t near_plus = 0, near_minus = 0;
  for (double x : z) {
    near_plus += std::abs(x - 0.25) <= 0.01;
    near_minus += std::abs(x + 0.25) <= 0.01;
  }
  const double fp = static_cast<double>(near_plus) / static_cast<double>(z.size());
  const double fm = static_cast<double>(near_minus) / static_cast<double>(z.size());
  v.require(std::abs(fp - 0.5) <= 0.02 && std::abs(fm - 0.5) <= 0.02, "mass 0.5 +- 0.02 near each of +-1/4");
  v.detail << "max|b|=" << g17(r.max_abs_b) << " identity " << identity_ok << "/1000, mass near +1/4=" << g17(fp)
           << " near -1/4=" << g17(fm) << " (n=1e5, R=1e4, window 0.01)";
  return v;
}

struct CltRun {
  double sigma2 = 0.0;
  SimulationSummary s;
};

const CltRun& clt_run() {
  static const CltRun run = [] {
    CltRun c;
    const Kernel w = Kernel::word("11", "01");
    c.sigma2 = sigma2(w, std::nullopt, kBinary).sigma2;
    SimulationOptions opt;
    opt.keep_samples = false;
    c.s = mc_clt(StatisticSpec{w, Constraint::unconstrained(2)}, kBinary, {256, 512, 1024, 2048, 4096, 8192}, 10000,
                 20240601, c.sigma2, opt);
    return c;
  }();
  return run;
}

Verdict_ criterion5() {
  Verdict_ v;
  const auto& run = clt_run();
  const auto& last = run.s.points.back();
  const double var = last.summary.variance, se = last.summary.variance_se;
  v.require(std::abs(run.sigma2 - 1.0 / 16) < 1e-15, "sigma2 = 1/16");
  v.require(std::abs(var - run.sigma2) <= 3 * se, "Var/n^3 within 3 SE at n=8192");
  v.require(*last.d_k < 0.05, "d_K < 0.05 at n=8192");
  // One-sided envelope C n^{-1/2} fitted at n=256, plus the sampling noise of d_K at R replicates.
  const double C = *run.s.points.front().d_k * std::sqrt(256.0);
  const double allowance = 1.36 / std::sqrt(static_cast<double>(run.s.replicates));
  bool envelope = true;
  std::ostringstream dks;
  for (const auto& p : run.s.points) {
    envelope = envelope && *p.d_k <= C / std::sqrt(static_cast<double>(p.n)) + allowance;
    dks << " " << p.n << ":" << g17(*p.d_k);
  }
  v.require(envelope, "d_K within the n^{-1/2} envelope");
  v.detail << "sigma2=" << g17(run.sigma2) << " Var/n^3=" << g17(var) << " +- " << g17(se) << " d_K:" << dks.str()
           << " envelope C=" << g17(C) << " allowance=" << g17(allowance);
  return v;
}

Verdict_ criterion6() {
  Verdict_ v;
  const auto& run = clt_run();
  const auto& last = run.s.points.back();
  const double target = 3 * run.sigma2 * run.sigma2;
  v.require(std::abs(last.summary.m4 - target) <= 3 * last.summary.m4_se, "4th moment within 3 SE of 3 sigma^4");
  v.detail << "m4=" << g17(last.summary.m4) << " +- " << g17(last.summary.m4_se) << " 3sigma^4=" << g17(target);
  return v;
}

Verdict_ criterion7() {
  Verdict_ v;
  struct Case {
    const char* name;
    Kernel f;
    SequenceModel model;
  };
  const std::vector<Case> cases{{"tau=21", Kernel::perm_pattern({2, 1}), SequenceModel::iid_uniform()},
                                {"w=11", Kernel::word("11", "01"), kBinary}};
  SimulationOptions opt;
  opt.keep_samples = false;
  for (const auto& c : cases) {
    const double s2 = sigma2(c.f, std::nullopt, c.model).sigma2;
    const auto ps =
        functional_paths(StatisticSpec{c.f, Constraint::unconstrained(2)}, c.model, 4096, {0.25, 0.5, 1.0}, 10000,
                         777, s2, opt);
    v.detail << c.name << ":";
    for (const auto& p : ps.points) {
      const bool ok = std::abs(p.summary.variance - p.predicted_variance) <= 3 * p.summary.variance_se;
      v.require(ok, std::string(c.name) + " t=" + g17(p.t));
      v.detail << " t=" << g17(p.t) << " var=" << g17(p.summary.variance) << "+-" << g17(p.summary.variance_se)
               << " vs " << g17(p.predicted_variance);
    }
    v.detail << "; ";
  }
  return v;
}

Verdict_ criterion8() {
  Verdict_ v;
  const Kernel w = Kernel::word("11", "01");
  const RenewalExperiment ex{StatisticSpec{w, Constraint::unconstrained(2)},
                             [](double x) { return x == 1.0 ? 1.0 : 0.0; }, {512.0, 2048.0}};
  const RenewalSummary rs = mc_renewal(ex, kBinary, 10000, 99);
  v.require(std::abs(rs.nu - 0.5) < 1e-15, "nu = 1/2");
  std::size_t violations = 0;
  for (const auto& p : rs.points) {
    violations += p.sandwich_violations;
    const bool mean_ok = std::abs(p.summary.mean) <= 3 * p.summary.mean_se;
    v.require(mean_ok, std::string("mean 0 within 3 SE at x=") + g17(p.x) +
                           (p.side == Side::Minus ? " minus" : " plus"));
    v.detail << "x=" << g17(p.x) << (p.side == Side::Minus ? "-" : "+") << ": mean=" << g17(p.summary.mean)
             << "+-" << g17(p.summary.mean_se) << " var=" << g17(p.summary.variance) << "+-"
             << g17(p.summary.variance_se) << "; ";
  }
  for (Side side : {Side::Minus, Side::Plus}) {
    const RenewalPoint* a = nullptr;
    const RenewalPoint* b = nullptr;
    for (const auto& p : rs.points)
      if (p.side == side) (a ? b : a) = &p;
    const double diff = std::abs(a->summary.variance - b->summary.variance);
    const double se = std::hypot(a->summary.variance_se, b->summary.variance_se);
    v.require(diff <= 3 * se, "variances agree across x");
  }
  v.require(violations == 0, "sandwich on every replicate");

  // h = 1: N_-(x) = x and U_{N_-(x)} is U_x replicate by replicate.
  const RenewalExperiment one{StatisticSpec{w, Constraint::unconstrained(2)}, [](double) { return 1.0; }, {512.0},
                              {Side::Minus}};
  const RenewalSummary r1 = mc_renewal(one, kBinary, 10000, 99);
  const auto fixed = mc_clt(StatisticSpec{w, Constraint::unconstrained(2)}, kBinary, {512}, 10000, 99);
  v.require(r1.points[0].raw == fixed.points[0].raw, "h = 1 reproduces fixed n");
  v.detail << "sandwich violations=" << violations << " gamma2_formula="
           << (rs.gamma2_formula ? g17(*rs.gamma2_formula) : std::string("n/a"))
           << " h=1 identical=" << (r1.points[0].raw == fixed.points[0].raw ? "yes" : "no");
  return v;
}

Verdict_ criterion9() {
  Verdict_ v;
  // (a) dimensions C(ell,k)(A-1)^k.
  bool dims = true;
  for (const auto& [a, ell] : std::vector<std::pair<std::size_t, std::size_t>>{{2, 2}, {2, 3}, {3, 2}}) {
    const FunctionSpaceBasis basis(std::vector<double>(a, 1.0 / static_cast<double>(a)), ell);
    for (std::size_t k = 0; k <= ell; ++k) {
      std::uint64_t binom = 1;
      for (std::size_t i = 0; i < k; ++i) binom = binom * (ell - i) / (i + 1);
      std::uint64_t want = binom;
      for (std::size_t i = 0; i < k; ++i) want *= a - 1;
      dims = dims && basis.dimension(k) == want && projection_rank(basis, k, basis.table_size() + 4, 5 + k) == want;
    }
  }
  v.require(dims, "(a) dimensions");
  // (b) Parseval.
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t a = uni(2, 3), ell = uni(1, 4);
    const FunctionSpaceBasis basis(std::vector<double>(a, 1.0 / static_cast<double>(a)), ell);
    const auto f = random_real_table(basis.table_size());
    double parts = 0.0;
    for (double x : basis.degree_norms(f)) parts += x;
    worst = std::max(worst, std::abs(parts - basis.norm2(f)));
  }
  v.require(worst <= 1e-10, "(b) Parseval");
  // (c) closed form on every +-1 string of length 12.
  std::size_t e21_ok = 0;
  for (unsigned mask = 0; mask < 4096; ++mask) {
    std::vector<int> pm(12);
    for (unsigned i = 0; i < 12; ++i) pm[i] = (mask >> i) & 1U ? 1 : -1;
    e21_ok += e21_identity_check(pm);
  }
  v.require(e21_ok == 4096, "(c) E21 closed form");
  // (d) eigenvalues.
  const auto ev = e4_operator_eigs(2000);
  std::vector<double> mags;
  for (double x : ev) mags.push_back(std::abs(x));
  std::sort(mags.rbegin(), mags.rend());
  double eig_err = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double target = 1.0 / ((2.0 * static_cast<double>(k) + 1.0) * std::numbers::pi);
    eig_err = std::max({eig_err, std::abs(mags[2 * k] - target), std::abs(mags[2 * k + 1] - target)});
  }
  v.require(eig_err <= 1e-3, "(d) eigenvalues");
  // (e) MGF at s = 1.
  const MgfCheck m = e4_limit_mgf_check(100000, 20240601, 1000, 1.0);
  v.require(std::abs(m.empirical - 1.06723) <= 3 * m.se, "(e) MGF within 3 SE of 1.06723");
  v.detail << "(a) " << (dims ? "ok" : "bad") << " (b) max Parseval gap=" << g17(worst) << " (c) " << e21_ok
           << "/4096 (d) max eig error=" << g17(eig_err) << " eigs:";
  for (double x : ev) v.detail << " " << g17(x);
  v.detail << " (e) empirical=" << g17(m.empirical) << "+-" << g17(m.se) << " vs 1.06723 (1/sqrt(cos(1/2))="
           << g17(m.analytic) << ", truncated series=" << g17(m.truncated) << ")";
  return v;
}

Verdict_ criterion10() {
  Verdict_ v;
  std::size_t checked = 0, disagreements = 0, degenerate = 0;
  auto judge = [&](const Kernel& f, const std::optional<Constraint>& d, const SequenceModel& model,
                   std::optional<bool> pi1_zero) {
    const MomentReport r = sigma2(f, d, model);
    const bool small = r.sigma2 <= 1e-10;
    const bool deg = r.verdict == Verdict::Degenerate;
    bool agree = small == deg && r.verdict != Verdict::Inconclusive;
    if (pi1_zero) agree = agree && *pi1_zero == deg;
    ++checked;
    degenerate += deg;
    disagreements += !agree;
  };
  for (int t = 0; t < 200; ++t) {
    const std::size_t a = uni(2, 3), ell = uni(2, 3);
    std::vector<double> p(a);
    double s = 0.0;
    for (auto& x : p) s += (x = 1.0 + static_cast<double>(uni(0, 4)));
    for (auto& x : p) x /= s;
    const FunctionSpaceBasis basis(p, ell);
    auto f = random_real_table(basis.table_size());
    // Half the battery lives in degree >= 2, where the first projection vanishes.
    if (t % 2) {
      const auto f1 = basis.project(f, 1);
      for (std::size_t i = 0; i < f.size(); ++i) f[i] -= f1[i];
    }
    const bool pi1_zero = std::sqrt(basis.degree_norms(f)[1]) <= 1e-10;
    judge(Kernel::table(a, ell, f), std::nullopt, SequenceModel::iid_finite(p), pi1_zero);
  }
  for (const auto& name : example_names()) {
    const NamedExample ex = named_example(name);
    std::optional<bool> pi1;
    if (ex.constraint.is_unconstrained() && ex.model.is_iid() && ex.model.is_finite()) {
      const FunctionSpaceBasis basis(ex.model.base_probabilities(), ex.f.arity());
      pi1 = std::sqrt(basis.degree_norms(tabulate(ex.f))[1]) <= 1e-10;
    }
    judge(ex.f, ex.constraint, ex.model, pi1);
  }
  v.require(disagreements == 0, "zero disagreements");
  v.detail << "kernels=" << checked << " degenerate=" << degenerate << " disagreements=" << disagreements;
  return v;
}

}  // namespace

int main() {
  const std::vector<std::function<Verdict_()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                        criterion6, criterion7, criterion8, criterion9, criterion10};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string line;
    bool pass = false;
    try {
      Verdict_ v = criteria[i]();
      pass = v.pass;
      line = v.detail.str();
    } catch (const std::exception& e) {
      line = std::string("exception: ") + e.what();
    }
    failed += !pass;
    std::printf("%s criterion %zu: %s (%.1f s)\n", pass ? "PASS" : "FAIL", i + 1, line.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
