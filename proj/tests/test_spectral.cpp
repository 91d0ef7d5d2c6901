#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "ustat/examples.hpp"
#include "ustat/moments.hpp"
#include "ustat/spectral.hpp"

using namespace ustat;
using Catch::Approx;

namespace {

/// E[f | X_C] as a table, by averaging out the slots outside C.
std::vector<double> conditional_mean(const std::vector<double>& f, const std::vector<double>& p, std::size_t ell,
                                     std::uint64_t C) {
  const std::size_t a = p.size();
  std::vector<double> out(f.size(), 0.0);
  for (std::size_t x = 0; x < f.size(); ++x) {
    std::vector<std::size_t> dx(ell);
    std::size_t r = x;
    for (std::size_t k = ell; k-- > 0;) {
      dx[k] = r % a;
      r /= a;
    }
    double s = 0;
    for (std::size_t y = 0; y < f.size(); ++y) {
      std::size_t q = y;
      double w = 1;
      bool ok = true;
      for (std::size_t k = ell; k-- > 0;) {
        const std::size_t dy = q % a;
        q /= a;
        if (C & (std::uint64_t{1} << k)) {
          ok = ok && dy == dx[k];
        } else {
          w *= p[dy];
        }
      }
      if (ok) s += w * f[y];
    }
    out[x] = s;
  }
  return out;
}

/// Pi_B f = sum_{C subset B} (-1)^{|B| - |C|} E[f | X_C].
std::vector<double> anova_projection(const std::vector<double>& f, const std::vector<double>& p, std::size_t ell,
                                     std::uint64_t B) {
  std::vector<double> out(f.size(), 0.0);
  for (std::uint64_t C = B;; C = (C - 1) & B) {
    const auto e = conditional_mean(f, p, ell, C);
    const double sign = ((std::popcount(B) - std::popcount(C)) % 2) ? -1.0 : 1.0;
    for (std::size_t i = 0; i < f.size(); ++i) out[i] += sign * e[i];
    if (C == 0) break;
  }
  return out;
}

}  // namespace

TEST_CASE("projections agree with the ANOVA expansion", "[spectral][property]") {
  const std::vector<std::pair<std::size_t, std::size_t>> shapes{{2, 2}, {2, 3}, {3, 2}, {3, 3}};
  for (int trial = 0; trial < 20; ++trial) {
    const auto [a, ell] = shapes[static_cast<std::size_t>(trial) % shapes.size()];
    std::vector<double> p(a);
    for (auto& v : p) v = 0.5 + static_cast<double>(testing::uniform_int(0, 10));
    double s = 0;
    for (double v : p) s += v;
    for (auto& v : p) v /= s;
    const FunctionSpaceBasis basis(p, ell);
    const auto f = testing::random_real_table(basis.table_size());
    for (std::uint64_t B = 0; B < (std::uint64_t{1} << ell); ++B) {
      // Bit k of B is slot k, slot 0 being the most significant table digit.
      const auto got = basis.project_subset(f, B);
      const auto want = anova_projection(f, p, ell, B);
      for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(got[i] == Approx(want[i]).margin(1e-12));
    }
  }
}

TEST_CASE("orthogonality, completeness and Parseval", "[spectral][property]") {
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t a = testing::uniform_int(2, 3), ell = testing::uniform_int(1, 3);
    std::vector<double> p(a, 1.0 / a);
    const FunctionSpaceBasis basis(p, ell);
    const auto f = testing::random_real_table(basis.table_size());
    const auto g = testing::random_real_table(basis.table_size());
    std::vector<double> sum(f.size(), 0.0);
    double parts = 0;
    for (std::size_t k = 0; k <= ell; ++k) {
      const auto pk = basis.project(f, k);
      for (std::size_t i = 0; i < f.size(); ++i) sum[i] += pk[i];
      parts += basis.norm2(pk);
      for (std::size_t j = 0; j <= ell; ++j)
        if (j != k) REQUIRE(std::abs(basis.inner(pk, basis.project(g, j))) < 1e-10);
    }
    for (std::size_t i = 0; i < f.size(); ++i) REQUIRE(sum[i] == Approx(f[i]).margin(1e-12));
    REQUIRE(std::abs(parts - basis.norm2(f)) < 1e-10);
  }
}

TEST_CASE("dimension audit", "[spectral]") {
  for (const auto& [a, ell] : std::vector<std::pair<std::size_t, std::size_t>>{{2, 2}, {2, 3}, {3, 2}, {3, 3}}) {
    const FunctionSpaceBasis basis(std::vector<double>(a, 1.0 / a), ell);
    std::uint64_t total = 0;
    for (std::size_t k = 0; k <= ell; ++k) {
      const std::uint64_t want = basis.dimension(k);
      REQUIRE(projection_rank(basis, k, basis.table_size() + 3, 17 + k) == want);
      total += want;
    }
    REQUIRE(total == basis.table_size());
  }
  CHECK(FunctionSpaceBasis({0.5, 0.5}, 2).dimension(1) == 2);
}

TEST_CASE("projection examples", "[spectral]") {
  const FunctionSpaceBasis bin({0.5, 0.5}, 2);
  const std::vector<double> c(4, 2.0);
  CHECK(bin.project(c, 0) == c);
  for (std::size_t k = 1; k <= 2; ++k)
    for (double v : bin.project(c, k)) CHECK(std::abs(v) < 1e-15);

  const auto e21 = tabulate(e21_kernel());
  for (double v : bin.project(e21, 0)) CHECK(std::abs(v) < 1e-15);
  for (double v : bin.project(e21, 1)) CHECK(std::abs(v) < 1e-15);
  const auto p2 = bin.project(e21, 2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(p2[i] == Approx(e21[i]).margin(1e-15));

  const FunctionSpaceBasis four(std::vector<double>(4, 0.25), 2);
  const auto e4 = tabulate(e4_kernel());
  for (double v : four.project(e4, 0)) CHECK(std::abs(v) < 1e-15);
  for (double v : four.project(e4, 1)) CHECK(std::abs(v) < 1e-15);
}

TEST_CASE("degeneracy order", "[spectral]") {
  const FunctionSpaceBasis bin({0.5, 0.5}, 2);
  CHECK(degeneracy_order(bin, tabulate(Kernel::word("01", "01"))) == 1);
  CHECK(degeneracy_order(bin, tabulate(e21_kernel())) == 2);
  CHECK(degeneracy_order(bin, std::vector<double>(4, 1.0)) == 0);
  const FunctionSpaceBasis tri({0.2, 0.3, 0.5}, 3);
  for (int t = 0; t < 10; ++t) {
    const auto f = tri.project(testing::random_real_table(27), 2);
    CHECK(degeneracy_order(tri, f) == 2);
  }
}

TEST_CASE("first projection vanishes exactly when sigma2 does", "[spectral][property]") {
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t a = testing::uniform_int(2, 3), ell = testing::uniform_int(2, 3);
    std::vector<double> p(a, 1.0 / a);
    const FunctionSpaceBasis basis(p, ell);
    auto f = testing::random_real_table(basis.table_size());
    if (trial % 2) {
      const auto f1 = basis.project(f, 1);
      for (std::size_t i = 0; i < f.size(); ++i) f[i] -= f1[i];
    }
    const Kernel k = Kernel::table(a, ell, f);
    const auto r = sigma2(k, std::nullopt, SequenceModel::iid_finite(p));
    const bool pi1_zero = std::sqrt(basis.degree_norms(f)[1]) <= 1e-10;
    REQUIRE(pi1_zero == (r.verdict == Verdict::Degenerate));
    REQUIRE(pi1_zero == (trial % 2 == 1));
  }
}

TEST_CASE("variance order from exact enumeration", "[spectral]") {
  const auto bin = SequenceModel::uniform_finite(2);
  const auto deg = variance_order(e21_kernel(), bin, 8, 16);
  CHECK(deg.order == 2);
  CHECK(deg.slope == Approx(2.0).margin(0.15));
  const auto non = variance_order(Kernel::word("01", "01"), bin, 8, 16);
  CHECK(non.order == 1);
  CHECK(non.slope == Approx(3.0).margin(0.3));
  const auto cst = variance_order(Kernel::table(2, 2, {1, 1, 1, 1}), bin, 8, 10);
  for (double v : cst.variance) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("two-letter degenerate identity", "[spectral]") {
  CHECK(e21_identity_check({1, 1, -1}));
  CHECK(e21_closed_form({1, 1, -1}) == -1.0);
  CHECK(e21_closed_form({1, 1, 1, 1}) == 6.0);
  CHECK(e21_identity_check({1, 1, 1, 1}));
  std::size_t ok = 0;
  testing::for_each_string(2, 12, [&](const std::vector<int>& s) {
    std::vector<int> pm;
    for (int c : s) pm.push_back(c ? 1 : -1);
    ok += e21_identity_check(pm);
  });
  CHECK(ok == 4096);
  CHECK_THROWS_AS(e21_identity_check({1, 0}), ValidationError);
}

TEST_CASE("Lanczos matches a dense eigen-solve", "[spectral]") {
  const Jun2Operator op(tabulate(e4_kernel()), std::vector<double>(4, 0.25), 60);
  const Eigen::MatrixXd S = op.dense();
  CHECK((S - S.transpose()).norm() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  std::vector<double> dense(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(dense.begin(), dense.end(), [](double x, double y) { return std::abs(x) > std::abs(y); });
  const auto lz = lanczos_eigenvalues(op, 120, 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(lz[i]) == Approx(std::abs(dense[i])).margin(1e-9));
}

TEST_CASE("operator for the two-letter example has eigenvalue 1", "[spectral]") {
  const Jun2Operator op(tabulate(e21_kernel()), {0.5, 0.5}, 200);
  const auto ev = lanczos_eigenvalues(op, 40, 2);
  CHECK(ev[0] == Approx(1.0).margin(1e-9));
  CHECK(std::abs(ev[1]) < 1e-6);
}

TEST_CASE("four-letter operator eigenvalues", "[spectral]") {
  const auto ev = e4_operator_eigs(2000);
  REQUIRE(ev.size() >= 6);
  const double pi = std::numbers::pi;
  for (std::size_t k = 0; k < 3; ++k) {
    const double target = 1.0 / ((2.0 * k + 1) * pi);
    CHECK(std::abs(std::abs(ev[2 * k]) - target) < 1e-3);
    CHECK(std::abs(std::abs(ev[2 * k + 1]) - target) < 1e-3);
    // One positive and one negative copy, each simple.
    CHECK(ev[2 * k] * ev[2 * k + 1] < 0);
  }
  std::vector<double> sorted(ev.begin(), ev.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i) CHECK(sorted[i] - sorted[i - 1] > 1e-4);
  CHECK_THROWS_AS(e4_operator_eigs(50), ValidationError);
}

TEST_CASE("four-letter limit MGF", "[spectral]") {
  const auto zero = e4_limit_mgf_check(1000, 3, 50, 0.0);
  CHECK(zero.empirical == 1.0);
  CHECK(zero.analytic == 1.0);
  const auto m = e4_limit_mgf_check(40000, 5, 200, 1.0);
  CHECK(std::abs(m.empirical - m.analytic) <= 3 * m.se + std::abs(m.truncated - m.analytic));
  CHECK(std::abs(m.mgf_minus - m.empirical) <= 6 * m.se);
  CHECK(m.analytic == Approx(1.0 / std::sqrt(std::cos(0.5))).margin(1e-15));
  CHECK_THROWS_AS(e4_limit_mgf_check(10, 1, 50, 4.0), ValidationError);
  CHECK_THROWS_AS(e4_limit_mgf_check(10, 1, 10, 1.0), ValidationError);
}
