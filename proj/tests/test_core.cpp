#include "catch_amalgamated.hpp"

#include "support.hpp"
#include "ustat/core.hpp"
#include "ustat/counting.hpp"
#include "ustat/examples.hpp"

using namespace ustat;

namespace {

/// Naive oracle written independently of the library's evaluator.
BigInt brute_force(const Kernel& f, const ObservationSequence& xs, const std::vector<std::uint64_t>& lo,
                   const std::vector<std::uint64_t>& hi) {
  const std::size_t ell = f.arity(), n = xs.size();
  BigInt total = 0;
  std::vector<std::size_t> idx(ell);
  std::vector<double> args(ell);
  auto rec = [&](auto&& self, std::size_t k) -> void {
    if (k == ell) {
      for (std::size_t r = 0; r < ell; ++r) args[r] = xs.values()[idx[r]];
      total += static_cast<long long>(f(args));
      return;
    }
    const std::size_t start = k == 0 ? 0 : idx[k - 1] + lo[k - 1];
    for (std::size_t i = start; i < n; ++i) {
      if (k > 0 && i - idx[k - 1] > hi[k - 1]) break;
      idx[k] = i;
      self(self, k + 1);
    }
  };
  rec(rec, 0);
  return total;
}

BigInt brute_bounded(const Kernel& f, const Constraint& d, const ObservationSequence& xs) {
  std::vector<std::uint64_t> lo, hi;
  for (const Gap& g : d.gaps()) {
    lo.push_back(1);
    hi.push_back(g.is_finite() ? g.value() : ~std::uint64_t{0});
  }
  return brute_force(f, xs, lo, hi);
}

BigInt brute_exact(const Kernel& f, const Constraint& d, const ObservationSequence& xs) {
  std::vector<std::uint64_t> lo, hi;
  for (const Gap& g : d.gaps()) {
    lo.push_back(g.is_finite() ? g.value() : 1);
    hi.push_back(g.is_finite() ? g.value() : ~std::uint64_t{0});
  }
  return brute_force(f, xs, lo, hi);
}

}  // namespace

TEST_CASE("u_stat worked examples", "[core]") {
  const Kernel xy = Kernel::custom(2, 1, Domain::real_order(), [](std::span<const double> v) { return v[0] * v[1]; });
  CHECK(u_stat(xy, ObservationSequence::reals({1.0, 1.0, 1.0}).prefix(3)) == 3.0);
  CHECK(u_stat(Kernel::word("01", "01"), ObservationSequence::from_text("0011", "01")) == 4.0);
  CHECK(u_stat(Kernel::word("101", "01"), ObservationSequence::from_text("10", "01")) == 0.0);
  CHECK(u_stat(Kernel::word("101", "01"), ObservationSequence::from_text("", "01")) == 0.0);
}

TEST_CASE("constrained and exactly constrained examples", "[core]") {
  const auto w101 = Kernel::word("101", "01");
  CHECK(u_stat_constrained(w101, Constraint::parse("1,inf"), ObservationSequence::from_text("10101", "01")) == 3.0);
  CHECK(u_stat_constrained(e0_kernel(), Constraint::parse("1,inf"), ObservationSequence::from_text("110", "01")) == 0.0);
  CHECK(u_stat_exact_constrained(Kernel::word("11", "01"), Constraint::parse("2"),
                                 ObservationSequence::from_text("1011", "01")) == 1.0);
  // n < 1 + D_sum with one block.
  CHECK(u_stat_exact_constrained(Kernel::word("11", "01"), Constraint::parse("4"),
                                 ObservationSequence::from_text("1111", "01")) == 0.0);
  const auto xs = ObservationSequence::from_text("0110100110", "01");
  CHECK(u_stat_constrained(w101, Constraint::parse("inf,inf"), xs) == u_stat(w101, xs));
}

TEST_CASE("exact_subconstraints", "[core]") {
  const auto subs = exact_subconstraints(Constraint::parse("2,inf"));
  REQUIRE(subs.size() == 2);
  CHECK(subs[0] == Constraint::parse("1,inf"));
  CHECK(subs[1] == Constraint::parse("2,inf"));
  CHECK(exact_subconstraints(Constraint::parse("inf,inf")).size() == 1);
  CHECK(exact_subconstraints(Constraint::parse("2,3")).size() == 6);
}

TEST_CASE("gap greater than m", "[core]") {
  const Kernel one = Kernel::table(2, 2, {1, 1, 1, 1});
  const auto xs = ObservationSequence::from_text("0101", "01");
  CHECK(u_stat_gap_gt(one, 1, xs) == 3.0);
  const auto ys = ObservationSequence::from_text("011010", "01");
  const Kernel w = Kernel::word("10", "01");
  CHECK(u_stat_gap_gt(w, 0, ys) == u_stat(w, ys));
}

TEST_CASE("constraint parsing and validation", "[core]") {
  CHECK(Constraint::parse("(1,inf)") == Constraint::parse("1,inf"));
  CHECK(Constraint::parse("1,inf").blocks() == 2);
  CHECK(Constraint::parse("2,3").finite_sum() == 5);
  CHECK_THROWS_AS(Constraint::parse("0,inf"), ValidationError);
  CHECK_THROWS_AS(Constraint::parse("x"), ValidationError);
}

TEST_CASE("ties are rejected for order kernels", "[core]") {
  CHECK_THROWS_AS(u_stat(Kernel::perm_pattern({2, 1}), ObservationSequence::reals({0.5, 0.5})), TieError);
}

TEST_CASE("budget guard", "[core]") {
  EvalOptions opt;
  opt.budget = 10;
  CHECK_THROWS_AS(u_stat(Kernel::word("11", "01"), testing::random_symbols(2, 20), opt), BudgetExceeded);
}

TEST_CASE("naive evaluator equals an independent brute force", "[core][property]") {
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t a = testing::uniform_int(2, 3), ell = testing::uniform_int(1, 4);
    const std::size_t n = testing::uniform_int(0, 14);
    const Kernel f = testing::random_int_table(a, ell);
    const Constraint d = testing::random_constraint(ell);
    const auto xs = testing::random_symbols(a, n);
    REQUIRE(u_stat_exact_count(f, d, ConstraintMode::Bounded, xs) == brute_bounded(f, d, xs));
    REQUIRE(u_stat_exact_count(f, d, ConstraintMode::Exact, xs) == brute_exact(f, d, xs));
  }
}

TEST_CASE("decomposition into exact sub-constraints", "[core][property]") {
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t a = testing::uniform_int(2, 3), ell = testing::uniform_int(1, 4);
    const Kernel f = testing::random_int_table(a, ell);
    const Constraint d = testing::random_constraint(ell);
    const auto xs = testing::random_symbols(a, testing::uniform_int(0, 40));
    BigInt sum = 0;
    for (const auto& sub : exact_subconstraints(d)) sum += u_stat_exact_count(f, sub, ConstraintMode::Exact, xs);
    REQUIRE(u_stat_exact_count(f, d, ConstraintMode::Bounded, xs) == sum);
  }
}

TEST_CASE("inclusion-exclusion for gaps larger than m", "[core][property]") {
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t a = testing::uniform_int(2, 3), ell = testing::uniform_int(1, 4);
    const std::uint64_t m = testing::uniform_int(0, 3);
    const Kernel f = testing::random_int_table(a, ell);
    const auto xs = testing::random_symbols(a, testing::uniform_int(0, 30));
    std::vector<std::uint64_t> lo(ell > 0 ? ell - 1 : 0, m + 1), hi(lo.size(), ~std::uint64_t{0});
    const BigInt direct = brute_force(f, xs, lo, hi);
    REQUIRE(u_stat_gap_gt_exact_count(f, m, xs) == direct);
    REQUIRE(gap_gt_by_inclusion_exclusion(f, m, xs) == direct);
  }
}

TEST_CASE("linearity over linear-combination kernels", "[core][property]") {
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t ell = testing::uniform_int(1, 3);
    const Kernel f = testing::random_int_table(2, ell), g = testing::random_int_table(2, ell);
    const Kernel h = Kernel::linear({{3.0, f}, {-2.0, g}});
    const Constraint d = testing::random_constraint(ell);
    const auto xs = testing::random_symbols(2, testing::uniform_int(0, 25));
    REQUIRE(u_stat_exact_count(h, d, ConstraintMode::Bounded, xs) ==
            3 * u_stat_exact_count(f, d, ConstraintMode::Bounded, xs) -
                2 * u_stat_exact_count(g, d, ConstraintMode::Bounded, xs));
  }
}

TEST_CASE("monotonicity for nonnegative kernels", "[core][property]") {
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t ell = testing::uniform_int(1, 4);
    const Kernel f = testing::random_int_table(2, ell, 0, 3);
    const Constraint d = testing::random_constraint(ell);
    const auto xs = testing::random_symbols(2, testing::uniform_int(0, 25));
    const BigInt ex = u_stat_exact_count(f, d, ConstraintMode::Exact, xs);
    const BigInt bd = u_stat_exact_count(f, d, ConstraintMode::Bounded, xs);
    const BigInt un = u_stat_exact_count(f, Constraint::unconstrained(ell), ConstraintMode::Bounded, xs);
    REQUIRE(ex <= bd);
    REQUIRE(bd <= un);
  }
}

TEST_CASE("vincular constraints: bounded equals exact", "[core]") {
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t ell = testing::uniform_int(2, 4);
    const Kernel f = testing::random_int_table(2, ell);
    const Constraint d = testing::random_constraint(ell, 1);
    const auto xs = testing::random_symbols(2, testing::uniform_int(0, 25));
    REQUIRE(u_stat_exact_count(f, d, ConstraintMode::Exact, xs) == u_stat_exact_count(f, d, ConstraintMode::Bounded, xs));
  }
}

TEST_CASE("integer accumulator switches to big integers", "[core]") {
  EvalOptions opt;
  opt.arbitrary_precision = true;
  const auto xs = testing::random_symbols(2, 30);
  const Kernel f = testing::random_int_table(2, 3);
  CHECK(u_stat_exact_count(f, Constraint::unconstrained(3), ConstraintMode::Bounded, xs, opt) ==
        u_stat_exact_count(f, Constraint::unconstrained(3), ConstraintMode::Bounded, xs));
}
