#pragma once

// Word occurrences in random strings and pattern occurrences in random
// permutations: closed-form means and delegated variances.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ustat/constraint.hpp"
#include "ustat/counting.hpp"
#include "ustat/kernel.hpp"
#include "ustat/model.hpp"
#include "ustat/moments.hpp"

namespace ustat {

struct WordSpec {
  std::vector<int> word;
  Constraint constraint;
  std::vector<double> p;  // letter distribution, all entries > 0
};

struct PermPatternSpec {
  std::vector<int> tau;
  Constraint constraint;
};

struct PatternAsymptotics {
  double mu_D = 0.0;
  double sigma2 = 0.0;
  double sigma2_se = 0.0;
  std::size_t b = 1;
  MomentReport report;
};

inline PatternAsymptotics word_asymptotics(const WordSpec& spec, const MomentOptions& opt = {}) {
  if (spec.word.size() != spec.constraint.ell()) throw ValidationError("word length does not match constraint");
  const SequenceModel model = SequenceModel::iid_finite(spec.p);
  const Kernel f = Kernel::word(spec.word, spec.p.size());
  PatternAsymptotics out;
  out.b = spec.constraint.blocks();
  out.mu_D = static_cast<double>(spec.constraint.finite_product());
  for (int c : spec.word) out.mu_D *= spec.p[static_cast<std::size_t>(c)];
  out.report = sigma2(f, spec.constraint, model, ConstraintMode::Bounded, opt);
  out.sigma2 = out.report.sigma2;
  out.sigma2_se = out.report.sigma2_se;
  if (spec.p.size() >= 2 && out.report.method != Method::MonteCarlo && !(out.sigma2 > opt.tol))
    throw std::logic_error("word statistic over an alphabet of size >= 2 must have sigma2 > 0");
  return out;
}

inline PatternAsymptotics perm_asymptotics(const PermPatternSpec& spec, const MomentOptions& opt = {}) {
  if (spec.tau.size() != spec.constraint.ell()) throw ValidationError("pattern length does not match constraint");
  const Kernel f = Kernel::perm_pattern(spec.tau);
  PatternAsymptotics out;
  out.b = spec.constraint.blocks();
  out.mu_D = static_cast<double>(spec.constraint.finite_product()) / to_double(factorial(static_cast<std::int64_t>(spec.tau.size())));
  out.report = sigma2(f, spec.constraint, SequenceModel::iid_uniform(), ConstraintMode::Bounded, opt);
  out.sigma2 = out.report.sigma2;
  out.sigma2_se = out.report.sigma2_se;
  if (spec.tau.size() >= 2 && out.report.method != Method::MonteCarlo && !(out.sigma2 > opt.tol))
    throw std::logic_error("pattern statistic with ell >= 2 must have sigma2 > 0");
  return out;
}

}  // namespace ustat
