#pragma once

// Summary statistics with standard errors and Kolmogorov distances.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "ustat/error.hpp"
#include "ustat/numeric.hpp"

namespace ustat {

inline double normal_cdf(double x, double variance = 1.0) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0 * variance));
}

/// sup_x |F_emp(x) - F(x)| over the jump points of the empirical CDF.
inline double kolmogorov_distance(std::span<const double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw ValidationError("kolmogorov_distance needs at least one sample");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = i;
    while (j < s.size() && s[j] == s[i]) ++j;
    const double f = cdf(s[i]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(j) / n - f)});
    i = j;
  }
  return d;
}

/// Distance to N(0, sigma2).
inline double kolmogorov_distance(std::span<const double> samples, double sigma2) {
  if (!(sigma2 > 0.0)) throw DegenerateTarget("normal comparison needs sigma2 > 0");
  return kolmogorov_distance(samples, [sigma2](double x) { return normal_cdf(x, sigma2); });
}

/// Sample moments of a vector, with standard errors from the sample itself.
struct SampleSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double mean_se = 0.0;
  double variance = 0.0;      // unbiased
  double variance_se = 0.0;   // sqrt((m4 - s^4) / R)
  double m2 = 0.0;            // raw second moment
  double m2_se = 0.0;
  double m4 = 0.0;            // raw fourth moment
  double m4_se = 0.0;
};

inline SampleSummary summarize(std::span<const double> xs) {
  SampleSummary s;
  s.count = xs.size();
  if (xs.empty()) return s;
  const double n = static_cast<double>(xs.size());
  std::vector<double> tmp(xs.begin(), xs.end());
  s.mean = pairwise_sum(tmp) / n;
  std::vector<double> c2(tmp.size()), c4(tmp.size()), r2(tmp.size()), r4(tmp.size()), r8(tmp.size());
  for (std::size_t i = 0; i < tmp.size(); ++i) {
    const double d = tmp[i] - s.mean;
    c2[i] = d * d;
    c4[i] = c2[i] * c2[i];
    r2[i] = tmp[i] * tmp[i];
    r4[i] = r2[i] * r2[i];
    r8[i] = r4[i] * r4[i];
  }
  const double sc2 = pairwise_sum(c2), sc4 = pairwise_sum(c4);
  s.variance = xs.size() > 1 ? sc2 / (n - 1) : 0.0;
  s.mean_se = std::sqrt(s.variance / n);
  const double mu4 = sc4 / n, mu2 = sc2 / n;
  s.variance_se = std::sqrt(std::max(0.0, mu4 - mu2 * mu2) / n);
  s.m2 = pairwise_sum(r2) / n;
  s.m4 = pairwise_sum(r4) / n;
  s.m2_se = std::sqrt(std::max(0.0, s.m4 - s.m2 * s.m2) / n);
  s.m4_se = std::sqrt(std::max(0.0, pairwise_sum(r8) / n - s.m4 * s.m4) / n);
  return s;
}

}  // namespace ustat
