#pragma once

#include <random>
#include <string>
#include <vector>

#include "ustat/constraint.hpp"
#include "ustat/kernel.hpp"
#include "ustat/observations.hpp"

namespace testing {

inline std::mt19937_64& rng() {
  static std::mt19937_64 g(0x5eed1234ULL);
  return g;
}

inline std::size_t uniform_int(std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng());
}

/// Integer-valued table kernel with entries in [lo, hi].
inline ustat::Kernel random_int_table(std::size_t a, std::size_t ell, int lo = -2, int hi = 3) {
  std::size_t size = 1;
  for (std::size_t k = 0; k < ell; ++k) size *= a;
  std::vector<double> v(size);
  std::uniform_int_distribution<int> d(lo, hi);
  for (auto& x : v) x = d(rng());
  return ustat::Kernel::table(a, ell, std::move(v));
}

inline std::vector<double> random_real_table(std::size_t size) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(size);
  for (auto& x : v) x = d(rng());
  return v;
}

inline ustat::ObservationSequence random_symbols(std::size_t a, std::size_t n) {
  std::vector<int> xs(n);
  for (auto& x : xs) x = static_cast<int>(uniform_int(0, a - 1));
  return ustat::ObservationSequence::symbols(a, xs);
}

/// Gaps drawn from {1, 2, 3, inf}.
inline ustat::Constraint random_constraint(std::size_t ell, std::size_t max_gap = 3) {
  std::vector<ustat::Gap> gaps;
  for (std::size_t j = 0; j + 1 < ell; ++j) {
    const std::size_t g = uniform_int(0, max_gap);
    gaps.push_back(g == 0 ? ustat::Gap::infinite() : ustat::Gap::finite(g));
  }
  return ustat::Constraint(ell, std::move(gaps));
}

/// All strings of length n over A letters, as symbol vectors.
template <class F>
void for_each_string(std::size_t a, std::size_t n, F&& visit) {
  std::vector<int> xs(n, 0);
  while (true) {
    visit(xs);
    std::size_t k = 0;
    while (k < n && xs[k] == static_cast<int>(a) - 1) xs[k++] = 0;
    if (k == n) return;
    ++xs[k];
  }
}

}  // namespace testing
