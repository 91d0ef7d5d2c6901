#pragma once

// Exact integer and rational arithmetic, binomials and order-fixed summation.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ustat/error.hpp"

namespace ustat {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline std::string to_string(const BigInt& v) { return v.str(); }

inline std::string to_string(const Rational& v) {
  return boost::multiprecision::numerator(v).str() + "/" +
         boost::multiprecision::denominator(v).str();
}

inline double to_double(const BigInt& v) { return v.convert_to<double>(); }
inline double to_double(const Rational& v) { return v.convert_to<double>(); }

/// Signed accumulator: 128-bit fast path, promoted to BigInt on overflow.
class ExactAccumulator {
 public:
  explicit ExactAccumulator(bool arbitrary = false) : promoted_(arbitrary) {}

  void add(std::int64_t v) {
    if (promoted_) {
      big_ += v;
      return;
    }
    __int128 next;
    if (__builtin_add_overflow(small_, static_cast<__int128>(v), &next)) {
      promote();
      big_ += v;
      return;
    }
    small_ = next;
  }

  BigInt value() const {
    if (promoted_) return big_ + from_int128(small_);
    return from_int128(small_);
  }

  bool promoted() const noexcept { return promoted_; }

  static BigInt from_int128(__int128 v) {
    const bool neg = v < 0;
    unsigned __int128 u = neg ? static_cast<unsigned __int128>(-(v + 1)) + 1
                              : static_cast<unsigned __int128>(v);
    BigInt r = static_cast<std::uint64_t>(u >> 64);
    r <<= 64;
    r += static_cast<std::uint64_t>(u);
    return neg ? BigInt(-r) : r;
  }

 private:
  void promote() {
    big_ += from_int128(small_);
    small_ = 0;
    promoted_ = true;
  }

  __int128 small_ = 0;
  BigInt big_ = 0;
  bool promoted_ = false;
};

inline BigInt from_uint128(unsigned __int128 u) {
  BigInt r = static_cast<std::uint64_t>(u >> 64);
  r <<= 64;
  r += static_cast<std::uint64_t>(u);
  return r;
}

/// Thrown internally when a checked 128-bit count overflows.
struct CountOverflow {};

/// Unsigned 128-bit counter whose arithmetic throws CountOverflow.
struct CheckedCount {
  unsigned __int128 v = 0;

  CheckedCount() = default;
  CheckedCount(unsigned __int128 x) : v(x) {}  // NOLINT

  CheckedCount& operator+=(CheckedCount o) {
    if (__builtin_add_overflow(v, o.v, &v)) throw CountOverflow{};
    return *this;
  }
  CheckedCount& operator-=(CheckedCount o) {
    v -= o.v;  // callers only subtract a previously added sub-total
    return *this;
  }
  friend CheckedCount operator+(CheckedCount a, CheckedCount b) { return a += b; }
  friend CheckedCount operator-(CheckedCount a, CheckedCount b) { return a -= b; }
  friend bool operator==(CheckedCount a, CheckedCount b) { return a.v == b.v; }
};

inline BigInt binomial(std::int64_t n, std::int64_t k) {
  if (k < 0 || n < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  BigInt r = 1;
  for (std::int64_t i = 1; i <= k; ++i) {
    r *= (n - k + i);
    r /= i;
  }
  return r;
}

inline double binomial_double(std::int64_t n, std::int64_t k) {
  if (k < 0 || n < 0 || k > n) return 0.0;
  double r = 1.0;
  for (std::int64_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

inline BigInt factorial(std::int64_t n) {
  BigInt r = 1;
  for (std::int64_t i = 2; i <= n; ++i) r *= i;
  return r;
}

/// Pairwise summation; the result depends only on the order of `xs`.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

/// Saturating integer power, used for state-count budgets.
inline std::uint64_t saturating_pow(std::uint64_t base, std::uint64_t exp) {
  std::uint64_t r = 1;
  for (std::uint64_t i = 0; i < exp; ++i) {
    if (base != 0 && r > std::numeric_limits<std::uint64_t>::max() / base)
      return std::numeric_limits<std::uint64_t>::max();
    r *= base;
  }
  return r;
}

}  // namespace ustat
