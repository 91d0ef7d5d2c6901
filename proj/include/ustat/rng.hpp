#pragma once

#include <cstdint>
#include <limits>

namespace ustat {

/// Counter-based generator: output k is a SplitMix64 finalizer applied to
/// key + (k + 1) * golden. The key is derived from (seed, replicate, stream),
/// so any replicate can be regenerated independently of all others and of
/// the order in which work is scheduled.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t replicate = 0, std::uint64_t stream = 0)
      : key_(mix(mix(mix(seed ^ 0x243f6a8885a308d3ULL) ^ replicate) ^ (stream * 0x9e3779b97f4a7c15ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return at(counter_++); }

  /// Random access to output k without advancing.
  result_type at(std::uint64_t k) const { return mix(key_ + (k + 1) * kGolden); }

  /// Uniform in the open interval (0, 1).
  double uniform() { return to_open_unit(operator()()); }
  double uniform_at(std::uint64_t k) const { return to_open_unit(at(k)); }

  std::uint64_t position() const noexcept { return counter_; }
  void seek(std::uint64_t k) noexcept { counter_ = k; }

  static double to_open_unit(std::uint64_t x) {
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
  }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ustat
