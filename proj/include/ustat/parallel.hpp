#pragma once

// Deterministic data-parallel helpers. Work is split into fixed-size chunks
// whose results are stored by index, so the output never depends on the
// number of worker threads.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ustat {

inline unsigned default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Calls body(i) for i in [0, count) on up to `threads` workers. The first
/// exception thrown by any call is rethrown on the calling thread.
template <class Body>
void parallel_for(std::size_t count, Body&& body, unsigned threads = 0) {
  if (threads == 0) threads = default_threads();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Running sums of values and squares for a fixed number of quantities.
struct MomentSums {
  std::size_t count = 0;
  std::vector<double> sum;
  std::vector<double> sumsq;

  explicit MomentSums(std::size_t k = 0) : sum(k, 0.0), sumsq(k, 0.0) {}

  void add(const std::vector<double>& x) {
    ++count;
    for (std::size_t k = 0; k < x.size(); ++k) {
      sum[k] += x[k];
      sumsq[k] += x[k] * x[k];
    }
  }

  void merge(const MomentSums& o) {
    count += o.count;
    for (std::size_t k = 0; k < sum.size(); ++k) {
      sum[k] += o.sum[k];
      sumsq[k] += o.sumsq[k];
    }
  }

  double mean(std::size_t k) const { return count ? sum[k] / static_cast<double>(count) : 0.0; }

  /// Standard error of the mean.
  double se(std::size_t k) const {
    if (count < 2) return 0.0;
    const double n = static_cast<double>(count);
    const double m = sum[k] / n;
    const double var = std::max(0.0, (sumsq[k] - n * m * m) / (n - 1));
    return std::sqrt(var / n);
  }
};

/// Chunked reduction: chunk c covers samples [c * chunk, (c + 1) * chunk).
/// Chunk results are merged in chunk order.
template <class Sample>
MomentSums chunked_moments(std::size_t samples, std::size_t width, Sample&& sample, unsigned threads = 0,
                           std::size_t chunk = 1024) {
  const std::size_t chunks = (samples + chunk - 1) / chunk;
  std::vector<MomentSums> parts(chunks, MomentSums(width));
  parallel_for(
      chunks,
      [&](std::size_t c) {
        std::vector<double> x(width);
        const std::size_t end = std::min(samples, (c + 1) * chunk);
        for (std::size_t s = c * chunk; s < end; ++s) {
          sample(s, x);
          parts[c].add(x);
        }
      },
      threads);
  MomentSums total(width);
  for (const auto& p : parts) total.merge(p);
  return total;
}

}  // namespace ustat
