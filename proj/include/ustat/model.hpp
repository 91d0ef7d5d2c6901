#pragma once

// Stationary m-dependent sequence models: i.i.d. finite alphabets, i.i.d.
// uniforms, and block factors X_i = h(xi_i, ..., xi_{i+m}) over an i.i.d. base.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "ustat/error.hpp"
#include "ustat/numeric.hpp"
#include "ustat/observations.hpp"
#include "ustat/rng.hpp"

namespace ustat {

struct IidFinite {
  std::vector<double> p;
};

struct IidUniform {};

using BaseModel = std::variant<IidFinite, IidUniform>;

struct BlockFactor {
  BaseModel base;
  std::size_t m = 0;
  /// Maps a base window of m + 1 values to one observation.
  std::function<double(std::span<const double>)> h;
  /// Output alphabet size; 0 for real-valued output.
  std::size_t alphabet_size = 0;
  std::string name = "block";
};

class SequenceModel {
 public:
  using Variant = std::variant<IidFinite, IidUniform, BlockFactor>;

  static SequenceModel iid_finite(std::vector<double> p) {
    validate_probabilities(p);
    return SequenceModel(IidFinite{std::move(p)});
  }
  static SequenceModel uniform_finite(std::size_t alphabet_size) {
    return iid_finite(std::vector<double>(alphabet_size, 1.0 / static_cast<double>(alphabet_size)));
  }
  static SequenceModel iid_uniform() { return SequenceModel(IidUniform{}); }

  static SequenceModel block_factor(BlockFactor bf) {
    if (!bf.h) throw ValidationError("block factor needs a window map");
    if (const auto* f = std::get_if<IidFinite>(&bf.base)) validate_probabilities(f->p);
    return SequenceModel(std::move(bf));
  }

  /// XOR of m + 1 consecutive base bits with P(bit = 1) = q.
  static SequenceModel xor_factor(std::size_t m, double q = 0.5) {
    BlockFactor bf{IidFinite{{1.0 - q, q}}, m,
                   [](std::span<const double> w) {
                     int s = 0;
                     for (double v : w) s ^= static_cast<int>(v);
                     return static_cast<double>(s);
                   },
                   2, "xor"};
    return block_factor(std::move(bf));
  }

  /// Sum of m + 1 consecutive base bits (alphabet {0, ..., m + 1}).
  static SequenceModel sum_factor(std::size_t m, double q = 0.5) {
    BlockFactor bf{IidFinite{{1.0 - q, q}}, m,
                   [](std::span<const double> w) {
                     double s = 0;
                     for (double v : w) s += v;
                     return s;
                   },
                   m + 2, "sum"};
    return block_factor(std::move(bf));
  }

  /// Maximum of m + 1 consecutive uniforms (real-valued, m-dependent).
  static SequenceModel max_uniform_factor(std::size_t m) {
    BlockFactor bf{IidUniform{}, m,
                   [](std::span<const double> w) { return *std::max_element(w.begin(), w.end()); }, 0,
                   "max-uniform"};
    return block_factor(std::move(bf));
  }

  const Variant& variant() const noexcept { return v_; }

  std::size_t m() const noexcept {
    if (const auto* b = std::get_if<BlockFactor>(&v_)) return b->m;
    return 0;
  }
  bool is_iid() const noexcept { return m() == 0; }

  /// Observations take values in a finite alphabet.
  bool has_finite_output() const noexcept { return alphabet_size() != 0; }

  /// Exact window laws can be enumerated (finite base and finite output).
  bool is_finite() const noexcept {
    if (std::holds_alternative<IidFinite>(v_)) return true;
    if (const auto* b = std::get_if<BlockFactor>(&v_))
      return b->alphabet_size != 0 && std::holds_alternative<IidFinite>(b->base);
    return false;
  }

  std::size_t alphabet_size() const noexcept {
    if (const auto* f = std::get_if<IidFinite>(&v_)) return f->p.size();
    if (const auto* b = std::get_if<BlockFactor>(&v_)) return b->alphabet_size;
    return 0;
  }

  Domain domain() const {
    return has_finite_output() ? Domain::finite(alphabet_size()) : Domain::real_order();
  }

  /// Base alphabet probabilities (finite base only).
  const std::vector<double>& base_probabilities() const {
    if (const auto* f = std::get_if<IidFinite>(&v_)) return f->p;
    if (const auto* b = std::get_if<BlockFactor>(&v_))
      if (const auto* f = std::get_if<IidFinite>(&b->base)) return f->p;
    throw ValidationError("model has no finite base alphabet");
  }

  std::string describe() const {
    if (const auto* f = std::get_if<IidFinite>(&v_)) return "iid-finite(A=" + std::to_string(f->p.size()) + ")";
    if (std::holds_alternative<IidUniform>(v_)) return "iid-uniform";
    const auto& b = std::get<BlockFactor>(v_);
    return "block-factor(" + b.name + ",m=" + std::to_string(b.m) + ")";
  }

  /// Draws base value k of the stream.
  static double draw_base(const BaseModel& base, const CounterRng& rng, std::uint64_t k,
                          const std::vector<double>& cumulative) {
    const double u = rng.uniform_at(k);
    if (std::holds_alternative<IidUniform>(base)) return u;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return static_cast<double>(std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                                                     cumulative.size() - 1));
  }

 private:
  explicit SequenceModel(Variant v) : v_(std::move(v)) {}

  static void validate_probabilities(const std::vector<double>& p) {
    if (p.empty()) throw ValidationError("probability vector must be non-empty");
    double s = 0;
    for (double x : p) {
      if (!(x > 0.0)) throw ValidationError("letter probabilities must be strictly positive");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("letter probabilities must sum to 1");
  }

  Variant v_;
};

inline std::vector<double> cumulative(const std::vector<double>& p) {
  std::vector<double> c(p.size());
  std::partial_sum(p.begin(), p.end(), c.begin());
  c.back() = 1.0;
  return c;
}

/// First n observations of the stream keyed by rng. Prefix-stable: asking for
/// more observations with the same generator extends the same sequence.
inline ObservationSequence generate(const SequenceModel& model, std::size_t n, const CounterRng& rng) {
  std::vector<double> data(n);
  const auto& v = model.variant();
  if (const auto* f = std::get_if<IidFinite>(&v)) {
    if (f->p.size() == 2 && f->p[0] == 0.5) {
      for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<double>((rng.at(i / 64) >> (i % 64)) & 1U);
    } else {
      const auto cum = cumulative(f->p);
      for (std::size_t i = 0; i < n; ++i) data[i] = SequenceModel::draw_base(IidFinite{}, rng, i, cum);
    }
    return ObservationSequence(model.domain(), std::move(data));
  }
  if (std::holds_alternative<IidUniform>(v)) {
    for (std::size_t i = 0; i < n; ++i) data[i] = rng.uniform_at(i);
    return ObservationSequence(Domain::real_order(), std::move(data));
  }
  const auto& b = std::get<BlockFactor>(v);
  std::vector<double> cum;
  if (const auto* f = std::get_if<IidFinite>(&b.base)) cum = cumulative(f->p);
  std::vector<double> base(n + b.m);
  for (std::size_t i = 0; i < base.size(); ++i) base[i] = SequenceModel::draw_base(b.base, rng, i, cum);
  for (std::size_t i = 0; i < n; ++i) data[i] = b.h(std::span<const double>(base).subspan(i, b.m + 1));
  return ObservationSequence(model.domain(), std::move(data));
}

inline ObservationSequence generate(const SequenceModel& model, std::size_t n, std::uint64_t seed,
                                    std::uint64_t replicate = 0, std::uint64_t stream = 0) {
  return generate(model, n, CounterRng(seed, replicate, stream));
}

/// On-demand access to the same stream that `generate` produces, for
/// experiments whose length is not known in advance (renewal stopping).
class ObservationStream {
 public:
  ObservationStream(const SequenceModel& model, const CounterRng& rng) : model_(&model), rng_(rng) {
    const auto& v = model.variant();
    if (const auto* f = std::get_if<IidFinite>(&v)) {
      bits_ = f->p.size() == 2 && f->p[0] == 0.5;
      cum_ = cumulative(f->p);
    } else if (const auto* b = std::get_if<BlockFactor>(&v)) {
      if (const auto* f = std::get_if<IidFinite>(&b->base)) cum_ = cumulative(f->p);
      block_ = b;
    }
  }

  /// Observation i (0-based).
  double operator()(std::size_t i) {
    while (cache_.size() <= i) cache_.push_back(compute(cache_.size()));
    return cache_[i];
  }

  std::size_t materialized() const noexcept { return cache_.size(); }

  /// The first n observations as a sequence (materializing as needed).
  ObservationSequence prefix(std::size_t n) {
    if (n > 0) (*this)(n - 1);
    return ObservationSequence(model_->domain(), std::vector<double>(cache_.begin(), cache_.begin() + static_cast<std::ptrdiff_t>(n)));
  }

 private:
  double compute(std::size_t i) {
    const auto& v = model_->variant();
    if (std::holds_alternative<IidFinite>(v)) {
      if (bits_) return static_cast<double>((rng_.at(i / 64) >> (i % 64)) & 1U);
      return SequenceModel::draw_base(IidFinite{}, rng_, i, cum_);
    }
    if (std::holds_alternative<IidUniform>(v)) return rng_.uniform_at(i);
    window_.resize(block_->m + 1);
    for (std::size_t k = 0; k <= block_->m; ++k) window_[k] = SequenceModel::draw_base(block_->base, rng_, i + k, cum_);
    return block_->h(window_);
  }

  const SequenceModel* model_;
  CounterRng rng_;
  bool bits_ = false;
  std::vector<double> cum_;
  const BlockFactor* block_ = nullptr;
  std::vector<double> window_;
  std::vector<double> cache_;
};

/// Exact law of L consecutive observations of a finite model.
struct WindowLaw {
  std::size_t length = 0;
  std::size_t alphabet_size = 0;
  std::vector<std::uint64_t> codes;  // row-major encoding in A^L
  std::vector<double> probs;

  std::vector<double> decode(std::uint64_t code) const {
    std::vector<double> out(length);
    for (std::size_t k = length; k-- > 0;) {
      out[k] = static_cast<double>(code % alphabet_size);
      code /= alphabet_size;
    }
    return out;
  }

  std::size_t support_size() const noexcept { return codes.size(); }
};

inline WindowLaw window_law(const SequenceModel& model, std::size_t length, std::uint64_t budget = 10'000'000ULL) {
  if (!model.is_finite()) throw ValidationError("window laws need a finite model");
  const std::size_t a = model.alphabet_size();
  const auto& q = model.base_probabilities();
  const std::size_t base_len = length + model.m();
  const std::uint64_t states = saturating_pow(q.size(), base_len);
  if (states > budget)
    throw BudgetExceeded("window law needs " + std::to_string(states) + " base states, budget is " +
                         std::to_string(budget));
  if (saturating_pow(a, length) == std::numeric_limits<std::uint64_t>::max())
    throw BudgetExceeded("window encoding overflows");
  WindowLaw law;
  law.length = length;
  law.alphabet_size = a;
  std::unordered_map<std::uint64_t, std::size_t> index;
  std::vector<std::size_t> digits(base_len, 0);
  std::vector<double> base(base_len, 0.0);
  const auto* bf = std::get_if<BlockFactor>(&model.variant());
  for (std::uint64_t s = 0; s < states; ++s) {
    double prob = 1.0;
    for (std::size_t k = 0; k < base_len; ++k) {
      base[k] = static_cast<double>(digits[k]);
      prob *= q[digits[k]];
    }
    std::uint64_t code = 0;
    for (std::size_t i = 0; i < length; ++i) {
      const double x = bf ? bf->h(std::span<const double>(base).subspan(i, bf->m + 1)) : base[i];
      code = code * a + static_cast<std::uint64_t>(x);
    }
    auto [it, inserted] = index.try_emplace(code, law.codes.size());
    if (inserted) {
      law.codes.push_back(code);
      law.probs.push_back(prob);
    } else {
      law.probs[it->second] += prob;
    }
    for (std::size_t k = base_len; k-- > 0;) {
      if (++digits[k] < q.size()) break;
      digits[k] = 0;
    }
  }
  // Sort by code for a deterministic, order-independent layout.
  std::vector<std::size_t> order(law.codes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return law.codes[x] < law.codes[y]; });
  WindowLaw sorted = law;
  for (std::size_t i = 0; i < order.size(); ++i) {
    sorted.codes[i] = law.codes[order[i]];
    sorted.probs[i] = law.probs[order[i]];
  }
  return sorted;
}

/// Marginal distribution of a single observation of a finite model.
inline std::vector<double> marginal(const SequenceModel& model) {
  const WindowLaw law = window_law(model, 1);
  std::vector<double> p(model.alphabet_size(), 0.0);
  for (std::size_t i = 0; i < law.codes.size(); ++i) p[law.codes[i]] = law.probs[i];
  return p;
}

}  // namespace ustat
