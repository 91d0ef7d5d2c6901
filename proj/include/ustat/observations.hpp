#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ustat/error.hpp"

namespace ustat {

/// Where observations live: a finite alphabet {0, ..., A-1} (optionally with
/// printable labels) or the real line, where only the relative order matters.
class Domain {
 public:
  static Domain finite(std::size_t alphabet_size, std::vector<std::string> labels = {}) {
    if (alphabet_size == 0) throw ValidationError("alphabet must be non-empty");
    if (!labels.empty() && labels.size() != alphabet_size)
      throw ValidationError("alphabet label count does not match alphabet size");
    Domain d;
    d.alphabet_size_ = alphabet_size;
    d.labels_ = std::move(labels);
    return d;
  }

  static Domain real_order() { return Domain{}; }

  bool is_finite() const noexcept { return alphabet_size_ != 0; }
  std::size_t alphabet_size() const noexcept { return alphabet_size_; }

  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::string label(std::size_t symbol) const {
    if (symbol < labels_.size()) return labels_[symbol];
    return std::to_string(symbol);
  }

  /// Compatible means same kind and same alphabet size; labels are cosmetic.
  bool compatible(const Domain& other) const noexcept {
    return alphabet_size_ == other.alphabet_size_;
  }

 private:
  Domain() = default;
  std::size_t alphabet_size_ = 0;  // 0: real order
  std::vector<std::string> labels_;
};

/// Anything that yields `size()` observations, each a span of `width()` values.
template <class S>
concept ObservationSource = requires(const S& s, std::size_t i) {
  { s.size() } -> std::convertible_to<std::size_t>;
  { s.width() } -> std::convertible_to<std::size_t>;
  { s.at(i) } -> std::convertible_to<std::span<const double>>;
};

/// An immutable realization x_1, ..., x_n. Finite-alphabet symbols are stored
/// as exact small integers; real-order data must be pairwise distinct.
class ObservationSequence {
 public:
  ObservationSequence(Domain domain, std::vector<double> data)
      : domain_(std::move(domain)), data_(std::move(data)) {
    validate();
  }

  static ObservationSequence symbols(std::size_t alphabet_size, const std::vector<int>& xs) {
    return ObservationSequence(Domain::finite(alphabet_size),
                               std::vector<double>(xs.begin(), xs.end()));
  }

  /// Each character of `text` is one symbol; `alphabet` lists the symbols in
  /// index order, e.g. "01" or "abcd".
  static ObservationSequence from_text(std::string_view text, std::string_view alphabet) {
    std::vector<std::string> labels;
    for (char c : alphabet) labels.emplace_back(1, c);
    std::vector<double> data;
    data.reserve(text.size());
    for (char c : text) {
      if (c == '\n' || c == '\r' || c == ' ' || c == '\t') continue;
      const auto pos = alphabet.find(c);
      if (pos == std::string_view::npos)
        throw AlphabetMismatch(std::string("symbol '") + c + "' is not in alphabet '" +
                               std::string(alphabet) + "'");
      data.push_back(static_cast<double>(pos));
    }
    return ObservationSequence(Domain::finite(alphabet.size(), std::move(labels)), std::move(data));
  }

  static ObservationSequence reals(std::vector<double> xs) {
    return ObservationSequence(Domain::real_order(), std::move(xs));
  }

  const Domain& domain() const noexcept { return domain_; }
  std::size_t size() const noexcept { return data_.size(); }
  static constexpr std::size_t width() noexcept { return 1; }
  std::span<const double> at(std::size_t i) const { return {data_.data() + i, 1}; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::span<const double> values() const noexcept { return data_; }

  ObservationSequence prefix(std::size_t n) const {
    return ObservationSequence(domain_, std::vector<double>(data_.begin(), data_.begin() + std::min(n, data_.size())), Trusted{});
  }

 private:
  struct Trusted {};
  ObservationSequence(Domain domain, std::vector<double> data, Trusted)
      : domain_(std::move(domain)), data_(std::move(data)) {}

  void validate() const {
    if (domain_.is_finite()) {
      const auto a = static_cast<double>(domain_.alphabet_size());
      for (double x : data_)
        if (!(x >= 0 && x < a && x == std::floor(x)))
          throw AlphabetMismatch("observation " + std::to_string(x) + " outside alphabet of size " +
                                 std::to_string(domain_.alphabet_size()));
      return;
    }
    // Ties are legal data; order kernels reject them at evaluation time.
    for (double x : data_)
      if (!std::isfinite(x)) throw ValidationError("real observations must be finite");
  }

  Domain domain_;
  std::vector<double> data_;
};

}  // namespace ustat
