#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ustat/error.hpp"

namespace ustat {

/// A gap bound: a positive integer or infinity.
class Gap {
 public:
  static constexpr Gap infinite() { return Gap{}; }
  static Gap finite(std::uint64_t d) {
    if (d == 0) throw ValidationError("finite gap bounds must be >= 1");
    Gap g;
    g.value_ = d;
    return g;
  }

  constexpr bool is_finite() const noexcept { return value_ != 0; }
  constexpr std::uint64_t value() const noexcept { return value_; }

  friend constexpr bool operator==(Gap, Gap) = default;

  std::string str() const { return is_finite() ? std::to_string(value_) : "inf"; }

 private:
  constexpr Gap() = default;
  std::uint64_t value_ = 0;  // 0 encodes infinity
};

/// Gap bounds (d_1, ..., d_{ell-1}) on consecutive summation indices.
class Constraint {
 public:
  Constraint() : ell_(1) {}

  Constraint(std::size_t ell, std::vector<Gap> gaps) : ell_(ell), gaps_(std::move(gaps)) {
    if (ell_ < 1) throw ValidationError("constraint arity must be >= 1");
    if (gaps_.size() != ell_ - 1)
      throw ValidationError("constraint needs ell-1 = " + std::to_string(ell_ - 1) +
                            " gaps, got " + std::to_string(gaps_.size()));
  }

  static Constraint unconstrained(std::size_t ell) {
    return Constraint(ell, std::vector<Gap>(ell == 0 ? 0 : ell - 1, Gap::infinite()));
  }

  /// Parses "1,inf,2" (also "∞"); an empty string or "none" is the
  /// unconstrained case for ell = 1.
  static Constraint parse(std::string_view text, std::optional<std::size_t> ell = std::nullopt) {
    std::vector<Gap> gaps;
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
    if (text.size() >= 2 && text.front() == '(' && text.back() == ')') text = text.substr(1, text.size() - 2);
    if (!(text.empty() || text == "none")) {
      std::size_t pos = 0;
      while (pos <= text.size()) {
        std::size_t end = text.find(',', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view tok = text.substr(pos, end - pos);
        while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
        while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
        if (tok == "inf" || tok == "Inf" || tok == "infinity" || tok == "∞") {
          gaps.push_back(Gap::infinite());
        } else {
          std::uint64_t d = 0;
          auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), d);
          if (ec != std::errc() || p != tok.data() + tok.size())
            throw ValidationError("bad gap bound '" + std::string(tok) + "'");
          gaps.push_back(Gap::finite(d));
        }
        pos = end + 1;
      }
    }
    const std::size_t arity = ell.value_or(gaps.size() + 1);
    return Constraint(arity, std::move(gaps));
  }

  std::size_t ell() const noexcept { return ell_; }
  const std::vector<Gap>& gaps() const noexcept { return gaps_; }
  Gap gap(std::size_t j) const { return gaps_.at(j); }

  /// Number of blocks: 1 + number of infinite gaps.
  std::size_t blocks() const noexcept {
    return 1 + static_cast<std::size_t>(
                   std::count_if(gaps_.begin(), gaps_.end(), [](Gap g) { return !g.is_finite(); }));
  }

  /// Sum of the finite gap bounds.
  std::uint64_t finite_sum() const noexcept {
    std::uint64_t s = 0;
    for (Gap g : gaps_)
      if (g.is_finite()) s += g.value();
    return s;
  }

  bool is_unconstrained() const noexcept { return finite_sum() == 0; }

  /// Every finite gap equals 1 (vincular case).
  bool is_vincular() const noexcept {
    return std::all_of(gaps_.begin(), gaps_.end(),
                       [](Gap g) { return !g.is_finite() || g.value() == 1; });
  }

  /// Product of the finite bounds (the number of exact sub-constraints).
  std::uint64_t finite_product() const noexcept {
    std::uint64_t p = 1;
    for (Gap g : gaps_)
      if (g.is_finite()) p *= g.value();
    return p;
  }

  std::string str() const {
    if (gaps_.empty()) return "none";
    std::string s;
    for (std::size_t j = 0; j < gaps_.size(); ++j) {
      if (j) s += ',';
      s += gaps_[j].str();
    }
    return s;
  }

  friend bool operator==(const Constraint&, const Constraint&) = default;

 private:
  std::size_t ell_;
  std::vector<Gap> gaps_;
};

/// All D' with 1 <= d'_j <= d_j on finite entries and d'_j = inf elsewhere,
/// in lexicographic order.
inline std::vector<Constraint> exact_subconstraints(const Constraint& d) {
  std::vector<Constraint> out;
  std::vector<Gap> cur = d.gaps();
  std::vector<std::size_t> finite_idx;
  for (std::size_t j = 0; j < cur.size(); ++j)
    if (cur[j].is_finite()) {
      finite_idx.push_back(j);
      cur[j] = Gap::finite(1);
    }
  while (true) {
    out.emplace_back(d.ell(), cur);
    std::size_t k = finite_idx.size();
    while (k > 0) {
      const std::size_t j = finite_idx[k - 1];
      if (cur[j].value() < d.gap(j).value()) {
        cur[j] = Gap::finite(cur[j].value() + 1);
        break;
      }
      cur[j] = Gap::finite(1);
      --k;
    }
    if (k == 0) break;
  }
  return out;
}

/// The constraint D_J: gap m on positions in J (bitmask over ell-1 gaps),
/// infinity elsewhere. Requires m >= 1 whenever J is non-empty.
inline Constraint subset_constraint(std::size_t ell, std::uint64_t mask, std::uint64_t m) {
  std::vector<Gap> gaps(ell - 1, Gap::infinite());
  for (std::size_t j = 0; j + 1 < ell; ++j)
    if (mask & (std::uint64_t{1} << j)) gaps[j] = Gap::finite(m);
  return Constraint(ell, std::move(gaps));
}

}  // namespace ustat
