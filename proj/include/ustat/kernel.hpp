#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "ustat/error.hpp"
#include "ustat/numeric.hpp"
#include "ustat/observations.hpp"

namespace ustat {

class Kernel;

namespace family {

/// Arbitrary values on A^ell, row-major (first argument most significant).
struct Table {
  std::size_t alphabet_size;
  std::vector<double> values;
};

/// 1 iff x_k = w_k for every k.
struct Word {
  std::vector<int> letters;
};

/// 1 iff (x_1, ..., x_ell) is order-isomorphic to tau (1-based ranks).
struct PermPattern {
  std::vector<int> tau;
};

/// Sign of the permutation given by the relative order of the arguments.
struct Sign {};

/// f(x_1, ..., x_ell) = prod_k factor_k(x_k) over a finite alphabet.
struct Product {
  std::vector<std::vector<double>> factors;
};

struct LinearTerm {
  double coefficient;
  std::shared_ptr<const Kernel> kernel;
};

struct Linear {
  std::vector<LinearTerm> terms;
};

/// Opaque evaluator (reduced kernels, user closures).
struct Custom {
  std::string name;
};

}  // namespace family

/// A real-valued function of `arity` observations, each a span of `width`
/// values (width > 1 for kernels over lifted windows).
class Kernel {
 public:
  using Family = std::variant<family::Table, family::Word, family::PermPattern, family::Sign,
                              family::Product, family::Linear, family::Custom>;
  using Evaluator = std::function<double(std::span<const double>)>;

  static Kernel table(std::size_t alphabet_size, std::size_t arity, std::vector<double> values,
                      std::vector<std::string> labels = {}) {
    if (arity < 1) throw ValidationError("kernel arity must be >= 1");
    const auto expected = saturating_pow(alphabet_size, arity);
    if (values.size() != expected)
      throw ValidationError("table kernel needs A^ell = " + std::to_string(expected) +
                            " values, got " + std::to_string(values.size()));
    for (double v : values)
      if (!std::isfinite(v)) throw ValidationError("table kernel values must be finite");
    return Kernel(arity, 1, Domain::finite(alphabet_size, std::move(labels)),
                  family::Table{alphabet_size, std::move(values)});
  }

  static Kernel word(std::vector<int> letters, std::size_t alphabet_size) {
    if (letters.empty()) throw ValidationError("word must be non-empty");
    for (int c : letters)
      if (c < 0 || static_cast<std::size_t>(c) >= alphabet_size)
        throw AlphabetMismatch("word letter " + std::to_string(c) + " outside alphabet");
    const std::size_t ell = letters.size();
    return Kernel(ell, 1, Domain::finite(alphabet_size), family::Word{std::move(letters)});
  }

  /// Word given as text over an alphabet string, e.g. word("101", "01").
  static Kernel word(std::string_view w, std::string_view alphabet) {
    std::vector<int> letters;
    for (char c : w) {
      const auto pos = alphabet.find(c);
      if (pos == std::string_view::npos)
        throw AlphabetMismatch(std::string("word letter '") + c + "' not in alphabet");
      letters.push_back(static_cast<int>(pos));
    }
    Kernel k = word(std::move(letters), alphabet.size());
    std::vector<std::string> labels;
    for (char c : alphabet) labels.emplace_back(1, c);
    k.domain_ = Domain::finite(alphabet.size(), std::move(labels));
    return k;
  }

  static Kernel perm_pattern(std::vector<int> tau) {
    std::vector<int> sorted(tau);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
      if (sorted[i] != static_cast<int>(i) + 1)
        throw ValidationError("pattern must be a permutation of 1..ell");
    if (tau.empty()) throw ValidationError("pattern must be non-empty");
    const std::size_t ell = tau.size();
    return Kernel(ell, 1, Domain::real_order(), family::PermPattern{std::move(tau)});
  }

  static Kernel sign(std::size_t arity) {
    if (arity < 1) throw ValidationError("kernel arity must be >= 1");
    return Kernel(arity, 1, Domain::real_order(), family::Sign{});
  }

  static Kernel product(std::vector<std::vector<double>> factors) {
    if (factors.empty()) throw ValidationError("product kernel needs at least one factor");
    const std::size_t a = factors.front().size();
    for (const auto& f : factors)
      if (f.size() != a) throw ValidationError("product kernel factors must share an alphabet");
    const std::size_t ell = factors.size();
    return Kernel(ell, 1, Domain::finite(a), family::Product{std::move(factors)});
  }

  static Kernel linear(std::vector<std::pair<double, Kernel>> terms) {
    if (terms.empty()) throw ValidationError("linear combination needs at least one term");
    const Kernel& first = terms.front().second;
    family::Linear lin;
    for (auto& [c, k] : terms) {
      if (k.arity() != first.arity() || k.width() != first.width() ||
          !k.domain().compatible(first.domain()))
        throw ValidationError("linear combination terms must share arity, width and domain");
      lin.terms.push_back({c, std::make_shared<const Kernel>(std::move(k))});
    }
    return Kernel(first.arity(), first.width(), first.domain(), std::move(lin));
  }

  static Kernel custom(std::size_t arity, std::size_t width, Domain domain, Evaluator eval,
                       std::string name = "custom", bool integer_valued = false) {
    if (arity < 1 || width < 1) throw ValidationError("kernel arity and width must be >= 1");
    Kernel k(arity, width, std::move(domain), family::Custom{std::move(name)});
    k.eval_ = std::move(eval);
    k.integer_valued_ = integer_valued;
    return k;
  }

  /// Loads {"alphabet": [...], "arity": ell, "values": [...]}.
  static Kernel from_json(const nlohmann::json& j) {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "alphabet" && it.key() != "arity" && it.key() != "values")
        throw ValidationError("unknown field '" + it.key() + "' in kernel table");
    if (!j.contains("alphabet") || !j.contains("arity") || !j.contains("values"))
      throw ValidationError("kernel table needs alphabet, arity and values");
    std::vector<std::string> labels;
    for (const auto& s : j.at("alphabet")) labels.push_back(s.is_string() ? s.get<std::string>() : s.dump());
    const auto arity = j.at("arity").get<std::size_t>();
    auto values = j.at("values").get<std::vector<double>>();
    const std::size_t a = labels.size();
    return table(a, arity, std::move(values), std::move(labels));
  }

  nlohmann::json to_json() const {
    const auto* t = std::get_if<family::Table>(&family_);
    if (!t) throw ValidationError("only table kernels serialize to the table format");
    nlohmann::json labels = nlohmann::json::array();
    for (std::size_t a = 0; a < t->alphabet_size; ++a) labels.push_back(domain_.label(a));
    return {{"alphabet", labels}, {"arity", arity_}, {"values", t->values}};
  }

  std::size_t arity() const noexcept { return arity_; }
  std::size_t width() const noexcept { return width_; }
  const Domain& domain() const noexcept { return domain_; }
  const Family& family() const noexcept { return family_; }

  template <class F>
  const F* as() const noexcept {
    return std::get_if<F>(&family_);
  }

  bool integer_valued() const noexcept { return integer_valued_; }

  /// Evaluates f on arity * width consecutive values.
  double operator()(std::span<const double> args) const {
    switch (family_.index()) {
      case 0: {
        const auto& t = std::get<family::Table>(family_);
        std::size_t idx = 0;
        for (double x : args) idx = idx * t.alphabet_size + static_cast<std::size_t>(x);
        return t.values[idx];
      }
      case 1: {
        const auto& w = std::get<family::Word>(family_);
        for (std::size_t k = 0; k < w.letters.size(); ++k)
          if (args[k] != static_cast<double>(w.letters[k])) return 0.0;
        return 1.0;
      }
      case 2: {
        const auto& p = std::get<family::PermPattern>(family_);
        const std::size_t ell = p.tau.size();
        for (std::size_t i = 0; i < ell; ++i)
          for (std::size_t j = i + 1; j < ell; ++j)
            if ((args[i] < args[j]) != (p.tau[i] < p.tau[j])) return 0.0;
        return 1.0;
      }
      case 3: {
        int inversions = 0;
        for (std::size_t i = 0; i < args.size(); ++i)
          for (std::size_t j = i + 1; j < args.size(); ++j)
            if (args[i] > args[j]) ++inversions;
        return (inversions % 2) ? -1.0 : 1.0;
      }
      case 4: {
        const auto& p = std::get<family::Product>(family_);
        double v = 1.0;
        for (std::size_t k = 0; k < p.factors.size(); ++k) v *= p.factors[k][static_cast<std::size_t>(args[k])];
        return v;
      }
      case 5: {
        double v = 0.0;
        for (const auto& term : std::get<family::Linear>(family_).terms) v += term.coefficient * (*term.kernel)(args);
        return v;
      }
      default:
        return eval_(args);
    }
  }

  std::string describe() const {
    return std::visit(
        [&](const auto& f) -> std::string {
          using F = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<F, family::Table>) {
            return "table(A=" + std::to_string(f.alphabet_size) + ",ell=" + std::to_string(arity_) + ")";
          } else if constexpr (std::is_same_v<F, family::Word>) {
            std::string s = "word(";
            for (int c : f.letters) s += domain_.label(static_cast<std::size_t>(c));
            return s + ")";
          } else if constexpr (std::is_same_v<F, family::PermPattern>) {
            std::string s = "perm(";
            for (int c : f.tau) s += std::to_string(c);
            return s + ")";
          } else if constexpr (std::is_same_v<F, family::Sign>) {
            return "sign(ell=" + std::to_string(arity_) + ")";
          } else if constexpr (std::is_same_v<F, family::Product>) {
            return "product(ell=" + std::to_string(arity_) + ")";
          } else if constexpr (std::is_same_v<F, family::Linear>) {
            return "linear(" + std::to_string(f.terms.size()) + " terms)";
          } else {
            return f.name;
          }
        },
        family_);
  }

 private:
  Kernel(std::size_t arity, std::size_t width, Domain domain, Family fam)
      : arity_(arity), width_(width), domain_(std::move(domain)), family_(std::move(fam)) {
    integer_valued_ = compute_integer_valued();
  }

  bool compute_integer_valued() const {
    auto is_int = [](double v) { return v == std::floor(v) && std::abs(v) < 9.0e15; };
    if (const auto* t = as<family::Table>())
      return std::all_of(t->values.begin(), t->values.end(), is_int);
    if (const auto* p = as<family::Product>()) {
      for (const auto& f : p->factors)
        if (!std::all_of(f.begin(), f.end(), is_int)) return false;
      return true;
    }
    if (const auto* l = as<family::Linear>()) {
      for (const auto& t : l->terms)
        if (!is_int(t.coefficient) || !t.kernel->integer_valued()) return false;
      return true;
    }
    return as<family::Word>() || as<family::PermPattern>() || as<family::Sign>();
  }

  std::size_t arity_;
  std::size_t width_;
  Domain domain_;
  Family family_;
  Evaluator eval_;
  bool integer_valued_ = false;
};

/// Expands a finite-alphabet kernel into its value table over A^ell.
inline std::vector<double> tabulate(const Kernel& f) {
  if (!f.domain().is_finite() || f.width() != 1)
    throw ValidationError("tabulate needs a finite-alphabet kernel of width 1");
  const std::size_t a = f.domain().alphabet_size();
  const std::size_t ell = f.arity();
  const std::uint64_t total = saturating_pow(a, ell);
  if (total > (std::uint64_t{1} << 26)) throw BudgetExceeded("kernel table too large to tabulate");
  std::vector<double> out(total);
  std::vector<double> args(ell, 0.0);
  for (std::uint64_t idx = 0; idx < total; ++idx) {
    std::uint64_t r = idx;
    for (std::size_t k = ell; k-- > 0;) {
      args[k] = static_cast<double>(r % a);
      r /= a;
    }
    out[idx] = f(args);
  }
  return out;
}

}  // namespace ustat
