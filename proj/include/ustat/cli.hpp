#pragma once

// Experiment configuration and the command runner behind the `ustat` tool.
// A run writes one JSON document {"config": ..., "result": ...} and one CSV
// table; every real is printed with 17 significant digits.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ustat/blocks.hpp"
#include "ustat/constraint.hpp"
#include "ustat/core.hpp"
#include "ustat/counting.hpp"
#include "ustat/error.hpp"
#include "ustat/examples.hpp"
#include "ustat/kernel.hpp"
#include "ustat/model.hpp"
#include "ustat/moments.hpp"
#include "ustat/simulate.hpp"
#include "ustat/spectral.hpp"

namespace ustat::cli {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Output formatting.

inline std::string format_real(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// JSON text with reals as %.17g; non-finite reals become null.
inline void dump17(const json& j, std::string& out, int indent = 2, int depth = 0) {
  auto nl = [&](int d) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        nl(depth + 1);
        out += json(it.key()).dump();
        out += indent < 0 ? ":" : ": ";
        dump17(it.value(), out, indent, depth + 1);
      }
      nl(depth);
      out += '}';
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      const bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); });
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += flat ? ", " : ",";
        if (!flat) nl(depth + 1);
        dump17(j[i], out, indent, depth + 1);
      }
      if (!flat) nl(depth);
      out += ']';
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_real(v) : "null";
      return;
    }
    default:
      out += j.dump();
  }
}

inline std::string dump17(const json& j, int indent = 2) {
  std::string s;
  dump17(j, s, indent);
  return s;
}

/// A CSV table whose cells are already formatted.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }

  std::string str() const {
    auto quote = [](const std::string& s) {
      if (s.find_first_of(",\"\n") == std::string::npos) return s;
      std::string q = "\"";
      for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      return q + "\"";
    };
    std::string out;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + quote(r[i]);
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
};

inline std::string cell(double v) { return format_real(v); }
inline std::string cell(std::uint64_t v) { return std::to_string(v); }
inline std::string cell(const std::string& v) { return v; }

// ---------------------------------------------------------------------------
// Configuration.

struct ExperimentConfig {
  std::string command;
  std::optional<std::string> example;
  json kernel;  // kernel spec; null until resolved
  std::optional<std::string> gaps;
  std::string mode = "bounded";
  json model;  // model spec; null until resolved
  std::optional<std::string> text;
  std::optional<std::string> text_file;
  std::vector<double> values;
  std::string simulation = "clt";  // clt | degenerate | paths
  std::vector<std::uint64_t> n_grid;
  std::vector<double> x_grid;
  std::vector<double> t_grid;
  std::uint64_t path_n = 4096;
  std::optional<double> scale_exponent;
  bool center = false;
  std::uint64_t reps = 1000;
  std::uint64_t seed = 20240601;
  double tol = 1e-10;
  double mc_tol = 1e-3;
  std::uint64_t budget = 1'000'000'000ULL;
  std::uint64_t state_budget = 10'000'000ULL;
  std::uint64_t mc_samples = 200'000;
  std::vector<double> h;
  bool conditioned = false;
  std::uint64_t grid = 2000;
  std::uint64_t eigen_count = 6;
  std::uint64_t n_max = 1000;
  double s = 1.0;
  std::string format = "json";
  std::optional<std::string> out;

  static ExperimentConfig from_json(const json& j);
  json to_json() const;
};

namespace detail {

template <class T>
void read(const json& j, const char* key, T& dst) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config field '") + key + "': " + e.what());
  }
}

template <class T>
void read(const json& j, const char* key, std::optional<T>& dst) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T v{};
  read(j, key, v);
  dst = v;
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ValidationError("unknown field '" + it.key() + "' in " + where);
  }
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const json& j) {
  detail::reject_unknown(j,
                         {"command", "example", "kernel", "gaps", "mode", "model", "text", "text_file", "values",
                          "simulation", "n_grid", "x_grid", "t_grid", "path_n", "scale_exponent", "center", "reps",
                          "seed", "tol", "mc_tol", "budget", "state_budget", "mc_samples", "h", "conditioned", "grid",
                          "eigen_count", "n_max", "s", "format", "out"},
                         "config");
  ExperimentConfig c;
  using detail::read;
  read(j, "command", c.command);
  read(j, "example", c.example);
  if (j.contains("kernel")) c.kernel = j.at("kernel");
  read(j, "gaps", c.gaps);
  read(j, "mode", c.mode);
  if (j.contains("model")) c.model = j.at("model");
  read(j, "text", c.text);
  read(j, "text_file", c.text_file);
  read(j, "values", c.values);
  read(j, "simulation", c.simulation);
  read(j, "n_grid", c.n_grid);
  read(j, "x_grid", c.x_grid);
  read(j, "t_grid", c.t_grid);
  read(j, "path_n", c.path_n);
  read(j, "scale_exponent", c.scale_exponent);
  read(j, "center", c.center);
  read(j, "reps", c.reps);
  read(j, "seed", c.seed);
  read(j, "tol", c.tol);
  read(j, "mc_tol", c.mc_tol);
  read(j, "budget", c.budget);
  read(j, "state_budget", c.state_budget);
  read(j, "mc_samples", c.mc_samples);
  read(j, "h", c.h);
  read(j, "conditioned", c.conditioned);
  read(j, "grid", c.grid);
  read(j, "eigen_count", c.eigen_count);
  read(j, "n_max", c.n_max);
  read(j, "s", c.s);
  read(j, "format", c.format);
  read(j, "out", c.out);
  return c;
}

inline json ExperimentConfig::to_json() const {
  json j{{"command", command},
         {"kernel", kernel},
         {"gaps", gaps ? json(*gaps) : json(nullptr)},
         {"mode", mode},
         {"model", model},
         {"simulation", simulation},
         {"n_grid", n_grid},
         {"x_grid", x_grid},
         {"t_grid", t_grid},
         {"path_n", path_n},
         {"center", center},
         {"reps", reps},
         {"seed", seed},
         {"tol", tol},
         {"mc_tol", mc_tol},
         {"budget", budget},
         {"state_budget", state_budget},
         {"mc_samples", mc_samples},
         {"h", h},
         {"conditioned", conditioned},
         {"grid", grid},
         {"eigen_count", eigen_count},
         {"n_max", n_max},
         {"s", s},
         {"format", format}};
  if (example) j["example"] = *example;
  if (text) j["text"] = *text;
  if (text_file) j["text_file"] = *text_file;
  if (!values.empty()) j["values"] = values;
  if (scale_exponent) j["scale_exponent"] = *scale_exponent;
  if (out) j["out"] = *out;
  return j;
}

// ---------------------------------------------------------------------------
// Spec parsing.

/// {"word": "101", "alphabet": "01"} | {"perm": "21"} | {"sign": ell} |
/// {"table": {...}} | {"linear": [{"coef": c, "kernel": {...}}, ...]}.
inline Kernel kernel_from_spec(const json& j) {
  if (!j.is_object() || j.empty()) throw ValidationError("a kernel is required (--word, --perm, --table or --example)");
  if (j.contains("word")) {
    detail::reject_unknown(j, {"word", "alphabet"}, "kernel");
    const std::string alphabet = j.value("alphabet", std::string("01"));
    return Kernel::word(j.at("word").get<std::string>(), alphabet);
  }
  if (j.contains("perm")) {
    detail::reject_unknown(j, {"perm"}, "kernel");
    std::vector<int> tau;
    for (char c : j.at("perm").get<std::string>()) {
      if (c < '1' || c > '9') throw ValidationError("pattern must be a string of digits 1..9");
      tau.push_back(c - '0');
    }
    return Kernel::perm_pattern(tau);
  }
  if (j.contains("sign")) {
    detail::reject_unknown(j, {"sign"}, "kernel");
    return Kernel::sign(j.at("sign").get<std::size_t>());
  }
  if (j.contains("table")) {
    detail::reject_unknown(j, {"table"}, "kernel");
    return Kernel::from_json(j.at("table"));
  }
  if (j.contains("linear")) {
    detail::reject_unknown(j, {"linear"}, "kernel");
    std::vector<std::pair<double, Kernel>> terms;
    for (const auto& t : j.at("linear")) {
      detail::reject_unknown(t, {"coef", "kernel"}, "linear term");
      terms.emplace_back(t.at("coef").get<double>(), kernel_from_spec(t.at("kernel")));
    }
    return Kernel::linear(std::move(terms));
  }
  throw ValidationError("unrecognised kernel spec " + j.dump());
}

/// {"type": "uniform", "A": 2} | {"type": "iid", "p": [...]} |
/// {"type": "uniform01"} | {"type": "xor" | "sum", "m": m, "q": q} |
/// {"type": "max", "m": m}.
inline SequenceModel model_from_spec(const json& j) {
  if (!j.is_object() || !j.contains("type")) throw ValidationError("model spec needs a type");
  const auto type = j.at("type").get<std::string>();
  if (type == "uniform") {
    detail::reject_unknown(j, {"type", "A"}, "model");
    return SequenceModel::uniform_finite(j.at("A").get<std::size_t>());
  }
  if (type == "iid") {
    detail::reject_unknown(j, {"type", "p"}, "model");
    return SequenceModel::iid_finite(j.at("p").get<std::vector<double>>());
  }
  if (type == "uniform01") {
    detail::reject_unknown(j, {"type"}, "model");
    return SequenceModel::iid_uniform();
  }
  if (type == "xor" || type == "sum") {
    detail::reject_unknown(j, {"type", "m", "q"}, "model");
    const auto m = j.at("m").get<std::size_t>();
    const double q = j.value("q", 0.5);
    return type == "xor" ? SequenceModel::xor_factor(m, q) : SequenceModel::sum_factor(m, q);
  }
  if (type == "max") {
    detail::reject_unknown(j, {"type", "m"}, "model");
    return SequenceModel::max_uniform_factor(j.at("m").get<std::size_t>());
  }
  throw ValidationError("unknown model type '" + type + "'");
}

inline ConstraintMode mode_from_string(const std::string& s) {
  if (s == "bounded") return ConstraintMode::Bounded;
  if (s == "exact") return ConstraintMode::Exact;
  throw ValidationError("mode must be 'bounded' or 'exact'");
}

inline Constraint constraint_for(const std::optional<std::string>& gaps, std::size_t arity) {
  if (!gaps || gaps->empty() || *gaps == "none") return Constraint::unconstrained(arity);
  const Constraint d = Constraint::parse(*gaps, arity);
  if (d.ell() != arity || d.gaps().size() + 1 != arity)
    throw ValidationError("gaps '" + *gaps + "' do not fit a kernel of arity " + std::to_string(arity));
  return d;
}

/// Fills kernel, gaps and model from a named example and applies defaults,
/// so that the returned config is complete and re-runnable on its own.
inline ExperimentConfig resolve(ExperimentConfig c) {
  static const std::vector<std::string> commands{"count", "moments", "degeneracy", "simulate", "renewal", "spectral"};
  if (std::find(commands.begin(), commands.end(), c.command) == commands.end())
    throw ValidationError("unknown command '" + c.command + "'");
  if (c.format != "json" && c.format != "csv") throw ValidationError("format must be json or csv");
  if (c.example) {
    const NamedExample ex = named_example(*c.example);
    if (c.kernel.is_null()) c.kernel = json::parse(ex.kernel_spec);
    if (!c.gaps) c.gaps = ex.gaps;
    if (c.model.is_null()) c.model = json::parse(ex.model_spec);
  }
  if (c.kernel.is_null()) throw ValidationError("a kernel is required (--word, --perm, --table or --example)");
  const Kernel f = kernel_from_spec(c.kernel);
  if (c.model.is_null()) {
    if (f.domain().is_finite())
      c.model = json{{"type", "uniform"}, {"A", f.domain().alphabet_size()}};
    else
      c.model = json{{"type", "uniform01"}};
  }
  if (!c.gaps) c.gaps = "none";
  constraint_for(c.gaps, f.arity());
  mode_from_string(c.mode);
  if (c.command == "simulate") {
    if (c.simulation != "clt" && c.simulation != "degenerate" && c.simulation != "paths")
      throw ValidationError("simulation must be clt, degenerate or paths");
    if (c.simulation == "paths" && c.t_grid.empty()) c.t_grid = {0.25, 0.5, 1.0};
    if (c.simulation != "paths" && c.n_grid.empty()) c.n_grid = {256, 1024, 4096};
  }
  if (c.command == "renewal" && c.x_grid.empty()) c.x_grid = {512, 2048};
  if (c.reps == 0) throw ValidationError("reps must be positive");
  if (!(c.tol >= 0.0) || !(c.mc_tol >= 0.0)) throw ValidationError("tolerances must be non-negative");
  return c;
}

// ---------------------------------------------------------------------------
// Commands.

struct Outcome {
  json result;
  Table table;
  std::string digest;
};

namespace detail {

inline MomentOptions moment_options(const ExperimentConfig& c) {
  MomentOptions o;
  o.state_budget = c.state_budget;
  o.mc_samples = c.mc_samples;
  o.seed = c.seed;
  o.tol = c.tol;
  o.mc_tol = c.mc_tol;
  return o;
}

inline SimulationOptions simulation_options(const ExperimentConfig& c) {
  SimulationOptions o;
  o.keep_samples = false;
  o.eval.budget = c.budget;
  return o;
}

inline ObservationSequence observations_for(const ExperimentConfig& c, const Kernel& f) {
  if (f.domain().is_finite()) {
    std::string text;
    if (c.text) {
      text = *c.text;
    } else if (c.text_file) {
      std::ifstream in(*c.text_file);
      if (!in) throw ValidationError("cannot read text file '" + *c.text_file + "'");
      std::stringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    } else {
      throw ValidationError("count needs --text or --text-file");
    }
    text.erase(std::remove_if(text.begin(), text.end(), [](char ch) { return std::isspace(static_cast<unsigned char>(ch)); }),
               text.end());
    std::string alphabet;
    for (const auto& l : f.domain().labels()) {
      if (l.size() != 1) throw ValidationError("text input needs single-character alphabet labels");
      alphabet += l;
    }
    if (alphabet.empty())
      for (std::size_t a = 0; a < f.domain().alphabet_size(); ++a) alphabet += static_cast<char>('0' + a);
    return ObservationSequence::from_text(text, alphabet);
  }
  if (c.values.empty()) throw ValidationError("count on a real-order kernel needs --values");
  return ObservationSequence::reals(c.values);
}

inline Outcome run_count(const ExperimentConfig& c) {
  const Kernel f = kernel_from_spec(c.kernel);
  const Constraint d = constraint_for(c.gaps, f.arity());
  const ConstraintMode mode = mode_from_string(c.mode);
  const ObservationSequence xs = observations_for(c, f);
  EvalOptions eo;
  eo.budget = c.budget;
  Outcome o;
  o.table.header = {"n", "count"};
  std::string value;
  if (f.integer_valued()) {
    BigInt count;
    if (f.as<family::Word>())
      count = count_word_dp(f, d, xs, mode);
    else if (const auto* p = f.as<family::PermPattern>())
      count = count_perm_pattern(p->tau, d, xs, mode, eo);
    else
      count = u_stat_exact_count(f, d, mode, xs, eo);
    value = to_string(count);
    o.result = {{"n", xs.size()}, {"count", value}, {"exact", true}};
  } else {
    const double v = mode == ConstraintMode::Exact ? u_stat_exact_constrained(f, d, xs, eo) : u_stat_constrained(f, d, xs, eo);
    value = format_real(v);
    o.result = {{"n", xs.size()}, {"value", v}, {"exact", false}};
  }
  o.table.add({cell(static_cast<std::uint64_t>(xs.size())), value});
  o.digest = value + "\n";
  return o;
}

inline void report_table(const MomentReport& r, Table& t) {
  t.header = {"quantity", "i", "j", "value", "se"};
  auto est = [&](const char* name, const Estimate& e) { t.add({name, "", "", cell(e.value), cell(e.se)}); };
  est("mu", r.mu);
  est("mu_D", r.mu_D);
  est("mu_Dq", r.mu_Dq);
  t.add({"sigma2", "", "", cell(r.sigma2), cell(r.sigma2_se)});
  t.add({"max_abs_b", "", "", cell(r.max_abs_b), ""});
  t.add({"min_eigenvalue_B", "", "", cell(r.min_eigenvalue_B), ""});
  for (std::size_t i = 0; i < r.B.size(); ++i)
    for (std::size_t j = 0; j < r.B[i].size(); ++j)
      t.add({"B", cell(static_cast<std::uint64_t>(i + 1)), cell(static_cast<std::uint64_t>(j + 1)), cell(r.B[i][j]),
             r.B_se.empty() ? "0" : cell(r.B_se[i][j])});
  t.add({"verdict", "", "", to_string(r.verdict), ""});
  t.add({"method", "", "", to_string(r.method), ""});
}

inline Outcome run_moments(const ExperimentConfig& c, bool verdict_required) {
  const Kernel f = kernel_from_spec(c.kernel);
  const Constraint d = constraint_for(c.gaps, f.arity());
  const SequenceModel model = model_from_spec(c.model);
  const MomentReport r = sigma2(f, d, model, mode_from_string(c.mode), moment_options(c));
  Outcome o;
  o.result = r.to_json();
  report_table(r, o.table);
  std::ostringstream dg;
  dg << "mu_D = " << format_real(r.mu_D.value) << "\nsigma2 = " << format_real(r.sigma2);
  if (r.sigma2_exact) dg << " (" << to_string(*r.sigma2_exact) << ")";
  dg << "\nverdict: " << to_string(r.verdict) << " (max |b_ij| = " << format_real(r.max_abs_b) << ", "
     << to_string(r.method) << ")\n";
  o.digest = dg.str();
  if (verdict_required) require_verdict(r, c.tol, c.mc_tol);
  return o;
}

inline void point_rows(const SimulationSummary& s, Table& t) {
  t.header = {"n", "replicates", "center", "scale", "mean", "mean_se", "variance", "variance_se", "m4", "m4_se", "d_k"};
  for (const auto& p : s.points)
    t.add({cell(p.n), cell(static_cast<std::uint64_t>(p.replicates)), cell(p.center), cell(p.scale),
           cell(p.summary.mean), cell(p.summary.mean_se), cell(p.summary.variance), cell(p.summary.variance_se),
           cell(p.summary.m4), cell(p.summary.m4_se), p.d_k ? cell(*p.d_k) : ""});
}

inline Outcome run_simulate(const ExperimentConfig& c) {
  const Kernel f = kernel_from_spec(c.kernel);
  const StatisticSpec spec{f, constraint_for(c.gaps, f.arity()), mode_from_string(c.mode)};
  const SequenceModel model = model_from_spec(c.model);
  const SimulationOptions so = simulation_options(c);
  std::vector<std::size_t> grid(c.n_grid.begin(), c.n_grid.end());
  Outcome o;
  std::ostringstream dg;
  if (c.simulation == "paths") {
    const MomentReport r = sigma2(f, spec.constraint, model, spec.mode, moment_options(c));
    const PathSummary ps = functional_paths(spec, model, c.path_n, c.t_grid, c.reps, c.seed, r.sigma2, so);
    o.table.header = {"t", "k", "mean", "mean_se", "variance", "variance_se", "predicted_variance"};
    json pts = json::array();
    for (const auto& p : ps.points) {
      o.table.add({cell(p.t), cell(p.k), cell(p.summary.mean), cell(p.summary.mean_se), cell(p.summary.variance),
                   cell(p.summary.variance_se), cell(p.predicted_variance)});
      pts.push_back({{"t", p.t},
                     {"k", p.k},
                     {"mean", p.summary.mean},
                     {"variance", p.summary.variance},
                     {"variance_se", p.summary.variance_se},
                     {"predicted_variance", p.predicted_variance}});
      dg << "t=" << format_real(p.t) << " var=" << format_real(p.summary.variance) << " +- "
         << format_real(p.summary.variance_se) << " predicted " << format_real(p.predicted_variance) << "\n";
    }
    o.result = {{"n", ps.n}, {"replicates", ps.replicates}, {"sigma2", r.sigma2}, {"points", pts}};
  } else if (c.simulation == "degenerate") {
    const SimulationSummary s = mc_degenerate(spec, model, grid, c.reps, c.seed, c.scale_exponent, c.center, so);
    o.result = s.to_json();
    point_rows(s, o.table);
    for (const auto& p : s.points)
      dg << "n=" << p.n << " mean=" << format_real(p.summary.mean) << " var=" << format_real(p.summary.variance) << "\n";
  } else {
    const MomentReport r = sigma2(f, spec.constraint, model, spec.mode, moment_options(c));
    if (r.verdict != Verdict::NonDegenerate)
      throw DegenerateTarget("sigma2 is not certified positive (verdict " + to_string(r.verdict) +
                             "); use --simulation degenerate");
    const SimulationSummary s = mc_clt(spec, model, grid, c.reps, c.seed, r.sigma2, so);
    o.result = s.to_json();
    point_rows(s, o.table);
    dg << "sigma2 = " << format_real(r.sigma2) << "\n";
    for (const auto& p : s.points)
      dg << "n=" << p.n << " var=" << format_real(p.summary.variance) << " +- " << format_real(p.summary.variance_se)
         << " d_K=" << format_real(p.d_k.value_or(0.0)) << "\n";
  }
  o.digest = dg.str();
  return o;
}

inline Outcome run_renewal(const ExperimentConfig& c) {
  const Kernel f = kernel_from_spec(c.kernel);
  const SequenceModel model = model_from_spec(c.model);
  if (!model.has_finite_output()) throw ValidationError("renewal from the CLI needs a finite-alphabet model");
  std::vector<double> h = c.h;
  if (h.empty()) h.assign(model.alphabet_size(), 1.0);
  if (h.size() != model.alphabet_size()) throw ValidationError("h needs one value per letter");
  RenewalExperiment ex{StatisticSpec{f, constraint_for(c.gaps, f.arity()), mode_from_string(c.mode)},
                       [h](double x) { return h[static_cast<std::size_t>(x)]; }, c.x_grid};
  ex.conditioned = c.conditioned;
  ex.stop.h_lower_bound = *std::min_element(h.begin(), h.end());
  const RenewalSummary s = mc_renewal(ex, model, c.reps, c.seed, moment_options(c), simulation_options(c));
  Outcome o;
  o.result = s.to_json();
  o.table.header = {"x", "side", "replicates", "center", "scale", "mean", "mean_se", "variance", "variance_se",
                    "sandwich_violations", "acceptance"};
  std::ostringstream dg;
  dg << "nu = " << format_real(s.nu) << "\ngamma2 = " << (s.gamma2_formula ? format_real(*s.gamma2_formula) : "n/a")
     << "\n";
  for (const auto& p : s.points) {
    const std::string side = p.side == Side::Minus ? "minus" : "plus";
    o.table.add({cell(p.x), side, cell(static_cast<std::uint64_t>(p.replicates)), cell(p.center), cell(p.scale),
                 cell(p.summary.mean), cell(p.summary.mean_se), cell(p.summary.variance), cell(p.summary.variance_se),
                 cell(static_cast<std::uint64_t>(p.sandwich_violations)), cell(p.acceptance)});
    dg << "x=" << format_real(p.x) << " " << side << " mean=" << format_real(p.summary.mean)
       << " var=" << format_real(p.summary.variance) << "\n";
  }
  o.digest = dg.str();
  return o;
}

inline Outcome run_spectral(const ExperimentConfig& c) {
  const Kernel f = kernel_from_spec(c.kernel);
  const SequenceModel model = model_from_spec(c.model);
  if (!model.is_iid() || !model.is_finite()) throw ValidationError("spectral needs an i.i.d. finite-alphabet model");
  if (!f.domain().is_finite() || f.domain().alphabet_size() != model.alphabet_size())
    throw AlphabetMismatch("kernel and model alphabets differ");
  const FunctionSpaceBasis basis(model.base_probabilities(), f.arity());
  const auto table = tabulate(f);
  const auto norms = basis.degree_norms(table);
  const std::size_t order = degeneracy_order(basis, table, c.tol);
  Outcome o;
  o.table.header = {"quantity", "index", "value"};
  json nj = json::array();
  for (std::size_t k = 0; k < norms.size(); ++k) {
    o.table.add({"norm2", cell(static_cast<std::uint64_t>(k)), cell(norms[k])});
    o.table.add({"dimension", cell(static_cast<std::uint64_t>(k)), cell(basis.dimension(k))});
    nj.push_back(norms[k]);
  }
  o.table.add({"degeneracy_order", "", cell(static_cast<std::uint64_t>(order))});
  o.result = {{"degree_norm2", nj}, {"degeneracy_order", order}};
  std::ostringstream dg;
  dg << "degeneracy order k* = " << order << "\n";
  if (f.arity() == 2) {
    const Jun2Operator op(table, model.base_probabilities(), c.grid);
    const auto ev = lanczos_eigenvalues(op, std::max<std::size_t>(160, 4 * c.eigen_count), c.eigen_count);
    for (std::size_t i = 0; i < ev.size(); ++i) o.table.add({"eigenvalue", cell(static_cast<std::uint64_t>(i + 1)), cell(ev[i])});
    o.result["eigenvalues"] = ev;
    o.result["grid"] = c.grid;
    dg << "eigenvalues:";
    for (double v : ev) dg << " " << format_real(v);
    dg << "\n";
  }
  if (c.example && *c.example == "e4") {
    const MgfCheck m = e4_limit_mgf_check(c.reps, c.seed, c.n_max, c.s);
    o.result["mgf"] = {{"s", m.s},         {"empirical", m.empirical}, {"se", m.se},
                       {"analytic", m.analytic}, {"truncated", m.truncated}, {"empirical_minus_s", m.mgf_minus}};
    o.table.add({"mgf_empirical", "", cell(m.empirical)});
    o.table.add({"mgf_se", "", cell(m.se)});
    o.table.add({"mgf_analytic", "", cell(m.analytic)});
    dg << "E exp(sZ) = " << format_real(m.empirical) << " +- " << format_real(m.se) << " vs "
       << format_real(m.analytic) << "\n";
  }
  o.digest = dg.str();
  return o;
}

}  // namespace detail

inline int exit_code(const Error& e) { return e.kind() == ErrorKind::Validation ? 2 : 3; }

/// Runs a resolved or unresolved config. Writes <out>.json and <out>.csv
/// when `out` is set and prints the digest; otherwise prints the chosen
/// format. Returns 0, 2 (validation) or 3 (budget or degeneracy).
inline int run(const ExperimentConfig& raw, std::ostream& out, std::ostream& err) {
  try {
    const ExperimentConfig c = resolve(raw);
    Outcome o;
    if (c.command == "count") o = detail::run_count(c);
    else if (c.command == "moments") o = detail::run_moments(c, false);
    else if (c.command == "degeneracy") o = detail::run_moments(c, true);
    else if (c.command == "simulate") o = detail::run_simulate(c);
    else if (c.command == "renewal") o = detail::run_renewal(c);
    else o = detail::run_spectral(c);
    const json doc{{"config", c.to_json()}, {"result", o.result}};
    if (c.out) {
      std::ofstream js(*c.out + ".json"), cs(*c.out + ".csv");
      if (!js || !cs) throw ValidationError("cannot write output files at '" + *c.out + "'");
      js << dump17(doc) << "\n";
      cs << o.table.str();
      out << o.digest;
    } else if (c.format == "csv") {
      out << o.table.str();
    } else {
      out << dump17(doc) << "\n";
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

/// Loads a config file (unknown fields rejected).
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (j.contains("config") && j.contains("result")) j = j.at("config");
  return ExperimentConfig::from_json(j);
}

}  // namespace ustat::cli
