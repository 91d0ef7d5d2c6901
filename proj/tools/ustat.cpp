// Command-line front end: parses flags into an ExperimentConfig and runs it.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ustat/cli.hpp"

namespace {

using ustat::cli::ExperimentConfig;
using nlohmann::json;

struct Flags {
  std::optional<std::string> config, example, word, alphabet, perm, table, gaps, mode, model, text, text_file,
      simulation, out, format;
  std::optional<std::uint64_t> seed, reps, budget, state_budget, mc_samples, path_n, grid, n_max, eigen_count;
  std::optional<double> tol, mc_tol, s, exponent;
  std::vector<std::uint64_t> n_grid;
  std::vector<double> x_grid, t_grid, values, h;
  bool conditioned = false, center = false;
};

void add_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file (unknown fields are rejected)");
  sub->add_option("--example", f.example, "named example: e0, e21, e4, inversions, word-101");
  sub->add_option("--word", f.word, "word kernel, e.g. 101");
  sub->add_option("--alphabet", f.alphabet, "alphabet for --word (default 01)");
  sub->add_option("--perm", f.perm, "permutation pattern kernel, e.g. 21");
  sub->add_option("--table", f.table, "JSON file with {alphabet, arity, values}");
  sub->add_option("--gaps", f.gaps, "gap bounds, e.g. 1,inf (default none)");
  sub->add_option("--mode", f.mode, "bounded or exact");
  sub->add_option("--model", f.model, "model spec as JSON, e.g. {\"type\":\"uniform\",\"A\":2}");
  sub->add_option("--text", f.text, "observation string");
  sub->add_option("--text-file", f.text_file, "file holding the observation string");
  sub->add_option("--values", f.values, "real observations for permutation kernels")->delimiter(',');
  sub->add_option("--seed", f.seed, "master seed");
  sub->add_option("--reps", f.reps, "replicates");
  sub->add_option("--n-grid", f.n_grid, "sample sizes, comma separated")->delimiter(',');
  sub->add_option("--x-grid", f.x_grid, "renewal levels, comma separated")->delimiter(',');
  sub->add_option("--t-grid", f.t_grid, "path times, comma separated")->delimiter(',');
  sub->add_option("--path-n", f.path_n, "path length n");
  sub->add_option("--simulation", f.simulation, "clt, degenerate or paths");
  sub->add_option("--exponent", f.exponent, "scale exponent for degenerate runs (default b - 1)");
  sub->add_flag("--center", f.center, "center degenerate runs at E U_n");
  sub->add_option("--h-values", f.h, "renewal h, one value per letter")->delimiter(',');
  sub->add_flag("--conditioned", f.conditioned, "condition on S_{N-(x)} = x");
  sub->add_option("--budget", f.budget, "kernel evaluation budget");
  sub->add_option("--state-budget", f.state_budget, "joint-state budget for exact moments");
  sub->add_option("--mc-samples", f.mc_samples, "Monte Carlo samples for moments");
  sub->add_option("--tol", f.tol, "degeneracy tolerance");
  sub->add_option("--mc-tol", f.mc_tol, "Monte Carlo degeneracy tolerance");
  sub->add_option("--grid", f.grid, "Nystrom grid points per letter");
  sub->add_option("--eigen-count", f.eigen_count, "eigenvalues to report");
  sub->add_option("--n-max", f.n_max, "series truncation for the MGF check");
  sub->add_option("--s", f.s, "MGF argument");
  sub->add_option("--out", f.out, "write <out>.json and <out>.csv");
  sub->add_option("--format", f.format, "stdout format")->check(CLI::IsMember({"json", "csv"}));
}

ExperimentConfig to_config(const std::string& command, const Flags& f) {
  ExperimentConfig c = f.config ? ustat::cli::load_config(*f.config) : ExperimentConfig{};
  c.command = command;
  if (f.example) {
    c.example = f.example;
    c.kernel = nullptr;
    c.gaps.reset();
    c.model = nullptr;
  }
  if (f.word) c.kernel = json{{"word", *f.word}, {"alphabet", f.alphabet.value_or("01")}};
  if (f.perm) c.kernel = json{{"perm", *f.perm}};
  if (f.table) {
    std::ifstream in(*f.table);
    if (!in) throw ustat::ValidationError("cannot read table '" + *f.table + "'");
    c.kernel = json{{"table", json::parse(in)}};
  }
  if (f.gaps) c.gaps = f.gaps;
  if (f.mode) c.mode = *f.mode;
  if (f.model) {
    try {
      c.model = json::parse(*f.model);
    } catch (const json::exception& e) {
      throw ustat::ValidationError(std::string("--model is not valid JSON: ") + e.what());
    }
  }
  if (f.text) c.text = f.text;
  if (f.text_file) c.text_file = f.text_file;
  if (!f.values.empty()) c.values = f.values;
  if (f.seed) c.seed = *f.seed;
  if (f.reps) c.reps = *f.reps;
  if (!f.n_grid.empty()) c.n_grid = f.n_grid;
  if (!f.x_grid.empty()) c.x_grid = f.x_grid;
  if (!f.t_grid.empty()) c.t_grid = f.t_grid;
  if (f.path_n) c.path_n = *f.path_n;
  if (f.simulation) c.simulation = *f.simulation;
  if (f.exponent) c.scale_exponent = f.exponent;
  if (f.center) c.center = true;
  if (!f.h.empty()) c.h = f.h;
  if (f.conditioned) c.conditioned = true;
  if (f.budget) c.budget = *f.budget;
  if (f.state_budget) c.state_budget = *f.state_budget;
  if (f.mc_samples) c.mc_samples = *f.mc_samples;
  if (f.tol) c.tol = *f.tol;
  if (f.mc_tol) c.mc_tol = *f.mc_tol;
  if (f.grid) c.grid = *f.grid;
  if (f.eigen_count) c.eigen_count = *f.eigen_count;
  if (f.n_max) c.n_max = *f.n_max;
  if (f.s) c.s = *f.s;
  if (f.out) c.out = f.out;
  if (f.format) c.format = *f.format;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"U-statistics of m-dependent sequences"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<const char*, const char*>> commands{
      {"count", "exact value of U_n on a given sequence"},
      {"moments", "mu, mu_D, projections, gamma array and sigma^2"},
      {"degeneracy", "degeneracy verdict with the B matrix"},
      {"simulate", "Monte Carlo CLT, degenerate and functional experiments"},
      {"renewal", "U-statistics at renewal stopping times"},
      {"spectral", "orthogonal decomposition and operator eigenvalues"}};
  for (const auto& [name, help] : commands) add_flags(app.add_subcommand(name, help), flags);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    const std::string command = app.get_subcommands().front()->get_name();
    return ustat::cli::run(to_config(command, flags), std::cout, std::cerr);
  } catch (const ustat::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ustat::cli::exit_code(e);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
