// sarahvi: generate problems, run the method comparison, verify the
// convergence bounds, re-render plots.
//
// Exit codes: 0 success, 1 verification or run failure, 2 usage or config
// error.

#include "sarahvi/harness.hpp"
#include "sarahvi/problem_io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

namespace {

using namespace sarahvi;
using namespace sarahvi::harness;

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct Overrides {
  std::string config;
  std::string output;
  std::string seeds;
  std::uint64_t budget = 0;
  std::string regime;
  std::string methods;
};

void add_overrides(CLI::App* cmd, Overrides& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "experiment config file");
  if (config_required) c->required();
  cmd->add_option("--output", o.output, "output directory");
  cmd->add_option("--seeds", o.seeds, "seed list, e.g. 1-10 or 3,5,9");
  cmd->add_option("--budget", o.budget, "oracle budget in component calls")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--regime", o.regime, "small, medium or big (comma list)");
  cmd->add_option("--method", o.methods, "SARAH, SVRG, SGD (comma list)");
}

ExperimentConfig load(const Overrides& o) {
  ExperimentConfig c;
  if (!o.config.empty()) {
    c = parse_config(o.config);
  } else {
    c.methods = {Method::sarah};
    c.seeds = {1};
  }
  try {
    if (!o.output.empty()) c.output_dir = o.output;
    if (!o.seeds.empty()) c.seeds = parse_seed_list(o.seeds);
    if (o.budget) c.oracle_budget = o.budget;
    if (!o.regime.empty()) {
      c.regimes = parse_regime_list(o.regime);
      c.target_ell.reset();
    }
    if (!o.methods.empty()) c.methods = parse_method_list(o.methods);
    validate_config(c);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", 0, e.what());
  }
  return c;
}

void print_summary(const ComparisonTable& t, std::ostream& out) {
  out << regime_name(t.regime) << "  ell=" << format_real(t.target_ell)
      << "  budget=" << t.budget << "  problem=" << t.problem_hash << '\n';
  for (const auto& m : t.methods)
    out << "  " << method_name(m.method) << "  gamma=" << format_real(m.gamma)
        << "  K=" << m.inner_K
        << "  final mean |F|^2=" << format_real(m.stats.mean_residual_sq.back())
        << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variance-reduced solvers for finite-sum variational inequalities"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  bool timing = false;
  app.add_flag("--timing", timing, "print elapsed wall-clock time");

  // generate
  auto* gen = app.add_subcommand("generate", "write a random bilinear problem");
  GeneratorSpec spec;
  std::string gen_regime, gen_output;
  std::optional<double> gen_ell;
  gen->add_option("--n", spec.n, "number of components")->check(CLI::PositiveNumber);
  gen->add_option("--d", spec.d, "block dimension")->check(CLI::PositiveNumber);
  gen->add_option("--lambda", spec.lambda, "regularization (= mu)")
      ->check(CLI::PositiveNumber);
  gen->add_option("--heterogeneity", spec.heterogeneity,
                  "spread of components around the shared matrix")
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", spec.seed, "generator seed");
  auto* ell_opt = gen->add_option("--ell", gen_ell, "target ell")
                      ->check(CLI::PositiveNumber);
  gen->add_option("--regime", gen_regime, "small, medium or big")
      ->excludes(ell_opt);
  gen->add_option("--output", gen_output, "problem file (default: stdout)");

  // run
  auto* run_cmd = app.add_subcommand("run", "run the method comparison");
  Overrides run_opts;
  add_overrides(run_cmd, run_opts, true);

  // verify
  auto* verify_cmd =
      app.add_subcommand("verify", "check assumptions and convergence bounds");
  Overrides verify_opts;
  add_overrides(verify_cmd, verify_opts, false);

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "re-render a figure from CSVs");
  std::string plot_input, plot_output, plot_title;
  plot_cmd->add_option("--input", plot_input, "regime output directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  plot_cmd->add_option("--output", plot_output, "SVG path")->required();
  plot_cmd->add_option("--title", plot_title, "figure title");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  const auto start = std::chrono::steady_clock::now();
  int status = kOk;
  try {
    if (*gen) {
      if (!gen_regime.empty()) {
        const auto r = parse_regime(gen_regime);
        if (!r) throw ConfigError("regime", 0, "unknown regime '" + gen_regime + "'");
        spec.target_ell = regime_ell(*r);
      } else if (gen_ell) {
        spec.target_ell = *gen_ell;
      }
      if (spec.target_ell < spec.lambda)
        throw ConfigError("ell", 0, "target ell must be at least lambda");
      const auto problem = generate_bilinear(spec);
      if (gen_output.empty()) {
        write_problem(std::cout, problem);
      } else {
        std::ofstream out(gen_output, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + gen_output + "'");
        write_problem(out, problem);
        std::cerr << "wrote " << gen_output << "  ell=" << format_real(problem.ell())
                  << "  hash=" << problem_hash(problem) << '\n';
      }
    } else if (*run_cmd) {
      const auto config = load(run_opts);
      for (const auto& t : run_experiment(config)) print_summary(t, std::cout);
      std::cout << "outputs under " << config.output_dir << '\n';
    } else if (*verify_cmd) {
      const auto config = load(verify_opts);
      status = verify_cli(config, std::cout);
    } else if (*plot_cmd) {
      const std::filesystem::path dir(plot_input);
      if (plot_title.empty()) plot_title = dir.filename().string();
      emit_plot(read_plot_data(dir, plot_title), plot_output);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  if (timing)
    std::cerr << "elapsed "
              << std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                               start)
                     .count()
              << " s\n";
  return status;
}
