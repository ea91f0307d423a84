#ifndef SARAHVI_HARNESS_HPP
#define SARAHVI_HARNESS_HPP

#include "sarahvi/analysis.hpp"
#include "sarahvi/problems.hpp"
#include "sarahvi/solvers.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sarahvi::harness {

inline constexpr std::string_view kToolVersion = "sarahvi 1.0.0";
inline constexpr std::string_view kConfigFormat = "sarahvi-experiment/1";

enum class Regime { small, medium, big, custom };

std::string_view regime_name(Regime r);
std::optional<Regime> parse_regime(std::string_view s);
/// 1e2, 1e3, 1e4 for small, medium, big.
double regime_ell(Regime r);

struct ExperimentConfig {
  GeneratorSpec generator;
  std::vector<Regime> regimes{Regime::medium};
  /// Overrides the regime mapping; labelled "custom".
  std::optional<double> target_ell;
  std::vector<Method> methods;
  /// Default: default_budget(ell, lambda).
  std::optional<std::uint64_t> oracle_budget;
  std::vector<std::uint64_t> seeds;
  /// Absolute step sizes; empty selects default_gamma_grid.
  std::vector<double> gamma_grid;
  std::size_t tuning_seeds = 2;
  /// Default: budget / 200.
  std::optional<std::uint64_t> checkpoint_every;
  std::string output_dir = "out";
  bool record_wall_clock = false;

  // verify
  std::size_t lemma_seeds = 200;
  std::size_t theorem_seeds = 100;
  std::size_t theorem_max_epochs = 60;
  std::size_t checker_trials = 10000;
  /// Target accuracy for the complexity audit, relative to |F(z0)|.
  double epsilon = 1e-5;
  /// When set, must equal 2/(9 ell); anything else is rejected.
  std::optional<double> theorem_gamma;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, std::size_t line, const std::string& what)
      : std::runtime_error(
            (line ? "line " + std::to_string(line) + ": " : std::string()) +
            (key.empty() ? std::string() : "'" + key + "': ") + what),
        key_(key),
        line_(line) {}
  const std::string& key() const { return key_; }
  std::size_t line() const { return line_; }

 private:
  std::string key_;
  std::size_t line_;
};

/// Flat `key = value` text; `#` starts a comment. The first entry must be
/// `format = sarahvi-experiment/1`. Unknown keys are errors.
ExperimentConfig parse_config_text(std::string_view text);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Invariants that flags can also break: at least one method and seed, no
/// duplicate seeds, budget >= n.
void validate_config(const ExperimentConfig& config);

/// "1,2,5-8" -> {1,2,5,6,7,8}.
std::vector<std::uint64_t> parse_seed_list(std::string_view s);
std::vector<Method> parse_method_list(std::string_view s);
std::vector<Regime> parse_regime_list(std::string_view s);

/// (target ell, label) pairs the config expands to.
std::vector<std::pair<double, Regime>> expand_regimes(const ExperimentConfig& c);

GeneratorSpec generator_for(const ExperimentConfig& c, double target_ell);

/// 60 ceil(ell / lambda) calls, at least 10 full passes.
std::uint64_t default_budget(double ell, double lambda, std::size_t n);

/// {2/9, 1/2, 1, 2} / ell for SARAH and SVRG, {0.01, 0.1, 0.5, 1} / ell for
/// SGD.
std::vector<double> default_gamma_grid(Method method, double ell);

/// Run configuration for the comparison: inner length ceil(ell / lambda),
/// enough epochs to exhaust `budget`.
SolverConfig<double> comparison_config(const FiniteSumProblem<double>& problem,
                                       Method method, double gamma,
                                       std::uint64_t budget,
                                       std::uint64_t checkpoint_every,
                                       std::uint64_t seed);

struct GridSearchResult {
  double best_gamma = 0;
  std::vector<double> candidates;
  /// Mean final residual_sq per candidate; +inf for divergent candidates.
  std::vector<double> mean_final_residual_sq;
};

class TuningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Picks the candidate with the smallest mean final residual_sq at the
/// budget; ties go to the smaller step. A one-element grid is validated with
/// a single run and returned.
GridSearchResult grid_search(const FiniteSumProblem<double>& problem,
                             Method method, std::uint64_t budget,
                             const std::vector<std::uint64_t>& seeds,
                             std::vector<double> gamma_grid,
                             std::uint64_t checkpoint_every);

struct MethodResult {
  Method method = Method::sarah;
  double gamma = 0;
  std::uint64_t inner_K = 0;
  GridSearchResult tuning;
  std::vector<RunRecord<double>> runs;
  AggregateStats<double> stats;
};

struct ComparisonTable {
  Regime regime = Regime::medium;
  double target_ell = 0;
  std::string problem_hash;
  std::uint64_t budget = 0;
  std::uint64_t checkpoint_every = 0;
  std::vector<std::uint64_t> grid;
  std::vector<MethodResult> methods;

  const MethodResult* find(Method m) const;
};

/// Stats of a single run laid on `grid` (std = 0).
AggregateStats<double> single_run_stats(const RunRecord<double>& record,
                                        const std::vector<std::uint64_t>& grid);

/// Runs one regime in memory: generate, tune, run every seed.
ComparisonTable run_comparison(const ExperimentConfig& config, double target_ell,
                               Regime label,
                               const FiniteSumProblem<double>* problem = nullptr);

/// Runs every regime of the config and writes, per regime, under
/// `<output_dir>/<regime>/`: problem.txt, runs/*.csv with .meta.json
/// sidecars, aggregate_<method>.csv, tuning_<method>.csv, manifest.json and
/// figure_<regime>.svg. A regime directory appears only once complete.
std::vector<ComparisonTable> run_experiment(const ExperimentConfig& config);

void write_aggregate_csv(std::ostream& out, const AggregateStats<double>& s);

// ---------------------------------------------------------------------------
// Plotting

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotData {
  std::string title;
  std::vector<PlotSeries> series;
};

PlotData plot_data(const ComparisonTable& table);

/// Reads every aggregate_<method>.csv in `dir`.
PlotData read_plot_data(const std::filesystem::path& dir, std::string title);

/// SVG, oracle calls on x, residual_sq on a log y axis, one series per
/// method. Non-positive values are drawn on a floor line, which is then
/// annotated.
std::string render_svg(const PlotData& data);
void emit_plot(const PlotData& data, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Verification

struct CheckLine {
  std::string name;
  std::string measured;
  std::string bound;
  bool passed = false;
  bool informational = false;
};

struct VerificationOutcome {
  std::vector<CheckLine> lines;
  bool passed() const;
};

/// Assumption checks, both inner-loop bounds, the contraction check and the
/// complexity audit on the generated instance of every regime. Writes
/// verify_report.json under the output directory and prints a table.
VerificationOutcome run_verification(const ExperimentConfig& config,
                                     std::ostream& log, bool write_report = true);

/// 0 if every check passes, 1 otherwise.
int verify_cli(const ExperimentConfig& config, std::ostream& log);

}  // namespace sarahvi::harness

#endif
