#include "sarahvi/harness.hpp"
#include "sarahvi/problem_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

namespace sarahvi::harness {

namespace fs = std::filesystem;

namespace {

// Runs fn(0..count-1) on a small pool. Results are written by index, so the
// outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(
      count, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double final_residual(const RunRecord<double>& r) {
  if (r.failed()) return std::numeric_limits<double>::infinity();
  const double v = r.checkpoints.back().residual_sq;
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

template <typename Writer>
void write_with(const fs::path& path, Writer&& writer) {
  std::ostringstream buf;
  writer(buf);
  write_file(path, buf.str());
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(ch));
  return out;
}

}  // namespace

SolverConfig<double> comparison_config(const FiniteSumProblem<double>& problem,
                                       Method method, double gamma,
                                       std::uint64_t budget,
                                       std::uint64_t checkpoint_every,
                                       std::uint64_t seed) {
  SolverConfig<double> c;
  c.method = method;
  c.gamma = gamma;
  c.inner_K = experiment_inner_length(problem);
  const std::uint64_t per_epoch =
      method == Method::sgd ? c.inner_K
      : method == Method::svrg ? problem.n() + 2 * c.inner_K
                               : problem.n() + 2 * (c.inner_K - 1);
  c.outer_S = budget / per_epoch + 1;
  c.seed = seed;
  c.checkpoint_every = checkpoint_every;
  c.max_oracle_calls = budget;
  return c;
}

GridSearchResult grid_search(const FiniteSumProblem<double>& problem,
                             Method method, std::uint64_t budget,
                             const std::vector<std::uint64_t>& seeds,
                             std::vector<double> gamma_grid,
                             std::uint64_t checkpoint_every) {
  require(!gamma_grid.empty(), "grid_search: empty step-size grid");
  require(!seeds.empty(), "grid_search: no seeds");
  std::sort(gamma_grid.begin(), gamma_grid.end());
  gamma_grid.erase(std::unique(gamma_grid.begin(), gamma_grid.end()),
                   gamma_grid.end());
  const std::vector<std::uint64_t> used =
      gamma_grid.size() == 1 ? std::vector<std::uint64_t>{seeds.front()} : seeds;

  const Point<double> z0 = Point<double>::Zero(problem.dimension());
  const std::size_t jobs = gamma_grid.size() * used.size();
  std::vector<double> finals(jobs);
  parallel_for(jobs, [&](std::size_t j) {
    const double gamma = gamma_grid[j / used.size()];
    const auto cfg = comparison_config(problem, method, gamma, budget,
                                       checkpoint_every, used[j % used.size()]);
    finals[j] = final_residual(run(problem, cfg, z0));
  });

  GridSearchResult out;
  out.candidates = gamma_grid;
  std::optional<std::size_t> best;
  for (std::size_t g = 0; g < gamma_grid.size(); ++g) {
    double sum = 0;
    for (std::size_t s = 0; s < used.size(); ++s)
      sum += finals[g * used.size() + s];
    const double mean = sum / static_cast<double>(used.size());
    out.mean_final_residual_sq.push_back(mean);
    if (!std::isfinite(mean)) continue;
    // Ascending grid: a later candidate must be strictly better to win.
    if (!best || mean < out.mean_final_residual_sq[*best]) best = g;
  }
  if (!best)
    throw TuningError(std::string(method_name(method)) +
                      ": every step size diverged; try smaller gamma_grid "
                      "values (smallest tried: " +
                      format_real(gamma_grid.front()) + ")");
  out.best_gamma = gamma_grid[*best];
  return out;
}

const MethodResult* ComparisonTable::find(Method m) const {
  for (const auto& r : methods)
    if (r.method == m) return &r;
  return nullptr;
}

AggregateStats<double> single_run_stats(const RunRecord<double>& record,
                                        const std::vector<std::uint64_t>& grid) {
  AggregateStats<double> s;
  s.method = record.config.method;
  s.gamma = record.config.gamma;
  s.inner_K = record.config.inner_K;
  s.outer_S = record.config.outer_S;
  s.problem_hash = record.problem_hash;
  s.n_seeds = 1;
  s.grid = grid;
  for (auto g : grid) {
    const auto& cp = detail::carried_forward(record, g);
    s.mean_residual_sq.push_back(cp.residual_sq);
    s.std_residual_sq.push_back(0.0);
    s.mean_dist_sq.push_back(cp.dist_sq);
  }
  return s;
}

ComparisonTable run_comparison(const ExperimentConfig& config, double target_ell,
                               Regime label,
                               const FiniteSumProblem<double>* given) {
  validate_config(config);
  std::optional<FiniteSumProblem<double>> generated;
  if (given == nullptr)
    generated.emplace(generate_bilinear(generator_for(config, target_ell)));
  const FiniteSumProblem<double>& problem = given ? *given : *generated;

  ComparisonTable table;
  table.regime = label;
  table.target_ell = target_ell;
  table.problem_hash = problem_hash(problem);
  table.budget = config.oracle_budget.value_or(
      default_budget(problem.ell(), problem.mu(), problem.n()));
  require(table.budget >= problem.n(),
          "oracle budget must cover at least one full pass");
  table.checkpoint_every = config.checkpoint_every.value_or(
      std::max<std::uint64_t>(1, table.budget / 200));
  table.grid = oracle_grid(table.checkpoint_every, table.budget);

  const std::vector<std::uint64_t> tuning_seeds(
      config.seeds.begin(),
      config.seeds.begin() +
          static_cast<std::ptrdiff_t>(
              std::min(config.tuning_seeds, config.seeds.size())));
  const Point<double> z0 = Point<double>::Zero(problem.dimension());

  for (Method m : config.methods) {
    MethodResult r;
    r.method = m;
    r.tuning = grid_search(
        problem, m, table.budget, tuning_seeds,
        config.gamma_grid.empty() ? default_gamma_grid(m, problem.ell())
                                  : config.gamma_grid,
        table.checkpoint_every);
    r.gamma = r.tuning.best_gamma;
    r.runs.resize(config.seeds.size());
    parallel_for(config.seeds.size(), [&](std::size_t k) {
      auto cfg = comparison_config(problem, m, r.gamma, table.budget,
                                   table.checkpoint_every, config.seeds[k]);
      cfg.record_wall_clock = config.record_wall_clock;
      r.runs[k] = run(problem, cfg, z0);
    });
    r.inner_K = r.runs.front().config.inner_K;
    r.stats = r.runs.size() >= 2 ? aggregate(r.runs, table.grid)
                                 : single_run_stats(r.runs.front(), table.grid);
    table.methods.push_back(std::move(r));
  }
  return table;
}

void write_aggregate_csv(std::ostream& out, const AggregateStats<double>& s) {
  out << "oracle_calls,mean_residual_sq,std_residual_sq,mean_dist_sq,n_seeds\n";
  for (std::size_t k = 0; k < s.grid.size(); ++k)
    out << s.grid[k] << ',' << format_real(s.mean_residual_sq[k]) << ','
        << format_real(s.std_residual_sq[k]) << ','
        << format_real(s.mean_dist_sq[k]) << ',' << s.n_seeds << '\n';
}

namespace {

nlohmann::ordered_json run_metadata(const RunRecord<double>& r) {
  nlohmann::ordered_json j;
  j["method"] = method_name(r.config.method);
  j["gamma"] = r.config.gamma;
  j["inner_K"] = r.config.inner_K;
  j["outer_S"] = r.config.outer_S;
  j["seed"] = r.config.seed;
  j["checkpoint_every"] = r.config.checkpoint_every;
  j["max_oracle_calls"] = r.config.max_oracle_calls;
  j["problem_hash"] = r.problem_hash;
  j["status"] = status_name(r.status);
  j["epochs_completed"] = r.epochs_completed;
  j["component_calls"] = r.oracle.component_calls;
  j["full_passes"] = r.oracle.full_passes;
  return j;
}

void write_table(const ComparisonTable& table, const ExperimentConfig& config,
                 const FiniteSumProblem<double>& problem, const fs::path& dir) {
  const std::string label(regime_name(table.regime));
  fs::create_directories(dir / "runs");
  write_with(dir / "problem.txt",
             [&](std::ostream& o) { write_problem(o, problem); });

  nlohmann::ordered_json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["regime"] = label;
  manifest["generator"] = {{"n", config.generator.n},
                           {"d", config.generator.d},
                           {"lambda", config.generator.lambda},
                           {"heterogeneity", config.generator.heterogeneity},
                           {"seed", config.generator.seed},
                           {"target_ell", table.target_ell}};
  manifest["ell"] = problem.ell();
  manifest["mu"] = problem.mu();
  manifest["problem_hash"] = table.problem_hash;
  manifest["oracle_budget"] = table.budget;
  manifest["checkpoint_every"] = table.checkpoint_every;
  manifest["seeds"] = config.seeds;
  manifest["methods"] = nlohmann::ordered_json::array();

  for (const auto& m : table.methods) {
    const std::string name = lower(method_name(m.method));
    for (const auto& r : m.runs) {
      const std::string stem = name + "_seed" + std::to_string(r.config.seed);
      write_with(dir / "runs" / (stem + ".csv"),
                 [&](std::ostream& o) { write_run_csv(o, r); });
      write_file(dir / "runs" / (stem + ".meta.json"),
                 run_metadata(r).dump(2) + "\n");
    }
    write_with(dir / ("aggregate_" + name + ".csv"),
               [&](std::ostream& o) { write_aggregate_csv(o, m.stats); });
    write_with(dir / ("tuning_" + name + ".csv"), [&](std::ostream& o) {
      o << "gamma,mean_final_residual_sq\n";
      for (std::size_t k = 0; k < m.tuning.candidates.size(); ++k)
        o << format_real(m.tuning.candidates[k]) << ','
          << format_real(m.tuning.mean_final_residual_sq[k]) << '\n';
    });
    manifest["methods"].push_back({{"method", method_name(m.method)},
                                   {"gamma", m.gamma},
                                   {"inner_K", m.inner_K},
                                   {"gamma_candidates", m.tuning.candidates}});
  }
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  emit_plot(plot_data(table), dir / ("figure_" + label + ".svg"));
}

}  // namespace

std::vector<ComparisonTable> run_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const fs::path root(config.output_dir);
  fs::create_directories(root);
  std::vector<ComparisonTable> tables;
  for (const auto& [ell, label] : expand_regimes(config)) {
    const auto problem = generate_bilinear(generator_for(config, ell));
    auto table = run_comparison(config, ell, label, &problem);

    const std::string name(regime_name(label));
    const fs::path final_dir = root / name;
    const fs::path partial = root / ("." + name + ".partial");
    fs::remove_all(partial);
    try {
      write_table(table, config, problem, partial);
      fs::remove_all(final_dir);
      fs::rename(partial, final_dir);
    } catch (...) {
      std::error_code ignored;
      fs::remove_all(partial, ignored);
      throw;
    }
    tables.push_back(std::move(table));
  }
  return tables;
}

}  // namespace sarahvi::harness
