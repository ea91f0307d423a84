#include "sarahvi/harness.hpp"
#include "sarahvi/problem_io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace sarahvi::harness {

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::vector<std::uint64_t> seed_range(std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  std::iota(seeds.begin(), seeds.end(), std::uint64_t{1});
  return seeds;
}

// theorem_gamma is accepted only when it names the theorem step; any other
// value goes through as a preset and is rejected there.
std::optional<SolverConfig<double>> theorem_override(
    const ExperimentConfig& config, const FiniteSumProblem<double>& problem) {
  if (!config.theorem_gamma) return std::nullopt;
  auto preset = theorem_preset(problem);
  const double expected = preset.gamma;
  if (std::abs(*config.theorem_gamma - expected) > 1e-9 * expected)
    preset.gamma = *config.theorem_gamma;
  return preset;
}

void verify_instance(const ExperimentConfig& config,
                     const FiniteSumProblem<double>& problem,
                     const std::string& label,
                     std::vector<CheckLine>& lines,
                     nlohmann::ordered_json& report) {
  const Point<double> z0 = Point<double>::Zero(problem.dimension());
  const auto prefix = label + ": ";
  auto add = [&](CheckLine line) {
    line.name = prefix + line.name;
    lines.push_back(std::move(line));
  };
  nlohmann::ordered_json j;
  j["ell"] = problem.ell();
  j["mu"] = problem.mu();
  j["problem_hash"] = problem_hash(problem);

  // Rejects a wrong preset before any expensive work.
  const auto preset = theorem_override(config, problem);
  if (preset) {
    const auto expected = theorem_preset(problem);
    require(preset->gamma == expected.gamma,
            "theorem_gamma = " + format_real(preset->gamma) +
                ": preset requires gamma = 2/(9 ell) = " +
                format_real(expected.gamma));
  }

  const auto mono = check_strong_monotonicity(problem, problem.mu(),
                                              config.checker_trials, 1);
  const double mono_gap = std::max(std::abs(mono.min_ratio - 1),
                                   std::abs(mono.max_ratio - 1));
  add({"strong monotonicity (mu = lambda)",
       "max |ratio - 1| = " + sci(mono_gap),
       "|ratio - 1| <= 1e-9", mono.violations == 0 && mono_gap <= 1e-9});
  j["monotonicity"] = {{"trials", mono.trials},
                       {"violations", mono.violations},
                       {"min_ratio", mono.min_ratio},
                       {"max_ratio", mono.max_ratio}};

  double worst_coco = 0;
  std::size_t coco_violations = 0;
  for (std::size_t i = 0; i < problem.n(); ++i) {
    const auto r = check_cocoercivity(problem, i, problem.ell(),
                                      config.checker_trials, 2 + i);
    worst_coco = std::max(worst_coco, r.worst_ratio);
    coco_violations += r.violations;
  }
  add({"component cocoercivity at ell (informational)",
       "worst ratio " + sci(worst_coco) + ", " +
           std::to_string(coco_violations) + " violations",
       "<= 1", coco_violations == 0, true});
  j["cocoercivity"] = {{"worst_ratio", worst_coco},
                       {"violations", coco_violations}};

  const auto& zstar = problem.exact_solution();
  const double f0 = residual(problem, z0).norm();
  const double fstar =
      zstar ? residual(problem, *zstar).norm()
            : std::numeric_limits<double>::infinity();
  const double fstar_bound = 1e-9 * std::max(1.0, f0);
  add({"exact solution residual |F(z*)|", sci(fstar),
       "<= " + sci(fstar_bound), fstar <= fstar_bound});
  j["exact_residual"] = fstar;

  const double gamma = theorem_step(problem.ell());
  const auto K = theorem_inner_length(problem.ell(), problem.mu());
  const auto traces = collect_inner_traces(problem, gamma, K, z0,
                                           seed_range(config.lemma_seeds));
  const auto l1 = verify_lemma1(problem, traces, gamma, K, z0);
  add({"E|v^k|^2 decay, max over k <= " + std::to_string(K),
       "ratio " + sci(l1.max_violation_ratio) + " at k = " +
           std::to_string(l1.worst_k),
       "<= " + sci(l1.bound_factor), l1.passed});
  j["lemma1"] = {{"gamma", gamma},
                 {"K", K},
                 {"seeds", l1.n_seeds},
                 {"max_ratio", l1.max_violation_ratio},
                 {"worst_k", l1.worst_k}};

  const auto l2 = verify_lemma2(problem, traces, gamma, K, z0);
  add({"E|F(z^K) - v^K|^2 drift", "ratio " + sci(l2.ratio),
       "<= " + sci(l2.bound_factor), l2.passed});
  j["lemma2"] = {{"mean_drift_sq", l2.mean_drift_sq},
                 {"bound", l2.bound},
                 {"ratio", l2.ratio}};

  const auto th = verify_theorem1(problem, seed_range(config.theorem_seeds),
                                  z0, config.theorem_max_epochs, preset);
  double worst_ratio = 0;
  for (std::size_t k = 0; k < th.pre_floor_count(); ++k)
    worst_ratio = std::max(worst_ratio, th.per_epoch_ratios[k]);
  add({"per-epoch contraction E|F|^2",
       th.degenerate ? "F(z0) = 0"
                     : "max ratio " + sci(worst_ratio) + " over " +
                           std::to_string(th.pre_floor_count()) + " epochs",
       "<= " + sci(th.acceptance_bound), th.passed});
  j["theorem"] = {{"gamma", th.gamma},
                  {"K", th.inner_K},
                  {"seeds", th.n_seeds},
                  {"per_epoch_ratios", th.per_epoch_ratios},
                  {"pre_floor_epochs", th.pre_floor_count()},
                  {"degenerate", th.degenerate}};

  // Complexity audit: epsilon is relative to |F(z0)|.
  const double eps = config.epsilon * std::max(f0, 1e-300);
  auto cfg = theorem_preset(problem);
  cfg.seed = 1;
  const double halvings =
      std::ceil(std::log2(residual_sq(problem, z0) / (eps * eps)));
  cfg.outer_S = std::max<std::uint64_t>(
      1, halvings > 0 ? static_cast<std::uint64_t>(halvings) : 1);
  const auto record = run_sarah(problem, cfg, z0);
  const auto audit = complexity_audit(record, problem, eps);
  add({"calls to eps-solution (eps = " + sci(config.epsilon) + " |F(z0)|)",
       audit.reachable() ? std::to_string(*audit.actual_calls) : "not reached",
       "<= " + std::to_string(audit.predicted_calls),
       audit.reachable() && *audit.actual_calls <= audit.predicted_calls});
  add({"call counter vs S(n + 2(K-1))", std::to_string(audit.counted_total),
       "== " + std::to_string(audit.formula_total),
       audit.counted_total == audit.formula_total});
  j["complexity"] = {
      {"epsilon", eps},
      {"epoch_cost", audit.epoch_cost},
      {"predicted_epochs", audit.predicted_epochs},
      {"predicted_calls", audit.predicted_calls},
      {"actual_calls", audit.actual_calls ? nlohmann::ordered_json(*audit.actual_calls)
                                          : nlohmann::ordered_json(nullptr)},
      {"counted_total", audit.counted_total},
      {"formula_total", audit.formula_total}};
  report[label] = std::move(j);
}

}  // namespace

bool VerificationOutcome::passed() const {
  for (const auto& l : lines)
    if (!l.informational && !l.passed) return false;
  return !lines.empty();
}

VerificationOutcome run_verification(const ExperimentConfig& config,
                                     std::ostream& log, bool write_report) {
  validate_config(config);
  VerificationOutcome out;
  nlohmann::ordered_json report;
  report["tool_version"] = kToolVersion;
  for (const auto& [ell, label] : expand_regimes(config)) {
    const auto problem = generate_bilinear(generator_for(config, ell));
    verify_instance(config, problem, std::string(regime_name(label)), out.lines,
                    report);
  }

  std::size_t width = 0;
  for (const auto& l : out.lines) width = std::max(width, l.name.size());
  for (const auto& l : out.lines) {
    const char* tag = l.informational ? "INFO" : l.passed ? "PASS" : "FAIL";
    log << tag << "  " << std::left << std::setw(static_cast<int>(width))
        << l.name << "  " << l.measured << "  (bound " << l.bound << ")\n";
  }
  log << (out.passed() ? "all checks passed" : "verification FAILED") << '\n';

  if (write_report) {
    nlohmann::ordered_json checks = nlohmann::ordered_json::array();
    for (const auto& l : out.lines)
      checks.push_back({{"name", l.name},
                        {"measured", l.measured},
                        {"bound", l.bound},
                        {"passed", l.passed},
                        {"informational", l.informational}});
    report["checks"] = std::move(checks);
    report["passed"] = out.passed();
    const std::filesystem::path dir(config.output_dir);
    std::filesystem::create_directories(dir);
    const auto path = dir / "verify_report.json";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
    f << report.dump(2) << '\n';
  }
  return out;
}

int verify_cli(const ExperimentConfig& config, std::ostream& log) {
  return run_verification(config, log).passed() ? 0 : 1;
}

}  // namespace sarahvi::harness
