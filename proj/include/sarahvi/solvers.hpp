#ifndef SARAHVI_SOLVERS_HPP
#define SARAHVI_SOLVERS_HPP

#include "sarahvi/problem_io.hpp"
#include "sarahvi/problems.hpp"
#include "sarahvi/random.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace sarahvi {

enum class Method { sarah, svrg, sgd };

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::sarah: return "SARAH";
    case Method::svrg: return "SVRG";
    case Method::sgd: return "SGD";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  if (s == "SARAH" || s == "sarah") return Method::sarah;
  if (s == "SVRG" || s == "svrg") return Method::svrg;
  if (s == "SGD" || s == "sgd") return Method::sgd;
  return std::nullopt;
}

/// Run parameters. For SGD `gamma` is the constant step and `outer_S *
/// inner_K` the number of steps; `inner_K` then only groups steps into
/// epochs for the sampling stream and the `epoch` column.
template <typename Scalar>
struct SolverConfig {
  Method method = Method::sarah;
  Scalar gamma = 0;
  std::uint64_t inner_K = 1;
  std::uint64_t outer_S = 1;
  std::uint64_t seed = 0;
  /// Metric snapshot interval, in oracle calls.
  std::uint64_t checkpoint_every = 1;
  /// Stop before any oracle use that would exceed this total (0: no limit).
  std::uint64_t max_oracle_calls = 0;
  bool record_inner_norms = false;
  /// Fill `elapsed_s`; off by default so outputs are byte-reproducible.
  bool record_wall_clock = false;
};

template <typename Scalar>
struct Checkpoint {
  std::uint64_t epoch = 0;
  std::uint64_t oracle_calls = 0;
  Scalar residual_sq = 0;
  /// NaN when the problem carries no exact solution.
  Scalar dist_sq = 0;
  double elapsed_s = 0;
};

enum class RunStatus { completed, budget_exhausted, diverged, non_finite };

inline std::string_view status_name(RunStatus s) {
  switch (s) {
    case RunStatus::completed: return "completed";
    case RunStatus::budget_exhausted: return "budget_exhausted";
    case RunStatus::diverged: return "diverged";
    case RunStatus::non_finite: return "non_finite";
  }
  return "?";
}

template <typename Scalar>
struct RunRecord {
  SolverConfig<Scalar> config;
  std::string problem_hash;
  Point<Scalar> initial_point;
  Point<Scalar> final_point;
  std::vector<Checkpoint<Scalar>> checkpoints;
  /// |F(z~^s)|^2 for s = 0..(completed epochs).
  std::vector<Scalar> epoch_residual_sq;
  /// |v^k|^2 at every inner step (SARAH, when requested).
  std::vector<Scalar> inner_norm_series;
  OracleCounter oracle;
  RunStatus status = RunStatus::completed;
  std::uint64_t epochs_completed = 0;

  bool failed() const {
    return status == RunStatus::diverged || status == RunStatus::non_finite;
  }
};

/// residual_sq beyond this multiple of its initial value aborts a run.
inline constexpr double kDivergenceFactor = 1e12;

namespace detail {

template <typename Scalar>
std::string hash_if_bilinear(const FiniteSumProblem<Scalar>& problem) {
  if constexpr (std::is_same_v<Scalar, double>) {
    if (problem.is_bilinear()) return problem_hash(problem);
  }
  return {};
}

template <typename Scalar>
void validate(const FiniteSumProblem<Scalar>& problem,
              const SolverConfig<Scalar>& config, const std::type_identity_t<Point<Scalar>>& z0,
              Method expected) {
  require(config.method == expected,
          std::string("config method is not ") +
              std::string(method_name(expected)));
  require(config.gamma > Scalar(0) && std::isfinite(config.gamma),
          "step size must be positive and finite");
  require(config.inner_K >= 1, "inner length K must be >= 1");
  require(config.outer_S >= 1, "outer count S must be >= 1");
  require(config.checkpoint_every >= 1, "checkpoint_every must be >= 1");
  if (z0.size() != problem.dimension())
    throw DimensionError("initial point", problem.dimension(), z0.size());
  require(z0.allFinite(), "initial point has non-finite entries");
}

/// Shared bookkeeping: checkpoints, budget, divergence and finiteness.
/// Metric evaluations go through the untracked `residual`.
template <typename Scalar>
class RunMonitor {
 public:
  RunMonitor(const FiniteSumProblem<Scalar>& problem,
             const SolverConfig<Scalar>& config, const std::type_identity_t<Point<Scalar>>& z0)
      : problem_(problem), start_(std::chrono::steady_clock::now()) {
    record_.config = config;
    record_.problem_hash = hash_if_bilinear(problem);
    record_.initial_point = z0;
    initial_residual_sq_ = residual_sq(problem, z0);
    next_checkpoint_ = 0;
    snapshot(z0, true);
    record_.epoch_residual_sq.push_back(initial_residual_sq_);
  }

  OracleCounter& counter() { return record_.oracle; }
  RunRecord<Scalar>& record() { return record_; }

  bool affordable(std::uint64_t calls) const {
    const auto budget = record_.config.max_oracle_calls;
    return budget == 0 || record_.oracle.component_calls + calls <= budget;
  }

  /// Call after each update. Returns false when the run must stop.
  bool after_step(const Point<Scalar>& z) {
    if (!z.allFinite()) {
      record_.status = RunStatus::non_finite;
      return false;
    }
    if (record_.oracle.component_calls >= next_checkpoint_)
      return snapshot(z, false);
    return true;
  }

  /// Call when an outer epoch completes. Returns false when the run must stop.
  bool end_epoch(const Point<Scalar>& z) {
    ++record_.epochs_completed;
    ++epoch_;
    const Scalar r = residual_sq(problem_, z);
    record_.epoch_residual_sq.push_back(r);
    return check_divergence(r);
  }

  void set_epoch(std::uint64_t e) { epoch_ = e; }

  RunRecord<Scalar> finish(const Point<Scalar>& z, RunStatus status) {
    if (record_.status == RunStatus::completed) record_.status = status;
    record_.final_point = z;
    if (record_.checkpoints.back().oracle_calls <
            record_.oracle.component_calls &&
        z.allFinite())
      snapshot(z, true);
    return std::move(record_);
  }

 private:
  bool snapshot(const Point<Scalar>& z, bool force) {
    const auto calls = record_.oracle.component_calls;
    if (!force && !record_.checkpoints.empty() &&
        record_.checkpoints.back().oracle_calls == calls)
      return true;
    Checkpoint<Scalar> cp;
    cp.epoch = epoch_;
    cp.oracle_calls = calls;
    cp.residual_sq = residual_sq(problem_, z);
    cp.dist_sq = problem_.exact_solution()
                     ? (z - *problem_.exact_solution()).squaredNorm()
                     : std::numeric_limits<Scalar>::quiet_NaN();
    if (record_.config.record_wall_clock)
      cp.elapsed_s = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start_)
                         .count();
    record_.checkpoints.push_back(cp);
    const auto every = record_.config.checkpoint_every;
    next_checkpoint_ = (calls / every + 1) * every;
    return check_divergence(cp.residual_sq);
  }

  bool check_divergence(Scalar r) {
    if (!std::isfinite(r)) {
      record_.status = RunStatus::non_finite;
      return false;
    }
    if (r > Scalar(kDivergenceFactor) * initial_residual_sq_ &&
        initial_residual_sq_ > Scalar(0)) {
      record_.status = RunStatus::diverged;
      return false;
    }
    return true;
  }

  const FiniteSumProblem<Scalar>& problem_;
  RunRecord<Scalar> record_;
  Scalar initial_residual_sq_ = 0;
  std::uint64_t next_checkpoint_ = 0;
  std::uint64_t epoch_ = 0;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

/// State left behind by one SARAH outer iteration. `z` is z^K, `z_prev`
/// z^{K-1}, and `v` the last direction that was formed, v^{K-1}.
template <typename Scalar>
struct SarahEpochState {
  Point<Scalar> z;
  Point<Scalar> z_prev;
  Point<Scalar> v;
  std::uint64_t steps_taken = 0;
};

/// Called after each SARAH step with (k, z^{k+1}, v^k).
template <typename Scalar>
using InnerObserver =
    std::function<bool(std::uint64_t, const Point<Scalar>&, const Point<Scalar>&)>;

/// One outer iteration of SARAH from z0 = z~^{s-1}:
///   v^0 = F(z^0),  z^1 = z^0 - gamma v^0,
///   v^k = F_{i_k}(z^k) - F_{i_k}(z^{k-1}) + v^{k-1},  z^{k+1} = z^k - gamma v^k
/// for k = 1..K-1, with i_k drawn from the (seed, epoch, k) stream.
/// `step_hook` returning false stops the loop early; `budget` (when set) is
/// consulted before every oracle use.
template <typename Scalar, typename StepHook, typename Budget>
SarahEpochState<Scalar> sarah_epoch(const FiniteSumProblem<Scalar>& problem,
                                    Scalar gamma, std::uint64_t K,
                                    std::uint64_t seed, std::uint64_t epoch,
                                    const std::type_identity_t<Point<Scalar>>& z0,
                                    OracleCounter& counter, StepHook&& step_hook,
                                    Budget&& affordable) {
  SarahEpochState<Scalar> st;
  st.z_prev = z0;
  if (!affordable(problem.n())) {
    st.z = z0;
    return st;
  }
  eval_full(problem, z0, st.v, counter);
  st.z = z0 - gamma * st.v;
  st.steps_taken = 1;
  if (!step_hook(std::uint64_t{0}, st.z, st.v)) return st;

  Point<Scalar> f_new, f_old;
  for (std::uint64_t k = 1; k < K; ++k) {
    if (!affordable(2)) break;
    const std::size_t i = sample_component(seed, epoch, k, problem.n());
    eval_component(problem, i, st.z, f_new, counter);
    eval_component(problem, i, st.z_prev, f_old, counter);
    // Grouped so that the bracket vanishes exactly when v^{k-1} already
    // equals F_i(z^{k-1}), as it does for n = 1.
    st.v = f_new + (st.v - f_old);
    st.z_prev.swap(st.z);
    st.z = st.z_prev - gamma * st.v;
    ++st.steps_taken;
    if (!step_hook(k, st.z, st.v)) break;
  }
  return st;
}

template <typename Scalar>
SarahEpochState<Scalar> sarah_epoch(const FiniteSumProblem<Scalar>& problem,
                                    Scalar gamma, std::uint64_t K,
                                    std::uint64_t seed, std::uint64_t epoch,
                                    const std::type_identity_t<Point<Scalar>>& z0,
                                    OracleCounter& counter) {
  return sarah_epoch(
      problem, gamma, K, seed, epoch, z0, counter,
      [](std::uint64_t, const Point<Scalar>&, const Point<Scalar>&) {
        return true;
      },
      [](std::uint64_t) { return true; });
}

/// SARAH for finite-sum VIs: S outer iterations of sarah_epoch. Each
/// complete epoch costs exactly n + 2(K-1) component calls.
template <typename Scalar>
RunRecord<Scalar> run_sarah(const FiniteSumProblem<Scalar>& problem,
                            const SolverConfig<Scalar>& config,
                            const std::type_identity_t<Point<Scalar>>& z0) {
  detail::validate(problem, config, z0, Method::sarah);
  detail::RunMonitor<Scalar> monitor(problem, config, z0);
  auto& rec = monitor.record();
  auto affordable = [&monitor](std::uint64_t c) { return monitor.affordable(c); };

  Point<Scalar> z = z0;
  bool alive = true;
  for (std::uint64_t s = 0; s < config.outer_S && alive; ++s) {
    monitor.set_epoch(s);
    auto hook = [&](std::uint64_t, const Point<Scalar>& zk,
                    const Point<Scalar>& vk) {
      if (config.record_inner_norms)
        rec.inner_norm_series.push_back(vk.squaredNorm());
      alive = monitor.after_step(zk);
      return alive;
    };
    auto st = sarah_epoch(problem, config.gamma, config.inner_K, config.seed, s,
                          z, monitor.counter(), hook, affordable);
    z = std::move(st.z);
    if (!alive) break;
    if (st.steps_taken < config.inner_K)
      return monitor.finish(z, RunStatus::budget_exhausted);
    alive = monitor.end_epoch(z);
  }
  return monitor.finish(z, RunStatus::completed);
}

/// SVRG baseline: anchor w = z~^{s-1}, F(w) once, then K steps with
/// v^k = F_{i_k}(z^k) - F_{i_k}(w) + F(w). n + 2K calls per epoch.
template <typename Scalar>
RunRecord<Scalar> run_svrg(const FiniteSumProblem<Scalar>& problem,
                           const SolverConfig<Scalar>& config,
                           const std::type_identity_t<Point<Scalar>>& z0) {
  detail::validate(problem, config, z0, Method::svrg);
  detail::RunMonitor<Scalar> monitor(problem, config, z0);
  auto& counter = monitor.counter();

  Point<Scalar> z = z0, anchor, anchor_value, f_new, f_old, v;
  for (std::uint64_t s = 0; s < config.outer_S; ++s) {
    monitor.set_epoch(s);
    if (!monitor.affordable(problem.n()))
      return monitor.finish(z, RunStatus::budget_exhausted);
    anchor = z;
    eval_full(problem, anchor, anchor_value, counter);
    for (std::uint64_t k = 0; k < config.inner_K; ++k) {
      if (!monitor.affordable(2))
        return monitor.finish(z, RunStatus::budget_exhausted);
      const std::size_t i = sample_component(config.seed, s, k, problem.n());
      eval_component(problem, i, z, f_new, counter);
      eval_component(problem, i, anchor, f_old, counter);
      v = f_new + (anchor_value - f_old);
      z -= config.gamma * v;
      if (!monitor.after_step(z)) return monitor.finish(z, RunStatus::completed);
    }
    if (!monitor.end_epoch(z)) break;
  }
  return monitor.finish(z, RunStatus::completed);
}

/// Constant-step SGD baseline: z^{k+1} = z^k - gamma F_{i_k}(z^k), one call
/// per step, outer_S * inner_K steps.
template <typename Scalar>
RunRecord<Scalar> run_sgd(const FiniteSumProblem<Scalar>& problem,
                          const SolverConfig<Scalar>& config,
                          const std::type_identity_t<Point<Scalar>>& z0) {
  detail::validate(problem, config, z0, Method::sgd);
  detail::RunMonitor<Scalar> monitor(problem, config, z0);
  auto& counter = monitor.counter();

  Point<Scalar> z = z0, g;
  for (std::uint64_t s = 0; s < config.outer_S; ++s) {
    monitor.set_epoch(s);
    for (std::uint64_t k = 0; k < config.inner_K; ++k) {
      if (!monitor.affordable(1))
        return monitor.finish(z, RunStatus::budget_exhausted);
      const std::size_t i = sample_component(config.seed, s, k, problem.n());
      eval_component(problem, i, z, g, counter);
      z -= config.gamma * g;
      if (!monitor.after_step(z)) return monitor.finish(z, RunStatus::completed);
    }
    if (!monitor.end_epoch(z)) break;
  }
  return monitor.finish(z, RunStatus::completed);
}

template <typename Scalar>
RunRecord<Scalar> run(const FiniteSumProblem<Scalar>& problem,
                      const SolverConfig<Scalar>& config,
                      const std::type_identity_t<Point<Scalar>>& z0) {
  switch (config.method) {
    case Method::sarah: return run_sarah(problem, config, z0);
    case Method::svrg: return run_svrg(problem, config, z0);
    case Method::sgd: return run_sgd(problem, config, z0);
  }
  throw std::invalid_argument("unknown method");
}

/// Ceiling of a positive ratio. Generated instances hit their target ell
/// only up to rounding, so values within 1e-9 of an integer snap to it.
template <typename Scalar>
std::uint64_t ceil_count(Scalar ratio) {
  const Scalar nearest = std::round(ratio);
  if (std::abs(ratio - nearest) <= Scalar(1e-9) * ratio)
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(nearest));
  return static_cast<std::uint64_t>(std::ceil(ratio));
}

/// Number of inner steps K = ceil(10 ell / mu) used by the contraction
/// guarantee.
template <typename Scalar>
std::uint64_t theorem_inner_length(Scalar ell, Scalar mu) {
  return ceil_count(Scalar(10) * ell / mu);
}

template <typename Scalar>
Scalar theorem_step(Scalar ell) {
  return Scalar(2) / (Scalar(9) * ell);
}

/// SARAH with gamma = 2 / (9 ell) and K = ceil(10 ell / mu), for which each
/// epoch halves E|F|^2. Seed is left at 0 for the caller to set.
template <typename Scalar>
SolverConfig<Scalar> theorem_preset(const FiniteSumProblem<Scalar>& problem) {
  require(problem.ell() > Scalar(0) && problem.mu() > Scalar(0),
          "theorem_preset: ell and mu must be set");
  SolverConfig<Scalar> c;
  c.method = Method::sarah;
  c.gamma = theorem_step(problem.ell());
  c.inner_K = theorem_inner_length(problem.ell(), problem.mu());
  c.outer_S = 1;
  c.checkpoint_every = problem.n() + 2 * (c.inner_K - 1);
  return c;
}

/// Inner length ceil(ell / lambda) used for the method comparison.
template <typename Scalar>
std::uint64_t experiment_inner_length(const FiniteSumProblem<Scalar>& problem) {
  return ceil_count(problem.ell() / problem.mu());
}

struct ReplayResult {
  bool identical = false;
  std::optional<std::size_t> first_divergent_checkpoint;
  explicit operator bool() const { return identical; }
};

/// Re-runs the recorded configuration from the recorded initial point and
/// compares the final point and every checkpoint bit for bit (wall clock
/// excluded).
template <typename Scalar>
ReplayResult replay_check(const RunRecord<Scalar>& record,
                          const FiniteSumProblem<Scalar>& problem) {
  const auto again = run(problem, record.config, record.initial_point);
  ReplayResult out;
  const auto& a = record.checkpoints;
  const auto& b = again.checkpoints;
  auto same_bits = [](Scalar x, Scalar y) {
    return std::memcmp(&x, &y, sizeof(Scalar)) == 0;
  };
  for (std::size_t k = 0; k < std::max(a.size(), b.size()); ++k) {
    if (k >= a.size() || k >= b.size() || a[k].epoch != b[k].epoch ||
        a[k].oracle_calls != b[k].oracle_calls ||
        !same_bits(a[k].residual_sq, b[k].residual_sq) ||
        !same_bits(a[k].dist_sq, b[k].dist_sq)) {
      out.first_divergent_checkpoint = k;
      return out;
    }
  }
  const auto& fa = record.final_point;
  const auto& fb = again.final_point;
  out.identical =
      fa.size() == fb.size() &&
      std::memcmp(fa.data(), fb.data(),
                  sizeof(Scalar) * static_cast<std::size_t>(fa.size())) == 0;
  if (!out.identical) out.first_divergent_checkpoint = a.size();
  return out;
}

inline constexpr std::string_view kRunCsvHeader =
    "epoch,oracle_calls,residual_sq,dist_sq,elapsed_s";

template <typename Scalar>
void write_run_csv(std::ostream& out, const RunRecord<Scalar>& record) {
  out << kRunCsvHeader << '\n';
  for (const auto& cp : record.checkpoints)
    out << cp.epoch << ',' << cp.oracle_calls << ','
        << format_real(static_cast<double>(cp.residual_sq)) << ','
        << format_real(static_cast<double>(cp.dist_sq)) << ','
        << format_real(cp.elapsed_s) << '\n';
}

}  // namespace sarahvi

#endif
