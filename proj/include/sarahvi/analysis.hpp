#ifndef SARAHVI_ANALYSIS_HPP
#define SARAHVI_ANALYSIS_HPP

#include "sarahvi/problems.hpp"
#include "sarahvi/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

namespace sarahvi {

// ---------------------------------------------------------------------------
// Cross-seed aggregation

template <typename Scalar>
struct AggregateStats {
  Method method = Method::sarah;
  Scalar gamma = 0;
  std::uint64_t inner_K = 0;
  std::uint64_t outer_S = 0;
  std::string problem_hash;
  std::vector<std::uint64_t> grid;
  std::vector<Scalar> mean_residual_sq;
  std::vector<Scalar> std_residual_sq;
  std::vector<Scalar> mean_dist_sq;
  std::size_t n_seeds = 0;
};

namespace detail {

// Sum in sorted order so the result does not depend on record order.
template <typename Scalar>
Scalar ordered_sum(std::vector<Scalar>& values) {
  std::sort(values.begin(), values.end());
  Scalar s = 0;
  for (Scalar v : values) s += v;
  return s;
}

template <typename Scalar>
const Checkpoint<Scalar>& carried_forward(const RunRecord<Scalar>& r,
                                          std::uint64_t at) {
  const auto& cps = r.checkpoints;
  auto it = std::upper_bound(
      cps.begin(), cps.end(), at,
      [](std::uint64_t x, const Checkpoint<Scalar>& c) {
        return x < c.oracle_calls;
      });
  return it == cps.begin() ? cps.front() : *std::prev(it);
}

}  // namespace detail

/// Oracle-call grid 0, c, 2c, ... up to `last`, with `last` appended when it
/// is not a multiple of c.
inline std::vector<std::uint64_t> oracle_grid(std::uint64_t every,
                                              std::uint64_t last) {
  require(every >= 1, "oracle_grid: spacing must be >= 1");
  std::vector<std::uint64_t> grid;
  for (std::uint64_t g = 0; g <= last; g += every) grid.push_back(g);
  if (grid.back() != last) grid.push_back(last);
  return grid;
}

/// Pointwise mean and sample standard deviation across seeds, with each run
/// read off the grid by last observation carried forward.
template <typename Scalar>
AggregateStats<Scalar> aggregate(const std::vector<RunRecord<Scalar>>& records,
                                 std::vector<std::uint64_t> grid = {}) {
  require(records.size() >= 2, "aggregate: need at least two records");
  const auto& c0 = records.front().config;
  for (const auto& r : records) {
    const auto& c = r.config;
    require(c.method == c0.method && c.gamma == c0.gamma &&
                c.inner_K == c0.inner_K && c.outer_S == c0.outer_S &&
                c.checkpoint_every == c0.checkpoint_every &&
                c.max_oracle_calls == c0.max_oracle_calls &&
                r.problem_hash == records.front().problem_hash,
            "aggregate: records have heterogeneous configurations");
    require(!r.checkpoints.empty(), "aggregate: record without checkpoints");
  }
  if (grid.empty()) {
    std::uint64_t last = 0;
    for (const auto& r : records)
      last = std::max(last, r.checkpoints.back().oracle_calls);
    grid = oracle_grid(c0.checkpoint_every, last);
  }

  AggregateStats<Scalar> out;
  out.method = c0.method;
  out.gamma = c0.gamma;
  out.inner_K = c0.inner_K;
  out.outer_S = c0.outer_S;
  out.problem_hash = records.front().problem_hash;
  out.n_seeds = records.size();
  out.grid = grid;

  const auto count = static_cast<Scalar>(records.size());
  std::vector<Scalar> res(records.size()), dist(records.size()),
      dev(records.size());
  for (std::uint64_t g : grid) {
    for (std::size_t k = 0; k < records.size(); ++k) {
      const auto& cp = detail::carried_forward(records[k], g);
      res[k] = cp.residual_sq;
      dist[k] = cp.dist_sq;
    }
    const Scalar mean = detail::ordered_sum(res) / count;
    for (std::size_t k = 0; k < res.size(); ++k)
      dev[k] = (res[k] - mean) * (res[k] - mean);
    out.mean_residual_sq.push_back(mean);
    out.std_residual_sq.push_back(
        std::sqrt(detail::ordered_sum(dev) / (count - Scalar(1))));
    out.mean_dist_sq.push_back(detail::ordered_sum(dist) / count);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inner-loop traces

/// One SARAH inner loop observed from a fixed start. `v_norm_sq[k]` is
/// |v^k|^2 for k = 0..K; the entry for k = K and `drift_sq` =
/// |F(z^K) - v^K|^2 use untracked evaluations, since the algorithm itself
/// never forms v^K.
template <typename Scalar>
struct InnerTrace {
  std::vector<Scalar> v_norm_sq;
  Scalar drift_sq = 0;
  OracleCounter oracle;
};

template <typename Scalar>
InnerTrace<Scalar> trace_inner_loop(const FiniteSumProblem<Scalar>& problem,
                                    Scalar gamma, std::uint64_t K,
                                    const std::type_identity_t<Point<Scalar>>& z0,
                                    std::uint64_t seed) {
  InnerTrace<Scalar> trace;
  trace.v_norm_sq.reserve(K + 1);
  auto st = sarah_epoch(
      problem, gamma, K, seed, 0, z0, trace.oracle,
      [&](std::uint64_t, const Point<Scalar>&, const Point<Scalar>& v) {
        trace.v_norm_sq.push_back(v.squaredNorm());
        return true;
      },
      [](std::uint64_t) { return true; });

  OracleCounter untracked;
  const std::size_t i = sample_component(seed, 0, K, problem.n());
  Point<Scalar> f_new, f_old;
  eval_component(problem, i, st.z, f_new, untracked);
  eval_component(problem, i, st.z_prev, f_old, untracked);
  const Point<Scalar> v_K = f_new + (st.v - f_old);
  trace.v_norm_sq.push_back(v_K.squaredNorm());
  trace.drift_sq = (residual(problem, st.z) - v_K).squaredNorm();
  return trace;
}

template <typename Scalar>
std::vector<InnerTrace<Scalar>> collect_inner_traces(
    const FiniteSumProblem<Scalar>& problem, Scalar gamma, std::uint64_t K,
    const std::type_identity_t<Point<Scalar>>& z0, const std::vector<std::uint64_t>& seeds) {
  require(!seeds.empty(), "need at least one seed");
  require(K >= 1, "inner length K must be >= 1");
  std::vector<InnerTrace<Scalar>> traces;
  traces.reserve(seeds.size());
  for (auto seed : seeds)
    traces.push_back(trace_inner_loop(problem, gamma, K, z0, seed));
  return traces;
}

// ---------------------------------------------------------------------------
// Decay of |v^k|^2

inline constexpr double kLemmaSlack = 1.1;

template <typename Scalar>
struct Lemma1Report {
  Scalar gamma = 0;
  std::uint64_t inner_K = 0;
  std::size_t n_seeds = 0;
  Scalar initial_residual_sq = 0;
  /// mean_k |v^k|^2 / ((1 - gamma mu)^k |F(z^0)|^2), k = 0..K.
  std::vector<Scalar> ratios;
  Scalar max_violation_ratio = 0;
  std::uint64_t worst_k = 0;
  double bound_factor = kLemmaSlack;
  bool passed = false;
};

/// Estimates E|v^k|^2 over seeds and compares it with
/// (1 - gamma mu)^k |F(z^0)|^2 for every k <= K. Requires gamma <= 1/ell.
template <typename Scalar>
Lemma1Report<Scalar> verify_lemma1(const FiniteSumProblem<Scalar>& problem,
                                   const std::vector<InnerTrace<Scalar>>& traces,
                                   Scalar gamma, std::uint64_t K,
                                   const std::type_identity_t<Point<Scalar>>& z0) {
  require(gamma > Scalar(0) && gamma <= Scalar(1) / problem.ell(),
          "verify_lemma1: requires 0 < gamma <= 1/ell");
  require(!traces.empty(), "verify_lemma1: no traces");
  Lemma1Report<Scalar> rep;
  rep.gamma = gamma;
  rep.inner_K = K;
  rep.n_seeds = traces.size();
  rep.initial_residual_sq = residual_sq(problem, z0);
  require(rep.initial_residual_sq > Scalar(0),
          "verify_lemma1: F(z0) = 0, nothing to bound");

  const Scalar q = Scalar(1) - gamma * problem.mu();
  std::vector<Scalar> column(traces.size());
  for (std::uint64_t k = 0; k <= K; ++k) {
    for (std::size_t s = 0; s < traces.size(); ++s) {
      require(traces[s].v_norm_sq.size() == K + 1,
              "verify_lemma1: trace length does not match K");
      column[s] = traces[s].v_norm_sq[k];
    }
    const Scalar mean =
        detail::ordered_sum(column) / static_cast<Scalar>(column.size());
    const Scalar bound =
        std::pow(q, static_cast<Scalar>(k)) * rep.initial_residual_sq;
    const Scalar ratio = mean / bound;
    rep.ratios.push_back(ratio);
    if (ratio > rep.max_violation_ratio) {
      rep.max_violation_ratio = ratio;
      rep.worst_k = k;
    }
  }
  rep.passed = rep.max_violation_ratio <= Scalar(rep.bound_factor);
  return rep;
}

template <typename Scalar>
Lemma1Report<Scalar> verify_lemma1(const FiniteSumProblem<Scalar>& problem,
                                   Scalar gamma, std::uint64_t K,
                                   const std::vector<std::uint64_t>& seeds,
                                   const std::type_identity_t<Point<Scalar>>& z0) {
  require(gamma > Scalar(0) && gamma <= Scalar(1) / problem.ell(),
          "verify_lemma1: requires 0 < gamma <= 1/ell");
  return verify_lemma1(problem,
                       collect_inner_traces(problem, gamma, K, z0, seeds),
                       gamma, K, z0);
}

// ---------------------------------------------------------------------------
// Drift |F(z^K) - v^K|^2

template <typename Scalar>
struct Lemma2Report {
  Scalar gamma = 0;
  std::uint64_t inner_K = 0;
  std::size_t n_seeds = 0;
  Scalar initial_residual_sq = 0;
  Scalar mean_drift_sq = 0;
  /// gamma ell / (2 - gamma ell) * |F(z^0)|^2
  Scalar bound = 0;
  Scalar ratio = 0;
  double bound_factor = kLemmaSlack;
  bool passed = false;
};

template <typename Scalar>
Lemma2Report<Scalar> verify_lemma2(const FiniteSumProblem<Scalar>& problem,
                                   const std::vector<InnerTrace<Scalar>>& traces,
                                   Scalar gamma, std::uint64_t K,
                                   const std::type_identity_t<Point<Scalar>>& z0) {
  const Scalar gl = gamma * problem.ell();
  require(gamma > Scalar(0) && gl < Scalar(2),
          "verify_lemma2: requires 0 < gamma < 2/ell");
  require(!traces.empty(), "verify_lemma2: no traces");
  Lemma2Report<Scalar> rep;
  rep.gamma = gamma;
  rep.inner_K = K;
  rep.n_seeds = traces.size();
  rep.initial_residual_sq = residual_sq(problem, z0);
  require(rep.initial_residual_sq > Scalar(0),
          "verify_lemma2: F(z0) = 0, nothing to bound");
  std::vector<Scalar> drift;
  for (const auto& t : traces) drift.push_back(t.drift_sq);
  rep.mean_drift_sq =
      detail::ordered_sum(drift) / static_cast<Scalar>(drift.size());
  rep.bound = gl / (Scalar(2) - gl) * rep.initial_residual_sq;
  rep.ratio = rep.mean_drift_sq / rep.bound;
  rep.passed = rep.ratio <= Scalar(rep.bound_factor);
  return rep;
}

template <typename Scalar>
Lemma2Report<Scalar> verify_lemma2(const FiniteSumProblem<Scalar>& problem,
                                   Scalar gamma, std::uint64_t K,
                                   const std::vector<std::uint64_t>& seeds,
                                   const std::type_identity_t<Point<Scalar>>& z0) {
  require(gamma > Scalar(0) && gamma * problem.ell() < Scalar(2),
          "verify_lemma2: requires 0 < gamma < 2/ell");
  return verify_lemma2(problem,
                       collect_inner_traces(problem, gamma, K, z0, seeds),
                       gamma, K, z0);
}

// ---------------------------------------------------------------------------
// Per-epoch contraction

inline constexpr double kTheoremBound = 0.5;
inline constexpr double kTheoremSlack = 0.1;

/// Level below which round-off dominates: 1e3 eps^2 times the squared size
/// of the terms that make up F near the iterates, i.e. the largest of
/// |F(z0)|^2, |F(0)|^2 and ell mu |z_ref|^2 (z_ref = z* when known, else z0).
template <typename Scalar>
Scalar numeric_floor(const FiniteSumProblem<Scalar>& problem,
                     const std::type_identity_t<Point<Scalar>>& z0) {
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  const Point<Scalar> ref = problem.exact_solution().value_or(z0);
  const Point<Scalar> origin = Point<Scalar>::Zero(problem.dimension());
  const Scalar scale = std::max({residual_sq(problem, z0),
                                 residual_sq(problem, origin),
                                 problem.ell() * problem.mu() *
                                     ref.squaredNorm()});
  return Scalar(1e3) * eps * eps * scale;
}

template <typename Scalar>
struct ContractionReport {
  Scalar gamma = 0;
  std::uint64_t inner_K = 0;
  std::size_t n_seeds = 0;
  /// Cross-seed mean of |F(z~^s)|^2, s = 0, 1, ...
  std::vector<Scalar> mean_residual_sq;
  /// mean_residual_sq[s] / mean_residual_sq[s-1], s = 1, ...
  std::vector<Scalar> per_epoch_ratios;
  double theorem_bound = kTheoremBound;
  double acceptance_bound = kTheoremBound + kTheoremSlack;
  std::optional<std::size_t> floor_epoch;
  bool degenerate = false;
  bool passed = false;

  /// Ratios that enter pass/fail: those into epochs above the floor.
  std::size_t pre_floor_count() const {
    return floor_epoch ? *floor_epoch - 1 : per_epoch_ratios.size();
  }
};

/// Runs SARAH with gamma = 2/(9 ell), K = ceil(10 ell/mu) from z0 for every
/// seed, epoch by epoch, until the mean residual reaches the numeric floor or
/// `max_epochs` pass. Passes iff every pre-floor ratio is <= 0.6.
///
/// `preset`, when given, must be the theorem preset; anything else is
/// rejected.
template <typename Scalar>
ContractionReport<Scalar> verify_theorem1(
    const FiniteSumProblem<Scalar>& problem,
    const std::vector<std::uint64_t>& seeds, const std::type_identity_t<Point<Scalar>>& z0,
    std::size_t max_epochs = 60,
    const std::optional<SolverConfig<Scalar>>& preset = std::nullopt) {
  require(!seeds.empty(), "verify_theorem1: need at least one seed");
  require(max_epochs >= 1, "verify_theorem1: max_epochs must be >= 1");
  const auto cfg = theorem_preset(problem);
  if (preset) {
    require(preset->method == Method::sarah,
            "verify_theorem1: preset must be SARAH");
    require(preset->gamma == cfg.gamma,
            "verify_theorem1: preset requires gamma = 2/(9 ell)");
    require(preset->inner_K == cfg.inner_K,
            "verify_theorem1: preset requires K = ceil(10 ell / mu)");
  }

  ContractionReport<Scalar> rep;
  rep.gamma = cfg.gamma;
  rep.inner_K = cfg.inner_K;
  rep.n_seeds = seeds.size();
  const Scalar r0 = residual_sq(problem, z0);
  rep.mean_residual_sq.push_back(r0);
  if (!(r0 > Scalar(0))) {
    rep.degenerate = true;
    return rep;
  }
  const Scalar floor = numeric_floor(problem, z0);

  std::vector<Point<Scalar>> z(seeds.size(), z0);
  std::vector<Scalar> res(seeds.size());
  for (std::size_t s = 1; s <= max_epochs; ++s) {
    for (std::size_t j = 0; j < seeds.size(); ++j) {
      OracleCounter counter;
      auto st = sarah_epoch(problem, cfg.gamma, cfg.inner_K, seeds[j], s - 1,
                            z[j], counter);
      z[j] = std::move(st.z);
      res[j] = residual_sq(problem, z[j]);
    }
    const Scalar mean =
        detail::ordered_sum(res) / static_cast<Scalar>(res.size());
    rep.per_epoch_ratios.push_back(mean / rep.mean_residual_sq.back());
    rep.mean_residual_sq.push_back(mean);
    if (!std::isfinite(mean)) break;
    if (mean < floor) {
      rep.floor_epoch = s;
      break;
    }
  }

  const std::size_t counted = rep.pre_floor_count();
  rep.passed = counted > 0;
  for (std::size_t k = 0; k < counted; ++k)
    if (!(rep.per_epoch_ratios[k] <= Scalar(rep.acceptance_bound)))
      rep.passed = false;
  return rep;
}

// ---------------------------------------------------------------------------
// Oracle complexity

template <typename Scalar>
struct ComplexityAudit {
  double epsilon = 0;
  std::uint64_t epoch_cost = 0;  // n + 2(K - 1)
  std::uint64_t predicted_epochs = 0;
  std::uint64_t predicted_calls = 0;
  std::optional<std::uint64_t> actual_calls;
  /// epochs_completed * (n + 2(K - 1)) against the counter.
  std::uint64_t formula_total = 0;
  std::uint64_t counted_total = 0;
  bool reachable() const { return actual_calls.has_value(); }
  double ratio() const {
    return actual_calls ? static_cast<double>(*actual_calls) /
                              static_cast<double>(predicted_calls)
                        : std::numeric_limits<double>::infinity();
  }
};

/// Compares the first checkpoint with residual_sq <= eps^2 against
/// (n + 2(ceil(10 ell/mu) - 1)) * ceil(log2(|F(z^0)|^2 / eps^2)).
template <typename Scalar>
ComplexityAudit<Scalar> complexity_audit(const RunRecord<Scalar>& record,
                                         const FiniteSumProblem<Scalar>& problem,
                                         double epsilon) {
  require(epsilon > 0, "complexity_audit: epsilon must be positive");
  require(record.config.method == Method::sarah,
          "complexity_audit: record must come from SARAH");
  require(!record.checkpoints.empty(), "complexity_audit: empty record");
  ComplexityAudit<Scalar> a;
  a.epsilon = epsilon;
  const std::uint64_t K_theorem =
      theorem_inner_length(problem.ell(), problem.mu());
  a.epoch_cost = problem.n() + 2 * (K_theorem - 1);
  const double target = epsilon * epsilon;
  const double r0 = static_cast<double>(record.checkpoints.front().residual_sq);
  const double halvings = std::ceil(std::log2(r0 / target));
  a.predicted_epochs = halvings > 0 ? static_cast<std::uint64_t>(halvings) : 0;
  a.predicted_calls = a.epoch_cost * a.predicted_epochs;
  for (const auto& cp : record.checkpoints)
    if (static_cast<double>(cp.residual_sq) <= target) {
      a.actual_calls = cp.oracle_calls;
      break;
    }
  a.formula_total = record.epochs_completed *
                    (problem.n() + 2 * (record.config.inner_K - 1));
  a.counted_total = record.oracle.component_calls;
  return a;
}

}  // namespace sarahvi

#endif
