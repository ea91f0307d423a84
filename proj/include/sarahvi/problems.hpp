#ifndef SARAHVI_PROBLEMS_HPP
#define SARAHVI_PROBLEMS_HPP

#include "sarahvi/random.hpp"
#include "sarahvi/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <type_traits>
#include <vector>

namespace sarahvi {

/// One summand F_i of a finite-sum operator.
template <typename Scalar>
class ComponentOperator {
 public:
  virtual ~ComponentOperator() = default;

  virtual Eigen::Index dimension() const = 0;

  /// Writes F_i(z) into `out` (resized as needed). `z` and `out` must not
  /// alias.
  virtual void apply(const Vector<Scalar>& z, Vector<Scalar>& out) const = 0;
};

/// Component of the regularized bilinear game
///   g_i(x, y) = x^T A_i y + a_i^T x + b_i^T y + lambda/2 |x|^2 - lambda/2 |y|^2,
/// viewed as the operator F_i(x, y) = (A_i y + a_i + lambda x,
///                                     lambda y - A_i^T x - b_i).
template <typename Scalar>
class BilinearComponent final : public ComponentOperator<Scalar> {
 public:
  BilinearComponent(Matrix<Scalar> A, Vector<Scalar> a, Vector<Scalar> b,
                    Scalar lambda)
      : A_(std::move(A)), a_(std::move(a)), b_(std::move(b)), lambda_(lambda) {
    require(lambda_ > Scalar(0), "bilinear component: lambda must be > 0");
    require(A_.rows() == A_.cols(), "bilinear component: A must be square");
    require(a_.size() == A_.rows() && b_.size() == A_.rows(),
            "bilinear component: a, b must match the size of A");
  }

  Eigen::Index dimension() const override { return 2 * A_.rows(); }
  Eigen::Index half_dimension() const { return A_.rows(); }

  void apply(const Vector<Scalar>& z, Vector<Scalar>& out) const override {
    const Eigen::Index d = A_.rows();
    out.resize(2 * d);
    const auto x = z.head(d);
    const auto y = z.tail(d);
    out.head(d).noalias() = A_ * y;
    out.head(d) += a_ + lambda_ * x;
    out.tail(d).noalias() = -(A_.transpose() * x);
    out.tail(d) += lambda_ * y - b_;
  }

  const Matrix<Scalar>& A() const { return A_; }
  const Vector<Scalar>& a() const { return a_; }
  const Vector<Scalar>& b() const { return b_; }
  Scalar lambda() const { return lambda_; }

 private:
  Matrix<Scalar> A_;
  Vector<Scalar> a_;
  Vector<Scalar> b_;
  Scalar lambda_;
};

/// Parameters of a random bilinear instance.
///
/// Each A_i is drawn as G + heterogeneity * E_i with G and E_i i.i.d.
/// standard normal, then all A_i are scaled by one common factor so that
/// |mean_i A_i|_2^2 / lambda equals target_ell. The a_i, b_i are i.i.d.
/// standard normal.
struct GeneratorSpec {
  std::size_t n = 10;
  std::size_t d = 100;
  double lambda = 1.0;
  double target_ell = 1e3;
  std::uint64_t seed = 0;
  double heterogeneity = 0.5;
};

/// F = (1/n) sum_i F_i together with its constants. Immutable after
/// construction and safe to share between threads.
template <typename Scalar>
class FiniteSumProblem {
 public:
  using ComponentPtr = std::shared_ptr<const ComponentOperator<Scalar>>;

  FiniteSumProblem(std::vector<ComponentPtr> components, Scalar ell, Scalar mu,
                   std::optional<Point<Scalar>> exact_solution = std::nullopt,
                   std::optional<GeneratorSpec> origin = std::nullopt)
      : components_(std::move(components)),
        ell_(ell),
        mu_(mu),
        exact_solution_(std::move(exact_solution)),
        origin_(origin) {
    require(!components_.empty(), "problem needs at least one component");
    for (const auto& c : components_)
      require(c != nullptr, "problem component is null");
    dimension_ = components_.front()->dimension();
    require(dimension_ > 0, "problem dimension must be positive");
    for (const auto& c : components_)
      require(c->dimension() == dimension_,
              "all components must share one dimension");
    require(mu_ > Scalar(0), "mu must be positive");
    require(ell_ >= mu_, "ell must be at least mu");
    if (exact_solution_)
      require(exact_solution_->size() == dimension_,
              "exact solution has the wrong dimension");
  }

  std::size_t n() const { return components_.size(); }
  Eigen::Index dimension() const { return dimension_; }
  Scalar ell() const { return ell_; }
  Scalar mu() const { return mu_; }
  const std::optional<Point<Scalar>>& exact_solution() const {
    return exact_solution_;
  }
  const std::optional<GeneratorSpec>& origin() const { return origin_; }

  const ComponentOperator<Scalar>& component(std::size_t i) const {
    return *components_[i];
  }
  const std::vector<ComponentPtr>& components() const { return components_; }

  /// Non-null iff every component is bilinear.
  std::vector<const BilinearComponent<Scalar>*> bilinear_components() const {
    std::vector<const BilinearComponent<Scalar>*> out;
    out.reserve(components_.size());
    for (const auto& c : components_) {
      const auto* b = dynamic_cast<const BilinearComponent<Scalar>*>(c.get());
      if (b == nullptr) return {};
      out.push_back(b);
    }
    return out;
  }

  bool is_bilinear() const { return !bilinear_components().empty(); }

 private:
  std::vector<ComponentPtr> components_;
  Eigen::Index dimension_ = 0;
  Scalar ell_;
  Scalar mu_;
  std::optional<Point<Scalar>> exact_solution_;
  std::optional<GeneratorSpec> origin_;
};

namespace detail {

template <typename Scalar>
void check_point(const FiniteSumProblem<Scalar>& problem,
                 const Vector<Scalar>& z, const char* what) {
  if (z.size() != problem.dimension())
    throw DimensionError(what, problem.dimension(), z.size());
}

}  // namespace detail

/// out = F_i(z); charges one component call.
template <typename Scalar>
void eval_component(const FiniteSumProblem<Scalar>& problem, std::size_t i,
                    const std::type_identity_t<Vector<Scalar>>& z, Vector<Scalar>& out,
                    OracleCounter& counter) {
  if (i >= problem.n())
    throw std::out_of_range("component index " + std::to_string(i) +
                            " out of range for n = " +
                            std::to_string(problem.n()));
  detail::check_point(problem, z, "eval_component");
  problem.component(i).apply(z, out);
  ++counter.component_calls;
}

template <typename Scalar>
Point<Scalar> eval_component(const FiniteSumProblem<Scalar>& problem,
                             std::size_t i, const std::type_identity_t<Vector<Scalar>>& z,
                             OracleCounter& counter) {
  Point<Scalar> out;
  eval_component(problem, i, z, out, counter);
  return out;
}

namespace detail {

template <typename Scalar>
void full_operator(const FiniteSumProblem<Scalar>& problem,
                   const Vector<Scalar>& z, Vector<Scalar>& out) {
  Vector<Scalar> term;
  out.setZero(problem.dimension());
  for (std::size_t i = 0; i < problem.n(); ++i) {
    problem.component(i).apply(z, term);
    out += term;
  }
  out /= static_cast<Scalar>(problem.n());
}

}  // namespace detail

/// out = F(z) = (1/n) sum_i F_i(z); charges n component calls.
template <typename Scalar>
void eval_full(const FiniteSumProblem<Scalar>& problem,
               const std::type_identity_t<Vector<Scalar>>& z, Vector<Scalar>& out,
               OracleCounter& counter) {
  detail::check_point(problem, z, "eval_full");
  detail::full_operator(problem, z, out);
  counter.component_calls += problem.n();
  ++counter.full_passes;
}

template <typename Scalar>
Point<Scalar> eval_full(const FiniteSumProblem<Scalar>& problem,
                        const std::type_identity_t<Vector<Scalar>>& z, OracleCounter& counter) {
  Point<Scalar> out;
  eval_full(problem, z, out, counter);
  return out;
}

/// F(z) for metrics and diagnostics. Not charged to any oracle counter.
template <typename Scalar>
Point<Scalar> residual(const FiniteSumProblem<Scalar>& problem,
                       const std::type_identity_t<Vector<Scalar>>& z) {
  detail::check_point(problem, z, "residual");
  Point<Scalar> out;
  detail::full_operator(problem, z, out);
  return out;
}

template <typename Scalar>
Scalar residual_sq(const FiniteSumProblem<Scalar>& problem,
                   const std::type_identity_t<Vector<Scalar>>& z) {
  return residual(problem, z).squaredNorm();
}

// ---------------------------------------------------------------------------
// Spectral norm

/// Raised when power iteration hits its iteration cap.
class SpectralNormError : public std::runtime_error {
 public:
  SpectralNormError(double last_estimate, double gap, std::size_t iterations)
      : std::runtime_error("spectral_norm: no convergence after " +
                           std::to_string(iterations) +
                           " iterations (estimate " +
                           std::to_string(last_estimate) + ", relative gap " +
                           std::to_string(gap) + ")"),
        last_estimate_(last_estimate),
        gap_(gap) {}

  double last_estimate() const { return last_estimate_; }
  double gap() const { return gap_; }

 private:
  double last_estimate_;
  double gap_;
};

/// |M|_2 by power iteration on M^T M from the normalized all-ones vector.
/// Stops once successive estimates of |M|_2 agree to relative `tol`.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& M,
                                       typename Derived::Scalar tol = 1e-6,
                                       std::size_t max_iterations = 100000) {
  using Scalar = typename Derived::Scalar;
  require(tol > Scalar(0), "spectral_norm: tol must be positive");
  require(M.size() > 0, "spectral_norm: empty matrix");
  const Scalar scale = M.cwiseAbs().maxCoeff();
  require(scale > Scalar(0), "spectral_norm: matrix is zero");

  // Work on M / max|M_ij| to keep M^T M away from overflow.
  const Matrix<Scalar> W = M / scale;
  Vector<Scalar> v = Vector<Scalar>::Ones(W.cols()).normalized();
  Vector<Scalar> Wv(W.rows());
  Scalar estimate = 0;
  Scalar gap = std::numeric_limits<Scalar>::infinity();
  for (std::size_t it = 0; it < max_iterations; ++it) {
    Wv.noalias() = W * v;
    const Scalar next = Wv.norm();
    if (next == Scalar(0)) {
      // Start vector in the null space; the top singular value is still
      // positive, so restart from a deterministic alternative.
      v = Vector<Scalar>::LinSpaced(W.cols(), 1, Scalar(W.cols())).normalized();
      continue;
    }
    v.noalias() = W.transpose() * Wv;
    v /= v.norm();
    gap = std::abs(next - estimate) / next;
    estimate = next;
    if (gap <= tol * Scalar(0.1)) return estimate * scale;
  }
  throw SpectralNormError(static_cast<double>(estimate * scale),
                          static_cast<double>(gap), max_iterations);
}

// ---------------------------------------------------------------------------
// Exact solution

template <typename Scalar>
struct BilinearAverage {
  Matrix<Scalar> A;
  Vector<Scalar> a;
  Vector<Scalar> b;
  Scalar lambda;
};

template <typename Scalar>
BilinearAverage<Scalar> average_bilinear(
    const std::vector<const BilinearComponent<Scalar>*>& comps) {
  require(!comps.empty(), "average_bilinear: problem is not bilinear");
  const Eigen::Index d = comps.front()->half_dimension();
  BilinearAverage<Scalar> avg{Matrix<Scalar>::Zero(d, d),
                              Vector<Scalar>::Zero(d), Vector<Scalar>::Zero(d),
                              comps.front()->lambda()};
  for (const auto* c : comps) {
    require(c->lambda() == avg.lambda,
            "bilinear components must share one lambda");
    avg.A += c->A();
    avg.a += c->a();
    avg.b += c->b();
  }
  const auto n = static_cast<Scalar>(comps.size());
  avg.A /= n;
  avg.a /= n;
  avg.b /= n;
  return avg;
}

/// The 2d x 2d matrix of the affine map z -> F(z) and its offset F(0).
template <typename Scalar>
std::pair<Matrix<Scalar>, Vector<Scalar>> affine_form(
    const BilinearAverage<Scalar>& avg) {
  const Eigen::Index d = avg.A.rows();
  Matrix<Scalar> M(2 * d, 2 * d);
  M.topLeftCorner(d, d) = avg.lambda * Matrix<Scalar>::Identity(d, d);
  M.topRightCorner(d, d) = avg.A;
  M.bottomLeftCorner(d, d) = -avg.A.transpose();
  M.bottomRightCorner(d, d) = avg.lambda * Matrix<Scalar>::Identity(d, d);
  Vector<Scalar> c(2 * d);
  c << avg.a, -avg.b;
  return {std::move(M), std::move(c)};
}

/// Solves F(z) = 0 for a bilinear problem by LU with partial pivoting on
/// [[lambda I, A], [-A^T, lambda I]] z = -(a, -b), using the averaged data.
template <typename Scalar>
Point<Scalar> solve_exact(const FiniteSumProblem<Scalar>& problem) {
  const auto comps = problem.bilinear_components();
  if (comps.empty())
    throw std::invalid_argument("solve_exact: problem is not bilinear-affine");
  const auto [M, c] = affine_form(average_bilinear(comps));
  const Eigen::PartialPivLU<Matrix<Scalar>> lu(M);
  if (!(lu.rcond() > std::numeric_limits<Scalar>::epsilon()))
    throw std::runtime_error("solve_exact: system is numerically singular");
  Point<Scalar> z = lu.solve(-c);
  // One step of iterative refinement against the operator itself.
  z -= lu.solve(residual(problem, z));

  const Point<Scalar> origin = Point<Scalar>::Zero(z.size());
  const Scalar tol =
      Scalar(1e-9) * std::max(Scalar(1), residual(problem, origin).norm());
  const Scalar res = residual(problem, z).norm();
  if (!(res <= tol))
    throw std::runtime_error("solve_exact: residual " + std::to_string(res) +
                             " above tolerance " + std::to_string(tol));
  return z;
}

/// Builds a problem from bilinear components with mu = lambda and the exact
/// solution attached.
template <typename Scalar>
FiniteSumProblem<Scalar> make_bilinear_problem(
    std::vector<std::shared_ptr<const BilinearComponent<Scalar>>> comps,
    Scalar ell, std::optional<GeneratorSpec> origin = std::nullopt) {
  require(!comps.empty(), "problem needs at least one component");
  const Scalar mu = comps.front()->lambda();
  std::vector<typename FiniteSumProblem<Scalar>::ComponentPtr> base(
      comps.begin(), comps.end());
  FiniteSumProblem<Scalar> draft(base, ell, mu);
  auto solution = solve_exact(draft);
  return FiniteSumProblem<Scalar>(std::move(base), ell, mu,
                                  std::move(solution), origin);
}

/// ell = |mean_i A_i|_2^2 / lambda for a bilinear problem.
template <typename Scalar>
Scalar aggregate_ell(
    const std::vector<const BilinearComponent<Scalar>*>& comps,
    Scalar tol = Scalar(1e-12)) {
  const auto avg = average_bilinear(comps);
  const Scalar norm = spectral_norm(avg.A, tol);
  return norm * norm / avg.lambda;
}

// ---------------------------------------------------------------------------
// Generator

/// Draws a bilinear instance. Pure function of `spec`.
template <typename Scalar = double>
FiniteSumProblem<Scalar> generate_bilinear(const GeneratorSpec& spec,
                                           std::size_t max_attempts = 8) {
  require(spec.n >= 1, "generator: n must be >= 1");
  require(spec.d >= 1, "generator: d must be >= 1");
  require(spec.lambda > 0, "generator: lambda must be > 0");
  require(spec.target_ell >= spec.lambda,
          "generator: target_ell must be >= lambda");
  require(spec.heterogeneity >= 0, "generator: heterogeneity must be >= 0");

  const auto d = static_cast<Eigen::Index>(spec.d);
  const auto lambda = static_cast<Scalar>(spec.lambda);
  auto fill = [](CounterRng& rng, auto& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        m(i, j) = static_cast<Scalar>(rng.normal());
  };

  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    const std::uint64_t seed = attempt == 0 ? spec.seed
                                            : mix64(spec.seed ^ mix64(attempt));
    CounterRng base_rng(seed, 0);
    Matrix<Scalar> base(d, d);
    fill(base_rng, base);

    std::vector<Matrix<Scalar>> As(spec.n, base);
    std::vector<Vector<Scalar>> as(spec.n, Vector<Scalar>(d));
    std::vector<Vector<Scalar>> bs(spec.n, Vector<Scalar>(d));
    Matrix<Scalar> noise(d, d);
    for (std::size_t i = 0; i < spec.n; ++i) {
      CounterRng rng(seed, 1 + 3 * i);
      fill(rng, noise);
      As[i] += static_cast<Scalar>(spec.heterogeneity) * noise;
      CounterRng rng_a(seed, 2 + 3 * i);
      fill(rng_a, as[i]);
      CounterRng rng_b(seed, 3 + 3 * i);
      fill(rng_b, bs[i]);
    }

    Matrix<Scalar> mean = Matrix<Scalar>::Zero(d, d);
    for (const auto& A : As) mean += A;
    mean /= static_cast<Scalar>(spec.n);
    if (!mean.allFinite() || mean.cwiseAbs().maxCoeff() == Scalar(0)) continue;

    const Scalar norm = spectral_norm(mean, Scalar(1e-12));
    const Scalar factor =
        std::sqrt(static_cast<Scalar>(spec.target_ell) * lambda) / norm;

    std::vector<std::shared_ptr<const BilinearComponent<Scalar>>> comps;
    comps.reserve(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i)
      comps.push_back(std::make_shared<const BilinearComponent<Scalar>>(
          factor * As[i], std::move(as[i]), std::move(bs[i]), lambda));

    std::vector<const BilinearComponent<Scalar>*> raw;
    for (const auto& c : comps) raw.push_back(c.get());
    const Scalar ell = std::max(aggregate_ell(raw), lambda);
    return make_bilinear_problem(std::move(comps), ell, spec);
  }
  throw std::runtime_error("generator: could not draw a nonzero matrix after " +
                           std::to_string(max_attempts) + " attempts");
}

// ---------------------------------------------------------------------------
// Assumption checkers

struct AssumptionReport {
  std::size_t trials = 0;
  std::size_t violations = 0;
  /// Largest (cocoercivity) or smallest (monotonicity) observed ratio.
  double worst_ratio = 0;
  double min_ratio = std::numeric_limits<double>::infinity();
  double max_ratio = -std::numeric_limits<double>::infinity();
};

namespace detail {

inline constexpr std::array<double, 3> kPairScales{0.1, 1.0, 10.0};
inline constexpr double kAssumptionSlack = 1e-9;

template <typename Scalar>
std::pair<Point<Scalar>, Point<Scalar>> sample_pair(Eigen::Index dim,
                                                    std::uint64_t seed,
                                                    std::size_t trial) {
  const auto scale = static_cast<Scalar>(kPairScales[trial % 3]);
  CounterRng rng(seed, trial);
  Point<Scalar> u(dim), v(dim);
  for (Eigen::Index j = 0; j < dim; ++j)
    u[j] = scale * static_cast<Scalar>(rng.normal());
  for (Eigen::Index j = 0; j < dim; ++j)
    v[j] = scale * static_cast<Scalar>(rng.normal());
  return {std::move(u), std::move(v)};
}

inline void note_ratio(AssumptionReport& r, double ratio) {
  r.min_ratio = std::min(r.min_ratio, ratio);
  r.max_ratio = std::max(r.max_ratio, ratio);
}

}  // namespace detail

/// Samples pairs (u, v) and tests |F_i(u)-F_i(v)|^2 <= ell <F_i(u)-F_i(v), u-v>.
/// worst_ratio is the largest lhs / (ell * inner product) seen; a pair with a
/// non-positive inner product and nonzero lhs counts as a violation with
/// ratio +inf.
template <typename Scalar>
AssumptionReport check_cocoercivity(const FiniteSumProblem<Scalar>& problem,
                                     std::size_t i, Scalar ell,
                                     std::size_t trials, std::uint64_t seed) {
  require(trials >= 1, "check_cocoercivity: trials must be >= 1");
  require(ell > Scalar(0), "check_cocoercivity: ell must be positive");
  if (i >= problem.n())
    throw std::out_of_range("check_cocoercivity: component index out of range");

  AssumptionReport report;
  report.trials = trials;
  report.worst_ratio = 0;
  Point<Scalar> fu, fv;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto [u, v] =
        detail::sample_pair<Scalar>(problem.dimension(), seed, t);
    problem.component(i).apply(u, fu);
    problem.component(i).apply(v, fv);
    const Point<Scalar> df = fu - fv;
    const Scalar lhs = df.squaredNorm();
    const Scalar inner = df.dot(u - v);
    if (lhs == Scalar(0)) continue;
    if (!(inner > Scalar(0))) {
      ++report.violations;
      report.worst_ratio = std::numeric_limits<double>::infinity();
      detail::note_ratio(report, std::numeric_limits<double>::infinity());
      continue;
    }
    const double ratio = static_cast<double>(lhs / (ell * inner));
    detail::note_ratio(report, ratio);
    report.worst_ratio = std::max(report.worst_ratio, ratio);
    if (ratio > 1.0 + detail::kAssumptionSlack) ++report.violations;
  }
  return report;
}

/// Samples pairs and tests <F(u)-F(v), u-v> >= mu |u-v|^2 on the full
/// operator. worst_ratio is the smallest <F(u)-F(v), u-v> / (mu |u-v|^2).
template <typename Scalar>
AssumptionReport check_strong_monotonicity(
    const FiniteSumProblem<Scalar>& problem, Scalar mu, std::size_t trials,
    std::uint64_t seed) {
  require(trials >= 1, "check_strong_monotonicity: trials must be >= 1");
  require(mu > Scalar(0), "check_strong_monotonicity: mu must be positive");

  AssumptionReport report;
  report.trials = trials;
  report.worst_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < trials; ++t) {
    const auto [u, v] =
        detail::sample_pair<Scalar>(problem.dimension(), seed, t);
    const Point<Scalar> h = u - v;
    const Scalar h_sq = h.squaredNorm();
    if (h_sq == Scalar(0)) continue;
    const Scalar inner = (residual(problem, u) - residual(problem, v)).dot(h);
    const double ratio = static_cast<double>(inner / (mu * h_sq));
    detail::note_ratio(report, ratio);
    report.worst_ratio = std::min(report.worst_ratio, ratio);
    if (ratio < 1.0 - detail::kAssumptionSlack) ++report.violations;
  }
  return report;
}

}  // namespace sarahvi

#endif
