#include "sarahvi/problems.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

using namespace sarahvi;
using testing::small_spec;

namespace {

using Comp = BilinearComponent<double>;

std::shared_ptr<const Comp> scalar_comp(double A, double a, double b,
                                        double lambda = 1.0) {
  return std::make_shared<Comp>(Eigen::MatrixXd::Constant(1, 1, A),
                                Eigen::VectorXd::Constant(1, a),
                                Eigen::VectorXd::Constant(1, b), lambda);
}

Point<double> vec(std::initializer_list<double> xs) {
  Point<double> v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v(k++) = x;
  return v;
}

bool bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

TEST_CASE("bilinear component on hand-worked points") {
  auto p = make_bilinear_problem<double>({scalar_comp(0, 1, -1)}, 1.0);
  OracleCounter c;
  CHECK(eval_component(p, 0, vec({0, 0}), c).isApprox(vec({1, 1})));
  CHECK(c.component_calls == 1);

  auto q = make_bilinear_problem<double>({scalar_comp(2, 0, 0)}, 4.0);
  CHECK(eval_component(q, 0, vec({1, 1}), c).isApprox(vec({3, -1})));
  CHECK(c.component_calls == 2);
}

TEST_CASE("component evaluation matches a loop-based oracle") {
  const auto p = generate_bilinear(small_spec(3, 3, 10, 42));
  const auto comps = p.bilinear_components();
  REQUIRE(comps.size() == 3);
  CounterRng rng(42, 99);
  std::vector<double> z(6);
  for (auto& x : z) x = rng.normal();
  const Point<double> zz = Eigen::Map<const Eigen::VectorXd>(z.data(), 6);
  for (std::size_t i = 0; i < 3; ++i) {
    OracleCounter c;
    const auto got = eval_component(p, i, zz, c);
    const auto want = testing::naive_bilinear(*comps[i], z);
    for (int k = 0; k < 6; ++k) CHECK(std::abs(got(k) - want[k]) <= 1e-12);
  }
}

TEST_CASE("component evaluation rejects bad input") {
  const auto p = generate_bilinear(small_spec());
  OracleCounter c;
  const Point<double> zero = Point<double>::Zero(p.dimension());
  const Point<double> short_point = Point<double>::Zero(3);
  CHECK_THROWS_AS(eval_component(p, p.n(), zero, c), std::out_of_range);
  CHECK_THROWS_AS(eval_component(p, 0, short_point, c), DimensionError);
  CHECK_THROWS_AS(eval_full(p, short_point, c), DimensionError);
  CHECK(c.component_calls == 0);
}

TEST_CASE("full operator is the mean of the components") {
  auto p = make_bilinear_problem<double>(
      {scalar_comp(0, 2, 0), scalar_comp(0, 0, 0)}, 1.0);
  OracleCounter c;
  CHECK(eval_full(p, vec({0, 0}), c).isApprox(vec({1, 0})));
  CHECK(c.component_calls == 2);
  CHECK(c.full_passes == 1);

  const auto one = generate_bilinear(small_spec(1, 4, 10, 5));
  const Point<double> z = Point<double>::LinSpaced(8, -1, 1);
  CHECK(eval_full(one, z, c) == eval_component(one, 0, z, c));

  GeneratorSpec g = small_spec(10, 100, 1e3, 7);
  const auto big = generate_bilinear(g);
  const Point<double> zb = Point<double>::LinSpaced(200, -2, 3);
  const auto full = eval_full(big, zb, c);
  // Reverse-order summation as the independent reference.
  Point<double> ref = Point<double>::Zero(200);
  for (std::size_t i = big.n(); i-- > 0;) ref += eval_component(big, i, zb, c);
  ref /= 10.0;
  CHECK((full - ref).norm() <= 1e-12 * std::max(1.0, ref.norm()));
}

TEST_CASE("spectral norm") {
  CHECK(spectral_norm(Eigen::Vector2d(3, 4).asDiagonal().toDenseMatrix()) ==
        doctest::Approx(4).epsilon(1e-6));
  CHECK(spectral_norm(Eigen::MatrixXd::Identity(7, 7)) == doctest::Approx(1));

  Eigen::Matrix2d M;
  M << 1, 2, 3, 4;
  // M^T M = [[10, 14], [14, 20]]: largest eigenvalue 15 + sqrt(221).
  const double closed_form = std::sqrt(15 + std::sqrt(221.0));
  CHECK(closed_form == doctest::Approx(5.4650).epsilon(1e-4));
  CHECK(spectral_norm(M, 1e-10) == doctest::Approx(closed_form).epsilon(1e-9));

  // Start vector orthogonal to the top singular direction.
  Eigen::Matrix2d N;
  N << 1, -1, 1, -1;
  CHECK(spectral_norm(N) == doctest::Approx(2).epsilon(1e-6));
  CHECK_THROWS(spectral_norm(Eigen::MatrixXd::Zero(2, 2)));
  CHECK_THROWS(spectral_norm(M, -1.0));

  // One iteration can never confirm convergence.
  Eigen::MatrixXd R = Eigen::MatrixXd::Random(30, 30);
  CHECK_THROWS_AS(spectral_norm(R, 1e-15, 1), SpectralNormError);
}

TEST_CASE("spectral norm scales with |c|") {
  const double tol = 1e-8;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CounterRng rng(seed, 0);
    const auto rows = 1 + static_cast<Eigen::Index>(rng.index(12));
    const auto cols = 1 + static_cast<Eigen::Index>(rng.index(12));
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index k = 0; k < M.size(); ++k) M.data()[k] = rng.normal();
    const double c = (rng.uniform() - 0.5) * 1e3;
    const double base = spectral_norm(M, tol);
    const double scaled = spectral_norm((c * M).eval(), tol);
    CHECK(std::abs(scaled - std::abs(c) * base) <= 2 * tol * std::abs(c) * base);
    // Cross-check against an SVD.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    CHECK(base == doctest::Approx(svd.singularValues()(0)).epsilon(1e-6));
  }
}

TEST_CASE("exact solution on hand-solved systems") {
  auto p = make_bilinear_problem<double>({scalar_comp(0, 1, -1)}, 1.0);
  CHECK(p.exact_solution()->isApprox(vec({-1, -1})));
  auto q = make_bilinear_problem<double>({scalar_comp(1, 1, 0)}, 1.0);
  CHECK(q.exact_solution()->isApprox(vec({-0.5, -0.5})));
}

TEST_CASE("exact solution agrees with Gaussian elimination") {
  const auto p = generate_bilinear(small_spec(4, 5, 30, 3));
  const auto comps = p.bilinear_components();
  const std::size_t d = 5;
  // Assemble the averaged system independently from the component data.
  std::vector<std::vector<double>> M(2 * d, std::vector<double>(2 * d, 0.0));
  std::vector<double> rhs(2 * d, 0.0);
  const double n = static_cast<double>(comps.size());
  for (const auto* c : comps)
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t k = 0; k < d; ++k) {
        const double a = c->A()(static_cast<Eigen::Index>(r),
                                static_cast<Eigen::Index>(k)) / n;
        M[r][d + k] += a;
        M[d + k][r] -= a;
      }
      rhs[r] -= c->a()(static_cast<Eigen::Index>(r)) / n;
      rhs[d + r] += c->b()(static_cast<Eigen::Index>(r)) / n;
    }
  for (std::size_t r = 0; r < 2 * d; ++r) M[r][r] = 1.0;
  const auto x = testing::gauss_solve(M, rhs);
  const auto& z = *p.exact_solution();
  for (std::size_t k = 0; k < 2 * d; ++k)
    CHECK(std::abs(z(static_cast<Eigen::Index>(k)) - x[k]) <= 1e-10);
  CHECK(residual(p, z).norm() <= 1e-9);
}

TEST_CASE("generator hits the target ell and is deterministic") {
  for (double target : {1e2, 1e3}) {
    auto g = small_spec(10, 100, target, 11);
    const auto p = generate_bilinear(g);
    const auto avg = average_bilinear(p.bilinear_components());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(avg.A);
    const double s = svd.singularValues()(0);
    CHECK(s * s >= 0.99 * target);
    CHECK(s * s <= 1.01 * target);
    CHECK(p.ell() == doctest::Approx(target).epsilon(0.01));
    CHECK(p.mu() == 1.0);
    CHECK(p.n() == 10);
    CHECK(p.dimension() == 200);
  }

  const auto p1 = generate_bilinear(GeneratorSpec{1, 1, 1.0, 1.0, 0, 0.5});
  CHECK(std::abs(std::abs(p1.bilinear_components()[0]->A()(0, 0)) - 1) <= 1e-9);

  const auto a = generate_bilinear(small_spec(5, 8, 50, 21));
  const auto b = generate_bilinear(small_spec(5, 8, 50, 21));
  const auto c = generate_bilinear(small_spec(5, 8, 50, 22));
  const auto ca = a.bilinear_components(), cb = b.bilinear_components();
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(bit_equal(ca[i]->A(), cb[i]->A()));
    CHECK(bit_equal(ca[i]->a(), cb[i]->a()));
    CHECK(bit_equal(ca[i]->b(), cb[i]->b()));
  }
  CHECK(!bit_equal(ca[0]->A(), c.bilinear_components()[0]->A()));
  CHECK(bit_equal(*a.exact_solution(), *b.exact_solution()));

  CHECK_THROWS(generate_bilinear(GeneratorSpec{0, 3, 1.0, 10.0, 0, 0.5}));
  CHECK_THROWS(generate_bilinear(GeneratorSpec{2, 3, 1.0, 0.5, 0, 0.5}));
}

TEST_CASE("problem construction checks its constants") {
  std::vector<FiniteSumProblem<double>::ComponentPtr> comps{scalar_comp(1, 0, 0)};
  CHECK_THROWS(FiniteSumProblem<double>(comps, 1.0, 0.0));
  CHECK_THROWS(FiniteSumProblem<double>(comps, 0.5, 1.0));
  CHECK_THROWS(FiniteSumProblem<double>({}, 1.0, 1.0));
  comps.push_back(std::make_shared<testing::AffineDiagonal>(1.0, Eigen::VectorXd::Zero(3)));
  CHECK_THROWS(FiniteSumProblem<double>(comps, 1.0, 1.0));
  const auto id = testing::identity_problem();
  CHECK(!id.is_bilinear());
  CHECK_THROWS_AS(solve_exact(id), std::invalid_argument);
}

TEST_CASE("cocoercivity checker") {
  // lambda = 1 and A = a = b = 0 is the identity map.
  auto id = make_bilinear_problem<double>({scalar_comp(0, 0, 0)}, 1.0);
  const auto r = check_cocoercivity(id, 0, 1.0, 500, 4);
  CHECK(r.violations == 0);
  CHECK(r.worst_ratio == doctest::Approx(1.0).epsilon(1e-12));

  // Too small an ell is caught on every pair.
  const auto tight = check_cocoercivity(id, 0, 0.5, 100, 4);
  CHECK(tight.violations == 100);

  // Almost a pure rotation: far from cocoercive at ell = 1.
  auto rot = std::make_shared<Comp>(Eigen::MatrixXd::Constant(1, 1, 1.0),
                                    Eigen::VectorXd::Zero(1),
                                    Eigen::VectorXd::Zero(1), 1e-300);
  FiniteSumProblem<double> skew({rot}, 1.0, 1e-300);
  const auto rs = check_cocoercivity(skew, 0, 1.0, 10, 1);
  CHECK(rs.violations > 0);

  const auto g = generate_bilinear(small_spec(10, 20, 100, 8));
  const auto gr = check_cocoercivity(g, 0, g.ell(), 1000, 1);
  CHECK(gr.trials == 1000);
  CHECK(std::isfinite(gr.worst_ratio));
  CHECK_THROWS_AS(check_cocoercivity(g, 10, g.ell(), 10, 1), std::out_of_range);
}

TEST_CASE("strong monotonicity holds with equality at lambda") {
  const auto id = testing::identity_problem(1, 3);
  const auto r = check_strong_monotonicity(id, 1.0, 200, 2);
  CHECK(r.violations == 0);
  CHECK(std::abs(r.min_ratio - 1) <= 1e-12);
  CHECK(std::abs(r.max_ratio - 1) <= 1e-12);

  for (double ell : {1e2, 1e3, 1e4}) {
    const auto p = generate_bilinear(small_spec(10, 30, ell, 17));
    const auto m = check_strong_monotonicity(p, p.mu(), 10000, 3);
    CHECK(m.violations == 0);
    CHECK(std::abs(m.min_ratio - 1) <= 1e-9);
    CHECK(std::abs(m.max_ratio - 1) <= 1e-9);
    const auto doubled = check_strong_monotonicity(p, 2 * p.mu(), 200, 3);
    CHECK(doubled.violations == 200);
  }
}
