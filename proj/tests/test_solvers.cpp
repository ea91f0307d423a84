#include "sarahvi/solvers.hpp"
#include "sarahvi/problem_io.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

using namespace sarahvi;
using testing::small_spec;

namespace {

SolverConfig<double> make_config(Method m, double gamma, std::uint64_t K,
                                 std::uint64_t S, std::uint64_t seed = 1) {
  SolverConfig<double> c;
  c.method = m;
  c.gamma = gamma;
  c.inner_K = K;
  c.outer_S = S;
  c.seed = seed;
  return c;
}

bool same_bits(const Point<double>& a, const Point<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

// Deterministic iteration z <- z - gamma F(z), recorded after every step.
std::vector<Point<double>> deterministic_path(const FiniteSumProblem<double>& p,
                                              double gamma, std::size_t steps,
                                              Point<double> z) {
  std::vector<Point<double>> path;
  for (std::size_t k = 0; k < steps; ++k) {
    z = z - gamma * residual(p, z);
    path.push_back(z);
  }
  return path;
}

}  // namespace

TEST_CASE("scalar identity: SARAH, SVRG and SGD reach (1/4, 1/4)") {
  const auto p = testing::identity_problem(1, 2);
  const Point<double> z0 = Point<double>::Ones(2);
  const auto sarah = run_sarah(p, make_config(Method::sarah, 0.5, 2, 1), z0);
  CHECK(sarah.final_point.isApprox(Point<double>::Constant(2, 0.25)));
  const auto svrg = run_svrg(p, make_config(Method::svrg, 0.5, 2, 1), z0);
  CHECK(svrg.final_point.isApprox(Point<double>::Constant(2, 0.25)));
  const auto sgd = run_sgd(p, make_config(Method::sgd, 0.5, 2, 1), z0);
  CHECK(sgd.final_point.isApprox(Point<double>::Constant(2, 0.25)));
  CHECK(sgd.oracle.component_calls == 2);
}

TEST_CASE("scalar identity follows (1 - gamma)^k to machine precision") {
  const auto p = testing::identity_problem();
  const Point<double> z0 = Point<double>::Constant(1, 1.0);
  for (double gamma : {0.1, 0.5, 0.9}) {
    auto cfg = make_config(Method::sarah, gamma, 7, 5);
    cfg.record_inner_norms = true;
    const auto r = run_sarah(p, cfg, z0);
    for (std::size_t s = 0; s < r.epoch_residual_sq.size(); ++s) {
      const double expect = std::pow(1 - gamma, 2.0 * 7 * static_cast<double>(s));
      CHECK(r.epoch_residual_sq[s] ==
            doctest::Approx(expect).epsilon(64 * 1e-16 * (s + 1)));
    }
    // |v^k|^2 at step k (global index j) is (1 - gamma)^{2j}.
    for (std::size_t j = 0; j < r.inner_norm_series.size(); ++j)
      CHECK(r.inner_norm_series[j] ==
            doctest::Approx(std::pow(1 - gamma, 2.0 * static_cast<double>(j)))
                .epsilon(1e-13));
  }
}

TEST_CASE("n = 1: SARAH, SVRG and the deterministic iteration agree bit for bit") {
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    auto g = small_spec(1, 5, 10, seed);
    const auto p = generate_bilinear(g);
    const double gamma = 1 / p.ell();
    const std::size_t K = 13, S = 4;
    const Point<double> z0 = Point<double>::LinSpaced(10, -1, 2);
    const auto det = deterministic_path(p, gamma, K * S, z0);

    std::vector<Point<double>> sarah_path;
    OracleCounter counter;
    Point<double> z = z0;
    for (std::size_t s = 0; s < S; ++s) {
      auto st = sarah_epoch(
          p, gamma, K, seed, s, z, counter,
          [&](std::uint64_t, const Point<double>& zk, const Point<double>&) {
            sarah_path.push_back(zk);
            return true;
          },
          [](std::uint64_t) { return true; });
      z = st.z;
    }
    REQUIRE(sarah_path.size() == det.size());
    std::size_t mismatches = 0;
    for (std::size_t k = 0; k < det.size(); ++k)
      mismatches += !same_bits(sarah_path[k], det[k]);
    CHECK(mismatches == 0);

    const auto sarah = run_sarah(p, make_config(Method::sarah, gamma, K, S, seed), z0);
    const auto svrg = run_svrg(p, make_config(Method::svrg, gamma, K, S, seed), z0);
    CHECK(same_bits(sarah.final_point, det.back()));
    // Both take K steps per epoch.
    CHECK(same_bits(svrg.final_point, det.back()));
  }
}

TEST_CASE("oracle accounting") {
  const auto p10 = generate_bilinear(small_spec(10, 3, 20, 1));
  const Point<double> z0 = Point<double>::Zero(p10.dimension());
  const auto sarah = run_sarah(p10, make_config(Method::sarah, 0.01, 10, 3), z0);
  CHECK(sarah.oracle.component_calls == 84);
  CHECK(sarah.oracle.full_passes == 3);
  CHECK(sarah.epochs_completed == 3);

  const auto p4 = generate_bilinear(small_spec(4, 3, 20, 1));
  const auto svrg = run_svrg(p4, make_config(Method::svrg, 0.01, 5, 2),
                             Point<double>::Zero(p4.dimension()));
  CHECK(svrg.oracle.component_calls == 28);

  const auto sgd = run_sgd(p10, make_config(Method::sgd, 0.001, 10, 10), z0);
  CHECK(sgd.oracle.component_calls == 100);

  // Randomized (n, K, S).
  for (std::uint64_t t = 0; t < 40; ++t) {
    CounterRng rng(777, t);
    const std::size_t n = 1 + rng.index(12);
    const std::uint64_t K = 1 + rng.index(30);
    const std::uint64_t S = 1 + rng.index(6);
    const auto p = generate_bilinear(small_spec(n, 2, 5, t));
    const Point<double> z = Point<double>::Zero(p.dimension());
    const auto r = run_sarah(p, make_config(Method::sarah, 0.05, K, S, t), z);
    CHECK(r.oracle.component_calls == S * (n + 2 * (K - 1)));
    const auto v = run_svrg(p, make_config(Method::svrg, 0.05, K, S, t), z);
    CHECK(v.oracle.component_calls == S * (n + 2 * K));
  }
}

TEST_CASE("budget stops a run before any oracle use would exceed it") {
  const auto p = generate_bilinear(small_spec(10, 3, 20, 2));
  const Point<double> z0 = Point<double>::Zero(p.dimension());
  for (Method m : {Method::sarah, Method::svrg, Method::sgd}) {
    for (std::uint64_t budget : {10, 11, 57, 100, 1001}) {
      auto cfg = make_config(m, 0.01, 10, 1000);
      cfg.max_oracle_calls = budget;
      cfg.checkpoint_every = 7;
      const auto r = run(p, cfg, z0);
      CHECK(r.oracle.component_calls <= budget);
      CHECK(r.oracle.component_calls + p.n() >= budget);  // within one pass
      CHECK(r.status == RunStatus::budget_exhausted);
      CHECK(r.checkpoints.back().oracle_calls == r.oracle.component_calls);
    }
  }
}

TEST_CASE("checkpoints land on the cadence and do not touch the counter") {
  const auto p = generate_bilinear(small_spec(5, 3, 20, 4));
  const Point<double> z0 = Point<double>::Zero(p.dimension());
  auto a = make_config(Method::sarah, 0.02, 20, 4, 9);
  a.checkpoint_every = 1;
  auto b = a;
  b.checkpoint_every = 13;
  const auto ra = run_sarah(p, a, z0);
  const auto rb = run_sarah(p, b, z0);
  CHECK(same_bits(ra.final_point, rb.final_point));
  CHECK(ra.oracle.component_calls == rb.oracle.component_calls);
  CHECK(rb.checkpoints.front().oracle_calls == 0);
  CHECK(rb.checkpoints.front().residual_sq == residual_sq(p, z0));
  for (std::size_t k = 1; k + 1 < rb.checkpoints.size(); ++k)
    CHECK(rb.checkpoints[k].oracle_calls > rb.checkpoints[k - 1].oracle_calls);
  CHECK(rb.checkpoints.back().oracle_calls == rb.oracle.component_calls);
  CHECK(std::abs(rb.checkpoints.back().dist_sq -
                 (rb.final_point - *p.exact_solution()).squaredNorm()) <= 1e-15);
  for (const auto& cp : rb.checkpoints) CHECK(cp.elapsed_s == 0.0);
}

TEST_CASE("replay reproduces records and spots a changed seed") {
  const auto p = generate_bilinear(small_spec(6, 4, 30, 5));
  const Point<double> z0 = Point<double>::Constant(p.dimension(), 0.3);
  for (Method m : {Method::sarah, Method::svrg, Method::sgd}) {
    auto cfg = make_config(m, 0.01, 15, 3, 21);
    cfg.checkpoint_every = 5;
    const auto r = run(p, cfg, z0);
    CHECK(replay_check(r, p).identical);
    auto tampered = r;
    tampered.config.seed = 22;
    const auto bad = replay_check(tampered, p);
    CHECK(!bad.identical);
    CHECK(bad.first_divergent_checkpoint.has_value());
  }
}

TEST_CASE("SGD with a constant step stalls in a neighbourhood") {
  const auto p = generate_bilinear(small_spec(10, 10, 100, 6));
  const Point<double> z0 = Point<double>::Zero(p.dimension());
  auto cfg = make_config(Method::sgd, 0.1 / p.ell(), 1000, 40, 3);
  cfg.checkpoint_every = 1000;
  const auto sgd = run_sgd(p, cfg, z0);
  const auto& cps = sgd.checkpoints;
  const double late = cps[cps.size() - 1].residual_sq;
  const double mid = cps[cps.size() / 2].residual_sq;
  CHECK(late > 1e-6 * cps.front().residual_sq);
  CHECK(late > 0.05 * mid);  // no longer decreasing geometrically

  auto s = make_config(Method::sarah, 1 / p.ell(), 100, 200, 3);
  s.max_oracle_calls = sgd.oracle.component_calls;
  const auto sarah = run_sarah(p, s, z0);
  CHECK(sarah.checkpoints.back().residual_sq < 1e-3 * late);
}

TEST_CASE("invalid configurations are rejected") {
  const auto p = generate_bilinear(small_spec(3, 2, 5, 1));
  const Point<double> z0 = Point<double>::Zero(p.dimension());
  CHECK_THROWS(run_sarah(p, make_config(Method::sarah, 0.1, 0, 1), z0));
  CHECK_THROWS(run_sarah(p, make_config(Method::sarah, 0.1, 1, 0), z0));
  CHECK_THROWS(run_sarah(p, make_config(Method::sarah, -0.1, 2, 1), z0));
  CHECK_THROWS(run_sarah(p, make_config(Method::svrg, 0.1, 2, 1), z0));
  CHECK_THROWS_AS(run_sarah(p, make_config(Method::sarah, 0.1, 2, 1),
                            Point<double>::Zero(3)),
                  DimensionError);
}

TEST_CASE("divergent and non-finite runs stop with a diagnostic status") {
  const auto p = generate_bilinear(small_spec(4, 3, 50, 2));
  const Point<double> z0 = Point<double>::Constant(p.dimension(), 1.0);
  const auto r = run_sgd(p, make_config(Method::sgd, 100.0, 50, 100), z0);
  CHECK(r.failed());
  CHECK(r.status == RunStatus::diverged);
  CHECK(r.oracle.component_calls < 5000);
}

TEST_CASE("contraction preset constants") {
  auto comp = [](double ell) {
    return FiniteSumProblem<double>(
        {std::make_shared<testing::AffineDiagonal>(1.0, Eigen::VectorXd::Zero(1))},
        ell, 1.0);
  };
  const auto c9 = theorem_preset(comp(9));
  CHECK(c9.gamma == doctest::Approx(2.0 / 81));
  CHECK(c9.inner_K == 90);
  CHECK(c9.method == Method::sarah);
  const auto c1 = theorem_preset(comp(1));
  CHECK(c1.gamma == doctest::Approx(2.0 / 9));
  CHECK(c1.inner_K == 10);
  const auto c3 = theorem_preset(comp(1e3));
  CHECK(c3.gamma == doctest::Approx(2.222e-4).epsilon(1e-3));
  CHECK(c3.inner_K == 10000);
  CHECK(c3.checkpoint_every == 1 + 2 * (10000 - 1));
}

TEST_CASE("run CSV") {
  const auto p = generate_bilinear(small_spec(3, 2, 5, 1));
  auto cfg = make_config(Method::sarah, 0.1, 4, 2, 1);
  cfg.checkpoint_every = 3;
  const auto r = run_sarah(p, cfg, Point<double>::Zero(p.dimension()));
  std::ostringstream a, b;
  write_run_csv(a, r);
  write_run_csv(b, run_sarah(p, cfg, Point<double>::Zero(p.dimension())));
  CHECK(a.str() == b.str());
  std::istringstream in(a.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == kRunCsvHeader);
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == r.checkpoints.size());
}

TEST_CASE("SARAH contracts at the contraction preset on a medium instance") {
  const auto p = generate_bilinear(small_spec(10, 100, 1e3, 0));
  const auto cfg = theorem_preset(p);
  const Point<double> z0 = Point<double>::Zero(p.dimension());
  std::vector<double> prev(20, residual_sq(p, z0)), cur(20);
  std::vector<Point<double>> z(20, z0);
  for (std::uint64_t s = 0; s < 3; ++s) {
    double sum_prev = 0, sum_cur = 0;
    for (std::size_t j = 0; j < 20; ++j) {
      OracleCounter c;
      z[j] = sarah_epoch(p, cfg.gamma, cfg.inner_K, j + 1, s, z[j], c).z;
      cur[j] = residual_sq(p, z[j]);
      sum_prev += prev[j];
      sum_cur += cur[j];
    }
    CHECK(sum_cur / sum_prev <= 0.5);
    prev = cur;
  }
}
