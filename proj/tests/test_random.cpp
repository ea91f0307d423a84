#include "sarahvi/random.hpp"

#include <doctest.h>

#include <array>
#include <cmath>
#include <set>

using namespace sarahvi;

TEST_CASE("mix64 matches the splitmix64 reference output") {
  // First two outputs of splitmix64 seeded with 0.
  CHECK(mix64(0) == 0xe220a8397b1dcdafULL);
  CHECK(mix64(0x9e3779b97f4a7c15ULL) == 0x6e789e6aa1b965f4ULL);
}

TEST_CASE("counter draws are pure functions of (seed, stream, counter)") {
  CounterRng a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  for (int k = 0; k < 5; ++k) {
    const auto x = a.next();
    CHECK(x == b.next());
    CHECK(x != c.next());
    CHECK(x != d.next());
  }
  CounterRng e(42, 7);
  CHECK(e.at(3) == CounterRng(42, 7).at(3));
  CHECK(a.counter() == 5);
}

TEST_CASE("index stays in range and is roughly uniform") {
  CounterRng rng(1, 2);
  std::array<int, 7> hist{};
  const int draws = 70000;
  for (int k = 0; k < draws; ++k) {
    const auto i = rng.index(7);
    REQUIRE(i < 7);
    ++hist[i];
  }
  for (int h : hist) CHECK(std::abs(h - draws / 7) < 400);  // ~4 sigma
  CounterRng one(5, 5);
  for (int k = 0; k < 10; ++k) CHECK(one.index(1) == 0);
}

TEST_CASE("uniform and normal moments") {
  CounterRng rng(9, 0);
  const int draws = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int k = 0; k < draws; ++k) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    su += u;
  }
  for (int k = 0; k < draws; ++k) {
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / draws == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / draws) < 0.01);
  CHECK(sn2 / draws == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("sample_component depends only on its arguments") {
  std::set<std::size_t> seen;
  for (std::uint64_t k = 0; k < 200; ++k) {
    const auto i = sample_component(11, 3, k, 10);
    CHECK(i == sample_component(11, 3, k, 10));
    seen.insert(i);
  }
  CHECK(seen.size() == 10);
  int differ = 0;
  for (std::uint64_t k = 0; k < 100; ++k)
    differ += sample_component(11, 3, k, 1000) != sample_component(11, 4, k, 1000);
  CHECK(differ > 90);
}
