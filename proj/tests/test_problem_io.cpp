#include "sarahvi/problem_io.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cstring>
#include <sstream>

using namespace sarahvi;

namespace {

bool same_bits(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

std::string dump(const FiniteSumProblem<double>& p) {
  std::ostringstream out;
  write_problem(out, p);
  return out.str();
}

}  // namespace

TEST_CASE("real formatting round-trips exactly") {
  for (double x : {0.0, -0.0, 1.0 / 3.0, 1e-300, 6.02214076e23, -2.5e-7,
                   0.1 + 0.2}) {
    const double back = parse_real(format_real(x));
    CHECK(std::memcmp(&x, &back, sizeof x) == 0);
  }
  CHECK_THROWS(parse_real("1.5x"));
  CHECK_THROWS(parse_real(""));
}

TEST_CASE("problem files round-trip bit for bit") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto p = generate_bilinear(testing::small_spec(3, 4, 25, seed));
    const std::string text = dump(p);
    std::istringstream in(text);
    const auto q = read_problem(in);
    CHECK(q.n() == p.n());
    CHECK(q.ell() == p.ell());
    CHECK(q.mu() == p.mu());
    CHECK(q.origin()->seed == seed);
    const auto cp = p.bilinear_components(), cq = q.bilinear_components();
    for (std::size_t i = 0; i < p.n(); ++i) {
      CHECK(same_bits(cp[i]->A(), cq[i]->A()));
      CHECK(same_bits(cp[i]->a(), cq[i]->a()));
      CHECK(same_bits(cp[i]->b(), cq[i]->b()));
    }
    CHECK(problem_hash(p) == problem_hash(q));
    CHECK(dump(q) == text);
  }
}

TEST_CASE("problem hash separates different problems") {
  const auto a = generate_bilinear(testing::small_spec(3, 4, 25, 1));
  const auto b = generate_bilinear(testing::small_spec(3, 4, 25, 2));
  const auto c = generate_bilinear(testing::small_spec(3, 4, 26, 1));
  CHECK(problem_hash(a).size() == 16);
  CHECK(problem_hash(a) != problem_hash(b));
  CHECK(problem_hash(a) != problem_hash(c));
}

TEST_CASE("malformed problem files are rejected with a line number") {
  const auto p = generate_bilinear(testing::small_spec(2, 2, 5, 1));
  const std::string good = dump(p);

  auto expect_error = [](const std::string& text, std::size_t line) {
    std::istringstream in(text);
    try {
      read_problem(in);
      FAIL("accepted a malformed file");
    } catch (const ProblemFormatError& e) {
      CHECK(e.line() == line);
    }
  };
  expect_error("sarahvi-problem 2\n", 1);
  std::string head;
  std::istringstream first(good);
  for (int k = 0; k < 5 && std::getline(first, head); ++k) {}
  expect_error(good.substr(0, good.find(head) + head.size() + 1), 5);

  std::string bad_value = good;
  bad_value.replace(bad_value.find("lambda 1"), 8, "lambda x");
  expect_error(bad_value, 4);

  // Line 10 is "component 0"; line 12 the second row of A_0.
  std::istringstream lines(good);
  std::string out, line;
  for (int k = 1; std::getline(lines, line); ++k) {
    if (k == 12) line = line.substr(0, line.find(' '));
    out += line + '\n';
  }
  expect_error(out, 12);

  std::string comments = "# leading comment\n" + good;
  std::istringstream in(comments);
  CHECK(problem_hash(read_problem(in)) == problem_hash(p));

  CHECK_THROWS_AS(dump(testing::identity_problem()), std::invalid_argument);
}
