#ifndef SARAHVI_PROBLEM_IO_HPP
#define SARAHVI_PROBLEM_IO_HPP

#include "sarahvi/problems.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

namespace sarahvi {

inline constexpr std::string_view kProblemFormat = "sarahvi-problem";
inline constexpr int kProblemFormatVersion = 1;

class ProblemFormatError : public std::runtime_error {
 public:
  ProblemFormatError(const std::string& what, std::size_t line)
      : std::runtime_error("problem file line " + std::to_string(line) + ": " +
                           what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Shortest form that is still value-exact on read-back (17 significant
/// digits).
inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_real(std::string_view s) {
  double x = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::invalid_argument("not a real number: '" + std::string(s) + "'");
  return x;
}

/// 64-bit FNV-1a over the dimensions, constants and every coefficient of a
/// bilinear problem, printed as 16 hex digits.
inline std::string problem_hash(const FiniteSumProblem<double>& problem) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < size; ++k) {
      h ^= bytes[k];
      h *= 0x100000001b3ULL;
    }
  };
  auto feed_real = [&feed](double x) { feed(&x, sizeof x); };
  const std::uint64_t n = problem.n();
  const auto dim = static_cast<std::uint64_t>(problem.dimension());
  feed(&n, sizeof n);
  feed(&dim, sizeof dim);
  feed_real(problem.ell());
  feed_real(problem.mu());
  for (const auto* c : problem.bilinear_components()) {
    feed_real(c->lambda());
    feed(c->A().data(), sizeof(double) * static_cast<std::size_t>(c->A().size()));
    feed(c->a().data(), sizeof(double) * static_cast<std::size_t>(c->a().size()));
    feed(c->b().data(), sizeof(double) * static_cast<std::size_t>(c->b().size()));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Writes a bilinear problem as versioned line-oriented text. Matrices are
/// row-major, one row per line.
inline void write_problem(std::ostream& out,
                          const FiniteSumProblem<double>& problem) {
  const auto comps = problem.bilinear_components();
  if (comps.empty())
    throw std::invalid_argument("write_problem: only bilinear problems");
  const auto d = comps.front()->half_dimension();
  const GeneratorSpec origin = problem.origin().value_or(GeneratorSpec{});

  out << kProblemFormat << ' ' << kProblemFormatVersion << '\n';
  out << "n " << problem.n() << '\n';
  out << "d " << d << '\n';
  out << "lambda " << format_real(comps.front()->lambda()) << '\n';
  out << "ell " << format_real(problem.ell()) << '\n';
  out << "mu " << format_real(problem.mu()) << '\n';
  out << "seed " << origin.seed << '\n';
  out << "target_ell " << format_real(origin.target_ell) << '\n';
  out << "heterogeneity " << format_real(origin.heterogeneity) << '\n';
  auto write_row = [&out](const auto& row) {
    for (Eigen::Index j = 0; j < row.size(); ++j)
      out << (j ? " " : "") << format_real(row[j]);
    out << '\n';
  };
  for (std::size_t i = 0; i < comps.size(); ++i) {
    out << "component " << i << '\n';
    for (Eigen::Index r = 0; r < d; ++r) write_row(comps[i]->A().row(r));
    write_row(comps[i]->a());
    write_row(comps[i]->b());
  }
  out << "end\n";
}

namespace detail {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::string next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      return line;
    }
    throw ProblemFormatError("unexpected end of file", line_no_);
  }

  std::string value(std::string_view key) {
    const std::string line = next();
    const auto space = line.find(' ');
    if (space == std::string::npos || line.compare(0, space, key) != 0)
      throw ProblemFormatError("expected key '" + std::string(key) + "'",
                               line_no_);
    return line.substr(space + 1);
  }

  template <typename Row>
  void reals(Row&& row) {
    const std::string line = next();
    std::istringstream tokens(line);
    std::string tok;
    Eigen::Index j = 0;
    while (tokens >> tok) {
      if (j >= row.size()) fail("too many values in row");
      try {
        row[j++] = parse_real(tok);
      } catch (const std::invalid_argument& e) {
        fail(e.what());
      }
    }
    if (j != row.size()) fail("too few values in row");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ProblemFormatError(what, line_no_);
  }

  std::size_t line() const { return line_no_; }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

inline std::uint64_t parse_count(const std::string& s, LineReader& reader) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    reader.fail("not a non-negative integer: '" + s + "'");
  return v;
}

}  // namespace detail

/// Reads a problem written by write_problem. The exact solution is recomputed.
inline FiniteSumProblem<double> read_problem(std::istream& in) {
  detail::LineReader reader(in);
  {
    const std::string header = reader.next();
    const std::string expected = std::string(kProblemFormat) + " " +
                                 std::to_string(kProblemFormatVersion);
    if (header != expected)
      reader.fail("expected header '" + expected + "', got '" + header + "'");
  }
  auto real = [&reader](std::string_view key) {
    try {
      return parse_real(reader.value(key));
    } catch (const std::invalid_argument& e) {
      reader.fail(e.what());
    }
  };
  GeneratorSpec origin;
  origin.n = detail::parse_count(reader.value("n"), reader);
  origin.d = detail::parse_count(reader.value("d"), reader);
  if (origin.n == 0 || origin.d == 0) reader.fail("n and d must be positive");
  origin.lambda = real("lambda");
  const double ell = real("ell");
  const double mu = real("mu");
  origin.seed = detail::parse_count(reader.value("seed"), reader);
  origin.target_ell = real("target_ell");
  origin.heterogeneity = real("heterogeneity");
  if (mu != origin.lambda) reader.fail("mu must equal lambda");

  const auto d = static_cast<Eigen::Index>(origin.d);
  std::vector<std::shared_ptr<const BilinearComponent<double>>> comps;
  for (std::size_t i = 0; i < origin.n; ++i) {
    if (detail::parse_count(reader.value("component"), reader) != i)
      reader.fail("components out of order");
    Matrix<double> A(d, d);
    Vector<double> a(d), b(d);
    for (Eigen::Index r = 0; r < d; ++r) reader.reals(A.row(r));
    reader.reals(a);
    reader.reals(b);
    try {
      comps.push_back(std::make_shared<const BilinearComponent<double>>(
          std::move(A), std::move(a), std::move(b), origin.lambda));
    } catch (const std::invalid_argument& e) {
      reader.fail(e.what());
    }
  }
  if (reader.next() != "end") reader.fail("expected 'end'");
  return make_bilinear_problem(std::move(comps), ell, origin);
}

}  // namespace sarahvi

#endif
