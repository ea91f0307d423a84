#include "sarahvi/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace sarahvi::harness {

std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::small: return "small";
    case Regime::medium: return "medium";
    case Regime::big: return "big";
    case Regime::custom: return "custom";
  }
  return "?";
}

std::optional<Regime> parse_regime(std::string_view s) {
  if (s == "small") return Regime::small;
  if (s == "medium") return Regime::medium;
  if (s == "big") return Regime::big;
  return std::nullopt;
}

double regime_ell(Regime r) {
  switch (r) {
    case Regime::small: return 1e2;
    case Regime::medium: return 1e3;
    case Regime::big: return 1e4;
    case Regime::custom: break;
  }
  throw std::invalid_argument("custom regime has no fixed ell");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::uint64_t to_uint(std::string_view s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw std::invalid_argument("expected a non-negative integer, got '" +
                                std::string(s) + "'");
  return v;
}

std::uint64_t to_positive(std::string_view s) {
  const auto v = to_uint(s);
  if (v == 0) throw std::invalid_argument("must be positive");
  return v;
}

double to_positive_real(std::string_view s) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    throw std::invalid_argument("expected a real number, got '" +
                                std::string(s) + "'");
  if (!(v > 0) || !std::isfinite(v))
    throw std::invalid_argument("must be a positive finite number");
  return v;
}

double to_nonnegative_real(std::string_view s) {
  if (trim(s) == "0") return 0;
  return to_positive_real(s);
}

bool to_bool(std::string_view s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("expected true or false, got '" + std::string(s) +
                              "'");
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(std::string_view s) {
  std::vector<std::uint64_t> out;
  for (auto item : split(s, ',')) {
    if (item.empty()) throw std::invalid_argument("empty entry in seed list");
    const auto dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.push_back(to_uint(item));
      continue;
    }
    const auto lo = to_uint(trim(item.substr(0, dash)));
    const auto hi = to_uint(trim(item.substr(dash + 1)));
    if (hi < lo) throw std::invalid_argument("descending seed range");
    if (hi - lo > 1000000) throw std::invalid_argument("seed range too long");
    for (auto v = lo; v <= hi; ++v) out.push_back(v);
  }
  return out;
}

std::vector<Method> parse_method_list(std::string_view s) {
  std::vector<Method> out;
  for (auto item : split(s, ',')) {
    const auto m = parse_method(item);
    if (!m)
      throw std::invalid_argument("unknown method '" + std::string(item) +
                                  "' (expected SARAH, SVRG or SGD)");
    if (std::find(out.begin(), out.end(), *m) != out.end())
      throw std::invalid_argument("duplicate method '" + std::string(item) +
                                  "'");
    out.push_back(*m);
  }
  return out;
}

std::vector<Regime> parse_regime_list(std::string_view s) {
  std::vector<Regime> out;
  for (auto item : split(s, ',')) {
    const auto r = parse_regime(item);
    if (!r)
      throw std::invalid_argument("unknown regime '" + std::string(item) +
                                  "' (expected small, medium or big)");
    if (std::find(out.begin(), out.end(), *r) == out.end()) out.push_back(*r);
  }
  return out;
}

ExperimentConfig parse_config_text(std::string_view text) {
  ExperimentConfig c;
  std::set<std::string> seen;
  bool has_format = false;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("", line_no, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("", line_no, "missing key");
    if (!seen.insert(key).second)
      throw ConfigError(key, line_no, "duplicate key");
    if (!has_format && key != "format")
      throw ConfigError(key, line_no,
                        "first entry must be 'format = " +
                            std::string(kConfigFormat) + "'");
    if (value.empty()) throw ConfigError(key, line_no, "missing value");

    try {
      if (key == "format") {
        if (value != kConfigFormat)
          throw std::invalid_argument("unsupported format '" +
                                      std::string(value) + "', expected '" +
                                      std::string(kConfigFormat) + "'");
        has_format = true;
      } else if (key == "n") {
        c.generator.n = to_positive(value);
      } else if (key == "d") {
        c.generator.d = to_positive(value);
      } else if (key == "lambda") {
        c.generator.lambda = to_positive_real(value);
      } else if (key == "heterogeneity") {
        c.generator.heterogeneity = to_nonnegative_real(value);
      } else if (key == "generator_seed") {
        c.generator.seed = to_uint(value);
      } else if (key == "regime") {
        c.regimes = parse_regime_list(value);
      } else if (key == "target_ell") {
        c.target_ell = to_positive_real(value);
      } else if (key == "methods") {
        c.methods = parse_method_list(value);
      } else if (key == "oracle_budget") {
        c.oracle_budget = to_positive(value);
      } else if (key == "seeds") {
        c.seeds = parse_seed_list(value);
      } else if (key == "gamma_grid") {
        c.gamma_grid.clear();
        for (auto g : split(value, ',')) c.gamma_grid.push_back(to_positive_real(g));
      } else if (key == "tuning_seeds") {
        c.tuning_seeds = to_positive(value);
      } else if (key == "checkpoint_every") {
        c.checkpoint_every = to_positive(value);
      } else if (key == "output_dir") {
        c.output_dir = std::string(value);
      } else if (key == "record_wall_clock") {
        c.record_wall_clock = to_bool(value);
      } else if (key == "lemma_seeds") {
        c.lemma_seeds = to_positive(value);
      } else if (key == "theorem_seeds") {
        c.theorem_seeds = to_positive(value);
      } else if (key == "theorem_max_epochs") {
        c.theorem_max_epochs = to_positive(value);
      } else if (key == "checker_trials") {
        c.checker_trials = to_positive(value);
      } else if (key == "epsilon") {
        c.epsilon = to_positive_real(value);
      } else if (key == "theorem_gamma") {
        c.theorem_gamma = to_positive_real(value);
      } else {
        throw ConfigError(key, line_no, "unknown key");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(key, line_no, e.what());
    }
  }
  if (!has_format) throw ConfigError("format", 0, "missing required key");
  for (const char* required : {"methods", "seeds"})
    if (!seen.count(required))
      throw ConfigError(required, 0, "missing required key");
  if (!seen.count("regime") && !seen.count("target_ell"))
    throw ConfigError("regime", 0, "missing required key");
  try {
    validate_config(c);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", 0, e.what());
  }
  return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", 0, "cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config_text(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(e.key(), e.line(), path.string() + ": " + e.what());
  }
}

void validate_config(const ExperimentConfig& c) {
  require(!c.methods.empty(), "at least one method is required");
  require(!c.seeds.empty(), "at least one seed is required");
  std::set<std::uint64_t> unique(c.seeds.begin(), c.seeds.end());
  if (unique.size() != c.seeds.size())
    throw std::invalid_argument("duplicate seeds");
  require(!c.regimes.empty(), "at least one regime is required");
  require(c.generator.n >= 1 && c.generator.d >= 1, "n and d must be >= 1");
  for (const auto& [ell, label] : expand_regimes(c)) {
    require(ell >= c.generator.lambda,
            "target ell must be at least lambda for regime " +
                std::string(regime_name(label)));
    if (c.oracle_budget)
      require(*c.oracle_budget >= c.generator.n,
              "oracle_budget must cover at least one full pass (n calls)");
  }
}

std::vector<std::pair<double, Regime>> expand_regimes(const ExperimentConfig& c) {
  if (c.target_ell) return {{*c.target_ell, Regime::custom}};
  std::vector<std::pair<double, Regime>> out;
  for (auto r : c.regimes) out.emplace_back(regime_ell(r), r);
  return out;
}

GeneratorSpec generator_for(const ExperimentConfig& c, double target_ell) {
  GeneratorSpec g = c.generator;
  g.target_ell = target_ell;
  return g;
}

std::uint64_t default_budget(double ell, double lambda, std::size_t n) {
  const auto inner = ceil_count(ell / lambda);
  return std::max<std::uint64_t>(60 * inner, 10 * n);
}

std::vector<double> default_gamma_grid(Method method, double ell) {
  const std::vector<double> factors =
      method == Method::sgd ? std::vector<double>{0.01, 0.1, 0.5, 1.0}
                            : std::vector<double>{2.0 / 9.0, 0.5, 1.0, 2.0};
  std::vector<double> grid;
  for (double f : factors) grid.push_back(f / ell);
  return grid;
}

}  // namespace sarahvi::harness
