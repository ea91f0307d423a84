#include "sarahvi/harness.hpp"
#include "sarahvi/problem_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace sarahvi::harness {

namespace fs = std::filesystem;

PlotData plot_data(const ComparisonTable& table) {
  PlotData data;
  data.title = std::string(regime_name(table.regime)) + " (ell = " +
               format_real(table.target_ell) + ")";
  for (const auto& m : table.methods) {
    PlotSeries s;
    s.name = std::string(method_name(m.method));
    for (std::size_t k = 0; k < m.stats.grid.size(); ++k) {
      s.x.push_back(static_cast<double>(m.stats.grid[k]));
      s.y.push_back(m.stats.mean_residual_sq[k]);
    }
    data.series.push_back(std::move(s));
  }
  return data;
}

PlotData read_plot_data(const fs::path& dir, std::string title) {
  PlotData data;
  data.title = std::move(title);
  for (Method m : {Method::sarah, Method::svrg, Method::sgd}) {
    std::string lower(method_name(m));
    for (auto& ch : lower) ch = static_cast<char>(std::tolower(ch));
    const fs::path path = dir / ("aggregate_" + lower + ".csv");
    if (!fs::exists(path)) continue;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
    PlotSeries s;
    s.name = std::string(method_name(m));
    std::string line;
    std::getline(in, line);  // header
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string calls, mean;
      if (!std::getline(row, calls, ',') || !std::getline(row, mean, ','))
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": malformed row");
      try {
        s.x.push_back(parse_real(calls));
        s.y.push_back(parse_real(mean));
      } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": " + e.what());
      }
    }
    data.series.push_back(std::move(s));
  }
  if (data.series.empty())
    throw std::runtime_error("no aggregate_*.csv files in '" + dir.string() + "'");
  return data;
}

namespace {

constexpr double kWidth = 720, kHeight = 480;
constexpr double kLeft = 80, kRight = 150, kTop = 40, kBottom = 60;
constexpr const char* kColours[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const PlotData& data) {
  if (data.series.empty()) throw std::invalid_argument("plot: no series");
  double x_max = 0;
  double y_min = std::numeric_limits<double>::infinity();
  double y_max = 0;
  bool clamped = false;
  for (const auto& s : data.series) {
    if (s.x.empty() || s.x.size() != s.y.size())
      throw std::invalid_argument("plot: series '" + s.name + "' is empty");
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      x_max = std::max(x_max, s.x[k]);
      if (s.y[k] > 0 && std::isfinite(s.y[k])) {
        y_min = std::min(y_min, s.y[k]);
        y_max = std::max(y_max, s.y[k]);
      } else if (!(s.y[k] > 0)) {
        clamped = true;
      }
    }
  }
  if (!std::isfinite(y_min)) y_min = y_max = 1;
  if (x_max <= 0) x_max = 1;
  // Decades spanned, with the floor line one decade below the data when some
  // value cannot be shown on a log axis.
  double lo = std::floor(std::log10(y_min));
  const double hi = std::max(lo + 1, std::ceil(std::log10(y_max)));
  const double floor_exp = lo - 1;
  if (clamped) lo = floor_exp;

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + pw * x / x_max; };
  auto py = [&](double y) {
    const double e = y > 0 && std::isfinite(y) ? std::log10(y)
                     : y > 0                   ? hi
                                               : floor_exp;
    return kTop + ph * (hi - std::clamp(e, lo, hi)) / (hi - lo);
  };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
    << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
    << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"24\" text-anchor=\"middle\""
    << " font-size=\"14\">" << escape(data.title) << "</text>\n";

  const int step = std::max(1, static_cast<int>(std::ceil((hi - lo) / 10)));
  for (int e = static_cast<int>(lo); e <= static_cast<int>(hi); e += step) {
    const double y = kTop + ph * (hi - e) / (hi - lo);
    o << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(y) << "\" x2=\""
      << num(kLeft + pw) << "\" y2=\"" << num(y)
      << "\" stroke=\"#dddddd\"/>\n";
    o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(y + 4)
      << "\" text-anchor=\"end\">1e" << e << "</text>\n";
  }
  for (int t = 0; t <= 5; ++t) {
    const double x = x_max * t / 5;
    o << "<text x=\"" << num(px(x)) << "\" y=\"" << num(kTop + ph + 18)
      << "\" text-anchor=\"middle\">" << format_real(std::round(x))
      << "</text>\n";
  }
  o << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\""
    << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 16)
    << "\" text-anchor=\"middle\">oracle calls</text>\n";
  o << "<text transform=\"translate(20," << num(kTop + ph / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">|F(z)|^2</text>\n";

  if (clamped) {
    const double y = py(0);
    o << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(y) << "\" x2=\""
      << num(kLeft + pw) << "\" y2=\"" << num(y)
      << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    o << "<text x=\"" << num(kLeft + 4) << "\" y=\"" << num(y - 4)
      << "\" fill=\"gray\">zero values drawn at 1e" << floor_exp
      << "</text>\n";
  }

  for (std::size_t i = 0; i < data.series.size(); ++i) {
    const auto& s = data.series[i];
    const char* colour = kColours[i % std::size(kColours)];
    o << "<polyline fill=\"none\" stroke=\"" << colour
      << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k)
      o << (k ? " " : "") << num(px(s.x[k])) << ',' << num(py(s.y[k]));
    o << "\"/>\n";
    const double ly = kTop + 16 + 20 * static_cast<double>(i);
    o << "<line x1=\"" << num(kLeft + pw + 12) << "\" y1=\"" << num(ly - 4)
      << "\" x2=\"" << num(kLeft + pw + 36) << "\" y2=\"" << num(ly - 4)
      << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(kLeft + pw + 42) << "\" y=\"" << num(ly) << "\">"
      << escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void emit_plot(const PlotData& data, const fs::path& path) {
  const std::string svg = render_svg(data);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << svg;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace sarahvi::harness
