#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "cli.hpp"
#include "jiang/error.hpp"

namespace jiang::cli {

namespace {

constexpr double kWidth = 640.0;
constexpr double kPanelHeight = 200.0;
constexpr double kMarginLeft = 64.0;
constexpr double kMarginRight = 16.0;
constexpr double kMarginTop = 28.0;
constexpr double kMarginBottom = 28.0;

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct Series {
  std::string name;
  std::string color;
  std::vector<std::pair<double, double>> points;
};

}  // namespace

std::string render_metrics_svg(const std::vector<MetricsRow>& rows) {
  if (rows.empty()) throw IoError("metrics file has no data rows");
  std::vector<Series> series{{"loss", "#1f77b4", {}}};
  Series ppl{"eval_ppl", "#d62728", {}};
  Series acc{"eval_acc", "#2ca02c", {}};
  for (const auto& r : rows) {
    const auto step = static_cast<double>(r.step);
    series[0].points.emplace_back(step, r.loss);
    if (r.eval_ppl) ppl.points.emplace_back(step, *r.eval_ppl);
    if (r.eval_acc) acc.points.emplace_back(step, *r.eval_acc);
  }
  if (!ppl.points.empty()) series.push_back(ppl);
  if (!acc.points.empty()) series.push_back(acc);

  double x_min = static_cast<double>(rows.front().step);
  double x_max = x_min;
  for (const auto& r : rows) {
    x_min = std::min(x_min, static_cast<double>(r.step));
    x_max = std::max(x_max, static_cast<double>(r.step));
  }
  if (x_max == x_min) x_max = x_min + 1.0;

  const double height = kPanelHeight * static_cast<double>(series.size());
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(kWidth, 0) << "\" height=\""
      << fixed(height, 0) << "\" viewBox=\"0 0 " << fixed(kWidth, 0) << ' ' << fixed(height, 0) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t p = 0; p < series.size(); ++p) {
    const auto& s = series[p];
    double y_min = s.points.front().second;
    double y_max = y_min;
    for (const auto& [x, y] : s.points) {
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
    if (y_max == y_min) {
      y_min -= 0.5;
      y_max += 0.5;
    }
    const double top = kPanelHeight * static_cast<double>(p) + kMarginTop;
    const double bottom = kPanelHeight * static_cast<double>(p + 1) - kMarginBottom;
    const double left = kMarginLeft;
    const double right = kWidth - kMarginRight;
    const auto sx = [&](double x) { return left + (x - x_min) / (x_max - x_min) * (right - left); };
    const auto sy = [&](double y) { return bottom - (y - y_min) / (y_max - y_min) * (bottom - top); };

    svg << "<g class=\"panel\">\n";
    svg << "<line x1=\"" << fixed(left) << "\" y1=\"" << fixed(bottom) << "\" x2=\"" << fixed(right) << "\" y2=\""
        << fixed(bottom) << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << fixed(left) << "\" y1=\"" << fixed(top) << "\" x2=\"" << fixed(left) << "\" y2=\""
        << fixed(bottom) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << fixed(left) << "\" y=\"" << fixed(top - 8) << "\" font-size=\"12\">" << s.name
        << " vs step</text>\n";
    svg << "<text x=\"" << fixed(left - 4) << "\" y=\"" << fixed(top + 4)
        << "\" font-size=\"10\" text-anchor=\"end\">" << fixed(y_max, 3) << "</text>\n";
    svg << "<text x=\"" << fixed(left - 4) << "\" y=\"" << fixed(bottom)
        << "\" font-size=\"10\" text-anchor=\"end\">" << fixed(y_min, 3) << "</text>\n";
    svg << "<text x=\"" << fixed(left) << "\" y=\"" << fixed(bottom + 14) << "\" font-size=\"10\">"
        << fixed(x_min, 0) << "</text>\n";
    svg << "<text x=\"" << fixed(right) << "\" y=\"" << fixed(bottom + 14)
        << "\" font-size=\"10\" text-anchor=\"end\">" << fixed(x_max, 0) << "</text>\n";
    svg << "<polyline data-series=\"" << s.name << "\" fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      if (i) svg << ' ';
      svg << fixed(sx(s.points[i].first)) << ',' << fixed(sy(s.points[i].second));
    }
    svg << "\"/>\n</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void plot_metrics(const std::filesystem::path& csv_path, const std::filesystem::path& svg_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot open metrics file " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(csv_path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) throw IoError(csv_path.string() + ":1: unexpected header");
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      rows.push_back(parse_metrics_row(line));
    } catch (const IoError& e) {
      throw IoError(csv_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (rows.empty()) throw IoError(csv_path.string() + ": header only, no data rows");
  const std::string svg = render_metrics_svg(rows);
  std::ofstream out(svg_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + svg_path.string());
  out << svg;
  if (!out) throw IoError("write failed for " + svg_path.string());
}

}  // namespace jiang::cli
