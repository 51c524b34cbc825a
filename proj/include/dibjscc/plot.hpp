#pragma once

// Minimal SVG line charts for result figures. Output is deterministic:
// same series in, byte-identical markup out.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "dibjscc/errors.hpp"

namespace dibjscc {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y), any order
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::string footnote;  // provenance line, e.g. config hash + version
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

// Renders one polyline per series with point markers, axes, tick labels,
// a legend, and the footnote under the title.
inline std::string render_line_chart_svg(const PlotSpec& spec,
                                         const std::vector<Series>& series) {
  if (series.empty()) throw input_error("plot: no series");
  double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
  bool first = true;
  for (const Series& s : series) {
    if (s.points.empty()) {
      throw input_error("plot: series '" + s.label + "' has no points");
    }
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) {
        throw input_error("plot: non-finite point in series '" + s.label +
                          "'");
      }
      x_min = first ? x : std::min(x_min, x);
      x_max = first ? x : std::max(x_max, x);
      y_min = first ? y : std::min(y_min, y);
      y_max = first ? y : std::max(y_max, y);
      first = false;
    }
  }
  if (x_max - x_min < 1e-12) { x_min -= 1.0; x_max += 1.0; }
  if (y_max - y_min < 1e-12) { y_min -= 1.0; y_max += 1.0; }

  constexpr double kW = 640, kH = 420;
  constexpr double kLeft = 64, kRight = 160, kTop = 56, kBottom = 56;
  const double plot_w = kW - kLeft - kRight;
  const double plot_h = kH - kTop - kBottom;
  auto px = [&](double x) {
    return kLeft + (x - x_min) / (x_max - x_min) * plot_w;
  };
  auto py = [&](double y) {
    return kTop + plot_h - (y - y_min) / (y_max - y_min) * plot_h;
  };

  static const char* kColors[] = {"#1f6fb2", "#c44e52", "#55a868",
                                  "#8172b2", "#ccb974", "#64b5cd"};
  constexpr int kNumColors = 6;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
         "height=\"420\" viewBox=\"0 0 640 420\" "
         "font-family=\"sans-serif\">\n";
  svg += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
  svg += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
         detail::xml_escape(spec.title) + "</text>\n";
  if (!spec.footnote.empty()) {
    svg += "<text x=\"320\" y=\"40\" text-anchor=\"middle\" font-size=\"9\" "
           "fill=\"#777\">" +
           detail::xml_escape(spec.footnote) + "</text>\n";
  }

  // Frame and gridless tick marks, five per axis.
  svg += "<rect x=\"" + detail::svg_num(kLeft) + "\" y=\"" +
         detail::svg_num(kTop) + "\" width=\"" + detail::svg_num(plot_w) +
         "\" height=\"" + detail::svg_num(plot_h) +
         "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double fx = x_min + (x_max - x_min) * i / 4.0;
    double fy = y_min + (y_max - y_min) * i / 4.0;
    svg += "<text x=\"" + detail::svg_num(px(fx)) + "\" y=\"" +
           detail::svg_num(kTop + plot_h + 18) +
           "\" text-anchor=\"middle\" font-size=\"11\">" +
           detail::svg_num(fx) + "</text>\n";
    svg += "<text x=\"" + detail::svg_num(kLeft - 8) + "\" y=\"" +
           detail::svg_num(py(fy) + 4) +
           "\" text-anchor=\"end\" font-size=\"11\">" + detail::svg_num(fy) +
           "</text>\n";
  }
  svg += "<text x=\"" + detail::svg_num(kLeft + plot_w / 2) + "\" y=\"" +
         detail::svg_num(kH - 14) +
         "\" text-anchor=\"middle\" font-size=\"13\">" +
         detail::xml_escape(spec.x_label) + "</text>\n";
  svg += "<text x=\"18\" y=\"" + detail::svg_num(kTop + plot_h / 2) +
         "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 "
         "18 " +
         detail::svg_num(kTop + plot_h / 2) + ")\">" +
         detail::xml_escape(spec.y_label) + "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = kColors[si % kNumColors];
    std::vector<std::pair<double, double>> pts = s.points;
    std::sort(pts.begin(), pts.end());

    std::string coords;
    for (auto [x, y] : pts) {
      if (!coords.empty()) coords += " ";
      coords += detail::svg_num(px(x)) + "," + detail::svg_num(py(y));
    }
    svg += "<polyline points=\"" + coords +
           "\" fill=\"none\" stroke-width=\"2\" stroke=\"" + color + "\"/>\n";
    for (auto [x, y] : pts) {
      svg += "<circle cx=\"" + detail::svg_num(px(x)) + "\" cy=\"" +
             detail::svg_num(py(y)) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }

    double ly = kTop + 12 + 18.0 * double(si);
    svg += "<line x1=\"" + detail::svg_num(kW - kRight + 10) + "\" y1=\"" +
           detail::svg_num(ly - 4) + "\" x2=\"" +
           detail::svg_num(kW - kRight + 34) + "\" y2=\"" +
           detail::svg_num(ly - 4) + "\" stroke-width=\"2\" stroke=\"" +
           color + "\"/>\n";
    svg += "<text x=\"" + detail::svg_num(kW - kRight + 40) + "\" y=\"" +
           detail::svg_num(ly) + "\" font-size=\"11\">" +
           detail::xml_escape(s.label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace dibjscc
