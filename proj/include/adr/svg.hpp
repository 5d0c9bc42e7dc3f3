// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file svg.hpp
/// @brief Minimal hand-emitted SVG plots (polyline, bar chart, heatmap).
/// Output carries no timestamps, so identical input gives identical bytes.

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

namespace adr::svg {

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      default: o += c;
    }
  }
  return o;
}

constexpr double kW = 640, kH = 400, kMargin = 50;

inline std::string header(const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kW) + "\" height=\"" + num(kH) +
                  "\" viewBox=\"0 0 " + num(kW) + " " + num(kH) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kW / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
       escape(title) + "</text>\n";
  return s;
}

inline std::string axes(double x0, double x1, double y0, double y1) {
  std::string s;
  s += "<line x1=\"" + num(kMargin) + "\" y1=\"" + num(kH - kMargin) + "\" x2=\"" + num(kW - kMargin) + "\" y2=\"" +
       num(kH - kMargin) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(kMargin) + "\" y1=\"" + num(kMargin) + "\" x2=\"" + num(kMargin) + "\" y2=\"" +
       num(kH - kMargin) + "\" stroke=\"black\"/>\n";
  auto label = [&](double x, double y, const std::string& t, const char* anchor) {
    s += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor +
         "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(t) + "</text>\n";
  };
  label(kMargin, kH - kMargin + 16, num(x0), "middle");
  label(kW - kMargin, kH - kMargin + 16, num(x1), "middle");
  label(kMargin - 6, kH - kMargin, num(y0), "end");
  label(kMargin - 6, kMargin + 4, num(y1), "end");
  return s;
}

}  // namespace detail

inline std::string line_plot(const std::string& title, const std::vector<double>& xs, const std::vector<double>& ys) {
  using namespace detail;
  std::string s = header(title);
  if (xs.empty() || xs.size() != ys.size()) return s + "</svg>\n";
  const double x0 = *std::min_element(xs.begin(), xs.end()), x1 = *std::max_element(xs.begin(), xs.end());
  double y0 = std::min(0.0, *std::min_element(ys.begin(), ys.end()));
  double y1 = *std::max_element(ys.begin(), ys.end());
  if (y1 <= y0) y1 = y0 + 1;
  const double sx = (kW - 2 * kMargin) / (x1 > x0 ? x1 - x0 : 1.0);
  const double sy = (kH - 2 * kMargin) / (y1 - y0);
  s += axes(x0, x1, y0, y1);
  s += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    s += num(kMargin + (xs[i] - x0) * sx) + "," + num(kH - kMargin - (ys[i] - y0) * sy);
    s += i + 1 < xs.size() ? " " : "";
  }
  s += "\"/>\n</svg>\n";
  return s;
}

inline std::string bar_chart(const std::string& title, const std::vector<std::string>& labels,
                             const std::vector<double>& values) {
  using namespace detail;
  std::string s = header(title);
  if (values.empty()) return s + "</svg>\n";
  double vmax = *std::max_element(values.begin(), values.end());
  if (vmax <= 0) vmax = 1;
  s += axes(0, static_cast<double>(values.size()), 0, vmax);
  const double bw = (kW - 2 * kMargin) / static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double h = (kH - 2 * kMargin) * values[i] / vmax;
    const double x = kMargin + i * bw;
    s += "<rect x=\"" + num(x + 1) + "\" y=\"" + num(kH - kMargin - h) + "\" width=\"" + num(bw - 2) +
         "\" height=\"" + num(h) + "\" fill=\"steelblue\"/>\n";
    if (i < labels.size())
      s += "<text x=\"" + num(x + bw / 2) + "\" y=\"" + num(kH - kMargin + 30) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"9\">" + escape(labels[i]) + "</text>\n";
  }
  return s + "</svg>\n";
}

/// Row-major n x n grid of non-negative counts, darker is larger.
inline std::string heatmap(const std::string& title, const std::vector<double>& cells, int n) {
  using namespace detail;
  std::string s = header(title);
  const double vmax = cells.empty() ? 1.0 : std::max(1e-12, *std::max_element(cells.begin(), cells.end()));
  const double side = std::min(kW, kH) - 2 * kMargin;
  const double cell = side / n;
  const double ox = (kW - side) / 2, oy = kMargin;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double v = cells[static_cast<std::size_t>(y) * n + x] / vmax;
      const int shade = 255 - static_cast<int>(v * 255.0 + 0.5);
      s += "<rect x=\"" + num(ox + x * cell) + "\" y=\"" + num(oy + y * cell) + "\" width=\"" + num(cell) +
           "\" height=\"" + num(cell) + "\" fill=\"rgb(" + std::to_string(shade) + "," + std::to_string(shade) +
           ",255)\"/>\n";
    }
  s += "<rect x=\"" + num(ox) + "\" y=\"" + num(oy) + "\" width=\"" + num(side) + "\" height=\"" + num(side) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  return s + "</svg>\n";
}

}  // namespace adr::svg
