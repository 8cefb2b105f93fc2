#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "prism/error.hpp"

namespace prism::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
inline constexpr int kWidth = 640;
inline constexpr int kHeight = 400;
inline constexpr int kLeft = 70;
inline constexpr int kRight = 150;
inline constexpr int kTop = 40;
inline constexpr int kBottom = 50;

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) + "\" height=\"" +
         std::to_string(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"" + std::to_string(kWidth / 2) +
         "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) + "</text>\n";
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  }
};

inline std::string axes(const Range& xr, const Range& yr, const std::string& xlabel, const std::string& ylabel) {
  const int x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  std::string s = "<line x1=\"" + std::to_string(x0) + "\" y1=\"" + std::to_string(y0) + "\" x2=\"" + std::to_string(x1) +
                  "\" y2=\"" + std::to_string(y0) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + std::to_string(x0) + "\" y1=\"" + std::to_string(y0) + "\" x2=\"" + std::to_string(x0) +
       "\" y2=\"" + std::to_string(y1) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fy = yr.lo + (yr.hi - yr.lo) * t / 4.0;
    const double py = y0 - (y0 - y1) * t / 4.0;
    s += "<text x=\"" + std::to_string(x0 - 6) + "\" y=\"" + num(py + 4) + "\" text-anchor=\"end\">" + num(fy) + "</text>\n";
    if (xr.hi > xr.lo) {
      const double fx = xr.lo + (xr.hi - xr.lo) * t / 4.0;
      const double px = x0 + (x1 - x0) * t / 4.0;
      s += "<text x=\"" + num(px) + "\" y=\"" + std::to_string(y0 + 16) + "\" text-anchor=\"middle\">" + num(fx) + "</text>\n";
    }
  }
  s += "<text x=\"" + std::to_string((x0 + x1) / 2) + "\" y=\"" + std::to_string(kHeight - 12) +
       "\" text-anchor=\"middle\">" + escape(xlabel) + "</text>\n";
  s += "<text x=\"16\" y=\"" + std::to_string((y0 + y1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       std::to_string((y0 + y1) / 2) + ")\">" + escape(ylabel) + "</text>\n";
  return s;
}

}  // namespace detail

/// Polyline chart, one line per series, with a legend on the right.
inline std::string line_chart(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                              const std::string& ylabel) {
  using namespace detail;
  Range xr, yr;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw InputError("series '" + s.name + "' has mismatched x and y lengths");
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
  }
  xr.settle();
  yr.settle();
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  auto px = [&](double v) { return x0 + (v - xr.lo) / (xr.hi - xr.lo) * (x1 - x0); };
  auto py = [&](double v) { return y0 - (v - yr.lo) / (yr.hi - yr.lo) * (y0 - y1); };

  std::string out = header(title) + axes(xr, yr, xlabel, ylabel);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    std::string pts;
    for (std::size_t i = 0; i < series[k].x.size(); ++i) {
      if (!std::isfinite(series[k].x[i]) || !std::isfinite(series[k].y[i])) continue;
      pts += num(px(series[k].x[i])) + "," + num(py(series[k].y[i])) + " ";
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(k);
    out += "<line x1=\"" + num(x1 + 10) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(x1 + 30) + "\" y2=\"" + num(ly) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + num(x1 + 34) + "\" y=\"" + num(ly + 4) + "\">" + escape(series[k].name) + "</text>\n";
  }
  return out + "</svg>\n";
}

/// Vertical bars from zero (or the smallest negative value).
inline std::string bar_chart(const std::vector<std::string>& labels, const std::vector<double>& values,
                             const std::string& title, const std::string& ylabel) {
  using namespace detail;
  if (labels.size() != values.size()) throw InputError("bar chart needs one label per value");
  Range yr;
  yr.add(0.0);
  for (double v : values) yr.add(v);
  yr.settle();
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  auto py = [&](double v) { return y0 - (v - yr.lo) / (yr.hi - yr.lo) * (y0 - y1); };
  std::string out = header(title) + axes(Range{0.0, 0.0}, yr, "", ylabel);
  const double slot = labels.empty() ? 0.0 : (x1 - x0) / static_cast<double>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double left = x0 + slot * static_cast<double>(i) + slot * 0.15;
    const double top = py(std::max(values[i], 0.0));
    const double bottom = py(std::min(values[i], 0.0));
    out += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(slot * 0.7) + "\" height=\"" +
           num(bottom - top) + "\" fill=\"" + kPalette[i % std::size(kPalette)] + "\"/>\n";
    out += "<text x=\"" + num(left + slot * 0.35) + "\" y=\"" + num(top - 4) + "\" text-anchor=\"middle\">" +
           num(values[i]) + "</text>\n";
    out += "<text x=\"" + num(left + slot * 0.35) + "\" y=\"" + num(y0 + 16) + "\" text-anchor=\"middle\">" +
           escape(labels[i]) + "</text>\n";
  }
  return out + "</svg>\n";
}

}  // namespace prism::svg
