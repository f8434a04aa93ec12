#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cotdr/errors.hpp"

namespace cotdr {

// Minimal, dependency-free line plots. Output is deterministic: fixed
// canvas, fixed palette, locale-independent number formatting, and
// min/max decimation so a multi-year series stays a few kilobytes.
struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y)
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 960;
  int height = 540;
  std::size_t max_points_per_series = 2000;
};

namespace detail {

inline constexpr std::array<std::string_view, 6> kPlotPalette = {
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

inline std::string format_fixed(double v, int precision) {
  if (!std::isfinite(v)) return "0";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v,
                           std::chars_format::fixed, precision);
  return std::string(buf, res.ptr);
}

inline std::string format_tick(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v,
                           std::chars_format::general, 6);
  return std::string(buf, res.ptr);
}

inline std::string escape_xml(std::string_view s) {
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

// Tick spacing of the form {1, 2, 5} * 10^k giving roughly `want` ticks.
inline double nice_step(double span, int want) {
  if (!(span > 0.0)) return 1.0;
  const double raw = span / std::max(want, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  double step;
  if (r <= 1.0) step = 1.0;
  else if (r <= 2.0) step = 2.0;
  else if (r <= 5.0) step = 5.0;
  else step = 10.0;
  return step * mag;
}

// Keep at most `budget` points by emitting the min and max of each bucket,
// preserving peaks that plain subsampling would erase.
inline std::vector<std::pair<double, double>> decimate_min_max(
    const std::vector<std::pair<double, double>>& pts, std::size_t budget) {
  if (pts.size() <= budget || budget < 4) return pts;
  const std::size_t buckets = budget / 2;
  std::vector<std::pair<double, double>> out;
  out.reserve(2 * buckets);
  for (std::size_t b = 0; b < buckets; ++b) {
    const std::size_t lo = b * pts.size() / buckets;
    const std::size_t hi = (b + 1) * pts.size() / buckets;
    if (lo >= hi) continue;
    std::size_t imin = lo, imax = lo;
    for (std::size_t i = lo; i < hi; ++i) {
      if (pts[i].second < pts[imin].second) imin = i;
      if (pts[i].second > pts[imax].second) imax = i;
    }
    const std::size_t first = std::min(imin, imax);
    const std::size_t second = std::max(imin, imax);
    out.push_back(pts[first]);
    if (second != first) out.push_back(pts[second]);
  }
  return out;
}

}  // namespace detail

inline std::string render_line_plot(const PlotSpec& spec,
                                    const std::vector<PlotSeries>& series) {
  if (series.empty())
    throw invalid_input("render_line_plot: no series to draw");

  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin, ymin = xmin, ymax = -xmin;
  bool any = false;
  for (const PlotSeries& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
      any = true;
    }
  }
  if (!any) throw invalid_input("render_line_plot: all points are empty");
  if (xmax == xmin) { xmax += 0.5; xmin -= 0.5; }
  if (ymax == ymin) { ymax += 0.5; ymin -= 0.5; }
  // Headroom so lines do not sit on the frame.
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double ml = 72.0, mr = 18.0, mt = 36.0, mb = 52.0;
  const double pw = spec.width - ml - mr;
  const double ph = spec.height - mt - mb;
  const auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  const auto sy = [&](double y) { return mt + (ymax - y) / (ymax - ymin) * ph; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(spec.width) + "\" height=\"" +
         std::to_string(spec.height) + "\" viewBox=\"0 0 " +
         std::to_string(spec.width) + " " + std::to_string(spec.height) +
         "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  out += "<text x=\"" + detail::format_fixed(ml + pw / 2, 1) +
         "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">" +
         detail::escape_xml(spec.title) + "</text>\n";

  // Grid and ticks.
  const double xstep = detail::nice_step(xmax - xmin, 6);
  const double ystep = detail::nice_step(ymax - ymin, 6);
  out += "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#444444\">\n";
  for (double t = std::ceil(xmin / xstep) * xstep; t <= xmax + 1e-9 * xstep;
       t += xstep) {
    const std::string px = detail::format_fixed(sx(t), 1);
    out += "<line x1=\"" + px + "\" y1=\"" + detail::format_fixed(mt, 1) +
           "\" x2=\"" + px + "\" y2=\"" + detail::format_fixed(mt + ph, 1) +
           "\" stroke=\"#e0e0e0\"/>\n";
    out += "<text x=\"" + px + "\" y=\"" +
           detail::format_fixed(mt + ph + 16, 1) +
           "\" text-anchor=\"middle\">" + detail::format_tick(t) + "</text>\n";
  }
  for (double t = std::ceil(ymin / ystep) * ystep; t <= ymax + 1e-9 * ystep;
       t += ystep) {
    const std::string py = detail::format_fixed(sy(t), 1);
    out += "<line x1=\"" + detail::format_fixed(ml, 1) + "\" y1=\"" + py +
           "\" x2=\"" + detail::format_fixed(ml + pw, 1) + "\" y2=\"" + py +
           "\" stroke=\"#e0e0e0\"/>\n";
    out += "<text x=\"" + detail::format_fixed(ml - 6, 1) + "\" y=\"" + py +
           "\" text-anchor=\"end\" dominant-baseline=\"middle\">" +
           detail::format_tick(t) + "</text>\n";
  }
  out += "</g>\n";

  // Frame and axis labels.
  out += "<rect x=\"" + detail::format_fixed(ml, 1) + "\" y=\"" +
         detail::format_fixed(mt, 1) + "\" width=\"" +
         detail::format_fixed(pw, 1) + "\" height=\"" +
         detail::format_fixed(ph, 1) +
         "\" fill=\"none\" stroke=\"#333333\"/>\n";
  out += "<text x=\"" + detail::format_fixed(ml + pw / 2, 1) + "\" y=\"" +
         detail::format_fixed(spec.height - 10.0, 1) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">" +
         detail::escape_xml(spec.x_label) + "</text>\n";
  out += "<text x=\"16\" y=\"" + detail::format_fixed(mt + ph / 2, 1) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" transform=\"rotate(-90 16 " +
         detail::format_fixed(mt + ph / 2, 1) + ")\">" +
         detail::escape_xml(spec.y_label) + "</text>\n";

  // Series plus legend.
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto pts = detail::decimate_min_max(series[si].points,
                                              spec.max_points_per_series);
    const std::string_view color =
        detail::kPlotPalette[si % detail::kPlotPalette.size()];
    std::string poly;
    for (const auto& [x, y] : pts) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      poly += detail::format_fixed(sx(x), 2) + "," +
              detail::format_fixed(sy(y), 2) + " ";
    }
    if (!poly.empty()) poly.pop_back();
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.4\" points=\"" + poly + "\"/>\n";
    const double lx = ml + 12.0;
    const double ly = mt + 16.0 + 16.0 * static_cast<double>(si);
    out += "<line x1=\"" + detail::format_fixed(lx, 1) + "\" y1=\"" +
           detail::format_fixed(ly - 4, 1) + "\" x2=\"" +
           detail::format_fixed(lx + 22, 1) + "\" y2=\"" +
           detail::format_fixed(ly - 4, 1) + "\" stroke=\"" +
           std::string(color) + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + detail::format_fixed(lx + 28, 1) + "\" y=\"" +
           detail::format_fixed(ly, 1) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" +
           detail::escape_xml(series[si].label) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace cotdr
