#pragma once

// CSV tables and static SVG plots. Output is a pure function of the data: no
// timestamps, shortest round-trip number formatting.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "npde/diagnostics.hpp"

namespace npde {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw Error(ErrorKind::io, "short write to '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// CSV

inline std::string csv_profiles(const Grid1D& g, std::span<const double> truth, std::span<const double> pred) {
  std::string s = "x,phi_true,phi_pred\n";
  for (int i = 0; i < g.n_points(); ++i) s += fmt::format("{},{},{}\n", g.x(i), truth[i], pred[i]);
  return s;
}

inline std::string csv_rms(const std::vector<RmsRow>& rows) {
  std::string s = "ic_param,log10_rmse,blowup_flag\n";
  for (const auto& r : rows) s += fmt::format("{},{},{}\n", r.ic_param, r.log10_rmse, r.blowup ? 1 : 0);
  return s;
}

inline std::string csv_eigen(const std::vector<JacobianReport>& reports) {
  std::string s = "rollout_time,re,im,abs\n";
  for (const auto& r : reports)
    for (const auto& e : r.eigenvalues)
      s += fmt::format("{},{},{},{}\n", r.rollout_time, e.real(), e.imag(), std::abs(e));
  return s;
}

inline std::string csv_energy(const EnergySeries& e) {
  std::string s = "t,E\n";
  for (std::size_t k = 0; k < e.values.size(); ++k) s += fmt::format("{},{}\n", e.times[k], e.values[k]);
  return s;
}

// ---------------------------------------------------------------------------
// SVG

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Frame {
  double x0, x1, y0, y1;
  double left = 70, right = 20, top = 40, bottom = 50, width = 640, height = 420;
  [[nodiscard]] double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  [[nodiscard]] double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

inline void pad_range(double& lo, double& hi) {
  if (!(lo < hi)) {
    lo -= 0.5;
    hi += 0.5;
    return;
  }
  const double m = 0.05 * (hi - lo);
  lo -= m;
  hi += m;
}

inline std::string axes(const Frame& f, const std::string& title, const std::string& xlabel, const std::string& ylabel) {
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      f.width, f.height);
  s += fmt::format("<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
                   f.width / 2, esc(title));
  const double bx0 = f.left, bx1 = f.width - f.right, by0 = f.top, by1 = f.height - f.bottom;
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", bx0, by0,
                   bx1 - bx0, by1 - by0);
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0, yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.3g}</text>\n",
                     f.px(xv), by1 + 16, xv);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.3g}</text>\n",
                     bx0 - 6, f.py(yv) + 4, yv);
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
                   (bx0 + bx1) / 2, f.height - 12, esc(xlabel));
  s += fmt::format("<text x=\"16\" y=\"{0}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" "
                   "transform=\"rotate(-90 16 {0})\">{1}</text>\n",
                   (by0 + by1) / 2, esc(ylabel));
  return s;
}

}  // namespace detail

/// Line plot of one or more series. Non-finite points break the line.
inline std::string svg_line_plot(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                                 const std::string& ylabel) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  detail::pad_range(x0, x1);
  detail::pad_range(y0, y1);
  detail::Frame f{x0, x1, y0, y1};
  std::string out = detail::axes(f, title, xlabel, ylabel);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = detail::kPalette[k % std::size(detail::kPalette)];
    std::string path;
    bool pen = false;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        pen = false;
        continue;
      }
      path += fmt::format("{}{:.2f},{:.2f} ", pen ? "L" : "M", f.px(s.x[i]), f.py(s.y[i]));
      pen = true;
    }
    if (!path.empty())
      out += fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\"/>\n", path, colour);
    out += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{}\">{}</text>\n",
                       f.left + 10, f.top + 16 + 15 * k, colour, detail::esc(s.name));
  }
  return out + "</svg>\n";
}

struct ScatterSet {
  std::string name;
  std::vector<Complex> points;
};

/// Eigenvalues in the complex plane with the unit circle overlaid.
inline std::string svg_unit_circle(const std::vector<ScatterSet>& sets, const std::string& title) {
  double r = 1.2;
  for (const auto& s : sets)
    for (const auto& p : s.points)
      if (std::isfinite(std::abs(p))) r = std::max(r, 1.05 * std::abs(p));
  detail::Frame f{-r, r, -r, r};
  f.width = 520;
  f.height = 520;  // square plot area: margins sum to 90 both ways
  std::string out = detail::axes(f, title, "Re", "Im");
  const double rx = f.px(1.0) - f.px(0.0), ry = f.py(0.0) - f.py(1.0);
  out += fmt::format("<ellipse cx=\"{:.2f}\" cy=\"{:.2f}\" rx=\"{:.2f}\" ry=\"{:.2f}\" fill=\"none\" stroke=\"#555\" "
                     "stroke-dasharray=\"4 3\"/>\n",
                     f.px(0.0), f.py(0.0), rx, ry);
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const char* colour = detail::kPalette[k % std::size(detail::kPalette)];
    for (const auto& p : sets[k].points)
      if (std::isfinite(std::abs(p)))
        out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.5\" fill=\"{}\"/>\n", f.px(p.real()),
                           f.py(p.imag()), colour);
    out += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{}\">{}</text>\n",
                       f.left + 10, f.top + 16 + 15 * k, colour, detail::esc(sets[k].name));
  }
  return out + "</svg>\n";
}

}  // namespace npde
