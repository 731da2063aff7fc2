#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "prescript/errors.hpp"
#include "prescript/io.hpp"

namespace prescript::plot {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

/// Five-number summary for one box of a box plot.
struct BoxStats {
  std::string label;
  double low = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double high = 0.0;
};

namespace detail {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 24;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 48;

inline const char* color(std::size_t index) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
  return palette[index % 8];
}

struct Scale {
  double lo = 0.0, hi = 1.0;
  double pixel_lo = 0.0, pixel_hi = 1.0;
  double to_pixel(double v) const {
    const double unit = hi > lo ? (v - lo) / (hi - lo) : 0.5;
    return pixel_lo + unit * (pixel_hi - pixel_lo);
  }
};

inline void open_svg(std::ofstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"15\">" << title << "</text>\n";
}

inline void axes(std::ofstream& out, const Scale& x, const Scale& y, const std::string& xlabel,
                 const std::string& ylabel) {
  out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kHeight - kMarginBottom << "\" x2=\""
      << kWidth - kMarginRight << "\" y2=\"" << kHeight - kMarginBottom
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft
      << "\" y2=\"" << kHeight - kMarginBottom << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double vy = y.lo + (y.hi - y.lo) * tick / 4.0;
    const double py = y.to_pixel(vy);
    out << "<line x1=\"" << kMarginLeft - 4 << "\" y1=\"" << py << "\" x2=\"" << kMarginLeft
        << "\" y2=\"" << py << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << py + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_double(std::round(vy * 1000.0) / 1000.0) << "</text>\n";
    const double vx = x.lo + (x.hi - x.lo) * tick / 4.0;
    const double px = x.to_pixel(vx);
    out << "<line x1=\"" << px << "\" y1=\"" << kHeight - kMarginBottom << "\" x2=\"" << px
        << "\" y2=\"" << kHeight - kMarginBottom + 4 << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << px << "\" y=\"" << kHeight - kMarginBottom + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_double(std::round(vx * 1000.0) / 1000.0) << "</text>\n";
  }
  out << "<text x=\"" << (kMarginLeft + kWidth - kMarginRight) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xlabel
      << "</text>\n"
      << "<text x=\"16\" y=\"" << (kMarginTop + kHeight - kMarginBottom) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\""
      << " transform=\"rotate(-90 16 " << (kMarginTop + kHeight - kMarginBottom) / 2 << ")\">"
      << ylabel << "</text>\n";
}

}  // namespace detail

/// Line chart with one polyline and legend entry per series.
inline void write_line_chart(const std::string& path, const std::vector<Series>& series,
                             const std::string& title, const std::string& xlabel,
                             const std::string& ylabel) {
  if (series.empty()) throw InvalidInput("no series to plot");
  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const Series& s : series)
    for (const auto& [px, py] : s.points) {
      if (!std::isfinite(px) || !std::isfinite(py)) continue;
      x_lo = std::min(x_lo, px);
      x_hi = std::max(x_hi, px);
      y_lo = std::min(y_lo, py);
      y_hi = std::max(y_hi, py);
    }
  if (x_lo > x_hi) throw InvalidInput("no finite points to plot");
  if (x_lo == x_hi) x_hi = x_lo + 1.0;
  if (y_lo == y_hi) y_hi = y_lo + 1.0;
  const double pad = 0.05 * (y_hi - y_lo);
  detail::Scale x{x_lo, x_hi, double(detail::kMarginLeft), double(detail::kWidth - detail::kMarginRight)};
  detail::Scale y{y_lo - pad, y_hi + pad, double(detail::kHeight - detail::kMarginBottom),
                  double(detail::kMarginTop)};

  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write plot file: " + path);
  detail::open_svg(out, title);
  detail::axes(out, x, y, xlabel, ylabel);
  for (std::size_t s = 0; s < series.size(); ++s) {
    out << "<polyline fill=\"none\" stroke=\"" << detail::color(s) << "\" stroke-width=\"2\" points=\"";
    for (const auto& [px, py] : series[s].points) {
      if (!std::isfinite(py)) continue;
      out << x.to_pixel(px) << "," << y.to_pixel(py) << " ";
    }
    out << "\"/>\n";
    for (const auto& [px, py] : series[s].points) {
      if (!std::isfinite(py)) continue;
      out << "<circle cx=\"" << x.to_pixel(px) << "\" cy=\"" << y.to_pixel(py)
          << "\" r=\"3\" fill=\"" << detail::color(s) << "\"/>\n";
    }
    out << "<rect x=\"" << detail::kWidth - 150 << "\" y=\"" << detail::kMarginTop + 18 * s
        << "\" width=\"12\" height=\"12\" fill=\"" << detail::color(s) << "\"/>\n"
        << "<text x=\"" << detail::kWidth - 132 << "\" y=\"" << detail::kMarginTop + 18 * s + 10
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[s].label << "</text>\n";
  }
  out << "</svg>\n";
}

/// Box plot: one box per entry (whiskers at low/high, box at the quartiles).
inline void write_boxplot(const std::string& path, const std::vector<BoxStats>& boxes,
                          const std::string& title, const std::string& ylabel) {
  if (boxes.empty()) throw InvalidInput("no boxes to plot");
  double y_lo = 1e300, y_hi = -1e300;
  for (const BoxStats& b : boxes) {
    if (std::isfinite(b.low)) y_lo = std::min(y_lo, b.low);
    if (std::isfinite(b.high)) y_hi = std::max(y_hi, b.high);
  }
  if (y_lo > y_hi) {
    y_lo = -1.0;
    y_hi = 1.0;
  }
  if (y_lo == y_hi) y_hi = y_lo + 1.0;
  const double pad = 0.08 * (y_hi - y_lo);
  detail::Scale y{y_lo - pad, y_hi + pad, double(detail::kHeight - detail::kMarginBottom),
                  double(detail::kMarginTop)};
  detail::Scale x{0.0, double(boxes.size()), double(detail::kMarginLeft),
                  double(detail::kWidth - detail::kMarginRight)};

  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write plot file: " + path);
  detail::open_svg(out, title);
  detail::axes(out, x, y, "", ylabel);
  const double slot = (x.pixel_hi - x.pixel_lo) / static_cast<double>(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const BoxStats& b = boxes[i];
    const double cx = x.pixel_lo + slot * (static_cast<double>(i) + 0.5);
    const double half = std::min(28.0, slot * 0.3);
    const auto clamp_pixel = [&](double v) {
      return y.to_pixel(std::isfinite(v) ? std::clamp(v, y.lo, y.hi) : y.lo);
    };
    out << "<line x1=\"" << cx << "\" y1=\"" << clamp_pixel(b.low) << "\" x2=\"" << cx
        << "\" y2=\"" << clamp_pixel(b.high) << "\" stroke=\"black\"/>\n"
        << "<rect x=\"" << cx - half << "\" y=\"" << clamp_pixel(b.q75) << "\" width=\"" << 2 * half
        << "\" height=\"" << clamp_pixel(b.q25) - clamp_pixel(b.q75) << "\" fill=\""
        << detail::color(i) << "\" fill-opacity=\"0.45\" stroke=\"black\"/>\n"
        << "<line x1=\"" << cx - half << "\" y1=\"" << clamp_pixel(b.median) << "\" x2=\""
        << cx + half << "\" y2=\"" << clamp_pixel(b.median) << "\" stroke=\"black\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << cx << "\" y=\"" << detail::kHeight - detail::kMarginBottom + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << b.label
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace prescript::plot
