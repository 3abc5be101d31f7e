#pragma once

// Standalone SVG line/scatter plots for quick inspection of results.

#include "lossgeom/csv.hpp"
#include "lossgeom/experiments.hpp"
#include "lossgeom/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace lossgeom {

struct SvgSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool markers = false;  // scatter instead of polyline
};

struct SvgPlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  std::vector<SvgSeries> series;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
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

}  // namespace detail

inline void write_svg(const std::filesystem::path& path, const SvgPlot& plot) {
  constexpr double width = 720, height = 440, left = 70, right = 170, top = 40, bottom = 50;
  constexpr std::array<const char*, 9> colors = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                                 "#8c564b", "#e377c2", "#7f7f7f", "#17becf"};
  auto tx = [&](double x) { return plot.log_x ? std::log10(x) : x; };
  auto usable = [&](double x, double y) { return std::isfinite(y) && std::isfinite(x) && (!plot.log_x || x > 0.0); };

  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo, y_lo = x_lo, y_hi = -x_lo;
  std::size_t n_points = 0;
  for (const auto& s : plot.series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      x_lo = std::min(x_lo, tx(s.x[i]));
      x_hi = std::max(x_hi, tx(s.x[i]));
      y_lo = std::min(y_lo, s.y[i]);
      y_hi = std::max(y_hi, s.y[i]);
      ++n_points;
    }
  if (n_points == 0) throw ValidationError("write_svg: nothing to plot");
  if (x_hi == x_lo) x_hi = x_lo + 1.0;
  if (y_hi == y_lo) y_hi = y_lo + 1.0;

  const double pw = width - left - right;
  const double ph = height - top - bottom;
  auto px = [&](double x) { return left + (tx(x) - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y_lo) / (y_hi - y_lo)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << left << "\" y=\"24\" font-size=\"15\">" << detail::xml_escape(plot.title) << "</text>\n"
      << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x_lo + (x_hi - x_lo) * i / 4.0;
    const double fy = y_lo + (y_hi - y_lo) * i / 4.0;
    const double label_x = plot.log_x ? std::pow(10.0, fx) : fx;
    svg << "<text x=\"" << left + pw * i / 4.0 << "\" y=\"" << height - bottom + 16
        << "\" text-anchor=\"middle\">" << format_real(std::round(label_x * 1e4) / 1e4).substr(0, 8) << "</text>\n"
        << "<text x=\"" << left - 6 << "\" y=\"" << top + ph * (1.0 - i / 4.0) + 4 << "\" text-anchor=\"end\">"
        << format_real(fy).substr(0, 8) << "</text>\n";
  }
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
      << detail::xml_escape(plot.x_label) << (plot.log_x ? " (log scale)" : "") << "</text>\n"
      << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << detail::xml_escape(plot.y_label) << "</text>\n";

  for (std::size_t s = 0; s < plot.series.size(); ++s) {
    const auto& series = plot.series[s];
    const char* color = colors[s % colors.size()];
    if (series.markers) {
      for (std::size_t i = 0; i < std::min(series.x.size(), series.y.size()); ++i)
        if (usable(series.x[i], series.y[i]))
          svg << "<circle cx=\"" << px(series.x[i]) << "\" cy=\"" << py(series.y[i]) << "\" r=\"2\" fill=\"" << color
              << "\"/>\n";
    } else {
      svg << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << color << "\" points=\"";
      for (std::size_t i = 0; i < std::min(series.x.size(), series.y.size()); ++i)
        if (usable(series.x[i], series.y[i])) svg << px(series.x[i]) << ',' << py(series.y[i]) << ' ';
      svg << "\"/>\n";
    }
    svg << "<text x=\"" << width - right + 10 << "\" y=\"" << top + 14 + 16 * static_cast<double>(s) << "\" fill=\""
        << color << "\">" << detail::xml_escape(series.name) << "</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << svg.str();
}

/// Sorted eigenvalues against their index.
inline void emit_spectrum_svg(const std::filesystem::path& path, const Vector& eigenvalues) {
  if (eigenvalues.size() == 0) throw ValidationError("emit_spectrum_svg: empty spectrum");
  SvgSeries s{"eigenvalue", {}, {}, true};
  for (Index i = 0; i < eigenvalues.size(); ++i) {
    s.x.push_back(static_cast<double>(i + 1));
    s.y.push_back(eigenvalues(i));
  }
  write_svg(path, {"Hessian eigenvalues (sorted)", "index", "eigenvalue", false, {s}});
}

/// One polyline per sweep statistic, each divided by its largest magnitude.
inline void emit_sweep_svg(const std::filesystem::path& path, const std::vector<SweepSummary>& summary, bool log_x) {
  if (summary.empty()) throw ValidationError("emit_sweep_svg: empty sweep");
  SvgPlot plot{"sigma_z sweep (each statistic / its max)", "sigma_z", "normalized value", log_x, {}};
  const auto& names = sweep_metric_names();
  for (std::size_t m = 0; m < names.size(); ++m) {
    if (names[m] == "spectral_norm") continue;  // same as top_eigenvalue for PSD Hessians
    SvgSeries s{names[m], {}, {}, false};
    double scale = 0.0;
    for (const auto& point : summary)
      if (std::isfinite(point.mean[m])) scale = std::max(scale, std::abs(point.mean[m]));
    for (const auto& point : summary) {
      s.x.push_back(point.sigma_z);
      s.y.push_back(scale > 0.0 ? point.mean[m] / scale : point.mean[m]);
    }
    plot.series.push_back(std::move(s));
  }
  write_svg(path, plot);
}

}  // namespace lossgeom
