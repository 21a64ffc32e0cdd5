#pragma once

// Static band plots: truth, predictive median, a central interval, the
// allocation threshold and the static maximum, as SVG plus the raw CSV series.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pkan/allocation.hpp"
#include "pkan/data.hpp"
#include "pkan/metrics.hpp"

namespace pkan {

struct BandSeries {
  std::string title;
  std::vector<Timestamp> time;
  std::vector<double> truth;
  std::vector<double> median;
  std::vector<double> lower;  // empty for point forecasts
  std::vector<double> upper;
  std::vector<double> threshold;
  double static_max = 0.0;
  double interval = 0.9;

  bool has_interval() const { return !lower.empty(); }
};

inline BandSeries band_series(std::string title, std::span<const EvalRecord> records, const AllocationReport& report,
                              double interval = 0.9) {
  BandSeries b;
  b.title = std::move(title);
  b.static_max = static_cast<double>(report.budget);
  b.interval = interval;
  const double lo = 0.5 * (1.0 - interval);
  const double hi = 0.5 * (1.0 + interval);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    b.time.push_back(r.timestamp);
    b.truth.push_back(r.y);
    b.median.push_back(r.median());
    if (!r.is_point()) {
      b.lower.push_back(quantile(r.distribution(), lo));
      b.upper.push_back(quantile(r.distribution(), hi));
    }
    b.threshold.push_back(static_cast<double>(report.steps.at(i).allocation));
  }
  return b;
}

/// `step,timestamp,y,median,lower,upper,threshold,static_max`; interval columns empty for PF models.
inline void write_band_csv(std::ostream& out, const BandSeries& b) {
  out << "step,timestamp,y,median,lower,upper,threshold,static_max\n";
  for (std::size_t i = 0; i < b.truth.size(); ++i) {
    out << i << ',' << format_timestamp(b.time[i]) << ',' << format_double(b.truth[i]) << ','
        << format_double(b.median[i]) << ',';
    if (b.has_interval()) out << format_double(b.lower[i]) << ',' << format_double(b.upper[i]);
    else out << ',';
    out << ',' << format_double(b.threshold[i]) << ',' << format_double(b.static_max) << '\n';
  }
}

namespace detail {

inline std::string svg_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape_xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace detail

inline void write_band_svg(std::ostream& out, const BandSeries& b) {
  constexpr double width = 960, height = 360, left = 56, right = 150, top = 30, bottom = 40;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const std::size_t n = b.truth.size();

  double y_max = b.static_max;
  for (const auto* s : {&b.truth, &b.median, &b.upper, &b.threshold}) {
    for (double v : *s) y_max = std::max(y_max, v);
  }
  y_max = y_max <= 0.0 ? 1.0 : y_max * 1.05;
  const auto px = [&](std::size_t i) { return left + (n <= 1 ? 0.0 : plot_w * static_cast<double>(i) / static_cast<double>(n - 1)); };
  const auto py = [&](double v) { return top + plot_h * (1.0 - std::clamp(v, 0.0, y_max) / y_max); };
  const auto polyline = [&](const std::vector<double>& s, const char* colour, const char* extra) {
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" " << extra << " points=\"";
    for (std::size_t i = 0; i < s.size(); ++i) out << detail::svg_number(px(i)) << ',' << detail::svg_number(py(s[i])) << ' ';
    out << "\"/>\n";
  };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << left << "\" y=\"18\">" << detail::escape_xml(b.title) << "</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"#999\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = y_max * k / 4.0;
    out << "<text x=\"" << left - 6 << "\" y=\"" << detail::svg_number(py(v) + 4) << "\" text-anchor=\"end\">"
        << detail::svg_number(v) << "</text>\n";
  }
  if (n > 0) {
    out << "<text x=\"" << left << "\" y=\"" << height - 12 << "\">" << format_timestamp(b.time.front()) << "</text>\n";
    out << "<text x=\"" << left + plot_w << "\" y=\"" << height - 12 << "\" text-anchor=\"end\">"
        << format_timestamp(b.time.back()) << "</text>\n";
  }

  if (b.has_interval() && n > 0) {
    out << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.5\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < n; ++i) out << detail::svg_number(px(i)) << ',' << detail::svg_number(py(b.upper[i])) << ' ';
    for (std::size_t i = n; i-- > 0;) out << detail::svg_number(px(i)) << ',' << detail::svg_number(py(b.lower[i])) << ' ';
    out << "\"/>\n";
  }
  const std::vector<double> budget(n, b.static_max);
  polyline(budget, "#555", "stroke-dasharray=\"6 4\"");
  polyline(b.threshold, "#d62728", "");
  polyline(b.median, "#1f77b4", "");
  polyline(b.truth, "black", "");

  struct Key { const char* label; const char* colour; };
  const std::string band_label = "central " + format_double(b.interval * 100.0) + "%";
  const Key keys[] = {{"truth", "black"}, {"median", "#1f77b4"}, {"threshold", "#d62728"}, {"static max", "#555"}};
  double ky = top + 10;
  for (const auto& k : keys) {
    out << "<line x1=\"" << width - right + 12 << "\" y1=\"" << ky << "\" x2=\"" << width - right + 36 << "\" y2=\"" << ky
        << "\" stroke=\"" << k.colour << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << width - right + 42 << "\" y=\"" << ky + 4 << "\">" << k.label << "</text>\n";
    ky += 18;
  }
  if (b.has_interval()) {
    out << "<rect x=\"" << width - right + 12 << "\" y=\"" << ky - 6 << "\" width=\"24\" height=\"12\" fill=\"#9ecae1\"/>\n";
    out << "<text x=\"" << width - right + 42 << "\" y=\"" << ky + 4 << "\">" << band_label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace pkan
