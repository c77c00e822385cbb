#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "sctsim/text.hpp"

namespace sctsim::report {

inline constexpr std::array<std::string_view, 6> kPalette = {"#1b9e77", "#d95f02", "#7570b3",
                                                             "#e7298a", "#66a61e", "#e6ab02"};

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string num(double v) { return text::format_fixed(std::abs(v) < 5e-4 ? 0.0 : v, 2); }

/// Linear map from a data interval onto a pixel interval.
struct Scale {
  double d0, d1, p0, p1;
  double operator()(double v) const {
    if (d1 == d0) return 0.5 * (p0 + p1);
    return p0 + (v - d0) / (d1 - d0) * (p1 - p0);
  }
};

inline Scale padded(double lo, double hi, double p0, double p1) {
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.08 * (hi - lo);
  return {lo - pad, hi + pad, p0, p1};
}

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> lo;  // optional band
  std::vector<double> hi;
};

class Svg {
 public:
  Svg(int width, int height, std::string_view title) : w_(width), h_(height) {
    body_ += "<title>" + xml_escape(title) + "</title>\n";
    body_ += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(w_) + "\" height=\"" + std::to_string(h_) +
             "\" fill=\"white\"/>\n";
    text(w_ / 2.0, 24, title, "middle", 16);
  }

  void line(double x1, double y1, double x2, double y2, std::string_view stroke, std::string_view cls = {},
            double width = 1.0) {
    body_ += "<line" + cls_attr(cls) + " x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) +
             "\" y2=\"" + num(y2) + "\" stroke=\"" + std::string(stroke) + "\" stroke-width=\"" + num(width) +
             "\"/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, std::string_view stroke,
                std::string_view cls, std::string_view name) {
    body_ += "<polyline" + cls_attr(cls) + " data-name=\"" + xml_escape(name) + "\" fill=\"none\" stroke=\"" +
             std::string(stroke) + "\" stroke-width=\"2\" points=\"" + points(pts) + "\"/>\n";
  }

  void polygon(const std::vector<std::pair<double, double>>& pts, std::string_view fill, std::string_view cls) {
    body_ += "<polygon" + cls_attr(cls) + " fill=\"" + std::string(fill) +
             "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"" + points(pts) + "\"/>\n";
  }

  void rect(double x, double y, double w, double h, std::string_view fill, std::string_view cls = {}) {
    body_ += "<rect" + cls_attr(cls) + " x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) +
             "\" height=\"" + num(h) + "\" fill=\"" + std::string(fill) + "\"/>\n";
  }

  void circle(double x, double y, double r, std::string_view fill) {
    body_ += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"" + num(r) + "\" fill=\"" +
             std::string(fill) + "\"/>\n";
  }

  void text(double x, double y, std::string_view s, std::string_view anchor = "start", int size = 11) {
    body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" +
             std::to_string(size) + "\" text-anchor=\"" + std::string(anchor) + "\">" + xml_escape(s) +
             "</text>\n";
  }

  std::string str() const {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
           std::to_string(w_) + "\" height=\"" + std::to_string(h_) + "\" viewBox=\"0 0 " + std::to_string(w_) +
           " " + std::to_string(h_) + "\">\n" + body_ + "</svg>\n";
  }

  int width() const noexcept { return w_; }
  int height() const noexcept { return h_; }

 private:
  static std::string cls_attr(std::string_view cls) {
    return cls.empty() ? std::string() : " class=\"" + std::string(cls) + "\"";
  }
  static std::string points(const std::vector<std::pair<double, double>>& pts) {
    std::string s;
    for (const auto& [x, y] : pts) s += (s.empty() ? "" : " ") + num(x) + "," + num(y);
    return s;
  }

  int w_, h_;
  std::string body_;
};

namespace detail {

struct Frame {
  double left = 70, right = 180, top = 50, bottom = 60;
};

inline void axes(Svg& svg, const Scale& sx, const Scale& sy, const Frame& f, std::string_view xlabel,
                 std::string_view ylabel, const std::vector<double>& xticks) {
  const double x0 = f.left, x1 = svg.width() - f.right, y0 = svg.height() - f.bottom, y1 = f.top;
  svg.line(x0, y0, x1, y0, "#333", "axis");
  svg.line(x0, y0, x0, y1, "#333", "axis");
  for (double t : xticks) {
    svg.line(sx(t), y0, sx(t), y0 + 5, "#333");
    svg.text(sx(t), y0 + 18, text::format_double(t), "middle");
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = sy.d0 + (sy.d1 - sy.d0) * k / 4.0;
    svg.line(x0 - 5, sy(v), x0, sy(v), "#333");
    svg.text(x0 - 8, sy(v) + 4, num(v), "end");
  }
  svg.text(0.5 * (x0 + x1), svg.height() - 18.0, xlabel, "middle", 12);
  svg.text(16, 0.5 * (y0 + y1), ylabel, "start", 12);
}

inline void legend(Svg& svg, const std::vector<std::string>& names, const Frame& f) {
  const double x = svg.width() - f.right + 15;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = f.top + 10 + 18.0 * static_cast<double>(i);
    svg.rect(x, y - 9, 12, 12, kPalette[i % kPalette.size()]);
    svg.text(x + 18, y + 1, names[i]);
  }
}

}  // namespace detail

/// Loading vectors of the first two components from the origin.
inline std::string biplot_svg(const std::vector<std::string>& names, const std::vector<double>& pc1,
                              const std::vector<double>& pc2, double var1, double var2) {
  Svg svg(560, 560, "Construct loadings on PC1 and PC2");
  const double c = 280, r = 200;
  double m = 1e-9;
  for (std::size_t i = 0; i < names.size(); ++i) m = std::max({m, std::abs(pc1[i]), std::abs(pc2[i])});
  const double k = r / std::max(1.0, m);
  svg.line(c - r - 20, c, c + r + 20, c, "#999", "component-axis");
  svg.line(c, c - r - 20, c, c + r + 20, "#999", "component-axis");
  svg.text(c + r + 20, c - 6, "PC1 (" + text::format_fixed(100.0 * var1, 1) + "%)", "end");
  svg.text(c + 6, c - r - 24, "PC2 (" + text::format_fixed(100.0 * var2, 1) + "%)", "start");
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double x = c + k * pc1[i], y = c - k * pc2[i];
    const auto color = kPalette[i % kPalette.size()];
    svg.line(c, c, x, y, color, "loading", 2.0);
    svg.circle(x, y, 3, color);
    svg.text(x + (pc1[i] >= 0 ? 6 : -6), y - 6, names[i], pc1[i] >= 0 ? "start" : "end");
  }
  return svg.str();
}

/// One polyline per series over rounds, with shaded bands where given.
inline std::string line_chart_svg(std::string_view title, std::string_view xlabel, std::string_view ylabel,
                                  const std::vector<Series>& series, std::string_view cls) {
  Svg svg(760, 440, title);
  detail::Frame f;
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  std::vector<double> xticks;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min({ylo, s.y[i], s.lo.empty() ? s.y[i] : s.lo[i]});
      yhi = std::max({yhi, s.y[i], s.hi.empty() ? s.y[i] : s.hi[i]});
      if (std::find(xticks.begin(), xticks.end(), s.x[i]) == xticks.end()) xticks.push_back(s.x[i]);
    }
  if (series.empty() || xticks.empty()) {
    xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  }
  std::sort(xticks.begin(), xticks.end());
  const Scale sx = padded(xlo, xhi, f.left, svg.width() - f.right);
  const Scale sy = padded(ylo, yhi, svg.height() - f.bottom, f.top);
  detail::axes(svg, sx, sy, f, xlabel, ylabel, xticks);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const auto color = kPalette[k % kPalette.size()];
    names.push_back(s.name);
    if (!s.lo.empty()) {
      std::vector<std::pair<double, double>> band;
      for (std::size_t i = 0; i < s.x.size(); ++i) band.emplace_back(sx(s.x[i]), sy(s.hi[i]));
      for (std::size_t i = s.x.size(); i-- > 0;) band.emplace_back(sx(s.x[i]), sy(s.lo[i]));
      svg.polygon(band, color, "ci-band");
    }
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) pts.emplace_back(sx(s.x[i]), sy(s.y[i]));
    svg.polyline(pts, color, cls, s.name);
  }
  detail::legend(svg, names, f);
  return svg.str();
}

struct Interval {
  std::string name;
  double mean, lo, hi;
};

/// Point estimates with interval whiskers, one row per construct.
inline std::string interval_chart_svg(std::string_view title, std::string_view xlabel,
                                      const std::vector<Interval>& rows) {
  const int h = 90 + 40 * static_cast<int>(rows.size());
  Svg svg(760, h, title);
  double lo = 0.0, hi = 0.0;
  for (const auto& r : rows) {
    lo = std::min(lo, r.lo);
    hi = std::max(hi, r.hi);
  }
  const double left = 200, right = 720;
  const Scale sx = padded(lo, hi, left, right);
  const double base = h - 40.0;
  svg.line(left, base, right, base, "#333", "axis");
  for (int k = 0; k <= 4; ++k) {
    const double v = sx.d0 + (sx.d1 - sx.d0) * k / 4.0;
    svg.line(sx(v), base, sx(v), base + 5, "#333");
    svg.text(sx(v), base + 18, num(v), "middle");
  }
  svg.line(sx(0.0), 40, sx(0.0), base, "#bbb");
  svg.text(0.5 * (left + right), h - 6.0, xlabel, "middle", 12);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double y = 60 + 40.0 * static_cast<double>(i);
    const auto color = kPalette[i % kPalette.size()];
    svg.text(left - 10, y + 4, rows[i].name, "end");
    svg.line(sx(rows[i].lo), y, sx(rows[i].hi), y, color, "interval", 2.0);
    svg.line(sx(rows[i].lo), y - 6, sx(rows[i].lo), y + 6, color);
    svg.line(sx(rows[i].hi), y - 6, sx(rows[i].hi), y + 6, color);
    svg.circle(sx(rows[i].mean), y, 4, color);
  }
  return svg.str();
}

}  // namespace sctsim::report
