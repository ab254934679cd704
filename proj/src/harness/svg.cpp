#include "chunkgrpo/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace chunkgrpo {

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

/// Roughly five round tick positions covering [lo, hi].
std::vector<double> ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (span / step <= 6.0) {
      break;
    }
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) {
    out.push_back(t);
  }
  return out;
}

}  // namespace

const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors;
}

SvgChart::SvgChart(std::string title, std::string x_label, std::string y_label)
    : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

void SvgChart::add(Series s) {
  if (s.color.empty()) {
    s.color = palette()[series_.size() % palette().size()];
  }
  series_.push_back(std::move(s));
}

std::string SvgChart::render(int width, int height) const {
  const double left = 70;
  const double right = 160;
  const double top = 40;
  const double bottom = 50;
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -x0;
  double y0 = x0;
  double y1 = -x0;
  for (const auto& s : series_) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        continue;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) {
    x0 = 0;
    x1 = 1;
    y0 = 0;
    y1 = 1;
  }
  if (x1 - x0 < 1e-12) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 - y0 < 1e-12) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad_y = 0.05 * (y1 - y0);
  y0 -= pad_y;
  y1 += pad_y;
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  if (equal_aspect_) {
    const double sx = (x1 - x0) / pw;
    const double sy = (y1 - y0) / ph;
    if (sx > sy) {
      const double c = 0.5 * (y0 + y1);
      y0 = c - 0.5 * sx * ph;
      y1 = c + 0.5 * sx * ph;
    } else {
      const double c = 0.5 * (x0 + x1);
      x0 = c - 0.5 * sy * pw;
      x1 = c + 0.5 * sy * pw;
    }
  }
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title_)
    << "</text>\n";
  o << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (double t : ticks(x0, x1)) {
    o << "<line x1=\"" << num(px(t)) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(px(t)) << "\" y2=\""
      << num(top + ph + 5) << "\" stroke=\"#333\"/>";
    o << "<text x=\"" << num(px(t)) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">"
      << tick_label(t) << "</text>\n";
  }
  for (double t : ticks(y0, y1)) {
    o << "<line x1=\"" << num(left - 5) << "\" y1=\"" << num(py(t)) << "\" x2=\"" << num(left) << "\" y2=\""
      << num(py(t)) << "\" stroke=\"#333\"/>";
    o << "<text x=\"" << num(left - 8) << "\" y=\"" << num(py(t) + 4) << "\" text-anchor=\"end\">" << tick_label(t)
      << "</text>\n";
  }
  o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
    << escape(x_label_) << "</text>\n";
  o << "<text transform=\"translate(16," << num(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(y_label_) << "</text>\n";

  for (std::size_t k = 0; k < series_.size(); ++k) {
    const auto& s = series_[k];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (s.scatter) {
      o << "<g fill=\"" << s.color << "\" fill-opacity=\"0.6\">";
      for (std::size_t i = 0; i < n; ++i) {
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
          o << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i])) << "\" r=\"2\"/>";
        }
      }
      o << "</g>\n";
    } else {
      o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.6\" points=\"";
      for (std::size_t i = 0; i < n; ++i) {
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
          o << num(px(s.x[i])) << ',' << num(py(s.y[i])) << ' ';
        }
      }
      o << "\"/>\n";
    }
    const double ly = top + 14 + 18.0 * static_cast<double>(k);
    o << "<rect x=\"" << num(left + pw + 12) << "\" y=\"" << num(ly - 9) << "\" width=\"12\" height=\"10\" fill=\""
      << s.color << "\"/>";
    o << "<text x=\"" << num(left + pw + 30) << "\" y=\"" << num(ly) << "\">" << escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string heatmap_svg(const std::string& title, const std::string& row_label, const std::string& col_label,
                        const std::vector<std::string>& rows, const std::vector<std::string>& cols,
                        const std::vector<std::vector<HeatmapCell>>& cells, double lo, double hi) {
  const double cell = 34;
  const double left = 70;
  const double top = 60;
  const double width = left + cell * static_cast<double>(cols.size()) + 20;
  const double height = top + cell * static_cast<double>(rows.size()) + 40;
  auto color = [&](double v) {
    const double t = std::clamp(hi > lo ? (v - lo) / (hi - lo) : 0.5, 0.0, 1.0);
    int r = 255;
    int g = 255;
    int b = 255;
    if (t < 0.5) {
      const double s = t / 0.5;
      r = static_cast<int>(std::lround(59 + s * (255 - 59)));
      g = static_cast<int>(std::lround(76 + s * (255 - 76)));
      b = static_cast<int>(std::lround(192 + s * (255 - 192)));
    } else {
      const double s = (t - 0.5) / 0.5;
      r = static_cast<int>(std::lround(255 - s * (255 - 180)));
      g = static_cast<int>(std::lround(255 - s * (255 - 4)));
      b = static_cast<int>(std::lround(255 - s * (255 - 38)));
    }
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return std::string(buf);
  };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
    << "</text>\n";
  o << "<text x=\"" << num(left + cell * static_cast<double>(cols.size()) / 2) << "\" y=\"40\" text-anchor=\"middle\">"
    << escape(col_label) << "</text>\n";
  o << "<text transform=\"translate(16," << num(top + cell * static_cast<double>(rows.size()) / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">" << escape(row_label) << "</text>\n";
  for (std::size_t c = 0; c < cols.size(); ++c) {
    o << "<text x=\"" << num(left + cell * (static_cast<double>(c) + 0.5)) << "\" y=\"" << num(top - 6)
      << "\" text-anchor=\"middle\">" << escape(cols[c]) << "</text>\n";
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double y = top + cell * static_cast<double>(r);
    o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y + cell / 2 + 4) << "\" text-anchor=\"end\">"
      << escape(rows[r]) << "</text>\n";
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const double x = left + cell * static_cast<double>(c);
      const HeatmapCell* hc = r < cells.size() && c < cells[r].size() ? &cells[r][c] : nullptr;
      const std::string fill = hc && hc->value ? color(*hc->value) : "#dddddd";
      o << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(cell) << "\" height=\"" << num(cell)
        << "\" fill=\"" << fill << "\" stroke=\"white\"/>";
      if (hc && !hc->text.empty()) {
        o << "<text x=\"" << num(x + cell / 2) << "\" y=\"" << num(y + cell / 2 + 4) << "\" text-anchor=\"middle\">"
          << escape(hc->text) << "</text>";
      }
      o << '\n';
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace chunkgrpo
