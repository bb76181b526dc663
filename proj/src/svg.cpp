#include "orpo/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace orpo::svg {
namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 440;
constexpr double kLeft = 70;
constexpr double kRight = 160;
constexpr double kTop = 40;
constexpr double kBottom = 50;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
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

struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

Frame make_frame(double x0, double x1, double y0, double y1) {
  if (!(x1 > x0)) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (!(y1 > y0)) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  return {x0, x1, y0 - pad, y1 + pad};
}

void open_document(std::ostringstream& out, const std::string& title, const std::string& x_label,
                   const std::string& y_label, const Frame& f) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
      << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
      << "\" fill=\"white\"/>\n"
      << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"15\">" << escape(title) << "</text>\n";
  const double left = kLeft;
  const double right = kWidth - kRight;
  const double top = kTop;
  const double bottom = kHeight - kBottom;
  out << "<g stroke=\"black\" stroke-width=\"1\">\n"
      << "<line x1=\"" << num(left) << "\" y1=\"" << num(bottom) << "\" x2=\"" << num(right) << "\" y2=\""
      << num(bottom) << "\"/>\n"
      << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\""
      << num(bottom) << "\"/>\n</g>\n";
  out << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    out << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(bottom + 16) << "\" text-anchor=\"middle\">"
        << tick(xv) << "</text>\n";
    out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">"
        << tick(yv) << "</text>\n";
  }
  out << "<text x=\"" << num((left + right) / 2) << "\" y=\"" << num(kHeight - 10)
      << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(x_label) << "</text>\n"
      << "<text x=\"16\" y=\"" << num((top + bottom) / 2) << "\" text-anchor=\"middle\" font-size=\"13\" "
      << "transform=\"rotate(-90 16 " << num((top + bottom) / 2) << ")\">" << escape(y_label) << "</text>\n"
      << "</g>\n";
}

void legend(std::ostringstream& out, std::size_t index, const std::string& label, const std::string& color) {
  const double x = kWidth - kRight + 12;
  const double y = kTop + 18.0 * static_cast<double>(index) + 6;
  out << "<line x1=\"" << num(x) << "\" y1=\"" << num(y) << "\" x2=\"" << num(x + 20) << "\" y2=\"" << num(y)
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << num(x + 26) << "\" y=\"" << num(y + 4) << "\" font-family=\"sans-serif\" "
      << "font-size=\"11\">" << escape(label) << "</text>\n";
}

}  // namespace

std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("line_plot: x/y size mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = x1 = y0 = y1 = 0;
  const Frame f = make_frame(x0, x1, y0, y1);
  std::ostringstream out;
  open_document(out, title, x_label, y_label, f);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    if (s.x.size() == 1) {
      out << "<circle cx=\"" << num(f.px(s.x[0])) << "\" cy=\"" << num(f.py(s.y[0])) << "\" r=\"3\" fill=\""
          << s.color << "\"/>\n";
    } else if (!s.x.empty()) {
      out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        out << (i ? " " : "") << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i]));
      }
      out << "\"/>\n";
    }
    legend(out, k, s.label, s.color);
  }
  out << "</svg>\n";
  return out.str();
}

std::string histogram_overlay(const std::string& title, const std::string& x_label,
                              const std::vector<HistogramSeries>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y1 = 0;
  std::vector<std::vector<double>> density(series.size());
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& h = series[k].histogram;
    if (h.edges.size() != h.counts.size() + 1) throw std::invalid_argument("histogram_overlay: malformed histogram");
    double total = 0;
    for (auto c : h.counts) total += static_cast<double>(c);
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      const double w = h.edges[b + 1] - h.edges[b];
      const double d = (total > 0 && w > 0) ? static_cast<double>(h.counts[b]) / (total * w) : 0.0;
      density[k].push_back(d);
      y1 = std::max(y1, d);
    }
    x0 = std::min(x0, h.edges.front());
    x1 = std::max(x1, h.edges.back());
  }
  if (!std::isfinite(x0)) x0 = x1 = 0;
  const Frame f = make_frame(x0, x1, 0.0, y1);
  std::ostringstream out;
  open_document(out, title, x_label, "density", f);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& h = series[k].histogram;
    out << "<polyline fill=\"none\" stroke=\"" << series[k].color << "\" stroke-width=\"1.2\" points=\"";
    out << num(f.px(h.edges.front())) << ',' << num(f.py(0));
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      out << ' ' << num(f.px(h.edges[b])) << ',' << num(f.py(density[k][b])) << ' ' << num(f.px(h.edges[b + 1]))
          << ',' << num(f.py(density[k][b]));
    }
    out << ' ' << num(f.px(h.edges.back())) << ',' << num(f.py(0)) << "\"/>\n";
    legend(out, k, series[k].label, series[k].color);
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace orpo::svg
