#include "betrans/harness/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace betrans::svg {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};

struct Frame {
  Real x0, x1, y0, y1;
  Real px(Real x) const { return 70.0 + (x - x0) / (x1 - x0) * 640.0; }
  Real py(Real y) const { return 380.0 - (y - y0) / (y1 - y0) * 330.0; }
};

std::string fmt(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void write_learning_curves(const std::string& path, const std::string& title,
                           const std::vector<Series>& series) {
  std::ofstream os(path);
  if (!os) throw UsageError("cannot open " + path + " for writing");
  Real x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& s : series)
    for (const auto& p : s.points) {
      if (first) {
        x0 = x1 = p.x;
        y0 = p.mean - p.stderr_;
        y1 = p.mean + p.stderr_;
        first = false;
      }
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.mean - p.stderr_);
      y1 = std::max(y1, p.mean + p.stderr_);
    }
  if (x1 <= x0) x1 = x0 + 1;
  Real pad = 0.05 * (y1 - y0 + 1e-9);
  y0 -= pad;
  y1 += pad;
  Frame f{x0, x1, y0, y1};

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"760\" "
        "height=\"440\" viewBox=\"0 0 760 440\">\n";
  os << "<rect width=\"760\" height=\"440\" fill=\"white\"/>\n";
  os << "<text x=\"380\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
        "font-family=\"sans-serif\">"
     << title << "</text>\n";
  // axes
  os << "<line x1=\"70\" y1=\"380\" x2=\"710\" y2=\"380\" stroke=\"black\"/>\n";
  os << "<line x1=\"70\" y1=\"50\" x2=\"70\" y2=\"380\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    Real xv = x0 + (x1 - x0) * i / 4.0;
    Real yv = y0 + (y1 - y0) * i / 4.0;
    os << "<text x=\"" << fmt(f.px(xv)) << "\" y=\"398\" font-size=\"11\" "
          "text-anchor=\"middle\" font-family=\"sans-serif\">"
       << fmt(xv) << "</text>\n";
    os << "<text x=\"62\" y=\"" << fmt(f.py(yv) + 4) << "\" font-size=\"11\" "
          "text-anchor=\"end\" font-family=\"sans-serif\">"
       << fmt(yv) << "</text>\n";
  }
  os << "<text x=\"390\" y=\"425\" text-anchor=\"middle\" font-size=\"12\" "
        "font-family=\"sans-serif\">env steps</text>\n";
  os << "<text x=\"18\" y=\"215\" font-size=\"12\" font-family=\"sans-serif\" "
        "transform=\"rotate(-90 18 215)\">evaluation return</text>\n";

  int ci = 0;
  for (const auto& s : series) {
    const char* color = kPalette[ci % 6];
    // stderr ribbon (upper edge forward, lower edge back)
    if (s.points.size() > 1) {
      os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" "
            "stroke=\"none\" points=\"";
      for (const auto& p : s.points)
        os << fmt(f.px(p.x)) << "," << fmt(f.py(p.mean + p.stderr_)) << " ";
      for (auto it = s.points.rbegin(); it != s.points.rend(); ++it)
        os << fmt(f.px(it->x)) << "," << fmt(f.py(it->mean - it->stderr_))
           << " ";
      os << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.8\" points=\"";
    for (const auto& p : s.points)
      os << fmt(f.px(p.x)) << "," << fmt(f.py(p.mean)) << " ";
    os << "\"/>\n";
    // legend
    Real ly = 60.0 + 18.0 * ci;
    os << "<line x1=\"600\" y1=\"" << fmt(ly) << "\" x2=\"628\" y2=\""
       << fmt(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"634\" y=\"" << fmt(ly + 4)
       << "\" font-size=\"12\" font-family=\"sans-serif\">" << s.name
       << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
}

}  // namespace betrans::svg
