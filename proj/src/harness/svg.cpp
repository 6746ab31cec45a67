#include "jbss/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace jbss {

namespace {

constexpr double kWidth = 640.0, kHeight = 420.0;
constexpr double kLeft = 70.0, kRight = 150.0, kTop = 30.0, kBottom = 50.0;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

}  // namespace

std::string render_svg(const ExperimentResult& r) {
  const bool custom = r.config.kind == ExperimentKind::Custom;
  // Custom runs plot against V on a log axis; the others against the grid.
  auto xval = [&](const CurvePoint& p) { return custom ? std::log10(static_cast<double>(p.v_samples)) : p.grid_value; };

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const CurvePoint& p : r.curve) {
    xmin = std::min(xmin, xval(p));
    xmax = std::max(xmax, xval(p));
    for (double y : {p.aggregated_isr, p.bound}) {
      if (std::isfinite(y) && y > 0.0) {
        ymin = std::min(ymin, std::log10(y));
        ymax = std::max(ymax, std::log10(y));
      }
    }
  }
  if (!std::isfinite(xmin)) xmin = 0.0, xmax = 1.0;
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (!std::isfinite(ymin)) ymin = 0.0, ymax = 1.0;
  ymin = std::floor(ymin);
  ymax = std::max(std::ceil(ymax), ymin + 1.0);

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double ly) { return kTop + (ymax - ly) / (ymax - ymin) * ph; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" + fmt(kHeight) +
       "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kTop) + "\" width=\"" + fmt(pw) + "\" height=\"" + fmt(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double e = ymin; e <= ymax + 1e-9; e += 1.0) {
    s += "<line x1=\"" + fmt(kLeft) + "\" x2=\"" + fmt(kLeft + pw) + "\" y1=\"" + fmt(py(e)) + "\" y2=\"" + fmt(py(e)) +
         "\" stroke=\"#dddddd\"/>\n";
    s += "<text x=\"" + fmt(kLeft - 6) + "\" y=\"" + fmt(py(e) + 4) + "\" text-anchor=\"end\">1e" + label(e) + "</text>\n";
  }
  std::vector<double> ticks;
  for (const CurvePoint& p : r.curve) ticks.push_back(xval(p));
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  for (double t : ticks) {
    const std::string text = custom ? label(std::pow(10.0, t)) : label(t);
    s += "<text x=\"" + fmt(px(t)) + "\" y=\"" + fmt(kTop + ph + 16) + "\" text-anchor=\"middle\">" + text + "</text>\n";
  }
  const std::string xlabel = custom ? "V" : (r.config.kind == ExperimentKind::JdiagLags ? "lags" : "beta");
  s += "<text x=\"" + fmt(kLeft + pw / 2) + "\" y=\"" + fmt(kHeight - 12) + "\" text-anchor=\"middle\">" + xlabel +
       "</text>\n";
  s += "<text x=\"16\" y=\"" + fmt(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       fmt(kTop + ph / 2) + ")\">normalized ISR (" + to_string(r.config.aggregation) + ")</text>\n";

  // One series per sample size (custom: a single series over V).
  std::vector<Index> series;
  if (custom) {
    series.push_back(0);
  } else {
    for (const CurvePoint& p : r.curve) {
      if (std::find(series.begin(), series.end(), p.v_samples) == series.end()) series.push_back(p.v_samples);
    }
  }
  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = kColors[si % (sizeof kColors / sizeof kColors[0])];
    std::string isr_pts, bound_pts;
    std::string marks;
    for (const CurvePoint& p : r.curve) {
      if (!custom && p.v_samples != series[si]) continue;
      const double x = px(xval(p));
      if (std::isfinite(p.aggregated_isr) && p.aggregated_isr > 0.0) {
        isr_pts += fmt(x) + "," + fmt(py(std::log10(p.aggregated_isr))) + " ";
        marks += "<circle cx=\"" + fmt(x) + "\" cy=\"" + fmt(py(std::log10(p.aggregated_isr))) + "\" r=\"3\" fill=\"" +
                 color + "\"/>\n";
      }
      if (std::isfinite(p.bound) && p.bound > 0.0) {
        bound_pts += fmt(x) + "," + fmt(py(std::log10(p.bound))) + " ";
      } else if (std::isinf(p.bound)) {
        marks += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(kTop + 12) + "\" text-anchor=\"middle\" fill=\"" + color +
                 "\">inf</text>\n";
      }
    }
    if (!isr_pts.empty()) {
      isr_pts.pop_back();
      s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + isr_pts +
           "\"/>\n";
    }
    if (!bound_pts.empty()) {
      bound_pts.pop_back();
      s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-dasharray=\"5,3\" points=\"" +
           bound_pts + "\"/>\n";
    }
    s += marks;
    const double ly = kTop + 14.0 + 32.0 * static_cast<double>(si);
    const double lx = kLeft + pw + 12.0;
    const std::string name = custom ? "ISR" : "V=" + std::to_string(series[si]);
    s += "<line x1=\"" + fmt(lx) + "\" x2=\"" + fmt(lx + 20) + "\" y1=\"" + fmt(ly) + "\" y2=\"" + fmt(ly) +
         "\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
    s += "<text x=\"" + fmt(lx + 26) + "\" y=\"" + fmt(ly + 4) + "\">" + name + "</text>\n";
    s += "<line x1=\"" + fmt(lx) + "\" x2=\"" + fmt(lx + 20) + "\" y1=\"" + fmt(ly + 14) + "\" y2=\"" + fmt(ly + 14) +
         "\" stroke=\"" + color + "\" stroke-dasharray=\"5,3\"/>\n";
    s += "<text x=\"" + fmt(lx + 26) + "\" y=\"" + fmt(ly + 18) + "\">bound</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace jbss
