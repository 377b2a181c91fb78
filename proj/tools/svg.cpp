#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace certibias::svg {

namespace {

constexpr double kWidth = 760.0;
constexpr double kPanelHeight = 300.0;
constexpr double kMarginLeft = 72.0;
constexpr double kMarginRight = 24.0;
constexpr double kMarginTop = 46.0;
constexpr double kMarginBottom = 52.0;
constexpr double kPanelGap = 14.0;

const char* kPalette[] = {"#3465a4", "#cc0000", "#4e9a06", "#75507b", "#c17d11", "#0a8a8a"};
constexpr int kPaletteSize = 6;

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v == 0.0 ? 0.0 : v);  // normalize -0
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

struct Range {
  double lo = 0.0, hi = 1.0;
};

Range pad_range(double lo, double hi, bool include_zero = false) {
  if (include_zero) {
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
  }
  if (lo == hi) {
    const double bump = std::max(1.0, std::abs(lo) * 0.1);
    return {lo - bump, hi + bump};
  }
  const double pad = (hi - lo) * 0.06;
  return {lo - pad, hi + pad};
}

std::vector<double> nice_ticks(const Range& r, int want = 5) {
  const double span = r.hi - r.lo;
  double step = span / std::max(1, want - 1);
  const double mag = std::pow(10.0, std::floor(std::log10(step)));
  const double norm = step / mag;
  step = mag * (norm < 1.5 ? 1.0 : norm < 3.5 ? 2.0 : norm < 7.5 ? 5.0 : 10.0);
  std::vector<double> ticks;
  for (double t = std::ceil(r.lo / step) * step; t <= r.hi + step * 1e-9; t += step)
    ticks.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
  return ticks;
}

struct Frame {
  double x0, y0, w, h;  // plot area, y0 is the top
  Range xr, yr;
  double sx(double x) const { return x0 + (x - xr.lo) / (xr.hi - xr.lo) * w; }
  double sy(double y) const { return y0 + h - (y - yr.lo) / (yr.hi - yr.lo) * h; }
};

void draw_frame_axes(std::ostringstream& out, const Frame& f, const std::string& x_label,
                     const std::string& y_label, const std::vector<std::string>& x_cat_labels) {
  out << "<rect x='" << px(f.x0) << "' y='" << px(f.y0) << "' width='" << px(f.w)
      << "' height='" << px(f.h) << "' fill='none' stroke='#888' stroke-width='1'/>\n";
  if (x_cat_labels.empty()) {
    for (const double t : nice_ticks(f.xr)) {
      const double x = f.sx(t);
      out << "<line x1='" << px(x) << "' y1='" << px(f.y0 + f.h) << "' x2='" << px(x) << "' y2='"
          << px(f.y0 + f.h + 5) << "' stroke='#888'/>\n";
      out << "<text x='" << px(x) << "' y='" << px(f.y0 + f.h + 18)
          << "' text-anchor='middle' font-size='11' fill='#333'>" << tick_label(t) << "</text>\n";
    }
  } else {
    for (std::size_t i = 0; i < x_cat_labels.size(); ++i) {
      const double x = f.sx(static_cast<double>(i));
      out << "<line x1='" << px(x) << "' y1='" << px(f.y0 + f.h) << "' x2='" << px(x) << "' y2='"
          << px(f.y0 + f.h + 5) << "' stroke='#888'/>\n";
      out << "<text x='" << px(x) << "' y='" << px(f.y0 + f.h + 18)
          << "' text-anchor='middle' font-size='11' fill='#333'>" << escape(x_cat_labels[i])
          << "</text>\n";
    }
  }
  for (const double t : nice_ticks(f.yr)) {
    const double y = f.sy(t);
    out << "<line x1='" << px(f.x0 - 5) << "' y1='" << px(y) << "' x2='" << px(f.x0) << "' y2='"
        << px(y) << "' stroke='#888'/>\n";
    out << "<text x='" << px(f.x0 - 8) << "' y='" << px(y + 4)
        << "' text-anchor='end' font-size='11' fill='#333'>" << tick_label(t) << "</text>\n";
  }
  if (!x_label.empty())
    out << "<text x='" << px(f.x0 + f.w / 2) << "' y='" << px(f.y0 + f.h + 38)
        << "' text-anchor='middle' font-size='12' fill='#111'>" << escape(x_label) << "</text>\n";
  if (!y_label.empty())
    out << "<text x='" << px(f.x0 - 52) << "' y='" << px(f.y0 + f.h / 2)
        << "' text-anchor='middle' font-size='12' fill='#111' transform='rotate(-90 "
        << px(f.x0 - 52) << " " << px(f.y0 + f.h / 2) << ")'>" << escape(y_label) << "</text>\n";
}

void draw_empty_note(std::ostringstream& out, double x0, double y0, double w, double h,
                     const std::string& note) {
  out << "<text x='" << px(x0 + w / 2) << "' y='" << px(y0 + h / 2)
      << "' text-anchor='middle' font-size='14' fill='#777'>" << escape(note) << "</text>\n";
}

std::string document(double height, const std::string& title, const std::string& body) {
  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << px(kWidth) << "' height='"
      << px(height) << "' viewBox='0 0 " << px(kWidth) << " " << px(height) << "'>\n";
  out << "<rect width='100%' height='100%' fill='#ffffff'/>\n";
  out << "<text x='" << px(kWidth / 2) << "' y='26' text-anchor='middle' font-size='15' "
      << "font-weight='bold' fill='#111' font-family='sans-serif'>" << escape(title)
      << "</text>\n";
  out << "<g font-family='sans-serif'>\n" << body << "</g>\n</svg>\n";
  return out.str();
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::vector<Panel>& panels) {
  const double n_panels = std::max<std::size_t>(panels.size(), 1);
  const double height = kMarginTop + n_panels * kPanelHeight + (n_panels - 1) * kPanelGap;
  std::ostringstream body;

  bool any_points = false;
  for (const Panel& p : panels)
    for (const Series& s : p.series)
      if (!s.x.empty()) any_points = true;

  if (panels.empty() || !any_points) {
    draw_empty_note(body, 0, kMarginTop, kWidth, kPanelHeight, "no data to plot");
    return document(kMarginTop + kPanelHeight, title, body.str());
  }

  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const Panel& p = panels[pi];
    const double top = kMarginTop + static_cast<double>(pi) * (kPanelHeight + kPanelGap);
    Frame f;
    f.x0 = kMarginLeft;
    f.y0 = top;
    f.w = kWidth - kMarginLeft - kMarginRight;
    f.h = kPanelHeight - kMarginBottom;

    double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
    bool first = true;
    for (const Series& s : p.series)
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (first) {
          xlo = xhi = s.x[i];
          ylo = yhi = s.y[i];
          first = false;
        }
        xlo = std::min(xlo, s.x[i]);
        xhi = std::max(xhi, s.x[i]);
        ylo = std::min(ylo, s.y[i]);
        yhi = std::max(yhi, s.y[i]);
      }
    if (first) {
      draw_empty_note(body, f.x0, f.y0, f.w, f.h, "no data to plot");
      continue;
    }
    f.xr = pad_range(xlo, xhi);
    f.yr = pad_range(ylo, yhi);

    if (p.band && p.band->hi >= p.band->lo) {
      const double bx0 = std::clamp(f.sx(p.band->lo), f.x0, f.x0 + f.w);
      const double bx1 = std::clamp(f.sx(p.band->hi), f.x0, f.x0 + f.w);
      body << "<rect x='" << px(bx0) << "' y='" << px(f.y0) << "' width='" << px(bx1 - bx0)
           << "' height='" << px(f.h) << "' fill='#f2e6b8' stroke='none'/>\n";
    }
    draw_frame_axes(body, f, pi + 1 == panels.size() ? x_label : "", p.y_label, p.x_labels);

    for (std::size_t si = 0; si < p.series.size(); ++si) {
      const Series& s = p.series[si];
      const char* color = kPalette[si % kPaletteSize];
      if (s.x.empty()) continue;
      body << "<polyline fill='none' stroke='" << color << "' stroke-width='1.8' points='";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (i) body << " ";
        body << px(f.sx(s.x[i])) << "," << px(f.sy(s.y[i]));
      }
      body << "'/>\n";
      // legend entry
      const double lx = f.x0 + f.w - 150;
      const double ly = f.y0 + 16 + 16 * static_cast<double>(si);
      body << "<line x1='" << px(lx) << "' y1='" << px(ly - 4) << "' x2='" << px(lx + 22)
           << "' y2='" << px(ly - 4) << "' stroke='" << color << "' stroke-width='2'/>\n";
      body << "<text x='" << px(lx + 28) << "' y='" << px(ly) << "' font-size='11' fill='#333'>"
           << escape(s.name) << "</text>\n";
    }
  }
  return document(height, title, body.str());
}

std::string histogram_chart(const std::string& title, const std::string& x_label,
                            const std::vector<double>& values, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least 1 bin");
  std::ostringstream body;
  Frame f;
  f.x0 = kMarginLeft;
  f.y0 = kMarginTop;
  f.w = kWidth - kMarginLeft - kMarginRight;
  f.h = kPanelHeight - kMarginBottom;

  if (values.empty()) {
    draw_empty_note(body, f.x0, f.y0, f.w, f.h, "no data to plot");
    return document(kMarginTop + kPanelHeight, title, body.str());
  }

  double lo = values[0], hi = values[0];
  for (const double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<long> counts(static_cast<std::size_t>(bins), 0);
  for (const double v : values) {
    auto b = static_cast<long>(std::floor((v - lo) / (hi - lo) * bins));
    b = std::clamp<long>(b, 0, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  long peak = 1;
  for (const long c : counts) peak = std::max(peak, c);

  f.xr = pad_range(lo, hi);
  f.yr = {0.0, static_cast<double>(peak) * 1.08};
  draw_frame_axes(body, f, x_label, "count", {});
  const double bw = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) {
    const double cx0 = f.sx(lo + b * bw);
    const double cx1 = f.sx(lo + (b + 1) * bw);
    const double cy = f.sy(static_cast<double>(counts[static_cast<std::size_t>(b)]));
    body << "<rect x='" << px(cx0) << "' y='" << px(cy) << "' width='" << px(cx1 - cx0)
         << "' height='" << px(f.y0 + f.h - cy)
         << "' fill='#3465a4' fill-opacity='0.75' stroke='#ffffff' stroke-width='0.5'/>\n";
  }
  // zero reference line when the range straddles zero
  if (lo < 0.0 && hi > 0.0) {
    const double zx = f.sx(0.0);
    body << "<line x1='" << px(zx) << "' y1='" << px(f.y0) << "' x2='" << px(zx) << "' y2='"
         << px(f.y0 + f.h) << "' stroke='#cc0000' stroke-width='1' stroke-dasharray='4,3'/>\n";
  }
  return document(kMarginTop + kPanelHeight, title, body.str());
}

std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<BarGroup>& groups) {
  std::ostringstream body;
  Frame f;
  f.x0 = kMarginLeft;
  f.y0 = kMarginTop;
  f.w = kWidth - kMarginLeft - kMarginRight;
  f.h = kPanelHeight - kMarginBottom;

  bool any = false;
  for (const BarGroup& g : groups) any = any || !g.bars.empty();
  if (!any) {
    draw_empty_note(body, f.x0, f.y0, f.w, f.h, "no data to plot");
    return document(kMarginTop + kPanelHeight, title, body.str());
  }

  double peak = 0.0;
  std::size_t max_bars = 1;
  for (const BarGroup& g : groups) {
    max_bars = std::max(max_bars, g.bars.size());
    for (const Bar& b : g.bars) peak = std::max(peak, b.value);
  }
  if (peak <= 0.0) peak = 1.0;
  f.xr = {0.0, static_cast<double>(groups.size())};
  f.yr = {0.0, peak * 1.12};

  for (const double t : nice_ticks(f.yr)) {
    const double y = f.sy(t);
    body << "<line x1='" << px(f.x0 - 5) << "' y1='" << px(y) << "' x2='" << px(f.x0) << "' y2='"
         << px(y) << "' stroke='#888'/>\n";
    body << "<text x='" << px(f.x0 - 8) << "' y='" << px(y + 4)
         << "' text-anchor='end' font-size='11' fill='#333'>" << tick_label(t) << "</text>\n";
  }
  body << "<rect x='" << px(f.x0) << "' y='" << px(f.y0) << "' width='" << px(f.w)
       << "' height='" << px(f.h) << "' fill='none' stroke='#888' stroke-width='1'/>\n";
  if (!y_label.empty())
    body << "<text x='" << px(f.x0 - 52) << "' y='" << px(f.y0 + f.h / 2)
         << "' text-anchor='middle' font-size='12' fill='#111' transform='rotate(-90 "
         << px(f.x0 - 52) << " " << px(f.y0 + f.h / 2) << ")'>" << escape(y_label) << "</text>\n";

  const double group_w = f.w / static_cast<double>(groups.size());
  const double slot_w = group_w / static_cast<double>(max_bars + 1);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const BarGroup& g = groups[gi];
    const double gx = f.x0 + group_w * static_cast<double>(gi);
    for (std::size_t bi = 0; bi < g.bars.size(); ++bi) {
      const double bx = gx + slot_w * (static_cast<double>(bi) + 0.5);
      const double by = f.sy(g.bars[bi].value);
      body << "<rect x='" << px(bx) << "' y='" << px(by) << "' width='" << px(slot_w * 0.9)
           << "' height='" << px(f.y0 + f.h - by) << "' fill='"
           << kPalette[bi % kPaletteSize] << "' fill-opacity='0.85'/>\n";
      body << "<text x='" << px(bx + slot_w * 0.45) << "' y='" << px(by - 4)
           << "' text-anchor='middle' font-size='10' fill='#333'>" << tick_label(g.bars[bi].value)
           << "</text>\n";
    }
    body << "<text x='" << px(gx + group_w / 2) << "' y='" << px(f.y0 + f.h + 18)
         << "' text-anchor='middle' font-size='11' fill='#333'>" << escape(g.label)
         << "</text>\n";
  }
  // legend from the widest group
  const BarGroup* legend_group = nullptr;
  for (const BarGroup& g : groups)
    if (!legend_group || g.bars.size() > legend_group->bars.size()) legend_group = &g;
  for (std::size_t bi = 0; legend_group && bi < legend_group->bars.size(); ++bi) {
    const double lx = f.x0 + f.w - 170;
    const double ly = f.y0 + 16 + 16 * static_cast<double>(bi);
    body << "<rect x='" << px(lx) << "' y='" << px(ly - 9) << "' width='12' height='12' fill='"
         << kPalette[bi % kPaletteSize] << "'/>\n";
    body << "<text x='" << px(lx + 18) << "' y='" << px(ly + 1)
         << "' font-size='11' fill='#333'>" << escape(legend_group->bars[bi].name) << "</text>\n";
  }
  return document(kMarginTop + kPanelHeight, title, body.str());
}

}  // namespace certibias::svg
