#pragma once

// Minimal SVG line/step plots for the CSV outputs. No external plotting
// dependency; the files open in any browser.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "qdshape/csv.hpp"
#include "qdshape/fit.hpp"

namespace qdshape::app {

struct Series {
  std::string name;
  std::vector<double> x;  // step series: n + 1 bin edges
  std::vector<double> y;
  bool step = false;
  bool right_axis = false;
  bool dashed = false;
};

struct PlotSpec {
  std::string title;
  std::string xlabel = "t (ns)";
  std::string ylabel = "counts";
  std::string ylabel_right;
  double x_max = std::numeric_limits<double>::quiet_NaN();  // clip the x axis
  std::vector<Series> series;
};

namespace detail {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d35400",
                                 "#16a085", "#7f8c8d", "#b7950b", "#34495e", "#e84393"};
  return colors[i % 10];
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle(bool from_zero) {
    if (!(lo <= hi)) lo = 0.0, hi = 1.0;
    if (from_zero) lo = std::min(lo, 0.0);
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) hi = lo + 1.0;
  }
};

inline std::vector<double> ticks(double lo, double hi) {
  const double raw = (hi - lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) out.push_back(v);
  return out;
}

}  // namespace detail

inline std::string render_svg(const PlotSpec& spec) {
  const double W = 760, H = 460, left = 70, right = spec.ylabel_right.empty() ? 30 : 80, top = 40, bottom = 55;
  const double pw = W - left - right, ph = H - top - bottom;
  detail::Range xr, yl, yr;
  for (const auto& s : spec.series) {
    for (double v : s.x) xr.add(v);
    for (std::size_t j = 0; j < s.y.size(); ++j)
      if (j < s.x.size() && std::isfinite(s.x[j]) && !(s.x[j] > spec.x_max)) (s.right_axis ? yr : yl).add(s.y[j]);
  }
  if (std::isfinite(spec.x_max) && spec.x_max > xr.lo) xr.hi = std::min(xr.hi, spec.x_max);
  xr.settle(false);
  yl.settle(true);
  yr.settle(true);
  yl.hi += 0.05 * (yl.hi - yl.lo);
  yr.hi += 0.05 * (yr.hi - yr.lo);

  auto px = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y, bool r) {
    const auto& a = r ? yr : yl;
    return top + ph - (std::clamp(y, a.lo, a.hi) - a.lo) / (a.hi - a.lo) * ph;
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << detail::escape(spec.title)
     << "</text>\n"
     << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : detail::ticks(xr.lo, xr.hi)) {
    os << "<line x1=\"" << detail::num(px(t)) << "\" x2=\"" << detail::num(px(t)) << "\" y1=\"" << top + ph
       << "\" y2=\"" << top + ph + 5 << "\" stroke=\"black\"/>"
       << "<text x=\"" << detail::num(px(t)) << "\" y=\"" << top + ph + 19 << "\" text-anchor=\"middle\">"
       << detail::tick_label(t) << "</text>\n";
  }
  for (double t : detail::ticks(yl.lo, yl.hi)) {
    os << "<line x1=\"" << left - 5 << "\" x2=\"" << left << "\" y1=\"" << detail::num(py(t, false)) << "\" y2=\""
       << detail::num(py(t, false)) << "\" stroke=\"black\"/>"
       << "<text x=\"" << left - 8 << "\" y=\"" << detail::num(py(t, false) + 4) << "\" text-anchor=\"end\">"
       << detail::tick_label(t) << "</text>\n";
  }
  if (!spec.ylabel_right.empty()) {
    for (double t : detail::ticks(yr.lo, yr.hi)) {
      os << "<line x1=\"" << left + pw << "\" x2=\"" << left + pw + 5 << "\" y1=\"" << detail::num(py(t, true))
         << "\" y2=\"" << detail::num(py(t, true)) << "\" stroke=\"black\"/>"
         << "<text x=\"" << left + pw + 8 << "\" y=\"" << detail::num(py(t, true) + 4) << "\">"
         << detail::tick_label(t) << "</text>\n";
    }
    os << "<text transform=\"translate(" << W - 14 << "," << top + ph / 2 << ") rotate(90)\" text-anchor=\"middle\">"
       << detail::escape(spec.ylabel_right) << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
     << detail::escape(spec.xlabel) << "</text>\n"
     << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << detail::escape(spec.ylabel) << "</text>\n";

  for (std::size_t i = 0; i < spec.series.size(); ++i) {
    const auto& s = spec.series[i];
    std::ostringstream d;
    bool pen = false;
    auto point = [&](double x, double y) {
      if (!std::isfinite(x) || !std::isfinite(y) || x > xr.hi + 1e-9 * (xr.hi - xr.lo)) {
        pen = false;
        return;
      }
      d << (pen ? " L" : " M") << detail::num(px(x)) << ' ' << detail::num(py(y, s.right_axis));
      pen = true;
    };
    if (s.step) {
      for (std::size_t j = 0; j < s.y.size() && j + 1 < s.x.size(); ++j) {
        point(s.x[j], s.y[j]);
        point(s.x[j + 1], s.y[j]);
      }
    } else {
      for (std::size_t j = 0; j < std::min(s.x.size(), s.y.size()); ++j) point(s.x[j], s.y[j]);
    }
    const auto path = d.str();
    if (!path.empty())
      os << "<path d=\"" << path.substr(1) << "\" fill=\"none\" stroke=\"" << detail::palette(i)
         << "\" stroke-width=\"1.3\"" << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>\n";
    const double ly = top + 16 + 16 * static_cast<double>(i);
    os << "<line x1=\"" << left + pw - 170 << "\" x2=\"" << left + pw - 150 << "\" y1=\"" << ly - 4 << "\" y2=\""
       << ly - 4 << "\" stroke=\"" << detail::palette(i) << "\" stroke-width=\"2\""
       << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>"
       << "<text x=\"" << left + pw - 145 << "\" y=\"" << ly << "\">" << detail::escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

namespace detail {

inline bool has_column(const CsvTable& t, const std::string& name) {
  return std::find(t.header.begin(), t.header.end(), name) != t.header.end();
}

inline std::vector<double> column_values(const CsvTable& t, const std::string& name) {
  const auto c = t.column(name);
  std::vector<double> v;
  for (const auto& r : t.rows) v.push_back(r[c]);
  return v;
}

// Bin starts plus the closing edge; a header-only table gives no bins.
inline Series step_series(const CsvTable& t, const std::string& value_col, const std::string& name) {
  Series s;
  s.name = name;
  s.step = true;
  s.x = column_values(t, "bin_start_ns");
  s.y = column_values(t, value_col);
  if (!s.x.empty()) s.x.push_back(s.x.back() + (s.x.size() > 1 ? s.x[1] - s.x[0] : 1.0));
  return s;
}

// Last bin edge with visible signal, plus a margin.
inline double signal_extent(const Series& s) {
  double peak = 0.0;
  for (double v : s.y) peak = std::max(peak, v);
  double last = s.x.empty() ? 1.0 : s.x.back();
  for (std::size_t j = s.y.size(); j-- > 0;)
    if (s.y[j] > 1e-3 * peak && j + 1 < s.x.size()) {
      last = s.x[j + 1];
      break;
    }
  return peak > 0.0 ? std::ceil(1.2 * last) : last;
}

inline std::string stem_of(const std::filesystem::path& p) { return p.stem().string(); }

inline std::filesystem::path fit_file_for(const std::filesystem::path& csv) {
  auto stem = stem_of(csv);
  const std::string suffix = "_histogram";
  if (stem.size() > suffix.size() && stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0)
    stem.resize(stem.size() - suffix.size());
  return csv.parent_path() / (stem + "_fit.txt");
}

inline CsvTable read_tradeoff_table(const std::string& path) {
  // The width column may hold "inf"; such rows carry no finite abscissa.
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream cleaned;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("inf,", 0) == 0) line = "nan" + line.substr(3);
    cleaned << line << '\n';
  }
  return read_csv(cleaned, path);
}

}  // namespace detail

// Builds the plot for one CSV file, picking the layout from its columns.
inline PlotSpec plot_for_csv(const std::string& path) {
  const std::string first_line = [&] {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string l;
    while (std::getline(in, l))
      if (!l.empty() && l[0] != '#') break;
    return l;
  }();
  const bool tradeoff = first_line.rfind("tau_mod_ns", 0) == 0;
  const auto t = tradeoff ? detail::read_tradeoff_table(path) : read_csv_file(path);
  PlotSpec p;
  p.title = detail::stem_of(path);

  if (detail::has_column(t, "bin_start_ns") && detail::has_column(t, "count")) {
    p.series.push_back(detail::step_series(t, "count", "counts"));
    const auto fit_path = detail::fit_file_for(path);
    if (std::filesystem::exists(fit_path) && !t.rows.empty()) {
      std::ifstream in(fit_path);
      const auto fit = read_fit_text(in, fit_path.string());
      Series f;
      f.name = to_string(fit.model) + " fit";
      f.dashed = true;
      const auto& edges = p.series[0].x;
      for (std::size_t j = 0; j + 1 < edges.size(); ++j) {
        const double c = 0.5 * (edges[j] + edges[j + 1]);
        if (fit.model == FitModel::exponential && c < fit.t_ref) continue;
        f.x.push_back(c);
        f.y.push_back(evaluate_fit(fit, c));
      }
      p.series.push_back(std::move(f));
    }
    p.x_max = detail::signal_extent(p.series[0]);
    return p;
  }
  if (detail::has_column(t, "bin_start_ns") && detail::has_column(t, "expected")) {
    p.series.push_back(detail::step_series(t, "expected", "expected counts"));
    p.x_max = detail::signal_extent(p.series[0]);
    return p;
  }
  if (tradeoff) {
    p.xlabel = "tau_mod (ns)";
    p.ylabel = "indistinguishability / fraction";
    p.ylabel_right = "rate (counts/s)";
    const auto x = detail::column_values(t, "tau_mod_ns");
    for (const auto* c : {"indist_exact", "indist_simple", "fraction"})
      p.series.push_back({c, x, detail::column_values(t, c), false, false, std::string(c) == "indist_simple"});
    p.series.push_back({"rate_hz (right axis)", x, detail::column_values(t, "rate_hz"), false, true, true});
    return p;
  }
  if (detail::has_column(t, "cycle_index") && detail::has_column(t, "t_ns")) {
    const auto ts = detail::column_values(t, "t_ns");
    double hi = 1.0;
    for (double v : ts) hi = std::max(hi, v);
    const auto h = histogram(std::span<const double>(ts), 0.05, std::ceil(hi) + 0.05);
    Series s;
    s.name = "timestamps";
    s.step = true;
    s.x = h.bin_edges();
    s.y.assign(h.counts.begin(), h.counts.end());
    p.series.push_back(std::move(s));
    return p;
  }
  if (detail::has_column(t, "t_ns")) {
    const auto x = detail::column_values(t, "t_ns");
    p.ylabel = "value";
    for (const auto& c : t.header)
      if (c != "t_ns") p.series.push_back({c, x, detail::column_values(t, c), false, false, false});
    return p;
  }
  throw IoError(path + ": no plottable columns (expected bin_start_ns, t_ns or tau_mod_ns)");
}

inline PlotSpec overlay_plot(const std::vector<std::string>& paths, const std::string& title) {
  PlotSpec p;
  p.title = title;
  for (const auto& path : paths) {
    const auto t = read_csv_file(path);
    if (detail::has_column(t, "count")) p.series.push_back(detail::step_series(t, "count", detail::stem_of(path)));
    else if (detail::has_column(t, "expected"))
      p.series.push_back(detail::step_series(t, "expected", detail::stem_of(path)));
    else throw IoError(path + ": overlay needs histogram CSVs (bin_start_ns,count)");
  }
  double extent = 0.0;
  for (const auto& s : p.series) extent = std::max(extent, detail::signal_extent(s));
  if (extent > 0.0) p.x_max = extent;
  return p;
}

// One SVG per input next to out_dir, or a single overlay.svg.
inline std::vector<std::string> emit_plots(const std::vector<std::string>& csv_paths, const std::string& out_dir,
                                           bool overlay, const std::string& overlay_name = "overlay") {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> out;
  if (overlay) {
    const auto file = (std::filesystem::path(out_dir) / (overlay_name + ".svg")).string();
    write_text_file(file, render_svg(overlay_plot(csv_paths, overlay_name)));
    out.push_back(file);
    return out;
  }
  for (const auto& path : csv_paths) {
    const auto file = (std::filesystem::path(out_dir) / (detail::stem_of(path) + ".svg")).string();
    write_text_file(file, render_svg(plot_for_csv(path)));
    out.push_back(file);
  }
  return out;
}

}  // namespace qdshape::app
