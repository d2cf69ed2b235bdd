#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cirl/error.hpp"

namespace cirl::plot {

/// Comma-separated table with a header row. Fields are not quoted.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    fail(ErrorKind::UsageError, "no column '" + name + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::FormatError, "cannot open " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::FormatError, path + " is empty");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split_csv_line(line);
    if (row.size() != t.header.size()) fail(ErrorKind::FormatError, "ragged row in " + path);
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

inline bool numeric_column(const Table& t, int c) {
  double v;
  for (const auto& r : t.rows)
    if (!parse_number(r[c], v)) return false;
  return !t.rows.empty();
}

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline const char* colour(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  return palette[i % 7];
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
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
  static constexpr double W = 640, H = 400, L = 60, R = 150, T = 40, B = 50;
  double px(double x) const { return L + (x - x0) / (x1 - x0) * (W - L - R); }
  double py(double y) const { return H - B - (y - y0) / (y1 - y0) * (H - T - B); }
};

inline void widen(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
}

inline void axes(std::ostream& o, const Frame& f, const std::string& title, const std::string& ylabel) {
  o << "<text x=\"" << Frame::W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
    << "</text>\n";
  o << "<line x1=\"" << Frame::L << "\" y1=\"" << Frame::H - Frame::B << "\" x2=\"" << Frame::W - Frame::R
    << "\" y2=\"" << Frame::H - Frame::B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << Frame::L << "\" y1=\"" << Frame::T << "\" x2=\"" << Frame::L << "\" y2=\""
    << Frame::H - Frame::B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = f.y0 + (f.y1 - f.y0) * i / 4.0;
    o << "<text x=\"" << Frame::L - 6 << "\" y=\"" << f.py(v) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
      << fmt(v) << "</text>\n";
  }
  o << "<text x=\"14\" y=\"" << Frame::H / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << Frame::H / 2
    << ")\" text-anchor=\"middle\">" << escape(ylabel) << "</text>\n";
}

inline void legend(std::ostream& o, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = Frame::T + 16.0 * static_cast<double>(i);
    o << "<rect x=\"" << Frame::W - Frame::R + 12 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\""
      << colour(i) << "\"/>\n";
    o << "<text x=\"" << Frame::W - Frame::R + 27 << "\" y=\"" << y + 9 << "\" font-size=\"11\">"
      << escape(names[i]) << "</text>\n";
  }
}

}  // namespace detail

inline std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<Series>& series) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  detail::widen(x0, x1);
  detail::widen(y0, y1);
  const detail::Frame f{x0, x1, y0, y1};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.W << "\" height=\"" << f.H << "\">\n";
  detail::axes(o, f, title, ylabel);
  o << "<text x=\"" << (f.L + f.W - f.R) / 2 << "\" y=\"" << f.H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << detail::escape(xlabel) << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = x0 + (x1 - x0) * i / 4.0;
    o << "<text x=\"" << f.px(v) << "\" y=\"" << f.H - f.B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
      << detail::fmt(v) << "</text>\n";
  }
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    names.push_back(s.name);
    o << "<polyline fill=\"none\" stroke=\"" << detail::colour(k) << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) o << f.px(s.x[i]) << ',' << f.py(s.y[i]) << ' ';
    o << "\"/>\n";
  }
  detail::legend(o, names);
  o << "</svg>\n";
  return o.str();
}

/// Grouped bars: one group per category, one bar per series.
inline std::string bar_chart(const std::string& title, const std::string& ylabel,
                             const std::vector<std::string>& categories, const std::vector<Series>& series) {
  double y0 = 0.0, y1 = 0.0;
  for (const auto& s : series)
    for (double v : s.y)
      if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
  detail::widen(y0, y1);
  const detail::Frame f{0.0, static_cast<double>(std::max<std::size_t>(1, categories.size())), y0, y1};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.W << "\" height=\"" << f.H << "\">\n";
  detail::axes(o, f, title, ylabel);
  const double group = f.px(1.0) - f.px(0.0);
  const double bar = 0.8 * group / static_cast<double>(std::max<std::size_t>(1, series.size()));
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    names.push_back(series[k].name);
    for (std::size_t c = 0; c < categories.size() && c < series[k].y.size(); ++c) {
      const double v = series[k].y[c];
      if (!std::isfinite(v)) continue;
      const double x = f.px(static_cast<double>(c)) + 0.1 * group + bar * static_cast<double>(k);
      const double top = f.py(std::max(v, 0.0)), base = f.py(std::min(v, 0.0));
      o << "<rect x=\"" << x << "\" y=\"" << top << "\" width=\"" << bar << "\" height=\"" << base - top
        << "\" fill=\"" << detail::colour(k) << "\"/>\n";
    }
  }
  for (std::size_t c = 0; c < categories.size(); ++c)
    o << "<text x=\"" << f.px(c + 0.5) << "\" y=\"" << f.H - f.B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
      << detail::escape(categories[c]) << "</text>\n";
  detail::legend(o, names);
  o << "</svg>\n";
  return o.str();
}

/// Chooses a chart from a table: a numeric first column gives a line chart
/// of the other numeric columns against it; otherwise rows become series
/// and the remaining columns the categories.
inline std::string chart_from_table(const Table& t, const std::string& title, const std::string& x_column = "",
                                    const std::vector<std::string>& y_columns = {}) {
  if (t.header.empty()) fail(ErrorKind::FormatError, "table has no columns");
  const int xc = x_column.empty() ? 0 : t.column(x_column);
  std::vector<int> ys;
  if (y_columns.empty()) {
    for (int c = 0; c < static_cast<int>(t.header.size()); ++c)
      if (c != xc && numeric_column(t, c)) ys.push_back(c);
  } else {
    for (const auto& n : y_columns) ys.push_back(t.column(n));
  }
  if (ys.empty()) fail(ErrorKind::FormatError, "no numeric columns to plot");
  double v;
  if (numeric_column(t, xc)) {
    std::vector<Series> series;
    for (int c : ys) {
      Series s{t.header[c], {}, {}};
      for (const auto& r : t.rows) {
        s.x.push_back(std::strtod(r[xc].c_str(), nullptr));
        s.y.push_back(parse_number(r[c], v) ? v : NAN);
      }
      series.push_back(std::move(s));
    }
    return line_chart(title, t.header[xc], ys.size() == 1 ? t.header[ys[0]] : "value", series);
  }
  std::vector<std::string> cats;
  for (int c : ys) cats.push_back(t.header[c]);
  std::vector<Series> series;
  for (const auto& r : t.rows) {
    Series s{r[xc], {}, {}};
    for (int c : ys) s.y.push_back(parse_number(r[c], v) ? v : NAN);
    series.push_back(std::move(s));
  }
  return bar_chart(title, "value", cats, series);
}

}  // namespace cirl::plot
