#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "vbt/harness.hpp"

namespace vbt {

namespace {

constexpr double kPanelW = 640.0, kPanelH = 170.0, kLeft = 70.0, kTop = 30.0, kGap = 40.0;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!(lo <= hi)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12 * (1.0 + std::abs(hi))) {
      lo -= 0.5 * (1e-12 + std::abs(lo));
      hi += 0.5 * (1e-12 + std::abs(hi));
    }
  }
};

/// One axes box at vertical offset `top`, with a polyline per series.
void panel(std::ostringstream& out, double top, const std::string& title, const std::vector<Series>& series,
           const Range* fixed_x = nullptr) {
  Range rx, ry;
  for (const Series& s : series) {
    for (double v : s.x) rx.add(v);
    for (double v : s.y) ry.add(v);
  }
  if (fixed_x) rx = *fixed_x;
  rx.finish();
  ry.finish();
  auto px = [&](double v) { return kLeft + (v - rx.lo) / (rx.hi - rx.lo) * kPanelW; };
  auto py = [&](double v) { return top + kPanelH - (v - ry.lo) / (ry.hi - ry.lo) * kPanelH; };

  out << "<rect x=\"" << kLeft << "\" y=\"" << top << "\" width=\"" << kPanelW << "\" height=\"" << kPanelH
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  out << "<text x=\"" << kLeft << "\" y=\"" << top - 6 << "\" font-size=\"12\">" << title << "</text>\n";
  out << "<text x=\"" << kLeft - 4 << "\" y=\"" << top + 10 << "\" font-size=\"10\" text-anchor=\"end\">"
      << fmt(ry.hi) << "</text>\n";
  out << "<text x=\"" << kLeft - 4 << "\" y=\"" << top + kPanelH << "\" font-size=\"10\" text-anchor=\"end\">"
      << fmt(ry.lo) << "</text>\n";
  out << "<text x=\"" << kLeft << "\" y=\"" << top + kPanelH + 12 << "\" font-size=\"10\">" << fmt(rx.lo)
      << "</text>\n";
  out << "<text x=\"" << kLeft + kPanelW << "\" y=\"" << top + kPanelH + 12
      << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(rx.hi) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    const char* color = kColors[i % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t j = 0; j < s.x.size(); ++j) {
      if (!std::isfinite(s.y[j])) continue;
      out << fmt(px(s.x[j])) << ',' << fmt(py(s.y[j])) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << kLeft + kPanelW + 8 << "\" y=\"" << top + 14 + 14 * static_cast<double>(i)
        << "\" font-size=\"11\" fill=\"" << color << "\">" << s.label << "</text>\n";
  }
}

std::string document(double height, const std::string& body) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLeft + kPanelW + 90 << "\" height=\"" << height
      << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << body << "</svg>\n";
  return out.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

}  // namespace

std::vector<std::filesystem::path> emit_plots(const RunLog& log, const std::filesystem::path& out_dir) {
  if (log.rows.empty()) throw Error(ErrorCode::IoFailure, "empty log, nothing to plot");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<double> t;
  for (const LogRow& r : log.rows) t.push_back(r.time);
  auto column = [&](auto get) {
    std::vector<double> v;
    for (const LogRow& r : log.rows) v.push_back(r.contact ? get(r) : std::numeric_limits<double>::quiet_NaN());
    return v;
  };

  std::vector<std::filesystem::path> written;
  {
    const char* names[] = {"r_e [m]", "beta_e [rad]", "alpha_e [rad]", "delta_e [m]"};
    std::ostringstream body;
    for (int i = 0; i < 4; ++i) {
      const Series s{names[i], t, column([i](const LogRow& r) { return r.xi_error(i); })};
      panel(body, kTop + i * (kPanelH + kGap), std::string("feature error ") + names[i] + " vs time [s]", {s});
    }
    written.push_back(out_dir / "errors.svg");
    write_file(written.back(), document(kTop + 4 * (kPanelH + kGap), body.str()));
  }
  {
    std::ostringstream body;
    std::vector<Series> lin, ang;
    const char* names[] = {"v_x", "v_y", "v_z", "w_x", "w_y", "w_z"};
    for (int i = 0; i < 6; ++i) {
      std::vector<double> y;
      for (const LogRow& r : log.rows) y.push_back(r.command(i));
      (i < 3 ? lin : ang).push_back({names[i], t, y});
    }
    panel(body, kTop, "linear twist [m/s] vs time [s]", lin);
    panel(body, kTop + kPanelH + kGap, "angular twist [rad/s] vs time [s]", ang);
    written.push_back(out_dir / "twist.svg");
    write_file(written.back(), document(kTop + 2 * (kPanelH + kGap), body.str()));
  }
  {
    Series contour{"contour", {}, {}}, sensor{"sensor", {}, {}};
    for (const auto& p : log.contour) {
      contour.x.push_back(p.x());
      contour.y.push_back(p.y());
    }
    for (const LogRow& r : log.rows) {
      sensor.x.push_back(r.sensor_xy_yaw.x());
      sensor.y.push_back(r.sensor_xy_yaw.y());
    }
    std::ostringstream body;
    panel(body, kTop, "XY trajectory [m]: sensor vs contour", {contour, sensor});
    written.push_back(out_dir / "trajectory.svg");
    write_file(written.back(), document(kTop + kPanelH + kGap, body.str()));
  }
  return written;
}

}  // namespace vbt
