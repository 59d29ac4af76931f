#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"
#include "integrator.hpp"
#include "lock_analysis.hpp"
#include "phase_model.hpp"

namespace pllsim {

struct SvgOptions {
  double width = 640.0;
  double height = 480.0;
  double margin = 40.0;
  // Window: theta spans one period centered here (NaN: the first stable
  // equilibrium, falling back to 0); x-range auto-fits the data when the
  // explicit bounds are left NaN.
  double theta_center = std::numeric_limits<double>::quiet_NaN();
  double x_min = std::numeric_limits<double>::quiet_NaN();
  double x_max = std::numeric_limits<double>::quiet_NaN();
  // Optional domain shading drawn under everything else.
  const std::vector<DomainGridRow>* shading = nullptr;
};

namespace detail {

[[nodiscard]] inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Median spacing of the distinct sorted values; cell size for shading rects.
[[nodiscard]] inline double grid_spacing(std::vector<double> vals) {
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  if (vals.size() < 2) return 0.0;
  std::vector<double> gaps;
  gaps.reserve(vals.size() - 1);
  for (std::size_t i = 1; i < vals.size(); ++i) gaps.push_back(vals[i] - vals[i - 1]);
  std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
  return gaps[gaps.size() / 2];
}

}  // namespace detail

/// Phase portrait as a standalone SVG string: theta horizontal over one
/// period, filter state vertical.  Trajectories are split where they wrap
/// across the theta seam; separatrices and trajectories get distinct stroke
/// classes, equilibria distinct dot styles.  Output is deterministic for
/// identical inputs (fixed iteration order, fixed %.6g formatting, no
/// timestamps).
[[nodiscard]] inline std::string render_portrait_svg(
    const PhaseModel& m, const std::vector<Trajectory>& trajectories,
    const std::vector<Separatrix>& separatrices, const std::vector<Equilibrium>& eqs,
    const SvgOptions& opt = {}) {
  const double period = m.pd.period();

  double theta_c = opt.theta_center;
  if (!std::isfinite(theta_c)) {
    theta_c = 0.0;
    for (const auto& eq : eqs)
      if (eq.stability == Stability::Stable) {
        theta_c = eq.state.theta_e;
        break;
      }
  }
  const double th_lo = theta_c - 0.5 * period;
  const double th_hi = theta_c + 0.5 * period;

  double x_lo = opt.x_min, x_hi = opt.x_max;
  if (!std::isfinite(x_lo) || !std::isfinite(x_hi) || !(x_hi > x_lo)) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    auto feed = [&](double v) {
      if (!std::isfinite(v)) return;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    };
    for (const auto& t : trajectories)
      for (const auto& s : t.samples) feed(s.x);
    for (const auto& b : separatrices)
      for (const auto& p : b.curve) feed(p.x);
    for (const auto& eq : eqs) feed(eq.state.x);
    if (!(hi > lo)) {
      lo = -1.0;
      hi = 1.0;
    }
    const double pad = 0.05 * (hi - lo) + 1e-12;
    x_lo = lo - pad;
    x_hi = hi + pad;
  }

  const double plot_w = opt.width - 2.0 * opt.margin;
  const double plot_h = opt.height - 2.0 * opt.margin;
  if (!(plot_w > 0.0) || !(plot_h > 0.0))
    throw ParameterError("svg viewport is smaller than its margins");
  auto px = [&](double th) { return opt.margin + (th - th_lo) / (th_hi - th_lo) * plot_w; };
  auto py = [&](double x) { return opt.margin + (x_hi - x) / (x_hi - x_lo) * plot_h; };

  std::string svg;
  svg.reserve(1 << 16);
  auto add = [&](const std::string& s) { svg += s; };
  add("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::svg_num(opt.width) +
      "\" height=\"" + detail::svg_num(opt.height) + "\" viewBox=\"0 0 " +
      detail::svg_num(opt.width) + " " + detail::svg_num(opt.height) + "\">\n");
  add("<style>\n"
      ".frame{fill:none;stroke:#333;stroke-width:1}\n"
      ".trajectory{fill:none;stroke:#1f77b4;stroke-width:1}\n"
      ".separatrix{fill:none;stroke:#d62728;stroke-width:1.5}\n"
      ".eq-stable{fill:#000;stroke:none}\n"
      ".eq-saddle{fill:#fff;stroke:#000;stroke-width:1}\n"
      ".cell-inside{fill:#c7e9c0;stroke:none}\n"
      ".cell-undecided{fill:#fde9a8;stroke:none}\n"
      "</style>\n");
  add("<clipPath id=\"plot\"><rect x=\"" + detail::svg_num(opt.margin) + "\" y=\"" +
      detail::svg_num(opt.margin) + "\" width=\"" + detail::svg_num(plot_w) +
      "\" height=\"" + detail::svg_num(plot_h) + "\"/></clipPath>\n");
  add("<g clip-path=\"url(#plot)\">\n");

  // Domain shading first, underneath the curves.
  if (opt.shading && !opt.shading->empty()) {
    std::vector<double> ths, xs;
    for (const auto& r : *opt.shading) {
      ths.push_back(r.theta);
      xs.push_back(r.x);
    }
    const double dth = detail::grid_spacing(ths);
    const double dx = detail::grid_spacing(xs);
    if (dth > 0.0 && dx > 0.0) {
      for (const auto& r : *opt.shading) {
        if (r.verdict == DomainVerdict::Outside) continue;
        const double k = std::floor((r.theta - th_lo) / period);
        const double th_w = r.theta - k * period;
        const char* cls =
            r.verdict == DomainVerdict::Inside ? "cell-inside" : "cell-undecided";
        add("<rect class=\"" + std::string(cls) + "\" x=\"" +
            detail::svg_num(px(th_w - 0.5 * dth)) + "\" y=\"" +
            detail::svg_num(py(r.x + 0.5 * dx)) + "\" width=\"" +
            detail::svg_num(dth / (th_hi - th_lo) * plot_w) + "\" height=\"" +
            detail::svg_num(dx / (x_hi - x_lo) * plot_h) + "\"/>\n");
      }
    }
  }

  // A polyline, split wherever the wrapped representative jumps periods.
  auto add_wrapped_path = [&](const char* cls, auto&& n_points, auto&& point_at) {
    const std::size_t n = n_points;
    std::string d;
    double prev_k = std::numeric_limits<double>::quiet_NaN();
    std::size_t run = 0;
    auto flush = [&] {
      if (run >= 2) add("<path class=\"" + std::string(cls) + "\" d=\"" + d + "\"/>\n");
      d.clear();
      run = 0;
    };
    for (std::size_t i = 0; i < n; ++i) {
      const CurvePoint p = point_at(i);
      const double k = std::floor((p.theta_e - th_lo) / period);
      if (k != prev_k) flush();
      const double th_w = p.theta_e - k * period;
      d += (run == 0 ? "M" : " L");
      d += detail::svg_num(px(th_w)) + "," + detail::svg_num(py(p.x));
      ++run;
      prev_k = k;
    }
    flush();
  };

  for (const auto& traj : trajectories)
    add_wrapped_path("trajectory", traj.samples.size(), [&](std::size_t i) {
      return CurvePoint{traj.samples[i].theta_e, traj.samples[i].x};
    });
  for (const auto& b : separatrices)
    add_wrapped_path("separatrix", b.curve.size(),
                     [&](std::size_t i) { return b.curve[i]; });

  // Every lift of every equilibrium inside the window.
  for (const auto& eq : eqs) {
    const double th = eq.state.theta_e;
    const long k0 = long(std::ceil((th_lo - th) / period));
    const long k1 = long(std::floor((th_hi - th) / period));
    for (long k = k0; k <= k1; ++k) {
      const char* cls = eq.stability == Stability::Stable ? "eq-stable" : "eq-saddle";
      add("<circle class=\"" + std::string(cls) + "\" cx=\"" +
          detail::svg_num(px(th + double(k) * period)) + "\" cy=\"" +
          detail::svg_num(py(eq.state.x)) + "\" r=\"3\"/>\n");
    }
  }

  add("</g>\n");
  add("<rect class=\"frame\" x=\"" + detail::svg_num(opt.margin) + "\" y=\"" +
      detail::svg_num(opt.margin) + "\" width=\"" + detail::svg_num(plot_w) +
      "\" height=\"" + detail::svg_num(plot_h) + "\"/>\n");
  add("</svg>\n");
  return svg;
}

inline void render_portrait_svg_file(const std::string& path, const PhaseModel& m,
                                     const std::vector<Trajectory>& trajectories,
                                     const std::vector<Separatrix>& separatrices,
                                     const std::vector<Equilibrium>& eqs,
                                     const SvgOptions& opt = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << render_portrait_svg(m, trajectories, separatrices, eqs, opt);
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace pllsim
