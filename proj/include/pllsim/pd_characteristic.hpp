#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <utility>

#include "errors.hpp"

namespace pllsim {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

enum class PdKind { Sinusoidal, Triangular, Custom };

/// Periodic phase-detector characteristic v_e(theta_e).
///
/// The built-in shapes are the two classic averaged detector outputs:
///   - Sinusoidal: (1/2)·sin(theta) for multiplier-type detectors,
///   - Triangular: odd sawtooth-free triangle with slope 2/pi through the
///     origin, peak value 1 at a quarter period.
/// Both are defined on a base argument of period 2*pi and rescaled so the
/// characteristic has the requested period (pi for Costas-style loops).
/// amplitude_scale multiplies the output; it models detector gain that has
/// not been normalized away.
///
/// Custom characteristics wrap a caller-supplied rule.  Periodicity is
/// checked by sampling at construction; oddness is probed the same way and
/// remembered, because several range operations are only meaningful for odd
/// characteristics.
class PdCharacteristic {
 public:
  using Rule = std::function<double(double)>;

  [[nodiscard]] static PdCharacteristic sinusoidal(double period = kTwoPi,
                                                   double amplitude_scale = 1.0) {
    return PdCharacteristic(PdKind::Sinusoidal, period, amplitude_scale, {});
  }

  [[nodiscard]] static PdCharacteristic triangular(double period = kTwoPi,
                                                   double amplitude_scale = 1.0) {
    return PdCharacteristic(PdKind::Triangular, period, amplitude_scale, {});
  }

  [[nodiscard]] static PdCharacteristic custom(Rule rule, double period,
                                               double amplitude_scale = 1.0) {
    if (!rule) throw ParameterError("custom characteristic: rule must be callable");
    return PdCharacteristic(PdKind::Custom, period, amplitude_scale, std::move(rule));
  }

  [[nodiscard]] PdKind kind() const { return kind_; }
  [[nodiscard]] double period() const { return period_; }
  [[nodiscard]] double amplitude_scale() const { return scale_; }
  [[nodiscard]] bool is_odd() const { return odd_; }

  /// Detector output at phase error theta.  The built-in shapes are
  /// evaluated on |theta| with the sign restored afterwards, so their
  /// oddness holds bit for bit and a sign-mirrored simulation reproduces
  /// the original step for step.
  [[nodiscard]] double eval(double theta) const {
    switch (kind_) {
      case PdKind::Sinusoidal: {
        const double a = arg_scale_ * theta;
        const double v = 0.5 * scale_ * std::sin(std::abs(a));
        return a < 0.0 ? -v : v;
      }
      case PdKind::Triangular: {
        const double a = arg_scale_ * theta;
        const double v = scale_ * triangle(std::abs(a));
        return a < 0.0 ? -v : v;
      }
      case PdKind::Custom:
        return scale_ * rule_(theta);
    }
    return 0.0;  // unreachable
  }

  /// d v_e / d theta.  At a kink of the triangular shape the value taken
  /// from the left is returned and *corner (if given) is set.
  [[nodiscard]] double slope(double theta, bool* corner = nullptr) const {
    if (corner) *corner = false;
    switch (kind_) {
      case PdKind::Sinusoidal:
        return 0.5 * scale_ * arg_scale_ * std::cos(arg_scale_ * theta);
      case PdKind::Triangular: {
        const double w = wrap_triangle(arg_scale_ * theta);
        // Kinks sit at w = pi/2 and at the seam w = -pi/2 (== 3*pi/2).
        constexpr double kCornerTol = 1e-9;
        const bool at_peak = std::abs(w - 0.5 * kPi) <= kCornerTol;
        const bool at_valley = w <= -0.5 * kPi + kCornerTol || w >= 1.5 * kPi - kCornerTol;
        if (corner) *corner = at_peak || at_valley;
        double base;
        if (at_peak) {
          base = 2.0 / kPi;  // left limit: still on the rising branch
        } else if (at_valley) {
          base = -2.0 / kPi;  // left limit: still on the falling branch
        } else {
          base = (w < 0.5 * kPi) ? 2.0 / kPi : -2.0 / kPi;
        }
        return scale_ * arg_scale_ * base;
      }
      case PdKind::Custom: {
        // Central difference; the step is tied to the period so the stencil
        // stays well inside one branch of reasonable piecewise rules.
        const double h = 1e-6 * period_;
        return (eval(theta + h) - eval(theta - h)) / (2.0 * h);
      }
    }
    return 0.0;  // unreachable
  }

  /// Largest detector output over one period (pd_max).  1/2 and 1 for the
  /// built-ins (times amplitude_scale); a dense scan plus local refinement
  /// for custom rules.
  [[nodiscard]] double max_value() const { return max_value_; }

  /// Antiderivative W(theta) = integral of v_e from 0 to theta.  Used by the
  /// energy certificate for PI loops; closed form for built-ins, adaptive
  /// Simpson for custom rules.
  [[nodiscard]] double integral(double theta) const {
    switch (kind_) {
      case PdKind::Sinusoidal:
        return 0.5 * scale_ * (1.0 - std::cos(arg_scale_ * theta)) / arg_scale_;
      case PdKind::Triangular:
        return (scale_ / arg_scale_) * triangle_antiderivative(arg_scale_ * theta);
      case PdKind::Custom:
        return simpson(0.0, theta);
    }
    return 0.0;  // unreachable
  }

 private:
  PdCharacteristic(PdKind kind, double period, double amplitude_scale, Rule rule)
      : kind_(kind), period_(period), scale_(amplitude_scale), rule_(std::move(rule)) {
    if (!(period > 0.0) || !std::isfinite(period))
      throw ParameterError("pd_period must be positive and finite");
    if (!(amplitude_scale > 0.0) || !std::isfinite(amplitude_scale))
      throw ParameterError("amplitude_scale must be positive and finite");
    arg_scale_ = kTwoPi / period_;
    switch (kind_) {
      case PdKind::Sinusoidal:
        max_value_ = 0.5 * scale_;
        odd_ = true;
        break;
      case PdKind::Triangular:
        max_value_ = scale_;
        odd_ = true;
        break;
      case PdKind::Custom:
        check_custom_periodicity();
        max_value_ = scan_max();
        odd_ = probe_odd();
        break;
    }
  }

  // Wrap the base argument into [-pi/2, 3*pi/2): rising branch then falling.
  [[nodiscard]] static double wrap_triangle(double u) {
    return u - kTwoPi * std::floor((u + 0.5 * kPi) / kTwoPi);
  }

  [[nodiscard]] static double triangle(double u) {
    const double w = wrap_triangle(u);
    return (w <= 0.5 * kPi) ? (2.0 / kPi) * w : 2.0 - (2.0 / kPi) * w;
  }

  // Antiderivative of triangle() on the base argument, continuous across the
  // seam (value pi/4 at both w = -pi/2 and w = 3*pi/2; each full period
  // integrates to zero, so the wrapped form is globally valid).
  [[nodiscard]] static double triangle_antiderivative(double u) {
    const double w = wrap_triangle(u);
    if (w <= 0.5 * kPi) return w * w / kPi;
    return 0.25 * kPi + 2.0 * (w - 0.5 * kPi) - (w * w - 0.25 * kPi * kPi) / kPi;
  }

  void check_custom_periodicity() const {
    for (int i = 0; i < 17; ++i) {
      const double theta = (i / 17.0 - 0.5) * period_ * 1.37;  // irrational-ish spread
      const double v0 = rule_(theta);
      const double v1 = rule_(theta + period_);
      if (std::abs(v1 - v0) > 1e-12 * std::max(1.0, std::abs(v0)))
        throw ParameterError("custom characteristic is not periodic with pd_period");
    }
  }

  [[nodiscard]] bool probe_odd() const {
    for (int i = 1; i <= 33; ++i) {
      const double theta = 0.49 * period_ * i / 33.0;
      if (std::abs(rule_(theta) + rule_(-theta)) > 1e-12 * std::max(1.0, max_value_ / scale_))
        return false;
    }
    return true;
  }

  [[nodiscard]] double scan_max() const {
    const int n = 4096;
    double best = -std::numeric_limits<double>::infinity();
    double best_theta = 0.0;
    for (int i = 0; i < n; ++i) {
      const double theta = (i / double(n) - 0.5) * period_;
      const double v = scale_ * rule_(theta);
      if (v > best) {
        best = v;
        best_theta = theta;
      }
    }
    // Golden-section refinement one grid cell either side of the best sample.
    double a = best_theta - period_ / n, b = best_theta + period_ / n;
    constexpr double kInvPhi = 0.6180339887498949;
    double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
    for (int it = 0; it < 80; ++it) {
      if (scale_ * rule_(c) > scale_ * rule_(d)) b = d; else a = c;
      c = b - kInvPhi * (b - a);
      d = a + kInvPhi * (b - a);
    }
    return std::max(best, scale_ * rule_(0.5 * (a + b)));
  }

  [[nodiscard]] double simpson(double a, double b) const {
    if (a == b) return 0.0;
    struct Quad {
      const PdCharacteristic* pd;
      double eps;
      double recurse(double lo, double hi, double flo, double fmid, double fhi,
                     double whole, int depth) const {
        const double mid = 0.5 * (lo + hi);
        const double lmid = pd->eval(0.5 * (lo + mid));
        const double rmid = pd->eval(0.5 * (mid + hi));
        const double left = (mid - lo) / 6.0 * (flo + 4.0 * lmid + fmid);
        const double right = (hi - mid) / 6.0 * (fmid + 4.0 * rmid + fhi);
        if (depth >= 24 || std::abs(left + right - whole) <= 15.0 * eps)
          return left + right + (left + right - whole) / 15.0;
        return recurse(lo, mid, flo, lmid, fmid, left, depth + 1) +
               recurse(mid, hi, fmid, rmid, fhi, right, depth + 1);
      }
    };
    const double fa = eval(a), fb = eval(b), fm = eval(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    const Quad q{this, 1e-12 * std::max(1.0, std::abs(b - a)) * std::max(1.0, max_value_)};
    return q.recurse(a, b, fa, fm, fb, whole, 0);
  }

  PdKind kind_;
  double period_;
  double scale_;
  Rule rule_;
  double arg_scale_ = 1.0;  // 2*pi / period
  double max_value_ = 0.0;
  bool odd_ = false;
};

}  // namespace pllsim
