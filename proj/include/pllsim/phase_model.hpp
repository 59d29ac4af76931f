#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <sstream>
#include <vector>

#include "errors.hpp"
#include "loop_filter.hpp"
#include "pd_characteristic.hpp"

namespace pllsim {

/// Point in the cylindrical phase space: filter state and phase error.
/// theta_e is kept unwrapped along trajectories (slip detection needs the
/// lift); equilibria report the wrapped representative.
struct ModelState {
  double x = 0.0;
  double theta_e = 0.0;
};

struct StateRate {
  double dx = 0.0;
  double dtheta = 0.0;
};

/// Autonomous second-order phase model
///
///     x'       = a·x + b·v_e(theta_e)
///     theta_e' = omega_e_free - K_vco·(c·x + h·v_e(theta_e))
///
/// K_vco = 0 is accepted (open loop; useful for integration exactness
/// checks) but every equilibrium/range operation requires K_vco > 0.
struct PhaseModel {
  LoopFilter filter;
  PdCharacteristic pd;
  double k_vco = 0.0;
  double omega_e_free = 0.0;
};

[[nodiscard]] inline PhaseModel make_model(LoopFilter filter, PdCharacteristic pd,
                                           double k_vco, double omega_e_free) {
  if (!std::isfinite(k_vco) || k_vco < 0.0)
    throw ParameterError("k_vco must be non-negative and finite");
  if (!std::isfinite(omega_e_free))
    throw ParameterError("omega_e_free must be finite");
  return PhaseModel{filter, std::move(pd), k_vco, omega_e_free};
}

[[nodiscard]] inline StateRate vector_field(const PhaseModel& m, const ModelState& s) {
  const double v = m.pd.eval(s.theta_e);
  return {m.filter.a * s.x + m.filter.b * v,
          m.omega_e_free - m.k_vco * filter_output(m.filter, s.x, v)};
}

/// Wrap an angle to the representative interval [-period/2, period/2).
[[nodiscard]] inline double wrap_angle(double theta, double period) {
  return theta - period * std::floor(theta / period + 0.5);
}

struct Jacobian2 {
  // Row order matches the state order (x, theta_e).
  double dxdx = 0.0, dxdth = 0.0;
  double dthdx = 0.0, dthdth = 0.0;
  [[nodiscard]] double trace() const { return dxdx + dthdth; }
  [[nodiscard]] double det() const { return dxdx * dthdth - dxdth * dthdx; }
};

/// Linearization at a state.  Throws CornerError when the detector slope is
/// evaluated exactly at a kink (triangular characteristic); everywhere else
/// the derivative is classical.
[[nodiscard]] inline Jacobian2 jacobian(const PhaseModel& m, const ModelState& s) {
  bool corner = false;
  const double vp = m.pd.slope(s.theta_e, &corner);
  if (corner)
    throw CornerError("jacobian requested at a kink of the detector characteristic");
  return {m.filter.a, m.filter.b * vp, -m.k_vco * m.filter.c, -m.k_vco * m.filter.h * vp};
}

/// Rough natural frequency of the linearized loop, used for time-horizon and
/// output-stride heuristics: sqrt(K·(b·c - a·h)·pd_max·(2pi/period)).  For
/// both filter families b·c - a·h = 1/tau1, so this is the familiar
/// sqrt(K·pd_slope_scale/tau1).
[[nodiscard]] inline double natural_frequency(const PhaseModel& m) {
  const double slope_scale = m.pd.max_value() * (kTwoPi / m.pd.period());
  const double stiffness =
      m.k_vco * slope_scale * (m.filter.b * m.filter.c - m.filter.a * m.filter.h);
  return stiffness > 0.0 ? std::sqrt(stiffness) : 0.0;
}

// ---------------------------------------------------------------------------
// Equilibria
// ---------------------------------------------------------------------------

enum class Stability { Stable, Saddle };

struct Equilibrium {
  ModelState state;  // theta_e wrapped to [-period/2, period/2)
  Stability stability = Stability::Stable;
  std::complex<double> lambda1, lambda2;
  bool degenerate = false;  // saddle-node at the edge of equilibrium existence
};

namespace detail {

struct PdRoot {
  double theta = 0.0;
  bool degenerate = false;
};

// All solutions of v_e(theta) = target with theta in [-period/2, period/2).
// Closed forms for the built-in shapes; bracketed bisection (plus a Newton
// polish) on a fine grid for custom rules.  Tangential custom roots are not
// detected -- the built-ins are the only shapes for which the degenerate
// saddle-node case is reported.
inline std::vector<PdRoot> pd_roots(const PdCharacteristic& pd, double target) {
  const double period = pd.period();
  const double rho = kTwoPi / period;
  std::vector<PdRoot> roots;

  auto push_wrapped = [&](double theta, bool degen) {
    roots.push_back({wrap_angle(theta, period), degen});
  };

  switch (pd.kind()) {
    case PdKind::Sinusoidal: {
      const double q = target / (0.5 * pd.amplitude_scale());
      if (std::abs(q) > 1.0 + 1e-12) return roots;
      if (std::abs(q) >= 1.0 - 1e-12) {
        push_wrapped(std::copysign(0.5 * kPi, q) / rho, true);
        return roots;
      }
      const double u = std::asin(q);
      push_wrapped(u / rho, false);
      push_wrapped((kPi - u) / rho, false);
      return roots;
    }
    case PdKind::Triangular: {
      const double q = target / pd.amplitude_scale();
      if (std::abs(q) > 1.0 + 1e-12) return roots;
      if (std::abs(q) >= 1.0 - 1e-12) {
        push_wrapped(std::copysign(0.5 * kPi, q) / rho, true);
        return roots;
      }
      push_wrapped(0.5 * kPi * q / rho, false);
      push_wrapped((kPi - 0.5 * kPi * q) / rho, false);
      return roots;
    }
    case PdKind::Custom: {
      const int n = 2048;
      double prev_theta = -0.5 * period;
      double prev_g = pd.eval(prev_theta) - target;
      for (int i = 1; i <= n; ++i) {
        const double theta = (-0.5 + i / double(n)) * period;
        const double g = pd.eval(theta) - target;
        if (prev_g == 0.0) {
          push_wrapped(prev_theta, false);
        } else if (prev_g * g < 0.0) {
          double lo = prev_theta, hi = theta, glo = prev_g;
          for (int it = 0; it < 60 && hi - lo > 1e-13 * period; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double gm = pd.eval(mid) - target;
            if (glo * gm <= 0.0) hi = mid; else lo = mid, glo = gm;
          }
          double root = 0.5 * (lo + hi);
          for (int it = 0; it < 2; ++it) {  // Newton polish
            const double g0 = pd.eval(root) - target;
            const double sl = pd.slope(root);
            if (std::abs(sl) > 1e-12) root -= g0 / sl;
          }
          push_wrapped(root, false);
        }
        prev_theta = theta;
        prev_g = g;
      }
      return roots;
    }
  }
  return roots;
}

struct Eigen2 {
  std::complex<double> lambda1, lambda2;
  bool real = false;
  std::array<double, 2> vec1{}, vec2{};  // eigenvectors, valid when real
};

inline Eigen2 eigen2(const Jacobian2& j) {
  Eigen2 out;
  const double tr = j.trace();
  const double det = j.det();
  const double disc = tr * tr - 4.0 * det;
  if (disc >= 0.0) {
    const double sq = std::sqrt(disc);
    // Stable ordering: lambda1 <= lambda2 on the real axis.
    const double l1 = 0.5 * (tr - sq);
    const double l2 = 0.5 * (tr + sq);
    out.lambda1 = l1;
    out.lambda2 = l2;
    out.real = true;
    auto eigvec = [&](double lambda) -> std::array<double, 2> {
      // (J - lambda I) v = 0; take whichever row is better conditioned.
      const std::array<double, 2> r1 = {j.dxdth, lambda - j.dxdx};
      const std::array<double, 2> r2 = {lambda - j.dthdth, j.dthdx};
      const double n1 = std::hypot(r1[0], r1[1]);
      const double n2 = std::hypot(r2[0], r2[1]);
      std::array<double, 2> v = (n1 >= n2) ? r1 : r2;
      const double n = std::hypot(v[0], v[1]);
      if (n == 0.0) throw SeedError("eigenvector of a scalar-multiple jacobian is ambiguous");
      return {v[0] / n, v[1] / n};
    };
    out.vec1 = eigvec(l1);
    out.vec2 = eigvec(l2);
  } else {
    const double im = 0.5 * std::sqrt(-disc);
    out.lambda1 = {0.5 * tr, -im};
    out.lambda2 = {0.5 * tr, +im};
  }
  return out;
}

}  // namespace detail

/// All equilibria over one period, sorted by wrapped phase error.
///
/// LeadLag: v_e(theta_s) = omega/(K·H(0)) with x_s = -(b/a)·v_e(theta_s);
/// the set is empty when |omega| exceeds K·pd_max·H(0).  ActivePI: roots of
/// v_e with x_s chosen so the frequency line balances exactly.  Each result
/// is residual-checked against the vector field.
[[nodiscard]] inline std::vector<Equilibrium> equilibria(const PhaseModel& m) {
  if (!(m.k_vco > 0.0))
    throw ParameterError("equilibria require k_vco > 0");
  const LoopFilter& f = m.filter;

  double target;
  if (f.a != 0.0) {
    const double dc_gain = f.h - f.c * f.b / f.a;  // H(0)
    target = m.omega_e_free / (m.k_vco * dc_gain);
  } else {
    target = 0.0;  // integrator channel forces v_e = 0
  }

  std::vector<Equilibrium> out;
  for (const auto& root : detail::pd_roots(m.pd, target)) {
    const double v = m.pd.eval(root.theta);
    double x;
    if (f.a != 0.0) {
      x = -(f.b / f.a) * v;
    } else {
      x = (m.omega_e_free / m.k_vco - f.h * v) / f.c;
    }
    Equilibrium eq;
    eq.state = {x, root.theta};
    eq.degenerate = root.degenerate;
    if (root.degenerate) {
      // Saddle-node: one eigenvalue is exactly zero; report the other as the
      // trace of the one-sided linearization.
      bool corner = false;
      const double vp = m.pd.slope(root.theta, &corner);
      eq.lambda1 = 0.0;
      eq.lambda2 = f.a - m.k_vco * f.h * vp;
      eq.stability = Stability::Saddle;
      out.push_back(eq);
      continue;
    }
    const auto eig = detail::eigen2(jacobian(m, eq.state));
    eq.lambda1 = eig.lambda1;
    eq.lambda2 = eig.lambda2;
    const double det = (eig.lambda1 * eig.lambda2).real();
    if (det < 0.0) {
      eq.stability = Stability::Saddle;
    } else {
      const double re_max = std::max(eig.lambda1.real(), eig.lambda2.real());
      if (re_max >= 0.0) {
        // Cannot happen for the built-in filter families (trace < 0 whenever
        // det > 0); be loud rather than silently misclassify a custom setup.
        throw DegenerateError("equilibrium is neither a stable point nor a saddle");
      }
      eq.stability = Stability::Stable;
    }
    out.push_back(eq);
  }

  std::sort(out.begin(), out.end(), [](const Equilibrium& a, const Equilibrium& b) {
    return a.state.theta_e < b.state.theta_e;
  });

  // Residual guard: an "equilibrium" that does not annihilate the vector
  // field indicates a root-finding defect; fail fast.
  for (const auto& eq : out) {
    const StateRate r = vector_field(m, eq.state);
    const double scale = 1.0 + std::abs(m.omega_e_free) +
                         m.k_vco * (std::abs(eq.state.x) + m.pd.max_value());
    if (std::abs(r.dx) + std::abs(r.dtheta) > 1e-10 * scale)
      throw ConvergenceError("equilibrium residual check failed");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Structural transformations
// ---------------------------------------------------------------------------

/// Mirror image of the loop: negating omega_e_free together with
/// (x, theta) -> (-x, -theta) maps trajectories onto trajectories when the
/// detector characteristic is odd.
struct OddCounterpart {
  PhaseModel model;
  [[nodiscard]] static ModelState map_state(const ModelState& s) {
    return {-s.x, -s.theta_e};
  }
};

[[nodiscard]] inline OddCounterpart apply_odd_symmetry(const PhaseModel& m) {
  if (!m.pd.is_odd())
    throw SymmetryError("odd-symmetry transform requires an odd detector characteristic");
  PhaseModel mirrored = m;
  mirrored.omega_e_free = -m.omega_e_free;
  return {mirrored};
}

/// Fold phase gain k_p and detector gain k_pd into the loop gain.  The
/// normalized model has unit detector gains; a frequency measured on it maps
/// back to the original loop by dividing by k_p.
struct NormalizedGains {
  PhaseModel model;
  double frequency_divisor = 1.0;
};

[[nodiscard]] inline NormalizedGains normalize_gains(double k_p, double k_pd,
                                                     const PhaseModel& m) {
  detail::require_finite_positive(k_p, "k_p");
  detail::require_finite_positive(k_pd, "k_pd");
  PhaseModel out = m;
  out.k_vco = m.k_vco * k_p * k_pd;
  out.omega_e_free = m.omega_e_free * k_p;
  return {out, k_p};
}

}  // namespace pllsim
