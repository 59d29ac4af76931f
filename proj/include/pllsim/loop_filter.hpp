#pragma once

#include <cmath>
#include <complex>
#include <sstream>

#include "errors.hpp"

namespace pllsim {

enum class FilterKind { LeadLag, ActivePI };

/// First-order loop filter in scalar state-space form:
///
///     x' = a·x + b·u,      y = c·x + h·u
///
/// which realizes H(s) = -c·(a - s)^{-1}·b + h.  Two classic choices:
///
///   LeadLag:  H(s) = (1 + s·tau2)/(1 + s·tau1),  tau1 > tau2 >= 0
///             a = -1/tau1, b = 1/tau1, c = 1 - tau2/tau1, h = tau2/tau1
///   ActivePI: H(s) = (1 + s·tau2)/(s·tau1),      tau1, tau2 > 0
///             a = 0,       b = 1/tau1, c = 1,             h = tau2/tau1
///
/// The coefficients are stored explicitly so the phase model never needs to
/// know which family it is driving.
struct LoopFilter {
  FilterKind kind = FilterKind::LeadLag;
  double tau1 = 1.0;
  double tau2 = 0.0;
  double a = 0.0, b = 0.0, c = 0.0, h = 0.0;
};

namespace detail {
inline void require_finite_positive(double v, const char* name) {
  if (!std::isfinite(v) || !(v > 0.0)) {
    std::ostringstream os;
    os << name << " must be positive and finite (got " << v << ")";
    throw ParameterError(os.str());
  }
}
}  // namespace detail

[[nodiscard]] inline LoopFilter make_lead_lag(double tau1, double tau2) {
  detail::require_finite_positive(tau1, "tau1");
  if (!std::isfinite(tau2) || tau2 < 0.0 || !(tau2 < tau1)) {
    std::ostringstream os;
    os << "lead-lag filter requires 0 <= tau2 < tau1 (got tau1=" << tau1
       << ", tau2=" << tau2 << ")";
    throw ParameterError(os.str());
  }
  LoopFilter f;
  f.kind = FilterKind::LeadLag;
  f.tau1 = tau1;
  f.tau2 = tau2;
  f.a = -1.0 / tau1;
  f.b = 1.0 / tau1;
  f.c = 1.0 - tau2 / tau1;
  f.h = tau2 / tau1;
  return f;
}

[[nodiscard]] inline LoopFilter make_active_pi(double tau1, double tau2) {
  detail::require_finite_positive(tau1, "tau1");
  detail::require_finite_positive(tau2, "tau2");
  LoopFilter f;
  f.kind = FilterKind::ActivePI;
  f.tau1 = tau1;
  f.tau2 = tau2;
  f.a = 0.0;
  f.b = 1.0 / tau1;
  f.c = 1.0;
  f.h = tau2 / tau1;
  return f;
}

/// Filter output for a given internal state and input.
[[nodiscard]] inline double filter_output(const LoopFilter& f, double state, double input) {
  return f.c * state + f.h * input;
}

/// H(s) evaluated from the realization.  Throws PoleError at the pole
/// (s = a), where the expression is singular by construction.
[[nodiscard]] inline std::complex<double> transfer_at(const LoopFilter& f,
                                                      std::complex<double> s) {
  const std::complex<double> d = s - f.a;
  if (std::abs(d) < 1e-300) throw PoleError("transfer function evaluated at its pole");
  return f.c * f.b / d + f.h;
}

}  // namespace pllsim
