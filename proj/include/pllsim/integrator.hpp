#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "errors.hpp"
#include "phase_model.hpp"

namespace pllsim {

enum class Direction { Forward, Backward };
enum class EventKind { SlipCrossing, EquilibriumEntry, DomainExit };
enum class Termination { TimeLimit, Event, StepLimit };

struct IntegrationConfig {
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  double t_max = 0.0;  // required; horizon length, always positive
  long max_steps = 10'000'000;
  Direction direction = Direction::Forward;
  // Output sampling interval.  0 selects the heuristic (a fraction of the
  // slowest linearized mode's period); negative values record accepted step
  // endpoints only.  Analysis code works off the dense interpolant either way.
  double dense_stride = 0.0;
};

/// Scalar gate g(t, state); a sign change on a step marks an event, located
/// by bisection on the dense interpolant.
struct EventSpec {
  std::function<double(double, const ModelState&)> gate;
  EventKind kind = EventKind::SlipCrossing;
  bool stop = false;
};

struct TrajectorySample {
  double t = 0.0;
  double x = 0.0;
  double theta_e = 0.0;
};

struct TrajectoryEvent {
  double t = 0.0;
  EventKind kind = EventKind::SlipCrossing;
  ModelState state;
};

namespace detail {

// Dormand-Prince 5(4) tableau, error weights (5th minus 4th order row) and
// the quartic dense-output coefficients.
inline constexpr double kC2 = 1.0 / 5.0, kC3 = 3.0 / 10.0, kC4 = 4.0 / 5.0,
                        kC5 = 8.0 / 9.0;
inline constexpr double kA21 = 1.0 / 5.0;
inline constexpr double kA31 = 3.0 / 40.0, kA32 = 9.0 / 40.0;
inline constexpr double kA41 = 44.0 / 45.0, kA42 = -56.0 / 15.0, kA43 = 32.0 / 9.0;
inline constexpr double kA51 = 19372.0 / 6561.0, kA52 = -25360.0 / 2187.0,
                        kA53 = 64448.0 / 6561.0, kA54 = -212.0 / 729.0;
inline constexpr double kA61 = 9017.0 / 3168.0, kA62 = -355.0 / 33.0,
                        kA63 = 46732.0 / 5247.0, kA64 = 49.0 / 176.0,
                        kA65 = -5103.0 / 18656.0;
inline constexpr double kA71 = 35.0 / 384.0, kA73 = 500.0 / 1113.0,
                        kA74 = 125.0 / 192.0, kA75 = -2187.0 / 6784.0,
                        kA76 = 11.0 / 84.0;
inline constexpr double kE1 = 71.0 / 57600.0, kE3 = -71.0 / 16695.0,
                        kE4 = 71.0 / 1920.0, kE5 = -17253.0 / 339200.0,
                        kE6 = 22.0 / 525.0, kE7 = -1.0 / 40.0;
inline constexpr double kD1 = -12715105075.0 / 11282082432.0,
                        kD3 = 87487479700.0 / 32700410799.0,
                        kD4 = -10690763975.0 / 1880347072.0,
                        kD5 = 701980252875.0 / 199316789632.0,
                        kD6 = -1453857185.0 / 822651844.0,
                        kD7 = 69997945.0 / 29380423.0;

using Vec2 = std::array<double, 2>;

}  // namespace detail

/// Result of an adaptive integration.  Times are "public" times: the
/// internal clock always runs forward, and public t = sign * internal s with
/// sign = -1 for backward runs, so sample times are strictly monotone in the
/// integration direction.
///
/// The dense interpolant of every accepted step is retained; state_at() and
/// the stored samples evaluate the same polynomial, so re-interpolating at a
/// sample time reproduces the stored values bit for bit.
struct Trajectory {
  struct Step {
    double s0 = 0.0, s1 = 0.0;  // internal clock
    detail::Vec2 r1{}, r2{}, r3{}, r4{}, r5{};
  };

  ModelState initial;
  std::vector<TrajectorySample> samples;
  std::vector<TrajectoryEvent> events;
  std::vector<Step> steps;
  Termination terminated_by = Termination::TimeLimit;
  double direction_sign = 1.0;
  double s_end = 0.0;

  [[nodiscard]] double t_begin() const { return 0.0; }
  [[nodiscard]] double t_end() const { return direction_sign * s_end; }

  [[nodiscard]] static ModelState eval_step(const Step& st, double s) {
    const double sigma = (s - st.s0) / (st.s1 - st.s0);
    const double om = 1.0 - sigma;
    detail::Vec2 y;
    for (int i = 0; i < 2; ++i)
      y[i] = st.r1[i] +
             sigma * (st.r2[i] + om * (st.r3[i] + sigma * (st.r4[i] + om * st.r5[i])));
    return {y[0], y[1]};
  }

  /// Dense state lookup at public time t (boundary times resolve to the step
  /// ending there, matching how samples were emitted).
  [[nodiscard]] ModelState state_at(double t) const {
    if (steps.empty()) throw InterpolationError("trajectory has no steps");
    double s = direction_sign * t;
    const double slack = 1e-12 * std::max(1.0, s_end);
    if (s < -slack || s > s_end + slack)
      throw InterpolationError("state_at query outside the integrated span");
    s = std::clamp(s, 0.0, s_end);
    if (s <= steps.front().s0) return eval_step(steps.front(), s);
    const auto it = std::lower_bound(
        steps.begin(), steps.end(), s,
        [](const Step& st, double val) { return st.s0 < val; });
    return eval_step(*(it - 1), s);
  }
};

namespace detail {

[[nodiscard]] inline double error_norm(const Vec2& err, const Vec2& y0, const Vec2& y1,
                                       double rtol, double atol) {
  double acc = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double sk = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double q = err[i] / sk;
    acc += q * q;
  }
  return std::sqrt(0.5 * acc);
}

template <class Rhs>
[[nodiscard]] double initial_step(Rhs&& f, double s0, const Vec2& y0, const Vec2& k1,
                                  double rtol, double atol, double s_max) {
  Vec2 sk;
  for (int i = 0; i < 2; ++i) sk[i] = atol + rtol * std::abs(y0[i]);
  double dnf = 0.0, dny = 0.0;
  for (int i = 0; i < 2; ++i) {
    dnf += (k1[i] / sk[i]) * (k1[i] / sk[i]);
    dny += (y0[i] / sk[i]) * (y0[i] / sk[i]);
  }
  double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : 0.01 * std::sqrt(dny / dnf);
  h = std::min(h, s_max);
  Vec2 y1;
  for (int i = 0; i < 2; ++i) y1[i] = y0[i] + h * k1[i];
  const Vec2 k2 = f(s0 + h, y1);
  double der2 = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double d = (k2[i] - k1[i]) / sk[i];
    der2 += d * d;
  }
  der2 = std::sqrt(der2) / h;
  const double der12 = std::max(der2, std::sqrt(dnf));
  const double h1 =
      (der12 <= 1e-15) ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
  return std::min({100.0 * h, h1, s_max});
}

[[noreturn]] inline void throw_non_finite(double t, const Vec2& y) {
  std::ostringstream os;
  os << "integration produced a non-finite state near t=" << t << " (x=" << y[0]
     << ", theta_e=" << y[1] << ")";
  throw NonFiniteError(os.str());
}

/// Core adaptive loop.  `f` is the field in internal time (direction already
/// folded in); `sign` only converts internal times to public ones for event
/// gates and records.
template <class Rhs>
Trajectory run_dopri5(Rhs&& f, Vec2 y, const IntegrationConfig& cfg, double sign,
                      const std::vector<EventSpec>& events, double stride) {
  if (!(cfg.t_max > 0.0) || !std::isfinite(cfg.t_max))
    throw ParameterError("t_max must be positive and finite");
  if (!(cfg.rel_tol > 0.0) || !(cfg.abs_tol >= 0.0))
    throw ParameterError("tolerances must satisfy rel_tol > 0, abs_tol >= 0");
  if (cfg.max_steps < 1) throw ParameterError("max_steps must be at least 1");

  Trajectory traj;
  traj.initial = {y[0], y[1]};
  traj.direction_sign = sign;
  const double s_max = cfg.t_max;

  Vec2 k1 = f(0.0, y);
  if (!std::isfinite(k1[0]) || !std::isfinite(k1[1])) throw_non_finite(0.0, y);

  // Hairer's PI ("with stabilization") controller constants for DOPRI5.
  constexpr double kBeta = 0.04, kExpo1 = 0.2 - kBeta * 0.75, kSafe = 0.9;
  constexpr double kFacc1 = 5.0, kFacc2 = 0.1;  // 1/max-shrink, 1/max-grow
  double facold = 1e-4;
  double h = initial_step(f, 0.0, y, k1, cfg.rel_tol, cfg.abs_tol, s_max);

  traj.samples.push_back({0.0, y[0], y[1]});
  long next_sample = 1;  // stride sampling: s_k = next_sample * stride

  std::vector<double> gate_prev(events.size());
  for (std::size_t j = 0; j < events.size(); ++j)
    gate_prev[j] = events[j].gate(0.0, traj.initial);

  double s = 0.0;
  long nstep = 0;
  bool last_rejected = false;
  bool stopped = false;

  while (s < s_max && !stopped) {
    if (nstep >= cfg.max_steps) {
      traj.terminated_by = Termination::StepLimit;
      break;
    }
    ++nstep;
    if (h > s_max - s) h = s_max - s;
    if (!(h > 0.0) || h < 1e-14 * std::max(1.0, s))
      throw ConvergenceError("step size underflow in adaptive integration");

    // --- the seven stages (FSAL: k1 carried over) ---
    Vec2 yt, k2, k3, k4, k5, k6, k7, y1, err;
    for (int i = 0; i < 2; ++i) yt[i] = y[i] + h * kA21 * k1[i];
    k2 = f(s + kC2 * h, yt);
    for (int i = 0; i < 2; ++i) yt[i] = y[i] + h * (kA31 * k1[i] + kA32 * k2[i]);
    k3 = f(s + kC3 * h, yt);
    for (int i = 0; i < 2; ++i)
      yt[i] = y[i] + h * (kA41 * k1[i] + kA42 * k2[i] + kA43 * k3[i]);
    k4 = f(s + kC4 * h, yt);
    for (int i = 0; i < 2; ++i)
      yt[i] = y[i] + h * (kA51 * k1[i] + kA52 * k2[i] + kA53 * k3[i] + kA54 * k4[i]);
    k5 = f(s + kC5 * h, yt);
    for (int i = 0; i < 2; ++i)
      yt[i] = y[i] + h * (kA61 * k1[i] + kA62 * k2[i] + kA63 * k3[i] + kA64 * k4[i] +
                          kA65 * k5[i]);
    k6 = f(s + h, yt);
    for (int i = 0; i < 2; ++i)
      y1[i] = y[i] + h * (kA71 * k1[i] + kA73 * k3[i] + kA74 * k4[i] + kA75 * k5[i] +
                          kA76 * k6[i]);
    k7 = f(s + h, y1);
    for (int i = 0; i < 2; ++i)
      err[i] = h * (kE1 * k1[i] + kE3 * k3[i] + kE4 * k4[i] + kE5 * k5[i] +
                    kE6 * k6[i] + kE7 * k7[i]);

    if (!std::isfinite(y1[0]) || !std::isfinite(y1[1]) || !std::isfinite(err[0]) ||
        !std::isfinite(err[1]))
      throw_non_finite(sign * (s + h), y1);

    const double err_norm = error_norm(err, y, y1, cfg.rel_tol, cfg.abs_tol);
    const double fac11 = std::pow(err_norm, kExpo1);

    if (err_norm > 1.0) {  // reject, shrink, retry
      h /= std::min(kFacc1, fac11 / kSafe);
      last_rejected = true;
      continue;
    }

    // --- accept: store the dense interpolant for [s, s+h] ---
    Trajectory::Step st;
    st.s0 = s;
    st.s1 = s + h;
    for (int i = 0; i < 2; ++i) {
      const double ydiff = y1[i] - y[i];
      const double bspl = h * k1[i] - ydiff;
      st.r1[i] = y[i];
      st.r2[i] = ydiff;
      st.r3[i] = bspl;
      st.r4[i] = ydiff - h * k7[i] - bspl;
      st.r5[i] = h * (kD1 * k1[i] + kD3 * k3[i] + kD4 * k4[i] + kD5 * k5[i] +
                      kD6 * k6[i] + kD7 * k7[i]);
    }
    traj.steps.push_back(st);

    // --- events: scan quarter-step gate values, bisect sign changes ---
    double s_stop = st.s1;
    if (!events.empty()) {
      constexpr int kSub = 4;
      const double min_dt = 1e-12 * cfg.t_max;
      double sub_prev = st.s0;
      for (int q = 1; q <= kSub && !stopped; ++q) {
        const double s_q = st.s0 + (q / double(kSub)) * h;
        const ModelState state_q = Trajectory::eval_step(st, s_q);
        // Bisect every gate that changed sign across this sub-interval, then
        // commit crossings in time order so a stop cannot shadow an earlier one.
        struct Crossing {
          double s;
          std::size_t j;
        };
        std::vector<Crossing> found;
        for (std::size_t j = 0; j < events.size(); ++j) {
          const double g = events[j].gate(sign * s_q, state_q);
          const bool crossed =
              (gate_prev[j] * g < 0.0) || (g == 0.0 && gate_prev[j] != 0.0);
          if (crossed) {
            double lo = sub_prev, hi = s_q, g_lo = gate_prev[j];
            for (int it = 0; it < 100 && hi - lo > min_dt; ++it) {
              const double mid = 0.5 * (lo + hi);
              const double gm =
                  events[j].gate(sign * mid, Trajectory::eval_step(st, mid));
              if (g_lo * gm <= 0.0) hi = mid;
              else lo = mid, g_lo = gm;
            }
            found.push_back({0.5 * (lo + hi), j});
          }
          gate_prev[j] = g;
        }
        std::sort(found.begin(), found.end(),
                  [](const Crossing& a, const Crossing& b) { return a.s < b.s; });
        for (const Crossing& cr : found) {
          traj.events.push_back(
              {sign * cr.s, events[cr.j].kind, Trajectory::eval_step(st, cr.s)});
          if (events[cr.j].stop) {
            stopped = true;
            s_stop = cr.s;
            break;
          }
        }
        sub_prev = s_q;
      }
    }

    // --- output samples inside (s0, min(s1, stop)] ---
    if (stride > 0.0) {
      while (true) {
        const double s_k = next_sample * stride;
        if (s_k > s_stop || s_k > st.s1) break;
        traj.samples.push_back({sign * s_k, 0.0, 0.0});
        const ModelState ms = Trajectory::eval_step(st, s_k);
        traj.samples.back().x = ms.x;
        traj.samples.back().theta_e = ms.theta_e;
        ++next_sample;
      }
    } else if (!stopped) {
      const ModelState ms = Trajectory::eval_step(st, st.s1);
      traj.samples.push_back({sign * st.s1, ms.x, ms.theta_e});
    }

    if (stopped) {
      traj.s_end = s_stop;
      traj.terminated_by = Termination::Event;
      const ModelState ms = Trajectory::eval_step(st, s_stop);
      if (traj.samples.empty() || traj.samples.back().t != sign * s_stop)
        traj.samples.push_back({sign * s_stop, ms.x, ms.theta_e});
      return traj;
    }

    // --- PI step-size update ---
    double fac = fac11 / std::pow(facold, kBeta);
    fac = std::max(kFacc2, std::min(kFacc1, fac / kSafe));
    double h_new = h / fac;
    if (last_rejected) h_new = std::min(h_new, h);
    last_rejected = false;
    facold = std::max(err_norm, 1e-4);

    s = st.s1;
    y = y1;
    k1 = k7;
    h = h_new;
  }

  traj.s_end = std::min(s, s_max);
  if (traj.terminated_by != Termination::StepLimit)
    traj.terminated_by = Termination::TimeLimit;
  if (!traj.steps.empty()) {
    const double t_last = sign * traj.s_end;
    if (traj.samples.empty() || traj.samples.back().t != t_last) {
      const ModelState ms = traj.state_at(t_last);
      traj.samples.push_back({t_last, ms.x, ms.theta_e});
    }
  }
  return traj;
}

}  // namespace detail

/// Output-stride heuristic: a 1/256 fraction of the slowest linearized
/// mode's period, clamped to [1e-5, 1e-2] seconds, then widened if that
/// would mean more than ~2e6 records over the horizon.
[[nodiscard]] inline double default_dense_stride(const PhaseModel& m, double t_max) {
  double period_slow = 0.0;
  try {
    if (m.k_vco > 0.0) {
      for (const Equilibrium& eq : equilibria(m)) {
        if (eq.stability != Stability::Stable) continue;
        for (const auto& lambda : {eq.lambda1, eq.lambda2}) {
          const double mag = std::abs(lambda);
          if (mag > 1e-12) period_slow = std::max(period_slow, kTwoPi / mag);
        }
      }
    }
  } catch (const Error&) {
    // fall through to the coarse scale below
  }
  if (period_slow == 0.0) {
    const double wn = natural_frequency(m);
    period_slow = wn > 0.0 ? kTwoPi / wn : kTwoPi * m.filter.tau1;
  }
  double stride = std::clamp(period_slow / 256.0, 1e-5, 1e-2);
  if (t_max / stride > 2e6) stride = t_max / 2e6;
  return stride;
}

[[nodiscard]] inline Trajectory integrate_with_events(const PhaseModel& m,
                                                      const ModelState& start,
                                                      const IntegrationConfig& cfg,
                                                      const std::vector<EventSpec>& events) {
  const double sign = (cfg.direction == Direction::Forward) ? 1.0 : -1.0;
  double stride = cfg.dense_stride;
  if (stride == 0.0) stride = default_dense_stride(m, cfg.t_max);
  // Backward integration is forward integration of the negated field.
  auto rhs = [&m, sign](double /*s*/, const detail::Vec2& y) -> detail::Vec2 {
    const StateRate r = vector_field(m, {y[0], y[1]});
    return {sign * r.dx, sign * r.dtheta};
  };
  return detail::run_dopri5(rhs, {start.x, start.theta_e}, cfg, sign, events, stride);
}

[[nodiscard]] inline Trajectory integrate(const PhaseModel& m, const ModelState& start,
                                          const IntegrationConfig& cfg) {
  return integrate_with_events(m, start, cfg, {});
}

}  // namespace pllsim
