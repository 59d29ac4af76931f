#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "integrator.hpp"
#include "lock_analysis.hpp"
#include "loop_filter.hpp"
#include "phase_model.hpp"

namespace pllsim {

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

namespace detail {

[[nodiscard]] inline unsigned max_threads() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("PLL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0)
      hw = std::min<unsigned>(hw, static_cast<unsigned>(v));
  }
  return hw;
}

// Index-sharded loop over [0, n).  Exceptions from workers are captured and
// the first one rethrown on the caller thread.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t nt = std::min<std::size_t>(max_threads(), n);
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (std::size_t k = 0; k < nt; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// System description (model minus the detuning)
// ---------------------------------------------------------------------------

/// Everything that defines the loop except the free-running frequency error,
/// which the range estimators vary.
struct SystemParams {
  LoopFilter filter;
  PdCharacteristic pd;
  double k_vco = 0.0;

  SystemParams(LoopFilter f, PdCharacteristic p, double k)
      : filter(f), pd(std::move(p)), k_vco(k) {
    if (!(k_vco > 0.0) || !std::isfinite(k_vco))
      throw ParameterError("range estimation requires k_vco > 0");
  }

  [[nodiscard]] PhaseModel with_omega(double omega) const {
    return make_model(filter, pd, k_vco, omega);
  }

  /// Frequency error beyond which a lead-lag loop has no equilibrium at all.
  /// Infinite for the active-PI family (its DC gain is unbounded).
  [[nodiscard]] double hold_in_limit() const {
    if (filter.kind == FilterKind::ActivePI)
      return std::numeric_limits<double>::infinity();
    const double dc = filter.h - filter.c * filter.b / filter.a;
    return k_vco * dc * pd.max_value();
  }
};

namespace detail {

[[nodiscard]] inline const Equilibrium* first_stable(const std::vector<Equilibrium>& eqs) {
  for (const auto& eq : eqs)
    if (eq.stability == Stability::Stable) return &eq;
  return nullptr;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Frequency-step test
// ---------------------------------------------------------------------------

enum class StepOutcome { LockedNoSlip, Slipped, NoLock, Undecided };

struct StepTestConfig {
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  double t_max = 0.0;  // 0: 200/omega_n clamped to [1, 1e4]
  double eps = 0.0;    // lock-ball overrides; 0 keeps the model defaults
  double dwell = 0.0;
  int time_retries = 2;
  // +1 steps up first, -1 steps down first.  For odd detectors the two
  // procedures are mirror images; tests assert they agree.
  int sign = +1;
};

/// Worst-case frequency-step experiment at amplitude `delta`: the loop sits
/// in a locked state, the reference frequency jumps, and we ask whether it
/// re-locks without a single cycle slip.  Two legs cover the extreme jumps:
///
///   leg 1: locked at detuning 0, step to +delta;
///   leg 2: locked at detuning +delta, step to -delta (the binding case --
///          the full swing across the symmetric operating band).
///
/// NoLock means a post-step system has no stable equilibrium to re-lock to;
/// Undecided propagates simulation timeouts.
[[nodiscard]] inline StepOutcome step_slip_test(const SystemParams& sys, double delta,
                                                const StepTestConfig& cfg = {}) {
  if (!std::isfinite(delta) || delta < 0.0)
    throw ParameterError("step amplitude must be finite and non-negative");
  const double d = cfg.sign >= 0 ? delta : -delta;

  const PhaseModel m_up = sys.with_omega(d);
  const PhaseModel m_down = sys.with_omega(-d);
  const std::vector<Equilibrium> eqs_up = equilibria(m_up);
  const Equilibrium* eq_up = detail::first_stable(eqs_up);
  if (!eq_up || !detail::first_stable(equilibria(m_down))) return StepOutcome::NoLock;
  if (delta == 0.0) return StepOutcome::LockedNoSlip;

  const std::vector<Equilibrium> eqs_zero = equilibria(sys.with_omega(0.0));
  const Equilibrium* eq_zero = detail::first_stable(eqs_zero);
  if (!eq_zero) return StepOutcome::NoLock;

  DomainConfig dc;
  dc.rel_tol = cfg.rel_tol;
  dc.abs_tol = cfg.abs_tol;
  dc.t_max = cfg.t_max;
  dc.eps = cfg.eps;
  dc.dwell = cfg.dwell;
  dc.time_retries = cfg.time_retries;

  const DomainVerdict leg1 =
      in_lock_in_domain(m_up, eq_zero->state, DomainMethod::Simulation, dc);
  if (leg1 == DomainVerdict::Outside) return StepOutcome::Slipped;
  const DomainVerdict leg2 =
      in_lock_in_domain(m_down, eq_up->state, DomainMethod::Simulation, dc);
  if (leg2 == DomainVerdict::Outside) return StepOutcome::Slipped;
  if (leg1 == DomainVerdict::Inside && leg2 == DomainVerdict::Inside)
    return StepOutcome::LockedNoSlip;
  return StepOutcome::Undecided;
}

// ---------------------------------------------------------------------------
// Range results
// ---------------------------------------------------------------------------

enum class RangeKind { LockIn, PullIn };
enum class RangeMethod { StepSimulation, Separatrix, Analytic, Scaled };

struct RangeDiagnostics {
  long simulations = 0;   // step tests / membership / grid integrations issued
  long undecided = 0;     // probes that stayed inconclusive (counted as fail)
  int restarts = 0;       // bisections restarted by a failed certification probe
  bool bracket_verified = false;
};

struct RangeResult {
  RangeKind kind = RangeKind::LockIn;
  RangeMethod method = RangeMethod::StepSimulation;
  // Reported range = the certified lower bracket edge; lo <= frequency <= hi
  // and hi - lo <= tolerance unless unbounded.
  double frequency = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  double tolerance = 0.0;  // the requested bracket width, rad/s
  bool unbounded = false;
  RangeDiagnostics diagnostics;
};

/// Scale-aware default for the absolute bisection tolerance (rad/s).
[[nodiscard]] inline double default_range_tol(const SystemParams& sys) {
  const double scale = sys.filter.kind == FilterKind::LeadLag
                           ? sys.hold_in_limit()
                           : natural_frequency(sys.with_omega(0.0));
  return 1e-3 * std::max(scale, 1e-6);
}

// ---------------------------------------------------------------------------
// Lock-in range, frequency-step simulation method
// ---------------------------------------------------------------------------

struct LockInConfig {
  StepTestConfig step;
  int certification_probes = 8;  // interior re-checks at lo·i/(n+1)
  int max_restarts = 3;
  int max_doublings = 60;  // initial bracket growth for the PI family
};

/// Largest frequency step the loop absorbs without a cycle slip, bisected on
/// the step test to an absolute bracket width `tol` (rad/s).  Undecided
/// probes are treated as failures -- they can only shrink the reported
/// range, never inflate it.  After bisection the interior of [0, lo] is
/// spot-checked; a failed spot restarts the bisection below that point.
[[nodiscard]] inline RangeResult estimate_lock_in(const SystemParams& sys, double tol,
                                                  const LockInConfig& cfg = {}) {
  if (!(tol > 0.0)) throw ParameterError("lock-in tolerance must be positive");
  RangeResult res;
  res.kind = RangeKind::LockIn;
  res.method = RangeMethod::StepSimulation;
  res.tolerance = tol;

  auto probe = [&](double delta) {
    ++res.diagnostics.simulations;
    const StepOutcome out = step_slip_test(sys, delta, cfg.step);
    if (out == StepOutcome::Undecided) ++res.diagnostics.undecided;
    return out;
  };

  double lo = 0.0, hi;
  bool hi_probed = false;
  if (sys.filter.kind == FilterKind::LeadLag) {
    hi = sys.hold_in_limit();  // NoLock at and beyond this point
  } else {
    // No a-priori cap for the PI family: grow until a step fails.
    hi = std::max(natural_frequency(sys.with_omega(0.0)), 1e-6);
    int doublings = 0;
    while (probe(hi) == StepOutcome::LockedNoSlip) {
      lo = hi;
      hi *= 2.0;
      if (++doublings > cfg.max_doublings)
        throw ConvergenceError("lock-in bracket did not close while doubling");
    }
    hi_probed = true;
  }

  for (int restart = 0;; ++restart) {
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (probe(mid) == StepOutcome::LockedNoSlip) {
        lo = mid;
      } else {
        hi = mid;
        hi_probed = true;
      }
    }
    if (hi - lo > tol)
      throw ConvergenceError("lock-in bisection exhausted its budget above tol");
    // Certify the interior: the range claim is about every step below lo.
    double failed_at = -1.0;
    for (int i = 1; i <= cfg.certification_probes && lo > 0.0; ++i) {
      const double d = lo * i / double(cfg.certification_probes + 1);
      if (probe(d) != StepOutcome::LockedNoSlip) {
        failed_at = d;
        break;
      }
    }
    if (failed_at < 0.0) break;
    if (restart >= cfg.max_restarts)
      throw ConvergenceError("lock-in certification kept failing below the bracket");
    ++res.diagnostics.restarts;
    lo = 0.0;
    hi = failed_at;
    hi_probed = true;
  }

  if (!hi_probed && hi > lo) {
    res.diagnostics.bracket_verified = probe(hi) != StepOutcome::LockedNoSlip;
  } else {
    res.diagnostics.bracket_verified = true;
  }
  res.bracket_lo = lo;
  res.bracket_hi = hi;
  res.frequency = lo;
  return res;
}

// ---------------------------------------------------------------------------
// Lock-in range, separatrix method
// ---------------------------------------------------------------------------

struct SeparatrixRangeConfig {
  SeparatrixConfig sep;
  int max_doublings = 60;
};

/// Same quantity as estimate_lock_in, decided geometrically: the binding
/// step leg lands exactly on the locked state of the +delta system, so the
/// test is whether that point lies between the ingoing separatrix branches
/// of the -delta system (for odd detectors the mirrored pair is equivalent).
/// Probe-level failures (degenerate saddle, seed/coverage trouble) count as
/// Outside, which again only shrinks the estimate.
[[nodiscard]] inline RangeResult estimate_lock_in_separatrix(
    const SystemParams& sys, double tol, const SeparatrixRangeConfig& cfg = {}) {
  if (!(tol > 0.0)) throw ParameterError("lock-in tolerance must be positive");
  if (!sys.pd.is_odd())
    throw SymmetryError(
        "the separatrix lock-in method requires an odd detector characteristic");
  RangeResult res;
  res.kind = RangeKind::LockIn;
  res.method = RangeMethod::Separatrix;
  res.tolerance = tol;

  auto probe = [&](double delta) -> bool {
    ++res.diagnostics.simulations;
    try {
      const PhaseModel m_up = sys.with_omega(delta);
      const std::vector<Equilibrium> eqs_up = equilibria(m_up);
      const Equilibrium* eq_up = detail::first_stable(eqs_up);
      if (!eq_up) return false;
      DomainConfig dc;
      dc.sep = cfg.sep;
      return in_lock_in_domain(sys.with_omega(-delta), eq_up->state,
                               DomainMethod::Separatrix, dc) == DomainVerdict::Inside;
    } catch (const DegenerateError&) {
    } catch (const SeedError&) {
    } catch (const InterpolationError&) {
    } catch (const ConvergenceError&) {
    }
    ++res.diagnostics.undecided;
    return false;
  };

  double lo = 0.0, hi;
  if (sys.filter.kind == FilterKind::LeadLag) {
    // No equilibrium at the hold-in limit, so the boundary is below it.
    hi = sys.hold_in_limit();
  } else {
    hi = std::max(natural_frequency(sys.with_omega(0.0)), 1e-6);
    int doublings = 0;
    while (probe(hi)) {
      lo = hi;
      hi *= 2.0;
      if (++doublings > cfg.max_doublings)
        throw ConvergenceError("lock-in bracket did not close while doubling");
    }
  }

  for (int it = 0; it < 200 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (probe(mid))
      lo = mid;
    else
      hi = mid;
  }
  if (hi - lo > tol)
    throw ConvergenceError("lock-in bisection exhausted its budget above tol");
  res.diagnostics.bracket_verified = true;
  res.bracket_lo = lo;
  res.bracket_hi = hi;
  res.frequency = lo;
  return res;
}

// ---------------------------------------------------------------------------
// Energy-function audit for the PI family
// ---------------------------------------------------------------------------

struct LyapunovCheckConfig {
  int trajectories = 100;
  unsigned long long seed = 0x9e3779b97f4a7c15ull;
  double t_max = 0.0;  // 0: 200/omega_n heuristic
  double rel_tol = 1e-10;  // tight, so discretization noise is well below the
  double abs_tol = 1e-13;  // comparison tolerances
  double rel_increase_tol = 1e-6;  // per step, relative to the starting energy
  double rate_match_tol = 1e-4;    // trajectory-integrated |dV - int(Vdot)|
};

struct LyapunovReport {
  int trajectories = 0;
  double max_rel_increase = 0.0;   // worst per-step energy gain / V(0)
  double max_rate_mismatch = 0.0;  // worst integrated rate disagreement
};

namespace detail {

// Deterministic uniform in [0,1): fixed splitmix64 stream so results do not
// depend on the standard library's distribution implementation.
class UniformStream {
 public:
  explicit UniformStream(unsigned long long seed) : state_(seed) {}
  double next() {
    unsigned long long z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return double(z >> 11) * 0x1.0p-53;
  }
  double in(double lo, double hi) { return lo + (hi - lo) * next(); }

 private:
  unsigned long long state_;
};

}  // namespace detail

/// Audit the PI loop's energy function
///
///     V(x, theta) = (K·tau1/2)·(x - omega/K)^2 + integral_0^theta v_e
///
/// along randomly seeded trajectories: V must never increase (beyond
/// tolerance), and its decrease must match the closed-form rate
/// dV/dt = -K·(tau2/tau1)·v_e^2 integrated over each accepted step.
/// Throws ViolationError naming the offending trajectory and time.
[[nodiscard]] inline LyapunovReport verify_lyapunov_pi(const PhaseModel& m,
                                                       const LyapunovCheckConfig& cfg = {}) {
  if (m.filter.kind != FilterKind::ActivePI)
    throw ParameterError("the energy audit applies to the active-PI filter family");
  if (!(m.k_vco > 0.0)) throw ParameterError("energy audit requires k_vco > 0");
  if (cfg.trajectories < 1) throw ParameterError("need at least one trajectory");

  const double period = m.pd.period();
  const double x_eq = m.omega_e_free / m.k_vco;
  const double tau_ratio = m.filter.tau2 / m.filter.tau1;
  const double x_span =
      2.0 * m.pd.max_value() + 3.0 * detail::excursion_x_scale(m, 3.0 * period);
  const double horizon = cfg.t_max > 0.0 ? cfg.t_max : default_t_max(m);

  auto energy = [&](const ModelState& s) {
    const double dx = s.x - x_eq;
    return 0.5 * m.k_vco * m.filter.tau1 * dx * dx + m.pd.integral(s.theta_e);
  };
  auto rate = [&](const ModelState& s) {
    const double v = m.pd.eval(s.theta_e);
    return -m.k_vco * tau_ratio * v * v;
  };

  detail::UniformStream rng(cfg.seed);
  LyapunovReport report;
  for (int k = 0; k < cfg.trajectories; ++k) {
    const ModelState start{rng.in(x_eq - x_span, x_eq + x_span),
                           rng.in(-1.5 * period, 1.5 * period)};
    IntegrationConfig icfg;
    icfg.rel_tol = cfg.rel_tol;
    icfg.abs_tol = cfg.abs_tol;
    icfg.t_max = horizon;
    icfg.dense_stride = -1.0;
    const Trajectory traj = integrate(m, start, icfg);

    // V is defined up to a constant, so changes are compared against the
    // trajectory's initial magnitude.
    const double v0_scale = std::abs(energy(start)) + 1.0;
    double mismatch_sum = 0.0, rate_sum = 0.0;
    for (const auto& st : traj.steps) {
      if (st.s0 >= traj.s_end) break;
      const double s1 = std::min(st.s1, traj.s_end);
      const double h = s1 - st.s0;
      if (h <= 0.0) continue;
      const ModelState y0 = Trajectory::eval_step(st, st.s0);
      const ModelState y1 = Trajectory::eval_step(st, s1);
      const double dv = energy(y1) - energy(y0);
      // Two-panel composite Simpson keeps the quadrature error well below
      // the comparison tolerance even on the integrator's largest steps.
      const double g0 = rate(y0);
      const double g1 = rate(Trajectory::eval_step(st, st.s0 + 0.25 * h));
      const double g2 = rate(Trajectory::eval_step(st, st.s0 + 0.50 * h));
      const double g3 = rate(Trajectory::eval_step(st, st.s0 + 0.75 * h));
      const double g4 = rate(y1);
      const double integrated = (h / 12.0) * (g0 + 4.0 * g1 + 2.0 * g2 + 4.0 * g3 + g4);

      const double rel_inc = dv / v0_scale;
      report.max_rel_increase = std::max(report.max_rel_increase, rel_inc);
      if (rel_inc > cfg.rel_increase_tol)
        throw ViolationError("energy increased along trajectory " + std::to_string(k) +
                             " near t=" + std::to_string(traj.direction_sign * st.s0));
      mismatch_sum += std::abs(dv - integrated);
      rate_sum += std::abs(integrated);
    }
    const double mismatch = mismatch_sum / std::max(rate_sum, 1e-9 * v0_scale);
    report.max_rate_mismatch = std::max(report.max_rate_mismatch, mismatch);
    if (mismatch > cfg.rate_match_tol)
      throw ViolationError("energy decay rate disagrees with the closed form on trajectory " +
                           std::to_string(k));
    ++report.trajectories;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Pull-in range
// ---------------------------------------------------------------------------

struct PullInConfig {
  StepTestConfig step;  // integration/lock knobs reused for grid probes
  int grid_theta = 32;
  int grid_x = 32;
  LyapunovCheckConfig lyapunov;  // evidence run for the unbounded PI verdict
};

/// Pull-in range: the band of fixed detunings for which the loop acquires
/// lock from every initial state (cycle slips along the way are allowed).
///
/// Active-PI loops pull in from everywhere at any detuning; the energy audit
/// runs as evidence and the result is reported as unbounded.  Lead-lag loops
/// get a grid-quantified bisection: a detuning passes when every start on a
/// (theta x x) grid spanning one period and the invariant filter band (plus
/// a half-pd_max margin for transients that begin outside it) eventually
/// locks.  The verdict is a numerical estimate — a grid cannot rule out
/// small co-existing oscillations between its points.
[[nodiscard]] inline RangeResult estimate_pull_in(const SystemParams& sys, double tol,
                                                  const PullInConfig& cfg = {}) {
  RangeResult res;
  res.kind = RangeKind::PullIn;
  res.method = RangeMethod::StepSimulation;
  res.tolerance = tol;

  if (sys.filter.kind == FilterKind::ActivePI) {
    LyapunovCheckConfig lcfg = cfg.lyapunov;
    if (lcfg.trajectories > 20) lcfg.trajectories = 20;  // evidence, not the audit
    const double wn = natural_frequency(sys.with_omega(0.0));
    const LyapunovReport ev = verify_lyapunov_pi(sys.with_omega(10.0 * wn), lcfg);
    res.diagnostics.simulations = ev.trajectories;
    res.unbounded = true;
    res.frequency = std::numeric_limits<double>::infinity();
    res.bracket_lo = res.frequency;
    res.bracket_hi = res.frequency;
    res.diagnostics.bracket_verified = true;
    return res;
  }

  if (!(tol > 0.0)) throw ParameterError("pull-in tolerance must be positive");
  if (cfg.grid_theta < 32 || cfg.grid_x < 32)
    throw ParameterError("pull-in grid must be at least 32x32");

  const double period = sys.pd.period();
  const double pd_max = sys.pd.max_value();
  // The lead-lag filter state eventually satisfies |x| <= |b/a|·pd_max; the
  // extra half-pd_max covers transients started outside that band.
  const double x_top = pd_max * std::abs(sys.filter.b / sys.filter.a) + 0.5 * pd_max;

  auto grid_locks = [&](double omega) -> bool {
    const PhaseModel m = sys.with_omega(omega);
    const std::vector<Equilibrium> eqs = equilibria(m);
    const Equilibrium* stable = detail::first_stable(eqs);
    if (!stable) return false;
    const LockCriteria base = default_lock_criteria(m, *stable);
    const double eps = cfg.step.eps > 0.0 ? cfg.step.eps : base.eps;
    const double dwell = cfg.step.dwell > 0.0 ? cfg.step.dwell : base.dwell;
    const double t_base = cfg.step.t_max > 0.0 ? cfg.step.t_max : default_t_max(m);

    const std::size_t n = std::size_t(cfg.grid_theta) * cfg.grid_x;
    std::atomic<bool> all_lock{true};
    std::atomic<long> sims{0};
    detail::parallel_for(n, [&](std::size_t idx) {
      if (!all_lock.load(std::memory_order_relaxed)) return;
      const int i = int(idx) / cfg.grid_x;
      const int j = int(idx) % cfg.grid_x;
      const double th = period * (-0.5 + (i + 0.5) / double(cfg.grid_theta));
      const double x = -x_top + 2.0 * x_top * (j + 0.5) / double(cfg.grid_x);
      double horizon = t_base;
      for (int attempt = 0; attempt <= cfg.step.time_retries; ++attempt) {
        IntegrationConfig icfg;
        icfg.rel_tol = cfg.step.rel_tol;
        icfg.abs_tol = cfg.step.abs_tol;
        icfg.t_max = horizon;
        icfg.dense_stride = -1.0;
        const Trajectory traj = integrate(m, {x, th}, icfg);
        ++sims;
        for (const auto& eq : eqs) {
          if (eq.stability != Stability::Stable) continue;
          if (detect_lock(traj, eq, period, eps, dwell, base.x_weight) ==
              LockVerdict::Locked)
            return;
        }
        horizon *= 4.0;
      }
      all_lock.store(false, std::memory_order_relaxed);
    });
    res.diagnostics.simulations += sims.load();
    if (!all_lock.load()) ++res.diagnostics.undecided;
    return all_lock.load();
  };

  double lo = 0.0;
  double hi = sys.hold_in_limit();  // no equilibrium at all beyond this
  for (int it = 0; it < 200 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (grid_locks(mid))
      lo = mid;
    else
      hi = mid;
  }
  if (hi - lo > tol)
    throw ConvergenceError("pull-in bisection exhausted its budget above tol");
  res.diagnostics.bracket_verified = true;
  res.bracket_lo = lo;
  res.bracket_hi = hi;
  res.frequency = lo;
  return res;
}

// ---------------------------------------------------------------------------
// Closed-form approximation and exact rescalings
// ---------------------------------------------------------------------------

/// Series approximation of the lock-in range of the active-PI/sinusoidal
/// loop in the high-gain regime:
///
///   omega_l ~ sqrt(K/(2 tau1)) + (K/tau1)/6
///           + tau2^2·(5 - 6·ln 2)/(36·sqrt(2)·tau1)·(K/tau1)^{3/2}
///
/// Useful as a sanity scale, not as ground truth away from its regime.
[[nodiscard]] inline double analytic_lock_in_estimate(double tau1, double tau2,
                                                      double k_vco) {
  if (!(tau1 > 0.0) || !(tau2 >= 0.0) || !(k_vco > 0.0))
    throw ParameterError("analytic estimate requires tau1 > 0, tau2 >= 0, k_vco > 0");
  const double r = k_vco / tau1;
  const double sq = std::sqrt(r);
  const double c3 = (5.0 - 6.0 * std::log(2.0)) / (36.0 * std::sqrt(2.0));
  return sq / std::sqrt(2.0) + r / 6.0 + (tau2 * tau2 / tau1) * c3 * r * sq;
}

/// Exact rescaling of the PI lock-in range in tau2: if base(kappa) is the
/// range at tau2 = 1, gain ratio kappa, then the range at (tau2, k) is
/// base(k·tau2^2)/tau2.
template <class Fn>
[[nodiscard]] double scale_lock_in(double tau2, double k_over_tau1, Fn&& base_at_unit_tau2) {
  if (!(tau2 > 0.0) || !(k_over_tau1 > 0.0))
    throw ParameterError("scaling requires tau2 > 0 and k/tau1 > 0");
  return base_at_unit_tau2(k_over_tau1 * tau2 * tau2) / tau2;
}

/// Canonical reduced form: tau1 is normalized away so sweeps only need the
/// (tau2, K/tau1) plane.  original = scale·reduced for each returned factor.
struct ReducedSystem {
  SystemParams params;
  double x_scale = 1.0;          // original x = x_scale · reduced x
  double time_scale = 1.0;       // original t = time_scale · reduced t
  double frequency_scale = 1.0;  // original omega = frequency_scale · reduced omega
};

[[nodiscard]] inline ReducedSystem reduce_parameters(const SystemParams& sys) {
  if (sys.filter.kind == FilterKind::ActivePI) {
    // x_tilde = tau1·x turns (tau1, tau2, K) into (1, tau2, K/tau1) with the
    // same clock and detuning.
    return {SystemParams(make_active_pi(1.0, sys.filter.tau2), sys.pd,
                         sys.k_vco / sys.filter.tau1),
            1.0 / sys.filter.tau1, 1.0, 1.0};
  }
  // Lead-lag: rescale the clock by tau1; frequencies scale inversely.
  return {SystemParams(make_lead_lag(1.0, sys.filter.tau2 / sys.filter.tau1), sys.pd,
                       sys.k_vco * sys.filter.tau1),
          1.0, sys.filter.tau1, 1.0 / sys.filter.tau1};
}

// ---------------------------------------------------------------------------
// Lock-in sweep (diagram data)
// ---------------------------------------------------------------------------

struct SweepSpec {
  PdCharacteristic pd;
  FilterKind filter = FilterKind::ActivePI;
  // Canonical tau1 = 1, so the axis is K/tau1 for PI and K·tau1 for
  // lead-lag; one curve per family value (tau2 resp. tau2/tau1).
  std::vector<double> axis;
  std::vector<double> family;
  double tol = 0.0;  // 0: scale-aware default per point
  RangeMethod method = RangeMethod::StepSimulation;

  explicit SweepSpec(PdCharacteristic p) : pd(std::move(p)) {}
};

struct SweepRow {
  double axis = 0.0;
  double family = 0.0;
  double omega_lockin = std::numeric_limits<double>::quiet_NaN();
  double omega_normalized = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
};

/// Lock-in range over a (K/tau1) x (tau2) grid in the reduced
/// parameterization.  Rows come out family-major in the given order; the
/// normalized column is omega/axis (the tau1-scaled gain ratio for both
/// families).  Failures are recorded as NaN rows rather than aborting the
/// sweep.  Points run in parallel, capped by PLL_THREADS.
[[nodiscard]] inline std::vector<SweepRow> sweep_diagram(const SweepSpec& spec) {
  if (spec.axis.empty() || spec.family.empty())
    throw ParameterError("sweep needs at least one axis and one family value");
  if (spec.tol < 0.0) throw ParameterError("sweep tolerance must be non-negative");
  for (std::size_t i = 0; i < spec.axis.size(); ++i) {
    if (!(spec.axis[i] > 0.0)) throw ParameterError("sweep axis values must be positive");
    if (i > 0 && !(spec.axis[i] > spec.axis[i - 1]))
      throw ParameterError("sweep axis grid must be strictly increasing");
  }
  for (double f : spec.family)
    if (!(f >= 0.0 && f <= 1.0))
      throw ParameterError("sweep family values must lie in [0, 1]");

  auto make_system = [&](double tau2, double gain) {
    return spec.filter == FilterKind::ActivePI
               ? SystemParams(make_active_pi(1.0, tau2), spec.pd, gain)
               : SystemParams(make_lead_lag(1.0, tau2), spec.pd, gain);
  };
  auto point_tol = [&](const SystemParams& s) {
    return spec.tol > 0.0 ? spec.tol : default_range_tol(s);
  };

  const std::size_t n = spec.axis.size() * spec.family.size();
  std::vector<SweepRow> rows(n);
  detail::parallel_for(n, [&](std::size_t idx) {
    const std::size_t fi = idx / spec.axis.size();
    const std::size_t ai = idx % spec.axis.size();
    SweepRow& row = rows[idx];
    row.family = spec.family[fi];
    row.axis = spec.axis[ai];
    try {
      double omega;
      switch (spec.method) {
        case RangeMethod::Analytic:
          omega = analytic_lock_in_estimate(1.0, row.family, row.axis);
          break;
        case RangeMethod::Scaled:
          omega = scale_lock_in(row.family, row.axis, [&](double kappa) {
            const SystemParams base = make_system(1.0, kappa);
            return estimate_lock_in(base, point_tol(base)).frequency;
          });
          break;
        case RangeMethod::Separatrix: {
          const SystemParams s = make_system(row.family, row.axis);
          omega = estimate_lock_in_separatrix(s, point_tol(s)).frequency;
          break;
        }
        case RangeMethod::StepSimulation:
        default: {
          const SystemParams s = make_system(row.family, row.axis);
          omega = estimate_lock_in(s, point_tol(s)).frequency;
          break;
        }
      }
      row.omega_lockin = omega;
      row.omega_normalized = omega / row.axis;
    } catch (const Error&) {
      row.failed = true;
    }
  });
  return rows;
}

}  // namespace pllsim
