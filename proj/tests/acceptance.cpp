// Acceptance gate for the simulator: thirteen end-to-end checks, one
// pass/fail line each, nonzero exit when anything fails.  Tolerances are
// pinned here on purpose -- loosening them is a contract change, not a fix.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include <pllsim/range_estimator.hpp>

using namespace pllsim;

namespace {

// splitmix64, so the random checks do not depend on the standard library's
// generator implementations.
struct Uniform {
  unsigned long long state;
  explicit Uniform(unsigned long long seed) : state(seed) {}
  double next() {
    state += 0x9e3779b97f4a7c15ull;
    unsigned long long z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return double(z >> 11) * 0x1.0p-53;
  }
  double in(double lo, double hi) { return lo + (hi - lo) * next(); }
};

std::string fmt(const char* f, ...) {
  char buf[256];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// --- 1/2: lead-lag small-gain plateaus of the normalized lock-in range -----

bool criterion_ll_sin_plateau(std::string& detail) {
  const SystemParams sys(make_lead_lag(1.0, 0.1), PdCharacteristic::sinusoidal(), 0.01);
  const double ratio = estimate_lock_in(sys, default_range_tol(sys)).frequency / 0.01;
  detail = fmt("lock-in/k_vco = %.6f, want [0.45, 0.50]", ratio);
  return ratio >= 0.45 && ratio <= 0.50;
}

bool criterion_ll_tri_plateau(std::string& detail) {
  const SystemParams sys(make_lead_lag(1.0, 0.1), PdCharacteristic::triangular(), 0.01);
  const double ratio = estimate_lock_in(sys, default_range_tol(sys)).frequency / 0.01;
  detail = fmt("lock-in/k_vco = %.6f, want [0.90, 1.00]", ratio);
  return ratio >= 0.90 && ratio <= 1.00;
}

// --- 3: the integrating filter's range collapses at small gain ratio -------

bool criterion_pi_small_gain(std::string& detail) {
  const SystemParams sys(make_active_pi(1000.0, 1.0), PdCharacteristic::sinusoidal(),
                         1.0);  // k_vco/tau1 = 1e-3
  const double w = estimate_lock_in(sys, default_range_tol(sys)).frequency;
  detail = fmt("lock-in = %.6g rad/s, want < 0.1", w);
  return w > 0.0 && w < 0.1;
}

// --- 4: step-simulation and separatrix methods agree across families -------

bool criterion_cross_method(std::string& detail) {
  struct Set {
    bool pi, tri;
    double tau1, tau2, k;
  };
  const Set sets[] = {
      {true, false, 0.0633, 0.0225, 250.0}, {true, false, 1.0, 0.5, 10.0},
      {true, false, 2.0, 0.8, 1.0},         {true, true, 1.0, 0.3, 5.0},
      {false, false, 0.0633, 0.0185, 250.0}, {false, false, 1.0, 0.1, 2.0},
      {false, false, 0.5, 0.15, 8.0},       {false, true, 1.0, 0.2, 3.0},
      {false, false, 1.0, 0.5, 1.0},
  };
  double worst = 0.0;
  for (const Set& s : sets) {
    const LoopFilter f =
        s.pi ? make_active_pi(s.tau1, s.tau2) : make_lead_lag(s.tau1, s.tau2);
    const PdCharacteristic pd =
        s.tri ? PdCharacteristic::triangular() : PdCharacteristic::sinusoidal();
    const SystemParams sys(f, pd, s.k);
    const double tol = default_range_tol(sys);
    const double a = estimate_lock_in(sys, tol).frequency;
    const double b = estimate_lock_in_separatrix(sys, tol).frequency;
    const double rel = std::abs(a - b) / std::max(std::abs(a), 1e-30);
    const double allow = std::max(0.01, 2.0 * tol / std::max(a, 1e-30));
    worst = std::max(worst, rel / allow);
    if (rel > allow) {
      detail = fmt("set (tau1=%g tau2=%g k=%g): step %.9g vs separatrix %.9g", s.tau1,
                   s.tau2, s.k, a, b);
      return false;
    }
  }
  detail = fmt("9 sets, worst rel/allowed = %.3g", worst);
  return true;
}

// --- 5: step verdicts bracket the converged boundary on the bench case -----

bool criterion_step_bracketing(std::string& detail) {
  const SystemParams sys(make_active_pi(0.0633, 0.0225), PdCharacteristic::sinusoidal(),
                         250.0);
  const double w = estimate_lock_in(sys, 0.01).frequency;
  const StepOutcome at50 = step_slip_test(sys, 50.0);
  const StepOutcome at60 = step_slip_test(sys, 60.0);
  const StepOutcome below = step_slip_test(sys, 0.95 * w);
  const StepOutcome above = step_slip_test(sys, 1.05 * w);
  detail = fmt("boundary %.7g rad/s; verdicts 50:%d 60:%d 0.95w:%d 1.05w:%d", w,
               int(at50), int(at60), int(below), int(above));
  return at50 == StepOutcome::LockedNoSlip && at60 == StepOutcome::LockedNoSlip &&
         below == StepOutcome::LockedNoSlip && above == StepOutcome::Slipped;
}

// --- 6: exact tau2 rescaling of the PI lock-in range ------------------------

bool criterion_pi_scaling(std::string& detail) {
  const PdCharacteristic pd = PdCharacteristic::sinusoidal();
  double worst = 0.0;
  for (double k : {1.0, 10.0, 100.0}) {
    const double tol = 1e-3 * std::max(1.0, k);
    const SystemParams lhs(make_active_pi(1.0, 2.0), pd, k);
    const SystemParams rhs(make_active_pi(1.0, 1.0), pd, 4.0 * k);
    const double a = estimate_lock_in(lhs, tol).frequency;
    const double b = 0.5 * estimate_lock_in(rhs, tol).frequency;
    const double rel = std::abs(a - b) / std::max(a, 1e-30);
    worst = std::max(worst, rel);
    if (rel > 0.02) {
      detail = fmt("k=%g: %.9g vs %.9g (rel %.3g > 0.02)", k, a, b, rel);
      return false;
    }
  }
  detail = fmt("k in {1,10,100}, worst rel = %.3g, want <= 0.02", worst);
  return true;
}

// --- 7: odd detectors give mirror-symmetric dynamics ------------------------

bool criterion_odd_symmetry(std::string& detail) {
  Uniform rng(0x0dd5eed0ull);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double tau1 = rng.in(0.2, 2.5);
    const bool pi = (i % 2) == 0;
    const LoopFilter f = pi ? make_active_pi(tau1, rng.in(0.1, 1.5))
                            : make_lead_lag(tau1, tau1 * rng.in(0.0, 0.8));
    const PdCharacteristic pd =
        (i % 3) ? PdCharacteristic::sinusoidal() : PdCharacteristic::triangular();
    const double k = rng.in(0.5, 10.0);
    const double wmax = pi ? 2.0 * std::sqrt(k) : 0.9 * k * pd.max_value();
    const double w = rng.in(-wmax, wmax);
    const ModelState s0{rng.in(-1.5, 1.5), rng.in(-8.0, 8.0)};

    IntegrationConfig icfg;
    icfg.rel_tol = 1e-10;
    icfg.abs_tol = 1e-13;
    icfg.t_max = 5.0;
    icfg.dense_stride = 0.05;
    const Trajectory fwd = integrate(make_model(f, pd, k, w), s0, icfg);
    const Trajectory mir =
        integrate(make_model(f, pd, k, -w), {-s0.x, -s0.theta_e}, icfg);
    if (fwd.samples.size() != mir.samples.size()) {
      detail = fmt("model %d: sample counts differ", i);
      return false;
    }
    for (std::size_t j = 0; j < fwd.samples.size(); ++j) {
      worst = std::max(worst, std::abs(fwd.samples[j].x + mir.samples[j].x));
      worst = std::max(worst, std::abs(fwd.samples[j].theta_e + mir.samples[j].theta_e));
    }
    if (worst > 1e-9) {
      detail = fmt("model %d: mirror defect %.3g > 1e-9", i, worst);
      return false;
    }
  }
  detail = fmt("50 models, worst mirror defect %.3g, want <= 1e-9", worst);
  return true;
}

// --- 8: shifting x0 with the detuning leaves the PI phase record unchanged --

bool criterion_pi_vertical_shift(std::string& detail) {
  Uniform rng(0x5afe5eedull);
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double tau1 = rng.in(0.5, 3.0);
    const double tau2 = rng.in(0.2, 2.0);
    const double k = rng.in(0.5, 10.0);
    const double w = rng.in(-5.0, 5.0);
    const ModelState base{rng.in(-1.0, 1.0), rng.in(-3.0, 3.0)};

    IntegrationConfig icfg;
    icfg.rel_tol = 1e-10;
    icfg.abs_tol = 1e-13;
    icfg.t_max = 10.0;
    icfg.dense_stride = 0.02;
    const PdCharacteristic pd = PdCharacteristic::sinusoidal();
    const Trajectory shifted = integrate(make_model(make_active_pi(tau1, tau2), pd, k, w),
                                         {base.x + w / k, base.theta_e}, icfg);
    const Trajectory zero =
        integrate(make_model(make_active_pi(tau1, tau2), pd, k, 0.0), base, icfg);
    if (shifted.samples.size() != zero.samples.size()) {
      detail = fmt("model %d: sample counts differ", i);
      return false;
    }
    for (std::size_t j = 0; j < zero.samples.size(); ++j)
      worst = std::max(worst,
                       std::abs(shifted.samples[j].theta_e - zero.samples[j].theta_e));
    if (worst > 1e-6) {
      detail = fmt("model %d: phase mismatch %.3g > 1e-6", i, worst);
      return false;
    }
  }
  detail = fmt("10 models over t in [0,10], worst phase mismatch %.3g", worst);
  return true;
}

// --- 9: the PI energy function audit -----------------------------------------

bool criterion_energy_audit(std::string& detail) {
  const PhaseModel m =
      make_model(make_active_pi(0.0633, 0.0225), PdCharacteristic::sinusoidal(), 250.0,
                 40.0);
  const LyapunovReport rep = verify_lyapunov_pi(m);  // throws on violation
  detail = fmt("%d trajectories, max increase %.3g (<=1e-6), rate mismatch %.3g (<=1e-4)",
               rep.trajectories, rep.max_rel_increase, rep.max_rate_mismatch);
  return rep.trajectories == 100 && rep.max_rel_increase <= 1e-6 &&
         rep.max_rate_mismatch <= 1e-4;
}

// --- 10: lead-lag filter states end up inside the detector band --------------

bool criterion_ll_tail_bound(std::string& detail) {
  struct Set {
    double tau1, ratio, k;
  };
  const Set sets[] = {{1.0, 0.1, 2.0}, {1.0, 0.3, 5.0}, {0.5, 0.2, 8.0}, {2.0, 0.05, 1.0}};
  Uniform rng(0xb0adedull);
  double worst = 0.0;
  int runs = 0;
  for (const Set& s : sets) {
    const PdCharacteristic pd =
        (runs % 2) ? PdCharacteristic::triangular() : PdCharacteristic::sinusoidal();
    const double bound = pd.max_value() + 1e-6;
    for (int i = 0; i < 25; ++i, ++runs) {
      const double hold = s.k * pd.max_value();
      const PhaseModel m =
          make_model(make_lead_lag(s.tau1, s.ratio * s.tau1), pd, s.k,
                     rng.in(-1.2 * hold, 1.2 * hold));  // beyond hold-in included
      IntegrationConfig icfg;
      icfg.t_max = std::max(default_t_max(m), 80.0 * s.tau1);
      icfg.dense_stride = icfg.t_max / 1000.0;
      const Trajectory traj =
          integrate(m, {rng.in(-2.0, 2.0), rng.in(-8.0, 8.0)}, icfg);
      for (const auto& smp : traj.samples) {
        if (smp.t < 0.5 * icfg.t_max) continue;
        worst = std::max(worst, std::abs(smp.x) - (bound - 1e-6));
        if (std::abs(smp.x) > bound) {
          detail = fmt("run %d: |x(%.3g)| = %.9g exceeds %.9g", runs, smp.t,
                       std::abs(smp.x), bound);
          return false;
        }
      }
    }
  }
  detail = fmt("100 trajectories, worst tail overshoot above pd_max: %.3g (<=1e-6)",
               worst);
  return true;
}

// --- 11: pull-in ordering -----------------------------------------------------

bool criterion_pull_in(std::string& detail) {
  const RangeResult pi =
      estimate_pull_in(SystemParams(make_active_pi(0.0633, 0.0225),
                                    PdCharacteristic::sinusoidal(), 250.0),
                       1.0);
  if (!pi.unbounded) {
    detail = "PI pull-in was not reported unbounded";
    return false;
  }

  struct Point {
    double tau1, tau2, k, tol;
  };
  const Point pts[] = {{1.0, 0.1, 2.0, 0.02}, {0.0633, 0.0185, 250.0, 0.5}};
  std::string parts = "PI unbounded";
  for (const Point& p : pts) {
    const SystemParams sys(make_lead_lag(p.tau1, p.tau2), PdCharacteristic::sinusoidal(),
                           p.k);
    const double pull = estimate_pull_in(sys, p.tol).frequency;
    const double lock = estimate_lock_in(sys, p.tol).frequency;
    const double cap = sys.k_vco * sys.pd.max_value();
    parts += fmt("; LL(k=%g): lock %.4g <= pull %.4g <= %.4g", p.k, lock, pull, cap);
    if (!(pull >= lock && pull <= cap)) {
      detail = parts;
      return false;
    }
  }
  detail = parts;
  return true;
}

// --- 12: slip verdicts against a 10x-resolution resampling oracle -------------

bool criterion_slip_oracle(std::string& detail) {
  Uniform rng(0x51ee7000ull);
  int disagreements = 0, slipped = 0;
  for (int i = 0; i < 200; ++i) {
    const double tau1 = rng.in(0.2, 2.0);
    const bool pi = (i % 2) == 0;
    const LoopFilter f = pi ? make_active_pi(tau1, rng.in(0.1, 1.5))
                            : make_lead_lag(tau1, tau1 * rng.in(0.0, 0.8));
    const PdCharacteristic pd =
        (i % 3) ? PdCharacteristic::sinusoidal() : PdCharacteristic::triangular();
    const double k = rng.in(0.5, 8.0);
    const double wmax = pi ? 3.0 * std::sqrt(k) : 1.3 * k * pd.max_value();
    const PhaseModel m = make_model(f, pd, k, rng.in(-wmax, wmax));

    IntegrationConfig icfg;
    icfg.t_max = std::min(default_t_max(m), 100.0);
    icfg.dense_stride = -1.0;
    const Trajectory traj =
        integrate(m, {rng.in(-2.0, 2.0), rng.in(-8.0, 8.0)}, icfg);
    const SlipVerdict fast = detect_cycle_slip(traj, pd.period());
    const SlipVerdict fine = detect_cycle_slip_resampled(traj, pd.period(), 80);
    if (fast.slipped != fine.slipped) ++disagreements;
    if (fine.slipped) ++slipped;
  }
  detail = fmt("200 trajectories (%d slipped), %d verdict disagreements", slipped,
               disagreements);
  return disagreements == 0 && slipped > 20 && slipped < 180;
}

// --- 13: equilibria residuals, classification, and existence boundary ---------

bool criterion_equilibria(std::string& detail) {
  Uniform rng(0xe9a11b1aull);
  double worst_residual = 0.0;
  int points = 0, checked = 0;
  std::vector<SystemParams> ll_sets;
  while (points < 100) {
    const bool pi = (points % 2) == 0;
    const PdCharacteristic pd =
        (points % 3) ? PdCharacteristic::sinusoidal() : PdCharacteristic::triangular();
    const double tau1 = rng.in(0.2, 3.0);
    const LoopFilter f = pi ? make_active_pi(tau1, rng.in(0.05, 2.0))
                            : make_lead_lag(tau1, tau1 * rng.in(0.0, 0.8));
    const double k = rng.in(0.5, 30.0);
    const SystemParams sys(f, pd, k);
    const double w = pi ? rng.in(-10.0, 10.0)
                        : rng.in(-0.95, 0.95) * k * pd.max_value();
    const PhaseModel m = sys.with_omega(w);
    ++points;
    if (!pi && ll_sets.size() < 10) ll_sets.push_back(sys);

    const std::vector<Equilibrium> eqs = equilibria(m);
    if (eqs.empty()) {
      detail = fmt("point %d: no equilibria inside the hold-in band", points);
      return false;
    }
    for (const Equilibrium& eq : eqs) {
      const StateRate r = vector_field(m, eq.state);
      const double residual = std::abs(r.dx) + std::abs(r.dtheta);
      worst_residual = std::max(worst_residual, residual);
      if (residual >= 1e-10) {
        detail = fmt("point %d: residual %.3g >= 1e-10", points, residual);
        return false;
      }
      if (eq.degenerate) continue;  // saddle-node boundary, no sign to check
      const Jacobian2 j = jacobian(m, eq.state);
      const bool want_saddle = j.det() < 0.0;
      const bool want_stable = j.det() > 0.0 && j.trace() < 0.0;
      if ((eq.stability == Stability::Saddle) != want_saddle ||
          (eq.stability == Stability::Stable) != want_stable) {
        detail = fmt("point %d: classification disagrees with det/trace signs", points);
        return false;
      }
      ++checked;
    }
  }

  // Existence boundary of the lead-lag family, probed from both sides.
  for (const SystemParams& sys : ll_sets) {
    const double limit = sys.k_vco * sys.pd.max_value();
    for (double sign : {1.0, -1.0}) {
      if (!equilibria(sys.with_omega(sign * (limit - 1e-6))).empty()) continue;
      detail = fmt("equilibria vanished below the hold-in limit (k=%g)", sys.k_vco);
      return false;
    }
    for (double sign : {1.0, -1.0}) {
      if (equilibria(sys.with_omega(sign * (limit + 1e-6))).empty()) continue;
      detail = fmt("equilibria survived past the hold-in limit (k=%g)", sys.k_vco);
      return false;
    }
  }
  detail = fmt("100 points, %d equilibria classified, worst residual %.3g, boundary ok",
               checked, worst_residual);
  return true;
}

}  // namespace

int main() {
  struct Criterion {
    const char* label;
    bool (*fn)(std::string&);
  };
  const Criterion criteria[] = {
      {"lead-lag sinusoidal small-gain plateau", &criterion_ll_sin_plateau},
      {"lead-lag triangular small-gain plateau", &criterion_ll_tri_plateau},
      {"PI small-gain collapse", &criterion_pi_small_gain},
      {"cross-method lock-in agreement", &criterion_cross_method},
      {"step verdicts bracket the boundary", &criterion_step_bracketing},
      {"PI tau2 scaling law", &criterion_pi_scaling},
      {"odd-detector mirror symmetry", &criterion_odd_symmetry},
      {"PI vertical-shift phase invariance", &criterion_pi_vertical_shift},
      {"PI energy audit", &criterion_energy_audit},
      {"lead-lag filter-state tail bound", &criterion_ll_tail_bound},
      {"pull-in ordering and unboundedness", &criterion_pull_in},
      {"slip detector vs resampling oracle", &criterion_slip_oracle},
      {"equilibria residuals and existence boundary", &criterion_equilibria},
  };

  int failures = 0;
  int id = 0;
  for (const Criterion& c : criteria) {
    ++id;
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s  %s -- %s (%.2fs)\n", id, ok ? "PASS" : "FAIL",
                c.label, detail.c_str(), dt);
    if (!ok) ++failures;
  }
  if (failures) std::printf("%d of 13 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
