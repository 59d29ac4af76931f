#pragma once

#include <cstdio>
#include <exception>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "config.hpp"
#include "csv.hpp"
#include "errors.hpp"
#include "integrator.hpp"
#include "lock_analysis.hpp"
#include "phase_model.hpp"
#include "range_estimator.hpp"
#include "svg.hpp"

namespace pllsim {

namespace detail {

// Per-subcommand state: optional config file plus flag overrides collected
// via callbacks (so only flags the user actually passed land in `flags`).
struct CliState {
  std::string config_path;
  RunConfig flags;
};

inline void add_common_options(CLI::App* sub, CliState& st) {
  sub->add_option("-c,--config", st.config_path, "JSON configuration file");
  auto& f = st.flags;
  sub->add_option_function<std::string>("--pd", [&f](const std::string& v) { f.pd = v; },
                                        "detector characteristic: sinusoidal|triangular");
  sub->add_option_function<double>("--pd-period", [&f](double v) { f.pd_period = v; },
                                   "detector period in rad (default 2*pi)");
  sub->add_option_function<double>("--pd-scale", [&f](double v) { f.pd_scale = v; },
                                   "detector amplitude scale (default 1)");
  sub->add_option_function<std::string>("--filter",
                                        [&f](const std::string& v) { f.filter = v; },
                                        "loop filter: leadlag|activepi");
  sub->add_option_function<double>("--tau1", [&f](double v) { f.tau1 = v; }, "tau1, s");
  sub->add_option_function<double>("--tau2", [&f](double v) { f.tau2 = v; }, "tau2, s");
  sub->add_option_function<double>("--kvco", [&f](double v) { f.k_vco = v; },
                                   "VCO gain, rad/s per unit input");
  sub->add_option_function<double>("--omega", [&f](double v) { f.omega_e_free = v; },
                                   "free-running frequency error, rad/s");
  sub->add_option_function<double>("--x0", [&f](double v) { f.x0 = v; },
                                   "initial filter state");
  sub->add_option_function<double>("--theta0", [&f](double v) { f.theta0 = v; },
                                   "initial phase error, rad");
  sub->add_option_function<double>("--rtol", [&f](double v) { f.rtol = v; },
                                   "relative integration tolerance");
  sub->add_option_function<double>("--atol", [&f](double v) { f.atol = v; },
                                   "absolute integration tolerance");
  sub->add_option_function<double>("--tmax", [&f](double v) { f.tmax = v; },
                                   "integration horizon, s");
  sub->add_option_function<double>("--stride", [&f](double v) { f.stride = v; },
                                   "output sample stride, s (<0: endpoints only)");
  sub->add_option_function<double>("--tol", [&f](double v) { f.tol = v; },
                                   "bisection tolerance, rad/s");
  sub->add_option_function<std::string>("--method",
                                        [&f](const std::string& v) { f.method = v; },
                                        "estimator/membership method");
  sub->add_option_function<int>("--grid-theta", [&f](int v) { f.grid_theta = v; },
                                "grid points along theta");
  sub->add_option_function<int>("--grid-x", [&f](int v) { f.grid_x = v; },
                                "grid points along x");
  sub->add_option_function<std::vector<double>>(
         "--axis", [&f](const std::vector<double>& v) { f.axis = v; },
         "sweep axis values (K/tau1), comma separated")
      ->delimiter(',');
  sub->add_option_function<std::vector<double>>(
         "--family", [&f](const std::vector<double>& v) { f.family = v; },
         "sweep family values (tau2), comma separated")
      ->delimiter(',');
  sub->add_option_function<std::string>("--out", [&f](const std::string& v) { f.out = v; },
                                        "CSV output path");
  sub->add_option_function<std::string>("--svg-out",
                                        [&f](const std::string& v) { f.svg_out = v; },
                                        "SVG output path");
}

[[nodiscard]] inline RunConfig merged_config(const CliState& st) {
  RunConfig cfg;
  if (!st.config_path.empty()) load_config_file(cfg, st.config_path);
  const RunConfig& o = st.flags;  // flag overrides win over the file
  if (o.pd) cfg.pd = o.pd;
  if (o.pd_period) cfg.pd_period = o.pd_period;
  if (o.pd_scale) cfg.pd_scale = o.pd_scale;
  if (o.filter) cfg.filter = o.filter;
  if (o.tau1) cfg.tau1 = o.tau1;
  if (o.tau2) cfg.tau2 = o.tau2;
  if (o.k_vco) cfg.k_vco = o.k_vco;
  if (o.omega_e_free) cfg.omega_e_free = o.omega_e_free;
  if (o.x0) cfg.x0 = o.x0;
  if (o.theta0) cfg.theta0 = o.theta0;
  if (o.rtol) cfg.rtol = o.rtol;
  if (o.atol) cfg.atol = o.atol;
  if (o.tmax) cfg.tmax = o.tmax;
  if (o.stride) cfg.stride = o.stride;
  if (o.tol) cfg.tol = o.tol;
  if (o.method) cfg.method = o.method;
  if (o.grid_theta) cfg.grid_theta = o.grid_theta;
  if (o.grid_x) cfg.grid_x = o.grid_x;
  if (o.axis) cfg.axis = o.axis;
  if (o.family) cfg.family = o.family;
  if (o.out) cfg.out = o.out;
  if (o.svg_out) cfg.svg_out = o.svg_out;
  return cfg;
}

[[nodiscard]] inline const char* termination_name(Termination t) {
  switch (t) {
    case Termination::TimeLimit: return "time limit";
    case Termination::Event: return "stopping event";
    default: return "step limit";
  }
}

[[nodiscard]] inline const char* method_name(RangeMethod m) {
  switch (m) {
    case RangeMethod::StepSimulation: return "step";
    case RangeMethod::Separatrix: return "separatrix";
    case RangeMethod::Analytic: return "analytic";
    default: return "scaled";
  }
}

[[nodiscard]] inline RangeMethod parse_range_method(const RunConfig& cfg,
                                                    RangeMethod fallback) {
  if (!cfg.method) return fallback;
  const std::string& v = *cfg.method;
  if (v == "step") return RangeMethod::StepSimulation;
  if (v == "separatrix") return RangeMethod::Separatrix;
  if (v == "analytic") return RangeMethod::Analytic;
  if (v == "scaled") return RangeMethod::Scaled;
  throw ConfigError("method must be one of step|separatrix|analytic|scaled (got '" + v +
                    "')");
}

[[nodiscard]] inline IntegrationConfig integration_or_default(const RunConfig& cfg,
                                                              const PhaseModel& m) {
  IntegrationConfig icfg = build_integration(cfg);
  if (!(icfg.t_max > 0.0)) icfg.t_max = default_t_max(m);
  return icfg;
}

inline void emit_table(const RunConfig& cfg, const CsvTable& table, std::ostream& out,
                       const std::string& what) {
  if (cfg.out) {
    write_csv_file(*cfg.out, table);
    out << what << ": " << table.rows.size() << " rows -> " << *cfg.out << "\n";
  } else {
    write_csv(out, table);
  }
}

[[nodiscard]] inline CsvTable range_table(const RangeResult& res) {
  CsvTable t;
  t.columns = {"kind",       "method",    "frequency", "bracket_lo",
               "bracket_hi", "tolerance", "unbounded", "simulations",
               "undecided"};
  t.rows.push_back({res.kind == RangeKind::LockIn ? "lockin" : "pullin",
                    method_name(res.method), format_number(res.frequency),
                    format_number(res.bracket_lo), format_number(res.bracket_hi),
                    format_number(res.tolerance), res.unbounded ? "1" : "0",
                    std::to_string(res.diagnostics.simulations),
                    std::to_string(res.diagnostics.undecided)});
  return t;
}

// --- subcommand handlers ---------------------------------------------------

inline void cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  const PhaseModel model = build_model(cfg);
  const ModelState start{cfg.x0.value_or(0.0), cfg.theta0.value_or(0.0)};
  const Trajectory traj = integrate(model, start, integration_or_default(cfg, model));
  const SlipVerdict slip = detect_cycle_slip(traj, model.pd.period());
  if (cfg.out) write_csv_file(*cfg.out, trajectory_table(traj));
  out << "simulated to t=" << format_number(traj.t_end()) << " s ("
      << termination_name(traj.terminated_by) << ", " << traj.steps.size() << " steps, "
      << traj.samples.size() << " samples)\n";
  if (slip.slipped)
    out << "cycle slip at t=" << format_number(slip.slip_time) << " s\n";
  else
    out << "no cycle slip (peak phase excursion " << format_number(slip.excursion)
        << " rad)\n";
  const ModelState last = traj.state_at(traj.t_end());
  out << "final state: x=" << format_number(last.x)
      << " theta_e=" << format_number(last.theta_e) << "\n";
  if (cfg.out) out << "trajectory -> " << *cfg.out << "\n";
}

inline void cmd_equilibria(const RunConfig& cfg, std::ostream& out) {
  const PhaseModel model = build_model(cfg);
  const std::vector<Equilibrium> eqs = equilibria(model);
  if (eqs.empty()) {
    out << "no equilibria (|omega_e_free| exceeds the hold-in limit)\n";
    return;
  }
  emit_table(cfg, equilibria_table(eqs), out, "equilibria");
}

[[nodiscard]] inline const Equilibrium* find_saddle(const std::vector<Equilibrium>& eqs) {
  for (const auto& eq : eqs)
    if (eq.stability == Stability::Saddle && !eq.degenerate) return &eq;
  return nullptr;
}

inline void cmd_separatrix(const RunConfig& cfg, std::ostream& out) {
  const PhaseModel model = build_model(cfg);
  const std::vector<Equilibrium> eqs = equilibria(model);
  const Equilibrium* saddle = find_saddle(eqs);
  if (!saddle) throw DegenerateError("the model has no hyperbolic saddle to trace from");
  SeparatrixConfig scfg;
  if (cfg.rtol) scfg.rel_tol = *cfg.rtol;
  if (cfg.atol) scfg.abs_tol = *cfg.atol;
  if (cfg.tmax) scfg.max_time = *cfg.tmax;
  const std::vector<Separatrix> branches = trace_separatrices(model, *saddle, scfg);
  emit_table(cfg, separatrix_table(branches), out, "separatrix points");
}

inline void cmd_portrait(const RunConfig& cfg, std::ostream& out) {
  const PhaseModel model = build_model(cfg);
  const std::string path = cfg.svg_out ? *cfg.svg_out
                           : cfg.out   ? *cfg.out
                                       : throw ConfigError("portrait requires 'svg_out'");
  const std::vector<Equilibrium> eqs = equilibria(model);

  std::vector<Separatrix> branches;
  if (const Equilibrium* saddle = find_saddle(eqs))
    branches = trace_separatrices(model, *saddle);

  const IntegrationConfig icfg = integration_or_default(cfg, model);
  std::vector<Trajectory> trajs;
  if (cfg.x0 || cfg.theta0) {
    trajs.push_back(
        integrate(model, {cfg.x0.value_or(0.0), cfg.theta0.value_or(0.0)}, icfg));
  } else {
    // Deterministic fan of starts across the window.
    const double period = model.pd.period();
    double theta_c = 0.0, x_c = 0.0;
    for (const auto& eq : eqs)
      if (eq.stability == Stability::Stable) {
        theta_c = eq.state.theta_e;
        x_c = eq.state.x;
        break;
      }
    const double x_span = std::max(2.0 * model.pd.max_value(),
                                   1.25 * detail::excursion_x_scale(model, period));
    for (int j = 0; j < 12; ++j) {
      const double th = theta_c + period * (-0.5 + (j + 0.5) / 12.0);
      const double x = x_c + (j % 2 ? 0.85 : -0.85) * x_span;
      trajs.push_back(integrate(model, {x, th}, icfg));
    }
  }

  render_portrait_svg_file(path, model, trajs, branches, eqs);
  out << "portrait: " << trajs.size() << " trajectories, " << branches.size()
      << " separatrix branches, " << eqs.size() << " equilibria -> " << path << "\n";
}

inline void cmd_domain(const RunConfig& cfg, std::ostream& out) {
  const PhaseModel model = build_model(cfg);
  DomainMethod method = DomainMethod::Separatrix;
  if (cfg.method) {
    if (*cfg.method == "separatrix") method = DomainMethod::Separatrix;
    else if (*cfg.method == "simulation") method = DomainMethod::Simulation;
    else
      throw ConfigError("method must be separatrix|simulation (got '" + *cfg.method +
                        "')");
  }
  DomainGridSpec spec;
  if (cfg.grid_theta) spec.n_theta = *cfg.grid_theta;
  if (cfg.grid_x) spec.n_x = *cfg.grid_x;
  DomainConfig dcfg;
  if (cfg.rtol) dcfg.rel_tol = *cfg.rtol;
  if (cfg.atol) dcfg.abs_tol = *cfg.atol;
  if (cfg.tmax) dcfg.t_max = *cfg.tmax;
  const std::vector<DomainGridRow> rows = classify_domain_grid(model, method, spec, dcfg);
  long inside = 0, outside = 0, undecided = 0;
  for (const auto& r : rows) {
    if (r.verdict == DomainVerdict::Inside) ++inside;
    else if (r.verdict == DomainVerdict::Outside) ++outside;
    else ++undecided;
  }
  emit_table(cfg, domain_table(rows), out, "domain grid");
  if (cfg.out)
    out << "inside " << inside << ", outside " << outside << ", undecided " << undecided
        << "\n";
}

inline void cmd_lockin(const RunConfig& cfg, std::ostream& out) {
  const SystemParams sys = build_system(cfg);
  const double tol = cfg.tol.value_or(default_range_tol(sys));
  const RangeMethod method = parse_range_method(cfg, RangeMethod::StepSimulation);
  RangeResult res;
  if (method == RangeMethod::StepSimulation) {
    res = estimate_lock_in(sys, tol);
  } else if (method == RangeMethod::Separatrix) {
    res = estimate_lock_in_separatrix(sys, tol);
  } else {
    throw ConfigError("lockin supports method step|separatrix");
  }
  out << "lock-in frequency: " << format_number(res.frequency) << " rad/s (bracket ["
      << format_number(res.bracket_lo) << ", " << format_number(res.bracket_hi) << "], "
      << res.diagnostics.simulations << " simulations, " << res.diagnostics.undecided
      << " undecided)\n";
  if (cfg.out) {
    write_csv_file(*cfg.out, range_table(res));
    out << "result -> " << *cfg.out << "\n";
  }
}

inline void cmd_pullin(const RunConfig& cfg, std::ostream& out) {
  const SystemParams sys = build_system(cfg);
  const double tol = cfg.tol.value_or(default_range_tol(sys));
  PullInConfig pcfg;
  if (cfg.grid_theta) pcfg.grid_theta = *cfg.grid_theta;
  if (cfg.grid_x) pcfg.grid_x = *cfg.grid_x;
  if (cfg.rtol) pcfg.step.rel_tol = *cfg.rtol;
  if (cfg.atol) pcfg.step.abs_tol = *cfg.atol;
  if (cfg.tmax) pcfg.step.t_max = *cfg.tmax;
  const RangeResult res = estimate_pull_in(sys, tol, pcfg);
  if (res.unbounded)
    out << "pull-in range: unbounded (energy audit passed on "
        << res.diagnostics.simulations << " trajectories)\n";
  else
    out << "pull-in frequency: " << format_number(res.frequency) << " rad/s (bracket ["
        << format_number(res.bracket_lo) << ", " << format_number(res.bracket_hi)
        << "], " << res.diagnostics.simulations << " simulations)\n";
  if (cfg.out) {
    write_csv_file(*cfg.out, range_table(res));
    out << "result -> " << *cfg.out << "\n";
  }
}

inline void cmd_sweep(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.axis || !cfg.family)
    throw ConfigError("sweep requires 'axis' and 'family' value lists");
  SweepSpec spec(build_pd(cfg));
  if (!cfg.filter) throw ConfigError("missing configuration key 'filter'");
  if (*cfg.filter == "leadlag") spec.filter = FilterKind::LeadLag;
  else if (*cfg.filter == "activepi") spec.filter = FilterKind::ActivePI;
  else throw ConfigError("filter must be 'leadlag' or 'activepi' (got '" + *cfg.filter + "')");
  spec.axis = *cfg.axis;
  spec.family = *cfg.family;
  if (cfg.tol) spec.tol = *cfg.tol;
  spec.method = parse_range_method(cfg, RangeMethod::StepSimulation);
  const std::vector<SweepRow> rows = sweep_diagram(spec);
  long failed = 0;
  for (const auto& r : rows) failed += r.failed ? 1 : 0;
  emit_table(cfg, sweep_table(rows), out, "sweep");
  if (cfg.out && failed) out << failed << " points failed (NaN rows)\n";
}

inline void cmd_estimate(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.tau1 || !cfg.tau2 || !cfg.k_vco)
    throw ConfigError("estimate requires 'tau1', 'tau2' and 'k_vco'");
  double value;
  try {
    value = analytic_lock_in_estimate(*cfg.tau1, *cfg.tau2, *cfg.k_vco);
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", value);
  out << buf << "\n";
}

}  // namespace detail

/// Entry point shared by the binary and the tests.  `args` excludes the
/// program name.  Exit codes: 0 success, 2 configuration error, 3
/// convergence/numerical failure.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"second-order PLL simulator: lock-in/pull-in ranges, portraits, sweeps"};
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    void (*fn)(const RunConfig&, std::ostream&);
  };
  static constexpr Command kCommands[] = {
      {"simulate", "integrate one trajectory and report slip/lock facts",
       &detail::cmd_simulate},
      {"portrait", "render a phase portrait SVG", &detail::cmd_portrait},
      {"equilibria", "list equilibria with stability and eigenvalues",
       &detail::cmd_equilibria},
      {"separatrix", "trace saddle separatrices to CSV", &detail::cmd_separatrix},
      {"domain", "classify a grid against the local lock-in domain", &detail::cmd_domain},
      {"lockin", "estimate the lock-in frequency", &detail::cmd_lockin},
      {"pullin", "estimate the pull-in frequency", &detail::cmd_pullin},
      {"sweep", "lock-in diagram over a parameter grid", &detail::cmd_sweep},
      {"estimate", "closed-form lock-in approximation", &detail::cmd_estimate},
  };

  std::vector<detail::CliState> states(std::size(kCommands));
  const Command* chosen = nullptr;
  const detail::CliState* chosen_state = nullptr;
  for (std::size_t i = 0; i < std::size(kCommands); ++i) {
    CLI::App* sub = app.add_subcommand(kCommands[i].name, kCommands[i].help);
    detail::add_common_options(sub, states[i]);
    sub->callback([&, i] {
      chosen = &kCommands[i];
      chosen_state = &states[i];
    });
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (chosen) chosen->fn(detail::merged_config(*chosen_state), out);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const ParameterError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 2;
  } catch (const EmptyTableError& e) {
    err << "output error: " << e.what() << "\n";
    return 2;
  } catch (const SymmetryError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace pllsim
