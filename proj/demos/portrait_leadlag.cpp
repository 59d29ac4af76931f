// Phase portrait of a lead-lag loop: equilibria, separatrices, and a fan of
// trajectories rendered to portrait.svg in the working directory.

#include <cstdio>
#include <vector>

#include <pllsim/lock_analysis.hpp>
#include <pllsim/svg.hpp>

int main() {
  using namespace pllsim;

  const PhaseModel model = make_model(make_lead_lag(0.0633, 0.0185),
                                      PdCharacteristic::sinusoidal(), 250.0, 40.0);

  const std::vector<Equilibrium> eqs = equilibria(model);
  const Equilibrium* saddle = nullptr;
  const Equilibrium* stable = nullptr;
  for (const auto& eq : eqs) {
    if (eq.stability == Stability::Saddle && !eq.degenerate) saddle = &eq;
    if (eq.stability == Stability::Stable) stable = &eq;
  }
  if (!saddle || !stable) {
    std::puts("no saddle/stable pair at this detuning");
    return 1;
  }

  const std::vector<Separatrix> branches = trace_separatrices(model, *saddle);

  IntegrationConfig icfg;
  icfg.t_max = default_t_max(model);
  std::vector<Trajectory> trajs;
  const double period = model.pd.period();
  for (int j = 0; j < 10; ++j) {
    const double th = stable->state.theta_e + period * (-0.5 + (j + 0.5) / 10.0);
    const double x = stable->state.x + (j % 2 ? 0.9 : -0.9);
    trajs.push_back(integrate(model, {x, th}, icfg));
  }

  render_portrait_svg_file("portrait.svg", model, trajs, branches, eqs);
  std::printf("portrait.svg: %zu trajectories, %zu separatrix branches, %zu equilibria\n",
              trajs.size(), branches.size(), eqs.size());
  return 0;
}
