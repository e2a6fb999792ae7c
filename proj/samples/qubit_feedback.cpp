// Steer a continuously monitored qubit towards |0> with the HJB feedback law
// and compare its Monte-Carlo cost with doing nothing.
//
//   qubit_feedback [N] [trajectories]

#include <cstdio>
#include <cstdlib>

#include "qfc/qfc.hpp"

int main(int argc, char** argv) {
  using namespace qfc;
  const int n = argc > 1 ? std::atoi(argv[1]) : 21;
  const std::size_t paths = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 400;

  const ModelSpec model = ModelSpec::controlled_qubit(1.0);
  const CostSpec cost = CostSpec::quadratic_effort(3, bloch_observable(0.5, Vec3(0, 0, -0.5)));
  HjbOptions opts;
  opts.N = n;
  auto grid = std::make_shared<const ValueGrid>(hjb_solve_qubit(model, cost, opts));

  const Vec3 p0(0.6, 0.0, 0.0);
  const DensityMatrix rho0 = state_from_bloch(BlochPoint{p0});
  std::printf("grid N=%d  h=%.4f  dt=%.3g  steps=%zu\n", grid->N(), grid->h(), grid->dt(), grid->steps());
  std::printf("S(0, p0)              = %.5f\n", grid->value(0.0, p0));

  const CostReport hjb = estimate_expected_cost(model, cost, extract_policy(grid).as_feedback(), "hjb-grid", rho0,
                                                0.0, 1.0, 1e-3, paths, 42);
  const CostReport idle = estimate_expected_cost(model, cost, zero_policy(model), "zero", rho0, 0.0, 1.0, 1e-3, paths, 42);
  const auto [gain, gain_se] = paired_difference(idle, hjb);
  std::printf("E[J] feedback         = %.5f +- %.5f\n", hjb.mean_j, hjb.stderr_j);
  std::printf("E[J] u = 0            = %.5f +- %.5f\n", idle.mean_j, idle.stderr_j);
  std::printf("improvement (paired)  = %.5f +- %.5f\n", gain, gain_se);
  return 0;
}
