// One filtered trajectory of a dephasing qubit written as CSV on stdout, next
// to the master-equation mean. Pipe into a plotting tool of your choice.
//
//   dephasing_filter [seed] > path.csv

#include <cstdlib>
#include <iostream>

#include "qfc/qfc.hpp"

int main(int argc, char** argv) {
  using namespace qfc;
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
  const ModelSpec model = ModelSpec::controlled_qubit(1.0);
  const DensityMatrix rho0 = state_from_bloch(BlochPoint{Vec3(1.0, 0.0, 0.0)});
  const NoisePath noise = NoisePath::generate(0.0, 2.0, 1e-3, seed);

  const Trajectory ito = simulate_ito(model, zero_policy(model), rho0, noise);
  const Trajectory mean = master_solve(model, 0.0, 2.0, 1e-3, zero_policy(model), rho0);
  std::cout << "t,W,x,z,purity,x_mean\n";
  for (std::size_t k = 0; k < ito.size(); k += 10) {
    const Vec3 p = bloch_from_state(ito.states[k]).p;
    std::cout << ito.times[k] << ',' << ito.w[k] << ',' << p.x() << ',' << p.z() << ',' << ito.states[k].purity()
              << ',' << bloch_from_state(mean.states[k]).p.x() << '\n';
  }
  return 0;
}
