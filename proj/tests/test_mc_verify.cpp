#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "qfc/montecarlo.hpp"
#include "qfc/qubit.hpp"
#include "qfc/verify.hpp"

using namespace qfc;

namespace {

DensityMatrix qubit_state(const Vec3& p) { return DensityMatrix(Operator(oracle::bloch_state(p))); }

Operator terminal_down() { return 0.5 * (identity(2) - pauli_z()); }

FeedbackPolicy constant_policy(const Vec3& u) {
  return [u](double, const DensityMatrix&) { return Control(u); };
}

}  // namespace

TEST(AccumulateCost, ZeroCosts) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const Trajectory tr = master_solve(m, 0.0, 1.0, 0.01, zero_policy(m), qubit_state({0.3, 0.2, 0.1}));
  EXPECT_EQ(accumulate_cost(CostSpec::quadratic_effort(3, Operator::Zero(2, 2)), tr), 0.0);
  const Trajectory pole = master_solve(m, 0.0, 1.0, 0.01, zero_policy(m), qubit_state({0, 0, 1}));
  EXPECT_NEAR(accumulate_cost(CostSpec::quadratic_effort(3, terminal_down()), pole), 0.0, 1e-15);
}

TEST(AccumulateCost, DephasingTerminalCost) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const Trajectory tr = master_solve(m, 0.0, 1.0, 1e-3, zero_policy(m), qubit_state({1, 0, 0}));
  EXPECT_NEAR(accumulate_cost(CostSpec::quadratic_effort(3, pauli_x()), tr), oracle::dephased_x(1.0, 1.0), 1e-6);
}

TEST(AccumulateCost, TrapezoidOfConstantEffort) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  Trajectory tr = master_solve(m, 0.0, 2.0, 0.01, constant_policy({1, 2, 2}), qubit_state({0, 0, 1}));
  const CostSpec c = CostSpec::quadratic_effort(3, Operator::Zero(2, 2));
  EXPECT_NEAR(accumulate_cost(c, tr), 9.0, 1e-12);
  fill_running_cost(c, tr);
  EXPECT_NEAR(tr.j_partial.back(), 9.0, 1e-12);
  EXPECT_NEAR(tr.j_partial[100], 4.5, 1e-12);
}

TEST(ExpectedCost, NoiselessIsExact) {
  const ModelSpec m = ModelSpec::controlled_qubit(0.0);
  const CostSpec c = CostSpec::quadratic_effort(3, terminal_down());
  const FeedbackPolicy pol = constant_policy({0.0, 0.8, 0.0});
  const CostReport r = estimate_expected_cost(m, c, pol, "const", qubit_state({0.6, 0, 0}), 0.0, 1.0, 1e-3, 16, 5);
  EXPECT_EQ(r.stderr_j, 0.0);
  const double single =
      accumulate_cost(c, simulate_ito(m, pol, qubit_state({0.6, 0, 0}), NoisePath::generate(0.0, 1.0, 1e-3, 99)));
  EXPECT_EQ(r.mean_j, single);
}

TEST(ExpectedCost, ZeroCostProblem) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = CostSpec::quadratic_effort(3, Operator::Zero(2, 2));
  const CostReport r = estimate_expected_cost(m, c, zero_policy(m), "zero", qubit_state({0.6, 0, 0}), 0.0, 1.0, 1e-2, 20, 1);
  EXPECT_EQ(r.mean_j, 0.0);
  EXPECT_EQ(r.stderr_j, 0.0);
}

TEST(ExpectedCost, ThreadCountInvariant) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = CostSpec::quadratic_effort(3, terminal_down());
  MonteCarloOptions one, four;
  one.threads = 1;
  four.threads = 4;
  const FeedbackPolicy pol = constant_policy({0.1, 0.5, 0.0});
  const CostReport a = estimate_expected_cost(m, c, pol, "c", qubit_state({0.6, 0, 0}), 0.0, 1.0, 1e-2, 37, 11, one);
  const CostReport b = estimate_expected_cost(m, c, pol, "c", qubit_state({0.6, 0, 0}), 0.0, 1.0, 1e-2, 37, 11, four);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_GT(a.stderr_j, 0.0);
  EXPECT_LE(a.worst_trace_dev_raw, 1e-9);
}

TEST(ExpectedCost, StderrIsSampleStdOverRootN) {
  const std::vector<double> x{1.0, 2.0, 4.0, 7.0};
  const auto [mean, se] = mean_and_stderr(x);
  EXPECT_DOUBLE_EQ(mean, 3.5);
  const double var = ((2.5 * 2.5) + (1.5 * 1.5) + (0.5 * 0.5) + (3.5 * 3.5)) / 3.0;
  EXPECT_NEAR(se, std::sqrt(var / 4.0), 1e-15);
}

TEST(ExpectedCost, ErrorsCarryTrajectoryIndex) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = CostSpec::quadratic_effort(3, terminal_down());
  const FeedbackPolicy bad = [](double, const DensityMatrix&) { return Control::Zero(2); };
  try {
    estimate_expected_cost(m, c, bad, "bad", qubit_state({0.6, 0, 0}), 0.0, 1.0, 1e-2, 4, 1);
    FAIL() << "expected an error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("trajectory 0"), std::string::npos);
  }
  EXPECT_THROW(estimate_expected_cost(m, c, zero_policy(m), "z", qubit_state({0.6, 0, 0}), 0.0, 1.0, 1e-2, 1, 1),
               ValidationError);
}

TEST(ExpectedCost, PairedDifferenceNeedsSharedPaths) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = CostSpec::quadratic_effort(3, terminal_down());
  const CostReport a = estimate_expected_cost(m, c, zero_policy(m), "z", qubit_state({0.6, 0, 0}), 0.0, 1.0, 1e-2, 8, 1);
  const CostReport b = estimate_expected_cost(m, c, zero_policy(m), "z", qubit_state({0.6, 0, 0}), 0.0, 1.0, 1e-2, 8, 2);
  EXPECT_THROW(paired_difference(a, b), ValidationError);
  const auto [d, se] = paired_difference(a, a);
  EXPECT_EQ(d, 0.0);
  EXPECT_EQ(se, 0.0);
}

TEST(TrajectoryCsv, HeaderAndRows) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  Trajectory tr = simulate_ito(m, zero_policy(m), qubit_state({0.6, 0, 0}), NoisePath::generate(0.0, 0.1, 0.05, 3));
  fill_running_cost(CostSpec::quadratic_effort(3, terminal_down()), tr);
  std::ostringstream os;
  write_trajectory_csv(os, tr);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header,
            "t,W,u_1,u_2,u_3,J_partial,rho_re_00,rho_im_00,rho_re_01,rho_im_01,rho_re_10,rho_im_10,rho_re_11,rho_im_11");
  int rows = 0;
  for (std::string line; std::getline(is, line);) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(GeneratorCheck, LinearAndCubicBatteries) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  EXPECT_LE(generator_identity_check(m, {linear_functional(pauli_x()), linear_functional(pauli_z())}, 100, 3), 1e-7);
  const StateFunctional cubic{[](const Operator& r) {
                                const double v = pairing(r, pauli_x()).real();
                                return v * v * v;
                              },
                              {}};
  EXPECT_LE(generator_identity_check(m, {cubic}, 100, 4), 1e-5);
}

TEST(SchemeConsistency, SchemesCoincideWithoutCoupling) {
  const ModelSpec m = ModelSpec::controlled_qubit(0.0);
  SchemeLadderOptions o;
  o.paths = 2;
  o.wz_paths = 1;
  o.rungs = 3;
  const SchemeConsistency sc = scheme_consistency_report(m, constant_policy({0.3, 0.2, 0.1}), qubit_state({1, 0, 0}), o);
  // Without coupling Euler and Heun solve the same ODE and differ by the
  // Euler truncation error, which is first order; Wong-Zakai has no noise to
  // smooth and reproduces Heun.
  EXPECT_TRUE(sc.ito_strat.strictly_decreasing);
  EXPECT_NEAR(sc.ito_strat.order, 1.0, 0.05);
  for (double e : sc.wong_zakai.errors) EXPECT_LE(e, 1e-10);
}

TEST(SchemeConsistency, DephasingLaddersDecrease) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  SchemeLadderOptions o;
  o.threads = 2;
  const SchemeConsistency sc = scheme_consistency_report(m, zero_policy(m), qubit_state({1, 0, 0}), o);
  EXPECT_TRUE(sc.ito_strat.strictly_decreasing) << to_json(sc.ito_strat).dump();
  EXPECT_TRUE(sc.wong_zakai.strictly_decreasing) << to_json(sc.wong_zakai).dump();
  EXPECT_GT(sc.ito_strat.order, 0.2);
}

TEST(SchemeConsistency, ShallowLadderRejected) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  SchemeLadderOptions o;
  o.rungs = 2;
  EXPECT_THROW(scheme_consistency_report(m, zero_policy(m), qubit_state({1, 0, 0}), o), ValidationError);
}

TEST(ConvergenceReportType, OrderFit) {
  ConvergenceReport r;
  r.ladder = {0.4, 0.2, 0.1};
  r.errors = {0.16, 0.04, 0.01};
  finish_report(r);
  EXPECT_TRUE(r.strictly_decreasing);
  EXPECT_NEAR(r.order, 2.0, 1e-12);
  r.errors = {0.16, 0.04, 0.05};
  finish_report(r);
  EXPECT_FALSE(r.strictly_decreasing);
}
