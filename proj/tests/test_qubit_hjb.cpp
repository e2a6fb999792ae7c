#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "qfc/hjb.hpp"
#include "qfc/verify.hpp"

using namespace qfc;

namespace {

Operator terminal_down() { return 0.5 * (identity(2) - pauli_z()); }

Vec3 random_ball(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (;;) {
    Vec3 p(ud(rng), ud(rng), ud(rng));
    if (p.norm() <= 1.0) return p;
  }
}

HjbOptions small(int n, HjbMode mode = HjbMode::Stochastic) {
  HjbOptions o;
  o.N = n;
  o.mode = mode;
  o.threads = 1;
  return o;
}

}  // namespace

TEST(Bloch, Examples) {
  EXPECT_LE(bloch_from_state(DensityMatrix::maximally_mixed(2)).p.norm(), 1e-15);
  Operator up = Operator::Zero(2, 2);
  up(0, 0) = 1.0;
  EXPECT_LE((bloch_from_state(DensityMatrix(up)).p - Vec3(0, 0, 1)).norm(), 1e-15);
  const Vec3 p(0.3, -0.4, 0.5);
  const Eigen::VectorXd ev = hermitian_eigenvalues(state_from_bloch(BlochPoint{p}).matrix());
  EXPECT_NEAR(p.norm(), std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(ev(0), 0.5 * (1 - p.norm()), 1e-14);
  EXPECT_NEAR(ev(1), 0.5 * (1 + p.norm()), 1e-14);
}

TEST(Bloch, RoundTripAndDuality) {
  std::mt19937_64 rng(41);
  for (int s = 0; s < 100; ++s) {
    const Vec3 p = random_ball(rng);
    const DensityMatrix rho = state_from_bloch(BlochPoint{p});
    EXPECT_LE((bloch_from_state(rho).p - p).norm(), 1e-14);
    EXPECT_LE((rho.matrix() - Operator(oracle::bloch_state(p))).cwiseAbs().maxCoeff(), 1e-15);
    const Vec3 q = random_ball(rng);
    EXPECT_NEAR(pairing(rho, bloch_observable(0.7, q)).real(), 0.7 + q.dot(p), 1e-14);
  }
}

TEST(Bloch, OutsideBallRejected) {
  EXPECT_THROW(state_from_bloch(BlochPoint{Vec3(0.8, 0.7, 0.0)}), ValidationError);
  EXPECT_THROW(BlochPoint::checked(Vec3(1.0 + 1e-6, 0, 0)), ValidationError);
  EXPECT_NO_THROW(state_from_bloch(BlochPoint{Vec3(1.0 + 1e-10, 0, 0)}));
}

TEST(QubitCoefficients, MatchClosedForms) {
  std::mt19937_64 rng(42);
  const double kappa = 1.3;
  const ModelSpec m = ModelSpec::controlled_qubit(kappa);
  for (int s = 0; s < 100; ++s) {
    const Vec3 p = random_ball(rng);
    const Control u = random_control(m, rng);
    const QubitCoefficients c = qubit_coefficients(m, u, BlochPoint{p});
    EXPECT_LE((c.drift - oracle::qubit_drift(kappa, u, p)).norm(), 1e-12);
    EXPECT_LE((c.noise - oracle::qubit_noise(kappa, p)).norm(), 1e-13);
  }
}

TEST(QubitCoefficients, PolesAndCentre) {
  const double kappa = 0.7;
  const ModelSpec m = ModelSpec::controlled_qubit(kappa);
  for (double z : {1.0, -1.0}) {
    const QubitCoefficients c = qubit_coefficients(m, m.zero_control(), BlochPoint{Vec3(0, 0, z)});
    EXPECT_LE(c.drift.norm(), 1e-15);
    EXPECT_LE(c.noise.norm(), 1e-15);
  }
  const QubitCoefficients c0 = qubit_coefficients(m, Control(Vec3(1, -2, 3)), BlochPoint{Vec3::Zero()});
  EXPECT_LE(c0.drift.norm(), 1e-15);
  EXPECT_LE((c0.noise - Vec3(0, 0, kappa)).norm(), 1e-15);
}

TEST(QubitCoefficients, NoiseTangentOnSphere) {
  std::mt19937_64 rng(43);
  const double kappa = 1.0;
  const ModelSpec m = ModelSpec::controlled_qubit(kappa);
  for (int s = 0; s < 100; ++s) {
    const Vec3 p = random_ball(rng).normalized();
    EXPECT_NEAR(qubit_coefficients(m, m.zero_control(), BlochPoint{p}).noise.dot(p), 0.0, 1e-14);
    const Vec3 q = 0.8 * p;
    EXPECT_NEAR(qubit_coefficients(m, m.zero_control(), BlochPoint{q}).noise.dot(q),
                kappa * q.z() * (1 - q.squaredNorm()), 1e-14);
  }
}

TEST(QubitCoefficients, ReductionAgreesWithOperatorLevel) {
  std::mt19937_64 rng(44);
  const ModelSpec m = ModelSpec::controlled_qubit(1.1);
  const CostSpec c = CostSpec::quadratic_effort(3, terminal_down());
  const BlochReduction r = BlochReduction::build(m, c);
  for (int s = 0; s < 50; ++s) {
    const Vec3 p = random_ball(rng);
    const Control u = random_control(m, rng);
    const QubitCoefficients q = qubit_coefficients(m, u, BlochPoint{p});
    EXPECT_LE((r.drift(u, p) - q.drift).norm(), 1e-12);
    EXPECT_LE((r.noise(p) - q.noise).norm(), 1e-12);
    EXPECT_NEAR(r.running_cost(u, p), 0.5 * Vec3(u).squaredNorm(), 1e-12);
  }
  EXPECT_NEAR(r.terminal(Vec3(0, 0, 1)), 0.0, 1e-15);
  EXPECT_NEAR(r.terminal(Vec3(0, 0, -1)), 1.0, 1e-15);
}

TEST(Hjb, TerminalSliceExact) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = CostSpec::quadratic_effort(3, bloch_observable(0.3, Vec3(0.2, -0.1, 0.4)));
  const ValueGrid g = hjb_solve_qubit(m, c, small(11));
  const std::size_t last = g.num_slices() - 1;
  EXPECT_DOUBLE_EQ(g.slice_times()[last], 1.0);
  for (int i = 0; i < g.N(); ++i)
    for (int j = 0; j < g.N(); ++j)
      for (int l = 0; l < g.N(); ++l) {
        if (g.point(i, j, l).norm() > 1.0) continue;
        const Vec3 p = g.point(i, j, l);
        EXPECT_NEAR(g.value_at_lattice(last, i, j, l), 0.3 + 0.2 * p.x() - 0.1 * p.y() + 0.4 * p.z(), 1e-14);
      }
}

TEST(Hjb, ZeroCostGivesZeroValue) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = CostSpec::quadratic_effort(3, Operator::Zero(2, 2));
  const auto g = std::make_shared<const ValueGrid>(hjb_solve_qubit(m, c, small(11)));
  for (std::size_t s = 0; s < g->num_slices(); ++s)
    for (int i = 0; i < g->N(); ++i)
      for (int j = 0; j < g->N(); ++j)
        for (int l = 0; l < g->N(); ++l)
          if (g->point(i, j, l).norm() <= 1.0) ASSERT_EQ(g->value_at_lattice(s, i, j, l), 0.0);
  const GridPolicy pol = extract_policy(g);
  std::mt19937_64 rng(45);
  for (int s = 0; s < 20; ++s) EXPECT_EQ(Vec3(pol.at(0.3, random_ball(rng))).norm(), 0.0);
}

TEST(Hjb, NoControlNoNoiseKeepsLinearValue) {
  const ModelSpec m(Operator::Zero(2, 2), {}, {}, Operator::Zero(2, 2), {});
  const Vec3 s(0.2, -0.3, 0.5);
  const CostSpec c = CostSpec::quadratic_effort(0, bloch_observable(0.1, s));
  HjbOptions o = small(9);
  o.store_dt = 0.25;
  const ValueGrid g = hjb_solve_qubit(m, c, o);
  const std::vector<double> times{0.0, 0.25, 0.5, 0.75, 1.0};
  const std::vector<Vec3> pts(times.size(), Vec3(0.1, 0.2, -0.3));
  const CostateRecord rec = costate_from_value(g, times, pts);
  for (const Operator& q : rec.costates) EXPECT_LE((q - bloch_observable(0.0, s)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(g.value(0.0, Vec3(0.1, 0.2, -0.3)), 0.1 + s.dot(Vec3(0.1, 0.2, -0.3)), 1e-12);
}

TEST(Hjb, RotationSymmetryAboutZ) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = CostSpec::quadratic_effort(3, terminal_down());
  const ValueGrid g = hjb_solve_qubit(m, c, small(15));
  const int n = g.N();
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        if (g.point(i, j, l).norm() > 1.0) continue;
        // (x, y) -> (-y, x) maps index (i, j) to (n-1-j, i)
        worst = std::max(worst, std::abs(g.value_at_lattice(0, i, j, l) - g.value_at_lattice(0, n - 1 - j, i, l)));
      }
  EXPECT_LE(worst, 1e-10);
}

TEST(Hjb, ValueBelowTerminalAndFinite) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = CostSpec::quadratic_effort(3, terminal_down());
  const ValueGrid g = hjb_solve_qubit(m, c, small(15));
  std::mt19937_64 rng(46);
  for (int s = 0; s < 50; ++s) {
    const Vec3 p = random_ball(rng);
    const double v = g.value(0.0, p);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_LE(v, 0.5 * (1 - p.z()) + 0.02);  // u = 0 keeps z fixed, so S <= 1/2 (1 - z)
    EXPECT_GE(v, -1e-6);
  }
}

TEST(Hjb, CflViolationSuggestsStep) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = CostSpec::quadratic_effort(3, terminal_down());
  HjbOptions o = small(21);
  o.dt = 0.01;
  try {
    hjb_solve_qubit(m, c, o);
    FAIL() << "expected a CFL error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("use dt <="), std::string::npos);
  }
  const CflBound b = hjb_cfl_bound(BlochReduction::build(m, c), 21, 3, HjbMode::Stochastic);
  o.dt = b.dt_max * 0.99;
  o.T = 100 * o.dt;
  o.store_dt = o.dt;
  EXPECT_NO_THROW(hjb_solve_qubit(m, c, o));
}

TEST(Hjb, RejectsEvenLatticeAndNonQubit) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = CostSpec::quadratic_effort(3, terminal_down());
  EXPECT_THROW(hjb_solve_qubit(m, c, small(10)), ValidationError);
  const ModelSpec q3(Operator::Zero(3, 3), {}, {}, Operator::Zero(3, 3), {});
  EXPECT_THROW(hjb_solve_qubit(q3, CostSpec::quadratic_effort(0, identity(3)), small(9)), ValidationError);
}

TEST(Hjb, ThreadCountDoesNotChangeValues) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = CostSpec::quadratic_effort(3, terminal_down());
  HjbOptions a = small(13), b = small(13);
  b.threads = 4;
  EXPECT_EQ(hjb_solve_qubit(m, c, a).fingerprint(), hjb_solve_qubit(m, c, b).fingerprint());
}

TEST(Hjb, DeterministicModeAgainstRotationOracle) {
  const ModelSpec m = ModelSpec::controlled_qubit(0.0);
  const CostSpec c = CostSpec::quadratic_effort(3, terminal_down());
  const ValueGrid g = hjb_solve_qubit(m, c, small(31, HjbMode::Deterministic));
  for (double theta_deg : {60.0, 90.0, 120.0, 150.0}) {
    const double th = theta_deg * M_PI / 180.0;
    const Vec3 p(std::sin(th), 0.0, std::cos(th));
    const double oracle_v = oracle::geodesic_scan(1.0, th, 1.0);
    EXPECT_NEAR(g.value(0.0, p), oracle_v, 0.05 * oracle_v) << "theta " << theta_deg;
  }
}

TEST(Hjb, LibraryGeodesicMatchesScan) {
  for (double r : {0.9, 1.0, 1.1})
    for (double th : {0.3, 1.0, 2.0, 3.0}) EXPECT_NEAR(geodesic_value(r, th, 1.0), oracle::geodesic_scan(r, th, 1.0), 1e-9);
  EXPECT_NEAR(geodesic_value(1.0, M_PI / 2, 1.0), 0.383767, 1e-6);
}

TEST(Policy, CrossProductAndBox) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0, 0.3);
  const BlochReduction r = BlochReduction::build(m, CostSpec::quadratic_effort(3, terminal_down()));
  EXPECT_LE((Vec3(r.optimal_control(Vec3(1, 0, 0), Vec3(0, 0, 0.2))) - Vec3(0, 0.2, 0)).norm(), 1e-15);
  EXPECT_LE(Vec3(r.optimal_control(Vec3(0, 0, 1), Vec3(0, 0, 3))).norm(), 1e-15);
  const Vec3 clipped = r.optimal_control(Vec3(1, 0, 0), Vec3(0, 0, 5));
  EXPECT_DOUBLE_EQ(clipped.y(), 0.3);

  const auto g = std::make_shared<const ValueGrid>(hjb_solve_qubit(m, CostSpec::quadratic_effort(3, terminal_down()), small(11)));
  const GridPolicy pol = extract_policy(g);
  std::mt19937_64 rng(47);
  for (int s = 0; s < 50; ++s) {
    EXPECT_TRUE(m.in_box(pol.at(0.5, random_ball(rng))));
    EXPECT_TRUE(m.in_box(pol.at(0.5, Vec3(1.5, 0.2, 0.0))));  // projected to the ball
  }
}

TEST(Policy, SliceLookupUsesEarlierSlice) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  HjbOptions o = small(9);
  o.store_dt = 0.25;
  const ValueGrid g = hjb_solve_qubit(m, CostSpec::quadratic_effort(3, terminal_down()), o);
  ASSERT_EQ(g.num_slices(), 5u);
  EXPECT_EQ(g.slice_index(0.0), 0u);
  EXPECT_EQ(g.slice_index(0.2499), 0u);
  EXPECT_EQ(g.slice_index(0.25), 1u);
  EXPECT_EQ(g.slice_index(0.99), 3u);
  EXPECT_EQ(g.slice_index(1.0), 4u);
}

TEST(Costate, TerminalMatchesTerminalOperator) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const ValueGrid g = hjb_solve_qubit(m, CostSpec::quadratic_effort(3, terminal_down()), small(21));
  const CostateRecord rec = costate_from_value(g, {0.5, 1.0}, {Vec3(0.3, 0.1, 0.2), Vec3(0.3, 0.1, 0.2)});
  EXPECT_LE((rec.costates[1] - traceless_part(terminal_down())).cwiseAbs().maxCoeff(), 1e-15);
  // the lattice gradient of the exact terminal slice is exact for a linear function
  EXPECT_LE((g.gradient(1.0, Vec3(0.3, 0.1, 0.2)) - Vec3(0, 0, -0.5)).norm(), 1e-12);
}

TEST(GridFile, RoundTripAndFingerprint) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = CostSpec::quadratic_effort(3, terminal_down());
  HjbOptions o = small(11);
  o.store_dt = 0.1;
  const ValueGrid g = hjb_solve_qubit(m, c, o);
  std::stringstream ss;
  write_value_grid(ss, g);
  const ValueGrid back = read_value_grid(ss, m, c);
  EXPECT_EQ(back.fingerprint(), g.fingerprint());
  EXPECT_EQ(back.value(0.0, Vec3(0.6, 0, 0)), g.value(0.0, Vec3(0.6, 0, 0)));

  std::stringstream ss2;
  write_value_grid(ss2, g);
  const ModelSpec printed = ModelSpec::controlled_qubit(1.0, 10.0, CouplingConvention::Printed);
  try {
    read_value_grid(ss2, printed, c);
    FAIL() << "expected a fingerprint mismatch";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("fingerprint mismatch"), std::string::npos);
  }
}

TEST(GridFile, MalformedInputRejected) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = CostSpec::quadratic_effort(3, terminal_down());
  std::stringstream empty;
  EXPECT_THROW(read_value_grid(empty, m, c), ValidationError);
  std::stringstream junk("not json\n");
  EXPECT_THROW(read_value_grid(junk, m, c), ValidationError);
}
