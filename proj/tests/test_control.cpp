#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "qfc/control.hpp"
#include "qfc/qubit.hpp"
#include "qfc/verify.hpp"

using namespace qfc;

namespace {

double max_abs(const Operator& a) { return a.cwiseAbs().maxCoeff(); }

Operator qubit_state(const Vec3& p) { return Operator(oracle::bloch_state(p)); }

Operator pauli_vec(const Vec3& q) {
  return Operator(q.x() * oracle::sx() + q.y() * oracle::sy() + q.z() * oracle::sz());
}

CostSpec effort(Operator s = 0.5 * (identity(2) - pauli_z())) { return CostSpec::quadratic_effort(3, std::move(s)); }

Vec3 random_ball(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (;;) {
    Vec3 p(ud(rng), ud(rng), ud(rng));
    if (p.norm() <= 1.0) return p;
  }
}

}  // namespace

TEST(RunningCost, Examples) {
  const CostSpec c = CostSpec::quadratic_effort(3, pauli_z());
  const Control u(Vec3(1, 2, 2));
  EXPECT_DOUBLE_EQ(running_cost(c, 0.0, u, qubit_state({0.3, 0.1, -0.2})), 4.5);
  const CostSpec c0 = CostSpec::linear_quadratic(Eigen::MatrixXd::Identity(3, 3), {}, pauli_z(), pauli_z());
  EXPECT_NEAR(running_cost(c0, 0.0, Control::Zero(3), qubit_state({0, 0, 0.6})), 0.6, 1e-15);
}

TEST(RunningCost, GeneralCallback) {
  const CostSpec c = CostSpec::general(
      3, [](double t, const Control& u, const Operator&) { return t + u.sum(); }, pauli_z());
  EXPECT_FALSE(c.is_linear_quadratic());
  EXPECT_DOUBLE_EQ(running_cost(c, 1.5, Control(Vec3(1, 1, 1)), qubit_state({0, 0, 0})), 4.5);
}

TEST(CostSpecType, Validation) {
  Eigen::MatrixXd g(2, 2);
  g << 1, 0.2, 0.2, -1;
  EXPECT_THROW(CostSpec::linear_quadratic(g, {}, Operator::Zero(2, 2), pauli_z()), ValidationError);
  EXPECT_THROW(CostSpec::quadratic_effort(3, Operator(2.0 * Operator::Identity(2, 2) + Complex(0, 1) * pauli_x())),
               ValidationError);
  Eigen::MatrixXd ok(2, 2);
  ok << 2, 0.5, 0.5, 1;
  const CostSpec c = CostSpec::linear_quadratic(ok, {}, Operator::Zero(2, 2), pauli_z());
  EXPECT_LE((c.metric() * c.metric_inverse() - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(KFunction, GaugeInvariance) {
  std::mt19937_64 rng(21);
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = effort();
  const Operator rho = random_density_matrix(2, rng).matrix();
  const Operator x = random_hermitian(2, rng);
  const Control u = random_control(m, rng);
  for (DriftKind kind : {DriftKind::Ito, DriftKind::Strat}) {
    const double k0 = k_function(m, c, 0.0, u, rho, x, kind, 0.0);
    EXPECT_NEAR(k_function(m, c, 0.0, u, rho, x, kind, 1.0), k0, 1e-12);
    EXPECT_NEAR(k_function(m, c, 0.0, u, rho, x, kind, -2.5), k0, 1e-12);
  }
}

TEST(KFunction, ZeroInputsGiveZero) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = CostSpec::quadratic_effort(3, pauli_z());
  EXPECT_NEAR(k_function(m, c, 0.0, m.zero_control(), qubit_state({0.2, 0.3, 0.1}), Operator::Zero(2, 2), DriftKind::Ito),
              0.0, 1e-15);
}

TEST(KFunction, QubitClosedForm) {
  std::mt19937_64 rng(22);
  const double kappa = 1.4;
  const ModelSpec m = ModelSpec::controlled_qubit(kappa);
  const CostSpec c = effort();
  for (int s = 0; s < 50; ++s) {
    const Vec3 p = random_ball(rng), q = random_ball(rng) * 3.0;
    const Control u = random_control(m, rng);
    const Vec3 uv = u;
    const double expect = -uv.dot(p.cross(q)) + 0.5 * kappa * kappa * (p.x() * q.x() + p.y() * q.y()) - 0.5 * uv.squaredNorm();
    EXPECT_NEAR(k_function(m, c, 0.0, u, qubit_state(p), pauli_vec(q), DriftKind::Ito), expect, 1e-11);
  }
}

TEST(OptimalControl, CrossProductRule) {
  std::mt19937_64 rng(23);
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = effort();
  const Control u = optimal_control_lq(m, c, qubit_state({1, 0, 0}), pauli_vec({0, 0, 1}));
  EXPECT_LE((Vec3(u) - Vec3(0, 1, 0)).norm(), 1e-15);
  for (int s = 0; s < 50; ++s) {
    const Vec3 p = random_ball(rng), q = random_ball(rng);
    EXPECT_LE((Vec3(optimal_control_lq(m, c, qubit_state(p), pauli_vec(q))) - q.cross(p)).norm(), 1e-14);
  }
}

TEST(OptimalControl, ClippedToBox) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0, 0.5);
  const Control u = optimal_control_lq(m, effort(), qubit_state({1, 0, 0}), pauli_vec({0, 0, 10}));
  EXPECT_TRUE(m.in_box(u));
  EXPECT_DOUBLE_EQ(u(1), 0.5);
}

TEST(OptimalControl, StationaryPointOfObjective) {
  std::mt19937_64 rng(24);
  const ModelSpec m(random_hermitian(3, rng), {random_hermitian(3, rng), random_hermitian(3, rng)}, {},
                    0.3 * random_hermitian(3, rng), {1e3, 1e3});
  Eigen::MatrixXd g(2, 2);
  g << 2.0, 0.3, 0.3, 1.0;
  const CostSpec c = CostSpec::linear_quadratic(g, {random_hermitian(3, rng), random_hermitian(3, rng)},
                                                random_hermitian(3, rng), random_hermitian(3, rng));
  const Operator p = random_density_matrix(3, rng).matrix();
  const Operator q = random_hermitian(3, rng);
  const Control u = optimal_control_lq(m, c, p, q);
  auto phi = [&](const Control& v) {
    return running_cost(c, 0.0, v, p) + pairing(ito_drift(m, 0.0, v, p), q).real();
  };
  for (int a = 0; a < 2; ++a) {
    Control e = Control::Zero(2);
    e(a) = 1e-4;
    EXPECT_NEAR((phi(u + e) - phi(u - e)) / 2e-4, 0.0, 1e-7);
  }
}

TEST(SuperHamiltonian, PoleValue) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const auto h = super_hamiltonian(m, effort(), 0.0, qubit_state({0, 0, 1}), pauli_vec({0, 0, 1}), DriftKind::Ito);
  EXPECT_NEAR(h.value, 0.0, 1e-15);
  EXPECT_LE(Vec3(h.argmax).norm(), 1e-15);
}

TEST(SuperHamiltonian, QubitClosedForm) {
  std::mt19937_64 rng(25);
  const double kappa = 0.9;
  const ModelSpec m = ModelSpec::controlled_qubit(kappa);
  for (int s = 0; s < 30; ++s) {
    const Vec3 p = random_ball(rng), q = random_ball(rng);
    const double expect = 0.5 * q.cross(p).squaredNorm() + 0.5 * kappa * kappa * (p.x() * q.x() + p.y() * q.y());
    EXPECT_NEAR(super_hamiltonian(m, effort(), 0.0, qubit_state(p), pauli_vec(q), DriftKind::Ito).value, expect, 1e-12);
  }
}

TEST(SuperHamiltonian, ItoStratDifferenceIsCorrectionPairing) {
  std::mt19937_64 rng(26);
  const ModelSpec m = ModelSpec::controlled_qubit(1.2);
  for (int s = 0; s < 30; ++s) {
    const Operator rho = random_density_matrix(2, rng).matrix();
    const Operator x = random_hermitian(2, rng);
    const double hw = super_hamiltonian(m, effort(), 0.0, rho, x, DriftKind::Ito).value;
    const double hv = super_hamiltonian(m, effort(), 0.0, rho, x, DriftKind::Strat).value;
    EXPECT_NEAR(hw - hv, -pairing(strat_correction(m, rho), x).real(), 1e-10);
  }
}

TEST(SuperHamiltonian, GeneralLqClosedForm) {
  std::mt19937_64 rng(27);
  const Operator l = 0.5 * random_hermitian(3, rng) + Complex(0, 0.2) * random_hermitian(3, rng);
  const Operator r = 0.4 * random_hermitian(3, rng);
  const std::vector<Operator> v{random_hermitian(3, rng), random_hermitian(3, rng)};
  const ModelSpec m(Operator::Zero(3, 3), v, {r}, l, {1e4, 1e4});
  Eigen::MatrixXd g(2, 2);
  g << 1.5, 0.2, 0.2, 0.8;
  const std::vector<Operator> f{random_hermitian(3, rng), random_hermitian(3, rng)};
  const Operator c0 = random_hermitian(3, rng);
  const CostSpec c = CostSpec::linear_quadratic(g, f, c0, random_hermitian(3, rng));
  const Eigen::MatrixXd gi = g.inverse();
  for (int s = 0; s < 10; ++s) {
    const Operator p = random_density_matrix(3, rng).matrix();
    const Operator q = random_hermitian(3, rng);
    Eigen::Vector2d a;
    for (int k = 0; k < 2; ++k) {
      const Operator comm = q * v[k] - v[k] * q;
      a(k) = (p * (f[k] + Complex(0, -1) * comm)).trace().real();
    }
    const Operator gen = c0 + oracle::lindblad(r, q) + oracle::lindblad(l, q);
    const double expect = 0.5 * a.dot(gi * a) - (p * gen).trace().real();
    EXPECT_NEAR(super_hamiltonian(m, c, 0.0, p, q, DriftKind::Ito).value, expect, 1e-10 * (1.0 + std::abs(expect)));
  }
}

TEST(SuperHamiltonian, GenericSearchFindsLqMaximizer) {
  std::mt19937_64 rng(28);
  const ModelSpec m = ModelSpec::controlled_qubit(1.0, 2.0);
  const CostSpec lq = effort();
  const CostSpec gen = CostSpec::general(
      3, [&](double t, const Control& u, const Operator& rho) { return running_cost(lq, t, u, rho); }, lq.terminal());
  for (int s = 0; s < 5; ++s) {
    const Operator rho = qubit_state(random_ball(rng));
    const Operator x = pauli_vec(random_ball(rng));
    const auto a = super_hamiltonian(m, lq, 0.0, rho, x, DriftKind::Ito);
    const auto b = super_hamiltonian(m, gen, 0.0, rho, x, DriftKind::Ito);
    EXPECT_NEAR(a.value, b.value, 1e-8);
    EXPECT_LE((a.argmax - b.argmax).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(HamiltonianGradients, CostateGradientIsMinusDrift) {
  std::mt19937_64 rng(29);
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = effort();
  for (int s = 0; s < 10; ++s) {
    const Operator p = random_density_matrix(2, rng).matrix();
    const Operator q = 0.5 * random_hermitian(2, rng);
    const Control u = optimal_control_lq(m, c, p, q);
    const HamiltonianGradients g = hamiltonian_gradients(m, c, 0.0, p, q, DriftKind::Ito);
    EXPECT_LE(max_abs(g.grad_q + traceless_part(ito_drift(m, 0.0, u, p))), 1e-7);
    const HamiltonianGradients e = hamiltonian_gradients_fixed_control(m, c, 0.0, u, p, q, DriftKind::Ito);
    EXPECT_LE(max_abs(g.grad_p - e.grad_p), 1e-6);
  }
}

TEST(HamiltonianGradients, PoleIsFinite) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const Operator s = 0.5 * (identity(2) - pauli_z());
  const HamiltonianGradients g = hamiltonian_gradients(m, effort(), 0.0, qubit_state({0, 0, 1}), s, DriftKind::Ito);
  EXPECT_TRUE(all_finite(g.grad_p));
  EXPECT_TRUE(all_finite(g.grad_q));
}

TEST(HamiltonianGradients, DirectionalDerivativeMatchesSecant) {
  std::mt19937_64 rng(30);
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const CostSpec c = effort();
  const Operator p = random_density_matrix(2, rng).matrix();
  const Operator q = random_hermitian(2, rng);
  const Operator tau = traceless_part(random_hermitian(2, rng));
  const HamiltonianGradients g = hamiltonian_gradients(m, c, 0.0, p, q, DriftKind::Ito);
  const double h = 1e-5;
  auto hq = [&](const Operator& x) { return super_hamiltonian(m, c, 0.0, p, x, DriftKind::Ito).value; };
  auto hp = [&](const Operator& x) { return super_hamiltonian(m, c, 0.0, x, q, DriftKind::Ito).value; };
  const double sq = (hq(q + h * tau) - hq(q - h * tau)) / (2 * h);
  const double sp = (hp(p + h * tau) - hp(p - h * tau)) / (2 * h);
  EXPECT_NEAR(pairing(tau, g.grad_q).real(), sq, 1e-6 * (1.0 + std::abs(sq)));
  EXPECT_NEAR(pairing(tau, g.grad_p).real(), sp, 1e-6 * (1.0 + std::abs(sp)));
}

TEST(Pontryagin, RabiRotationResidualIsSecondOrder) {
  const double omega = 1.3, T = 1.0;
  const ModelSpec m(0.5 * omega * pauli_y(), {}, {}, Operator::Zero(2, 2), {});
  const CostSpec c = CostSpec::quadratic_effort(0, pauli_z());
  const Vec3 p0(0.6, 0.1, 0.7);
  double prev = 1e9;
  for (int k : {50, 100, 200}) {
    CostateRecord rec;
    const double dt = T / k;
    for (int i = 0; i <= k; ++i) {
      const double t = i * dt;
      rec.times.push_back(t);
      rec.states.push_back(DensityMatrix(qubit_state(oracle::rotate_y(p0, omega * t))));
      rec.costates.push_back(pauli_vec(oracle::rotate_y({0, 0, 1}, omega * (t - T))));
    }
    const PontryaginResidual r = pontryagin_residual(m, c, rec, DriftKind::Ito);
    EXPECT_LE(r.res_p, 0.5 * dt * dt);
    EXPECT_LE(r.res_q, 0.5 * dt * dt);
    EXPECT_LT(r.res_p, prev);
    prev = r.res_p;
  }
}

TEST(Pontryagin, ConstantRecordInTrivialModel) {
  const ModelSpec m(Operator::Zero(2, 2), {}, {}, Operator::Zero(2, 2), {});
  const CostSpec c = CostSpec::quadratic_effort(0, pauli_x());
  CostateRecord rec;
  for (int i = 0; i < 5; ++i) {
    rec.times.push_back(0.1 * i);
    rec.states.push_back(DensityMatrix(qubit_state({0.1, 0.2, 0.3})));
    rec.costates.push_back(pauli_vec({0.4, -0.2, 0.1}));
  }
  const PontryaginResidual r = pontryagin_residual(m, c, rec, DriftKind::Ito);
  EXPECT_NEAR(r.res_p, 0.0, 1e-12);
  EXPECT_NEAR(r.res_q, 0.0, 1e-12);
}

TEST(Pontryagin, NonUniformMeshRejected) {
  const ModelSpec m(Operator::Zero(2, 2), {}, {}, Operator::Zero(2, 2), {});
  const CostSpec c = CostSpec::quadratic_effort(0, pauli_x());
  CostateRecord rec;
  for (double t : {0.0, 0.1, 0.25}) {
    rec.times.push_back(t);
    rec.states.push_back(DensityMatrix::maximally_mixed(2));
    rec.costates.push_back(pauli_z());
  }
  EXPECT_THROW(pontryagin_residual(m, c, rec, DriftKind::Ito), ValidationError);
}

TEST(ArgminInvariance, NoiseOffsetDoesNotMoveMinimizer) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const ArgminInvarianceResult r = argmin_invariance_check(m, effort(), 100, {0.0, 5.0, -5.0}, 31, 1e-9);
  EXPECT_TRUE(r.passed);
  EXPECT_LE(r.max_deviation, 1e-9);
}

TEST(GridSearch, ClosedFormWithinOneCell) {
  const ModelSpec m = ModelSpec::controlled_qubit(1.0);
  const GridSearchResult r = lq_grid_search_check(m, effort(), 10, 31, 3.0, DriftKind::Strat, 32, 1);
  EXPECT_TRUE(r.passed);
  EXPECT_LE(r.max_cells, 1.0);
}
