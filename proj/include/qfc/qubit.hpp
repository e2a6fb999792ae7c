#pragma once

// Bloch-ball representation of a qubit: rho = 1/2 (I + p.sigma), observables
// q0 + q.sigma, duality <rho, Q> = q0 + q.p.

#include <algorithm>
#include <array>
#include <cmath>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qfc/control.hpp"

namespace qfc {

using Vec3 = Eigen::Vector3d;

inline constexpr double kBlochSlack = 1e-9;

struct BlochPoint {
  Vec3 p = Vec3::Zero();

  static BlochPoint checked(const Vec3& v) {
    if (!v.allFinite() || v.norm() > 1.0 + kBlochSlack) throw ValidationError("Bloch vector outside the unit ball");
    return BlochPoint{v};
  }
  double x() const { return p.x(); }
  double y() const { return p.y(); }
  double z() const { return p.z(); }
};

/// 1/2 (I + p.sigma) for any p (no ball check; used on perturbed points).
inline Operator bloch_matrix(const Vec3& p) {
  Operator m = 0.5 * identity(2);
  for (int i = 0; i < 3; ++i) m += 0.5 * p(i) * pauli(i);
  return m;
}

/// q0 I + q.sigma.
inline Operator bloch_observable(double q0, const Vec3& q) {
  Operator m = q0 * identity(2);
  for (int i = 0; i < 3; ++i) m += q(i) * pauli(i);
  return m;
}

/// Components (q0, q) of a Hermitian 2x2 observable: q0 = tr X / 2, q_i = tr(X sigma_i) / 2.
inline std::pair<double, Vec3> observable_components(const Operator& x) {
  if (x.rows() != 2 || x.cols() != 2) throw ValidationError("observable_components: need a 2x2 operator");
  Vec3 q;
  for (int i = 0; i < 3; ++i) q(i) = 0.5 * pairing(x, pauli(i)).real();
  return {0.5 * x.trace().real(), q};
}

/// Bloch components of an arbitrary 2x2 matrix: a_i = tr(A sigma_i).
inline Vec3 bloch_components(const Operator& a) {
  Vec3 v;
  for (int i = 0; i < 3; ++i) v(i) = (a * pauli(i)).trace().real();
  return v;
}

inline BlochPoint bloch_from_state(const DensityMatrix& rho) {
  if (rho.dim() != 2) throw ValidationError("bloch_from_state: state is not a qubit");
  return BlochPoint{bloch_components(rho.matrix())};
}

inline DensityMatrix state_from_bloch(const BlochPoint& b) {
  if (!b.p.allFinite() || b.p.norm() > 1.0 + kBlochSlack) throw ValidationError("state_from_bloch: |p| > 1");
  Operator m = bloch_matrix(b.p);
  if (b.p.norm() > 1.0) {
    // inside the slack: rescale onto the sphere so the PSD check passes
    m = bloch_matrix(b.p / b.p.norm());
  }
  return DensityMatrix(std::move(m));
}

/// Radial projection into the closed ball.
inline Vec3 project_to_ball(const Vec3& p) {
  const double r = p.norm();
  return r > 1.0 ? Vec3(p / r) : p;
}

struct QubitCoefficients {
  Vec3 drift;  // b_i = <w, sigma_i>
  Vec3 noise;  // s_i = <sigma, sigma_i>
};

/// Bloch drift and noise vectors read off the operator-level coefficients.
inline QubitCoefficients qubit_coefficients(const ModelSpec& m, const Control& u, const BlochPoint& b) {
  if (m.dim() != 2) throw ValidationError("qubit_coefficients: model is not a qubit");
  const DensityMatrix rho = state_from_bloch(b);
  return {bloch_components(ito_drift(m, 0.0, u, rho)), bloch_components(diffusion(m, rho))};
}

/// Everything the HJB sweep needs in Bloch coordinates, probed once from the
/// operator-level model and LQ cost:
///   b(u, p) = A p + c + sum_a u_a B_a p
///   s(p)    = M p + m - (l0 + l.p) p
///   C(u, p) = 1/2 u.g.u + sum_a u_a (f0_a + f_a.p) + c0 + c.p
///   S_T(p)  = s0 + s.p
struct BlochReduction {
  Eigen::Matrix3d drift_matrix;
  Vec3 drift_offset;
  std::vector<Eigen::Matrix3d> control_generators;
  Eigen::Matrix3d noise_matrix;
  Vec3 noise_offset;
  double noise_mean0 = 0.0;
  Vec3 noise_mean;
  Eigen::MatrixXd g;
  Eigen::MatrixXd g_inv;
  Eigen::VectorXd f0;
  Eigen::MatrixXd f;  // m x 3
  double c00 = 0.0;
  Vec3 c0;
  double s0 = 0.0;
  Vec3 s;
  std::vector<double> u_max;
  bool diagonal_metric = true;

  static BlochReduction build(const ModelSpec& model, const CostSpec& cost) {
    if (model.dim() != 2) throw ValidationError("HJB grid solver supports n=2 only");
    if (!cost.is_linear_quadratic()) throw ValidationError("HJB grid solver needs a linear-quadratic cost");
    require_compatible(model, cost);
    BlochReduction r;
    const std::size_t nu = model.num_controls();
    const Control zero = model.zero_control();

    r.drift_offset = bloch_components(ito_drift(model, 0.0, zero, bloch_matrix(Vec3::Zero())));
    for (int j = 0; j < 3; ++j) {
      const Vec3 e = Vec3::Unit(j);
      r.drift_matrix.col(j) = bloch_components(ito_drift(model, 0.0, zero, bloch_matrix(e))) - r.drift_offset;
    }
    for (std::size_t a = 0; a < nu; ++a) {
      Eigen::Matrix3d gen;
      const Operator& v = model.control_operators()[a];
      for (int j = 0; j < 3; ++j)
        gen.col(j) = bloch_components(Complex(0, 1) * commutator(bloch_matrix(Vec3::Unit(j)), v) -
                                      Complex(0, 1) * commutator(bloch_matrix(Vec3::Zero()), v));
      r.control_generators.push_back(gen);
    }

    const Operator& l = model.coupling();
    const Operator ls = l + l.adjoint();
    r.noise_mean0 = 0.5 * ls.trace().real();
    for (int j = 0; j < 3; ++j) r.noise_mean(j) = 0.5 * (pauli(j) * ls).trace().real();
    for (int i = 0; i < 3; ++i) {
      const Operator k = pauli(i) * l + l.adjoint() * pauli(i);
      r.noise_offset(i) = 0.5 * k.trace().real();
      for (int j = 0; j < 3; ++j) r.noise_matrix(i, j) = 0.5 * (pauli(j) * k).trace().real();
    }

    r.g = cost.metric();
    r.g_inv = cost.metric_inverse();
    const auto m = static_cast<Eigen::Index>(nu);
    r.f0 = Eigen::VectorXd::Zero(m);
    r.f = Eigen::MatrixXd::Zero(m, 3);
    for (std::size_t a = 0; a < cost.linear_terms().size(); ++a) {
      const auto [q0, q] = observable_components(cost.linear_terms()[a]);
      r.f0(static_cast<Eigen::Index>(a)) = q0;
      r.f.row(static_cast<Eigen::Index>(a)) = q.transpose();
    }
    std::tie(r.c00, r.c0) = observable_components(cost.constant_term());
    std::tie(r.s0, r.s) = observable_components(cost.terminal());
    r.u_max = model.u_max();
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        if (i != j && r.g(i, j) != 0.0) r.diagonal_metric = false;
    return r;
  }

  std::size_t num_controls() const { return control_generators.size(); }

  Vec3 drift(const Eigen::VectorXd& u, const Vec3& p) const {
    Vec3 b = drift_matrix * p + drift_offset;
    for (std::size_t a = 0; a < control_generators.size(); ++a)
      b += u(static_cast<Eigen::Index>(a)) * (control_generators[a] * p);
    return b;
  }

  Vec3 noise(const Vec3& p) const {
    return noise_matrix * p + noise_offset - (noise_mean0 + noise_mean.dot(p)) * p;
  }

  /// Minimizer of C(u,p) + b(u,p).q, clipped componentwise to the box.
  Eigen::VectorXd optimal_control(const Vec3& p, const Vec3& q) const {
    const auto m = static_cast<Eigen::Index>(num_controls());
    Eigen::VectorXd a(m);
    for (Eigen::Index k = 0; k < m; ++k)
      a(k) = f0(k) + f.row(k).dot(p) + (control_generators[static_cast<std::size_t>(k)] * p).dot(q);
    Eigen::VectorXd u = -(g_inv * a);
    for (Eigen::Index k = 0; k < m; ++k) {
      const double um = u_max[static_cast<std::size_t>(k)];
      u(k) = std::clamp(u(k), -um, um);
    }
    return u;
  }

  double running_cost(const Eigen::VectorXd& u, const Vec3& p) const {
    double v = 0.5 * u.dot(g * u) + c00 + c0.dot(p);
    if (u.size() > 0) v += u.dot(f0 + f * p);
    return v;
  }

  double terminal(const Vec3& p) const { return s0 + s.dot(p); }

  /// Upper bound of |b| over |p| <= radius for controls inside the box.
  double drift_bound(double radius) const {
    double ctrl = 0.0;
    for (std::size_t a = 0; a < control_generators.size(); ++a)
      ctrl += u_max[a] * control_generators[a].operatorNorm();
    return (drift_matrix.operatorNorm() + ctrl) * radius + drift_offset.norm();
  }
};

}  // namespace qfc
