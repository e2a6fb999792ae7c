#pragma once

// Finite-dimensional operator algebra: dense complex matrices standing in for
// bounded operators, validated density matrices and tangent directions, the
// trace duality, Lindblad maps and numeric Frechet derivatives.

#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qfc/errors.hpp"

namespace qfc {

using Complex = std::complex<double>;
using Operator = Eigen::MatrixXcd;

/// Numerical tolerances shared by every validated type.
struct Tolerances {
  double herm = 1e-12;  // entrywise |A - A^dagger|
  double trace = 1e-10; // |tr rho - 1| or |tr tau|
  double psd = 1e-10;   // allowed negative eigenvalue
};

inline constexpr Tolerances kDefaultTolerances{};

inline void require_same_dim(const Operator& a, const Operator& b, const char* where) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows()) {
    throw ValidationError(std::string(where) + ": dimension mismatch (" +
                          std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                          std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
  }
}

inline bool all_finite(const Operator& a) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a.data()[i].real()) || !std::isfinite(a.data()[i].imag())) return false;
  }
  return true;
}

inline bool is_hermitian(const Operator& a, double tol = kDefaultTolerances.herm) {
  if (a.rows() != a.cols()) return false;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = i; j < a.cols(); ++j) {
      if (std::abs(a(i, j) - std::conj(a(j, i))) > tol) return false;
    }
  }
  return true;
}

inline Operator hermitian_part(const Operator& a) { return 0.5 * (a + a.adjoint()); }

inline Operator identity(Eigen::Index n) { return Operator::Identity(n, n); }

inline Operator traceless_part(const Operator& a) {
  const Eigen::Index n = a.rows();
  return a - (a.trace() / static_cast<double>(n)) * identity(n);
}

inline Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }
inline Operator anticommutator(const Operator& a, const Operator& b) { return a * b + b * a; }

// Pauli matrices.
inline Operator pauli_x() {
  Operator m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}
inline Operator pauli_y() {
  Operator m(2, 2);
  m << 0, Complex(0, -1), Complex(0, 1), 0;
  return m;
}
inline Operator pauli_z() {
  Operator m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}
inline Operator pauli(int axis) {
  switch (axis) {
    case 0: return pauli_x();
    case 1: return pauli_y();
    case 2: return pauli_z();
    default: throw ValidationError("pauli: axis must be 0, 1 or 2");
  }
}

/// Eigenvalues of a Hermitian matrix in ascending order. 2x2 uses the closed form.
inline Eigen::VectorXd hermitian_eigenvalues(const Operator& a) {
  if (a.rows() == 2) {
    const double p = a(0, 0).real();
    const double q = a(1, 1).real();
    const double mean = 0.5 * (p + q);
    const double half = 0.5 * (p - q);
    const double r = std::sqrt(half * half + std::norm(a(0, 1)));
    Eigen::VectorXd ev(2);
    ev << mean - r, mean + r;
    return ev;
  }
  Eigen::SelfAdjointEigenSolver<Operator> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double min_eigenvalue(const Operator& a) { return hermitian_eigenvalues(a)(0); }

inline double trace_norm(const Operator& a) {
  if (is_hermitian(a, 1e-9)) return hermitian_eigenvalues(hermitian_part(a)).cwiseAbs().sum();
  Eigen::JacobiSVD<Operator> svd(a);
  return svd.singularValues().sum();
}

inline double operator_norm(const Operator& a) {
  if (is_hermitian(a, 1e-9)) return hermitian_eigenvalues(hermitian_part(a)).cwiseAbs().maxCoeff();
  Eigen::JacobiSVD<Operator> svd(a);
  return svd.singularValues()(0);
}

/// A normalized quantum state: Hermitian, unit trace, positive semidefinite.
class DensityMatrix {
 public:
  explicit DensityMatrix(Operator m, const Tolerances& tol = kDefaultTolerances) : m_(std::move(m)) {
    validate(tol);
  }

  /// Wraps a matrix the caller has already normalized (integrators, after
  /// their own Hermitize/renormalize/project pass). Only finiteness is checked.
  static DensityMatrix adopt(Operator m) {
    if (!all_finite(m)) throw NumericalError("DensityMatrix: non-finite entries");
    DensityMatrix d;
    d.m_ = std::move(m);
    return d;
  }

  static DensityMatrix maximally_mixed(Eigen::Index n) {
    return DensityMatrix(identity(n) / static_cast<double>(n));
  }

  const Operator& matrix() const noexcept { return m_; }
  Eigen::Index dim() const noexcept { return m_.rows(); }
  double purity() const { return (m_ * m_).trace().real(); }

 private:
  DensityMatrix() = default;

  void validate(const Tolerances& tol) const {
    if (m_.rows() == 0 || m_.rows() != m_.cols()) throw ValidationError("DensityMatrix: must be square and non-empty");
    if (!all_finite(m_)) throw ValidationError("DensityMatrix: non-finite entries");
    if (!is_hermitian(m_, tol.herm)) throw ValidationError("DensityMatrix: not Hermitian");
    if (std::abs(m_.trace() - Complex(1.0)) > tol.trace) throw ValidationError("DensityMatrix: trace is not 1");
    if (min_eigenvalue(hermitian_part(m_)) < -tol.psd) throw ValidationError("DensityMatrix: not positive semidefinite");
  }

  Operator m_;
};

/// A direction in the state space: Hermitian and traceless.
class TangentState {
 public:
  explicit TangentState(Operator m, const Tolerances& tol = kDefaultTolerances) : m_(std::move(m)) {
    if (m_.rows() == 0 || m_.rows() != m_.cols()) throw ValidationError("TangentState: must be square and non-empty");
    if (!all_finite(m_)) throw ValidationError("TangentState: non-finite entries");
    if (!is_hermitian(m_, tol.herm)) throw ValidationError("TangentState: not Hermitian");
    if (std::abs(m_.trace()) > tol.trace) throw ValidationError("TangentState: not traceless");
  }
  const Operator& matrix() const noexcept { return m_; }
  Eigen::Index dim() const noexcept { return m_.rows(); }

 private:
  Operator m_;
};

/// tr{rho X}. The imaginary part is dropped when both arguments are Hermitian
/// and it is below 1e-12, so costs and values come out real.
inline Complex pairing(const Operator& rho, const Operator& x) {
  require_same_dim(rho, x, "pairing");
  Complex s = 0.0;
  const Eigen::Index n = rho.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < n; ++k) s += rho(i, k) * x(k, i);
  }
  if (std::abs(s.imag()) <= 1e-12 && is_hermitian(rho) && is_hermitian(x)) s.imag(0.0);
  return s;
}
inline Complex pairing(const DensityMatrix& rho, const Operator& x) { return pairing(rho.matrix(), x); }

/// Real part of the pairing; the usual entry point for costs and values.
inline double pairing_re(const Operator& rho, const Operator& x) { return pairing(rho, x).real(); }
inline double pairing_re(const DensityMatrix& rho, const Operator& x) { return pairing(rho.matrix(), x).real(); }

/// L_R(X) = R^dagger X R - 1/2 R^dagger R X - 1/2 X R^dagger R  (Heisenberg picture).
inline Operator lindblad_apply(const Operator& r, const Operator& x) {
  require_same_dim(r, x, "lindblad_apply");
  const Operator rd = r.adjoint();
  const Operator rdr = rd * r;
  return rd * x * r - 0.5 * (rdr * x + x * rdr);
}

/// L'_R(rho) = R rho R^dagger - 1/2 {R^dagger R, rho}  (Schroedinger picture, trace-free).
inline Operator lindblad_apply_predual(const Operator& r, const Operator& rho) {
  require_same_dim(r, rho, "lindblad_apply_predual");
  const Operator rd = r.adjoint();
  const Operator rdr = rd * r;
  return r * rho * rd - 0.5 * (rdr * rho + rho * rdr);
}
inline Operator lindblad_apply_predual(const Operator& r, const DensityMatrix& rho) {
  return lindblad_apply_predual(r, rho.matrix());
}

/// Orthonormal basis of traceless Hermitian n x n matrices, tr(B_j B_k) = delta_jk.
/// Off-diagonal symmetric/antisymmetric pairs first, then the diagonal ones;
/// for n = 2 this is (sigma_x, sigma_y, sigma_z)/sqrt(2).
inline std::vector<Operator> traceless_hermitian_basis(Eigen::Index n) {
  std::vector<Operator> basis;
  basis.reserve(static_cast<std::size_t>(n * n - 1));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = j + 1; k < n; ++k) {
      Operator s = Operator::Zero(n, n);
      s(j, k) = inv_sqrt2;
      s(k, j) = inv_sqrt2;
      basis.push_back(s);
      Operator a = Operator::Zero(n, n);
      a(j, k) = Complex(0, -inv_sqrt2);
      a(k, j) = Complex(0, inv_sqrt2);
      basis.push_back(a);
    }
  }
  for (Eigen::Index l = 1; l < n; ++l) {
    Operator d = Operator::Zero(n, n);
    const double norm = 1.0 / std::sqrt(static_cast<double>(l * (l + 1)));
    for (Eigen::Index j = 0; j < l; ++j) d(j, j) = norm;
    d(l, l) = -static_cast<double>(l) * norm;
    basis.push_back(d);
  }
  return basis;
}

/// A (possibly nonlinear) real functional on states. It is evaluated on
/// perturbed matrices that may leave the state set, so it takes a raw Operator.
struct StateFunctional {
  std::function<double(const Operator&)> value;
  std::function<Operator(const Operator&)> gradient;  // optional analytic gradient

  double operator()(const Operator& rho) const { return value(rho); }
};

inline constexpr double kDefaultDiffStep = 1e-4;

inline double eval_finite(const StateFunctional& f, const Operator& rho) {
  const double v = f.value(rho);
  if (!std::isfinite(v)) throw NumericalError("functional returned a non-finite value");
  return v;
}

/// Numeric Frechet gradient by central differences along the traceless
/// Hermitian basis. The result is the traceless Hermitian representative.
inline Operator frechet_gradient(const StateFunctional& f, const Operator& rho, double h = kDefaultDiffStep) {
  if (!(h > 0.0)) throw ValidationError("frechet_gradient: step must be positive");
  const Eigen::Index n = rho.rows();
  Operator g = Operator::Zero(n, n);
  for (const Operator& b : traceless_hermitian_basis(n)) {
    const double d = (eval_finite(f, rho + h * b) - eval_finite(f, rho - h * b)) / (2.0 * h);
    g += d * b;
  }
  return g;
}
inline Operator frechet_gradient(const StateFunctional& f, const DensityMatrix& rho, double h = kDefaultDiffStep) {
  return frechet_gradient(f, rho.matrix(), h);
}

/// Mixed second derivative <tau1 (x) tau2, (delta (x) delta) F> from the
/// centered four-point stencil; exactly symmetric in (tau1, tau2).
inline double hessian_bilinear(const StateFunctional& f, const Operator& rho, const Operator& tau1,
                               const Operator& tau2, double h = kDefaultDiffStep) {
  if (!(h > 0.0)) throw ValidationError("hessian_bilinear: step must be positive");
  require_same_dim(rho, tau1, "hessian_bilinear");
  require_same_dim(rho, tau2, "hessian_bilinear");
  const Operator plus = tau1 + tau2;
  const Operator minus = tau1 - tau2;
  const double fpp = eval_finite(f, rho + h * plus);
  const double fmm = eval_finite(f, rho - h * plus);
  const double fpm = eval_finite(f, rho + h * minus);
  const double fmp = eval_finite(f, rho - h * minus);
  return (fpp + fmm - fpm - fmp) / (4.0 * h * h);
}
inline double hessian_bilinear(const StateFunctional& f, const DensityMatrix& rho, const TangentState& tau1,
                               const TangentState& tau2, double h = kDefaultDiffStep) {
  return hessian_bilinear(f, rho.matrix(), tau1.matrix(), tau2.matrix(), h);
}

/// Max relative deviation between an analytic gradient (traceless part) and the
/// numeric one at rho; 0 when no analytic gradient is supplied.
inline double gradient_mismatch(const StateFunctional& f, const Operator& rho, double h = kDefaultDiffStep) {
  if (!f.gradient) return 0.0;
  const Operator numeric = frechet_gradient(f, rho, h);
  const Operator analytic = traceless_part(hermitian_part(f.gradient(rho)));
  const double scale = std::max(1.0, analytic.cwiseAbs().maxCoeff());
  return (numeric - analytic).cwiseAbs().maxCoeff() / scale;
}

/// Linear functional rho -> Re tr{rho X}.
inline StateFunctional linear_functional(const Operator& x) {
  return StateFunctional{[x](const Operator& rho) { return pairing(rho, x).real(); },
                         [x](const Operator&) { return x; }};
}

}  // namespace qfc
