#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qfc/errors.hpp"
#include "qfc/operator.hpp"

namespace qfc {

using Control = Eigen::VectorXd;

/// How the measurement coupling enters the Ito drift.
///  - Operator: w contains L'_L(rho) exactly as derived from L.
///  - Printed:  the L'_L dissipator is divided by kappa = 2 ||L||_op, which for
///              L = kappa/2 sigma_z turns the Bloch dephasing rate kappa^2/2 into
///              kappa/2. The diffusion sigma(rho) is unchanged.
enum class CouplingConvention { Operator, Printed };

inline std::string to_string(CouplingConvention c) {
  return c == CouplingConvention::Operator ? "operator" : "printed";
}

inline CouplingConvention convention_from_string(const std::string& s) {
  if (s == "operator") return CouplingConvention::Operator;
  if (s == "printed") return CouplingConvention::Printed;
  throw ValidationError("unknown coupling_convention '" + s + "' (expected operator|printed)");
}

/// Controlled filtering model: H(u) = H0 + u^a V_a, dissipators R, coupling L,
/// control box prod [-u_max_a, u_max_a].
class ModelSpec {
 public:
  ModelSpec(Operator h0, std::vector<Operator> controls, std::vector<Operator> dissipators, Operator coupling,
            std::vector<double> u_max, CouplingConvention convention = CouplingConvention::Operator,
            const Tolerances& tol = kDefaultTolerances)
      : h0_(std::move(h0)),
        v_(std::move(controls)),
        r_(std::move(dissipators)),
        l_(std::move(coupling)),
        u_max_(std::move(u_max)),
        convention_(convention),
        tol_(tol) {
    validate();
    dephasing_scale_ = 1.0;
    if (convention_ == CouplingConvention::Printed) {
      const double kappa = 2.0 * operator_norm(l_);
      dephasing_scale_ = kappa > 0.0 ? 1.0 / kappa : 1.0;
    }
  }

  Eigen::Index dim() const noexcept { return h0_.rows(); }
  std::size_t num_controls() const noexcept { return v_.size(); }
  const Operator& drift_hamiltonian() const noexcept { return h0_; }
  const std::vector<Operator>& control_operators() const noexcept { return v_; }
  const std::vector<Operator>& dissipators() const noexcept { return r_; }
  const Operator& coupling() const noexcept { return l_; }
  const std::vector<double>& u_max() const noexcept { return u_max_; }
  CouplingConvention convention() const noexcept { return convention_; }
  const Tolerances& tolerances() const noexcept { return tol_; }
  // Factor multiplying L'_L in the Ito drift (1 for the operator convention).
  double dephasing_scale() const noexcept { return dephasing_scale_; }

  Operator hamiltonian(const Control& u) const {
    Operator h = h0_;
    for (std::size_t a = 0; a < v_.size(); ++a) h += u(static_cast<Eigen::Index>(a)) * v_[a];
    return h;
  }

  bool in_box(const Control& u, double slack = 1e-12) const {
    if (static_cast<std::size_t>(u.size()) != v_.size()) return false;
    for (std::size_t a = 0; a < v_.size(); ++a) {
      const double ua = u(static_cast<Eigen::Index>(a));
      if (!std::isfinite(ua) || std::abs(ua) > u_max_[a] * (1.0 + slack) + slack) return false;
    }
    return true;
  }

  Control clip(const Control& u) const {
    Control c(u.size());
    for (Eigen::Index a = 0; a < u.size(); ++a) {
      const double m = u_max_[static_cast<std::size_t>(a)];
      c(a) = std::clamp(u(a), -m, m);
    }
    return c;
  }

  Control zero_control() const { return Control::Zero(static_cast<Eigen::Index>(v_.size())); }

  /// Controlled qubit under continuous sigma_z readout: H(u) = u.sigma/2, no environment, L = kappa/2 sigma_z.
  static ModelSpec controlled_qubit(double kappa, double u_max = 10.0,
                                    CouplingConvention convention = CouplingConvention::Operator) {
    std::vector<Operator> v{0.5 * pauli_x(), 0.5 * pauli_y(), 0.5 * pauli_z()};
    return ModelSpec(Operator::Zero(2, 2), std::move(v), {}, 0.5 * kappa * pauli_z(),
                     std::vector<double>(3, u_max), convention);
  }

 private:
  void validate() const {
    const Eigen::Index n = h0_.rows();
    if (n < 1 || h0_.cols() != n) throw ValidationError("model.H0: must be a non-empty square matrix");
    if (!all_finite(h0_) || !is_hermitian(h0_, tol_.herm)) throw ValidationError("model.H0: must be finite and Hermitian");
    for (std::size_t a = 0; a < v_.size(); ++a) {
      require_same_dim(h0_, v_[a], "model.V");
      if (!all_finite(v_[a]) || !is_hermitian(v_[a], tol_.herm))
        throw ValidationError("model.V[" + std::to_string(a) + "]: must be finite and Hermitian");
    }
    for (const auto& r : r_) {
      require_same_dim(h0_, r, "model.R");
      if (!all_finite(r)) throw ValidationError("model.R: non-finite entries");
    }
    require_same_dim(h0_, l_, "model.L");
    if (!all_finite(l_)) throw ValidationError("model.L: non-finite entries");
    if (u_max_.size() != v_.size()) throw ValidationError("model.u_max: need one bound per control operator");
    for (double m : u_max_) {
      if (!(m > 0.0) || !std::isfinite(m)) throw ValidationError("model.u_max: bounds must be positive and finite");
    }
  }

  Operator h0_;
  std::vector<Operator> v_;
  std::vector<Operator> r_;
  Operator l_;
  std::vector<double> u_max_;
  CouplingConvention convention_;
  Tolerances tol_;
  double dephasing_scale_ = 1.0;
};

}  // namespace qfc
