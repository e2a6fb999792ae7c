#pragma once

// Coefficients of the filtering equation
//   d rho = w(t,u,rho) dt + sigma(rho) dW          (Ito)
//         = v(t,u,rho) dt + sigma(rho) o dW        (Stratonovich)
// and the generator of the filtered diffusion acting on state functionals.

#include <string>

#include "qfc/model.hpp"
#include "qfc/operator.hpp"

namespace qfc {

enum class DriftKind { Ito, Strat };

inline void require_state_dim(const ModelSpec& m, const Operator& rho, const char* where) {
  if (rho.rows() != m.dim() || rho.cols() != m.dim())
    throw ValidationError(std::string(where) + ": state dimension does not match the model");
}

inline void require_in_box(const ModelSpec& m, const Control& u, const char* where) {
  if (!m.in_box(u)) throw ValidationError(std::string(where) + ": control outside the admissible box");
}

/// <rho, L + L^dagger>, always real.
inline double coupling_mean(const ModelSpec& m, const Operator& rho) {
  const Operator& l = m.coupling();
  return pairing(rho, l + l.adjoint()).real();
}

/// Ito drift w = i[rho, H0 + u^a V_a] + sum L'_R(rho) + L'_L(rho).
inline Operator ito_drift(const ModelSpec& m, double /*t*/, const Control& u, const Operator& rho) {
  require_state_dim(m, rho, "ito_drift");
  require_in_box(m, u, "ito_drift");
  const Operator h = m.hamiltonian(u);
  Operator w = Complex(0, 1) * commutator(rho, h);
  for (const auto& r : m.dissipators()) w += lindblad_apply_predual(r, rho);
  w += m.dephasing_scale() * lindblad_apply_predual(m.coupling(), rho);
  return w;
}
inline Operator ito_drift(const ModelSpec& m, double t, const Control& u, const DensityMatrix& rho) {
  return ito_drift(m, t, u, rho.matrix());
}

/// sigma(rho) = L rho + rho L^dagger - <rho, L + L^dagger> rho.
inline Operator diffusion(const ModelSpec& m, const Operator& rho) {
  require_state_dim(m, rho, "diffusion");
  const Operator& l = m.coupling();
  return l * rho + rho * l.adjoint() - coupling_mean(m, rho) * rho;
}
inline Operator diffusion(const ModelSpec& m, const DensityMatrix& rho) { return diffusion(m, rho.matrix()); }

/// Ito-to-Stratonovich correction c with v = w - c:
/// c = 1/2 { L s + s L^dagger - <s, L+L^dagger> rho - <rho, L+L^dagger> s },  s = sigma(rho).
inline Operator strat_correction(const ModelSpec& m, const Operator& rho) {
  const Operator& l = m.coupling();
  const Operator ls = l + l.adjoint();
  const Operator s = diffusion(m, rho);
  return 0.5 * (l * s + s * l.adjoint() - pairing(s, ls).real() * rho - pairing(rho, ls).real() * s);
}
inline Operator strat_correction(const ModelSpec& m, const DensityMatrix& rho) {
  return strat_correction(m, rho.matrix());
}

/// Stratonovich drift in closed form:
///   v = i[rho, H] + sum L'_R(rho) + K rho + rho K^dagger + F rho,
///   K(rho) = -1/2 (L + L^dagger) L + <rho, L + L^dagger> L,
///   F(rho) = 1/2 <rho, L^2 + 2 L^dagger L + L^dagger^2> - <rho, L + L^dagger>^2.
/// Under the printed convention the rescaled part of L'_L is added back so
/// that v = w - c still holds.
inline Operator strat_drift(const ModelSpec& m, double /*t*/, const Control& u, const Operator& rho) {
  require_state_dim(m, rho, "strat_drift");
  require_in_box(m, u, "strat_drift");
  const Operator& l = m.coupling();
  const Operator ld = l.adjoint();
  const double mean = coupling_mean(m, rho);
  const Operator k = -0.5 * (l + ld) * l + mean * l;
  const double f = 0.5 * pairing(rho, l * l + 2.0 * ld * l + ld * ld).real() - mean * mean;

  Operator v = Complex(0, 1) * commutator(rho, m.hamiltonian(u));
  for (const auto& r : m.dissipators()) v += lindblad_apply_predual(r, rho);
  v += k * rho + rho * k.adjoint() + f * rho;
  if (m.dephasing_scale() != 1.0) v += (m.dephasing_scale() - 1.0) * lindblad_apply_predual(l, rho);
  return v;
}
inline Operator strat_drift(const ModelSpec& m, double t, const Control& u, const DensityMatrix& rho) {
  return strat_drift(m, t, u, rho.matrix());
}

inline Operator drift(const ModelSpec& m, DriftKind kind, double t, const Control& u, const Operator& rho) {
  return kind == DriftKind::Ito ? ito_drift(m, t, u, rho) : strat_drift(m, t, u, rho);
}

/// Second-order form: D F = <w, dF> + 1/2 <sigma (x) sigma, (d (x) d) F>.
inline double generator_apply_second_order(const ModelSpec& m, double t, const Control& u, const Operator& rho,
                                           const StateFunctional& f, double h = kDefaultDiffStep) {
  const Operator w = ito_drift(m, t, u, rho);
  const Operator s = diffusion(m, rho);
  const Operator grad = frechet_gradient(f, rho, h);
  return pairing(w, grad).real() + 0.5 * hessian_bilinear(f, rho, s, s, h);
}

/// Hormander form: D F = <v, dF> + 1/2 <sigma, d <sigma, dF>>, the outer
/// derivative taken numerically on the composite functional.
inline double generator_apply_hormander(const ModelSpec& m, double t, const Control& u, const Operator& rho,
                                        const StateFunctional& f, double h = kDefaultDiffStep) {
  const Operator v = strat_drift(m, t, u, rho);
  const Operator s = diffusion(m, rho);
  const Operator grad = frechet_gradient(f, rho, h);
  StateFunctional noise_derivative{[&m, &f, h](const Operator& r) {
                                     return pairing(diffusion(m, r), frechet_gradient(f, r, h)).real();
                                   },
                                   {}};
  const Operator outer = frechet_gradient(noise_derivative, rho, h);
  return pairing(v, grad).real() + 0.5 * pairing(s, outer).real();
}

}  // namespace qfc
