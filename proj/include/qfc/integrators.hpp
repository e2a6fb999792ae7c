#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "qfc/filtering.hpp"
#include "qfc/noise.hpp"

namespace qfc {

using ControlSchedule = std::function<Control(double t)>;
using FeedbackPolicy = std::function<Control(double t, const DensityMatrix& rho)>;

inline FeedbackPolicy zero_policy(const ModelSpec& m) {
  const Control z = m.zero_control();
  return [z](double, const DensityMatrix&) { return z; };
}

/// A recorded filtered (or deterministic) path. J_partial is filled by
/// fill_running_cost (mc-verify); integrators leave it at zero.
struct Trajectory {
  std::vector<double> times;
  std::vector<DensityMatrix> states;
  std::vector<Control> controls;
  std::vector<double> w;               // cumulative noise W(t_k)
  std::vector<double> j_partial;       // running-cost integral up to t_k
  std::vector<double> min_eig_raw;     // min eigenvalue after Hermitize+renormalize, before projection
  std::size_t projections = 0;         // steps where the PSD clip was applied
  double max_trace_dev_raw = 0.0;      // max |tr rho - 1| of the raw update, before renormalization

  std::size_t size() const noexcept { return times.size(); }
  const DensityMatrix& final_state() const { return states.back(); }
};

inline constexpr double kProjectionTrigger = 1e-8;  // clip only below -1e-8
inline constexpr double kMaxProjectionShift = 0.05;

struct NormalizedState {
  DensityMatrix state;
  double min_eig_raw;
  bool projected;
  double trace_raw = 1.0;
};

/// Hermitize, renormalize the trace and, when the smallest eigenvalue is below
/// -1e-8, clip negative eigenvalues and renormalize again.
inline NormalizedState normalize_state(const Operator& raw) {
  if (!all_finite(raw)) throw NumericalError("state update produced non-finite entries");
  Operator h = hermitian_part(raw);
  const double tr = h.trace().real();
  if (!(tr > 0.0)) throw NumericalError("state update produced non-positive trace");
  h /= tr;
  const double lo = min_eigenvalue(h);
  if (lo >= -kProjectionTrigger) return {DensityMatrix::adopt(std::move(h)), lo, false, tr};

  Eigen::SelfAdjointEigenSolver<Operator> es(h);
  Eigen::VectorXd ev = es.eigenvalues();
  double shift = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < 0.0) {
      shift = std::max(shift, -ev(i));
      ev(i) = 0.0;
    }
  }
  if (shift > kMaxProjectionShift) throw NumericalError("step size too large: PSD projection moved an eigenvalue by " + std::to_string(shift));
  Operator p = es.eigenvectors() * ev.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
  p = hermitian_part(p);
  p /= p.trace().real();
  return {DensityMatrix::adopt(std::move(p)), lo, true, tr};
}

namespace detail {

inline void push_point(Trajectory& tr, double t, const DensityMatrix& rho, const Control& u, double w, double min_eig) {
  tr.times.push_back(t);
  tr.states.push_back(rho);
  tr.controls.push_back(u);
  tr.w.push_back(w);
  tr.j_partial.push_back(0.0);
  tr.min_eig_raw.push_back(min_eig);
}

inline Control checked_control(const ModelSpec& m, const Control& u) {
  if (static_cast<std::size_t>(u.size()) != m.num_controls())
    throw ValidationError("policy returned a control of the wrong length");
  return m.clip(u);
}

template <typename DriftFn>
Operator rk4_increment(const DriftFn& f, double t, double dt, const Operator& rho) {
  const Operator k1 = f(t, rho);
  const Operator k2 = f(t + 0.5 * dt, rho + 0.5 * dt * k1);
  const Operator k3 = f(t + 0.5 * dt, rho + 0.5 * dt * k2);
  const Operator k4 = f(t + dt, rho + dt * k3);
  return (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// One deterministic RK4 step with the positivity guard: a step that leaves an
// eigenvalue below -1e-6 is retried as two half steps, then rejected.
template <typename DriftFn>
Operator guarded_rk4(const DriftFn& f, double t, double dt, const Operator& rho) {
  Operator next = hermitian_part(rho + rk4_increment(f, t, dt, rho));
  if (min_eigenvalue(next) >= -1e-6) return next;
  Operator half = hermitian_part(rho + rk4_increment(f, t, 0.5 * dt, rho));
  next = hermitian_part(half + rk4_increment(f, t + 0.5 * dt, 0.5 * dt, half));
  if (min_eigenvalue(next) < -1e-6)
    throw NumericalError("master_solve: positivity lost at t=" + std::to_string(t) + " even after halving dt");
  return next;
}

}  // namespace detail

/// Classical RK4 for d rho/dt = drift(t, u(t), rho), no noise.
inline Trajectory master_solve(const ModelSpec& m, double t0, double t1, double dt, const ControlSchedule& schedule,
                               const DensityMatrix& rho0, DriftKind kind = DriftKind::Ito) {
  require_state_dim(m, rho0.matrix(), "master_solve");
  const std::size_t steps = step_count(t0, t1, dt);
  auto f = [&](double t, const Operator& r) { return drift(m, kind, t, detail::checked_control(m, schedule(t)), r); };
  Trajectory tr;
  Operator rho = rho0.matrix();
  for (std::size_t k = 0;; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    detail::push_point(tr, t, DensityMatrix::adopt(rho), detail::checked_control(m, schedule(t)), 0.0, min_eigenvalue(rho));
    if (k == steps) break;
    rho = detail::guarded_rk4(f, t, dt, rho);
  }
  return tr;
}

/// RK4 for the closed loop d rho/dt = drift(t, policy(t, rho), rho).
inline Trajectory master_solve(const ModelSpec& m, double t0, double t1, double dt, const FeedbackPolicy& policy,
                               const DensityMatrix& rho0, DriftKind kind = DriftKind::Ito) {
  require_state_dim(m, rho0.matrix(), "master_solve");
  const std::size_t steps = step_count(t0, t1, dt);
  auto f = [&](double t, const Operator& r) {
    const Control u = detail::checked_control(m, policy(t, DensityMatrix::adopt(r)));
    return drift(m, kind, t, u, r);
  };
  Trajectory tr;
  Operator rho = rho0.matrix();
  for (std::size_t k = 0;; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    const DensityMatrix cur = DensityMatrix::adopt(rho);
    detail::push_point(tr, t, cur, detail::checked_control(m, policy(t, cur)), 0.0, min_eigenvalue(rho));
    if (k == steps) break;
    rho = detail::guarded_rk4(f, t, dt, rho);
  }
  return tr;
}

/// One Euler-Maruyama step of the Ito filter, with normalization diagnostics.
inline NormalizedState em_step_detailed(const ModelSpec& m, double t, double dt, const Control& u,
                                        const DensityMatrix& rho, double dw) {
  if (!(dt > 0.0) || !std::isfinite(dw)) throw ValidationError("em_step: need dt > 0 and finite dW");
  const Operator& r = rho.matrix();
  return normalize_state(r + ito_drift(m, t, u, r) * dt + diffusion(m, r) * dw);
}

inline DensityMatrix em_step(const ModelSpec& m, double t, double dt, const Control& u, const DensityMatrix& rho,
                             double dw) {
  return em_step_detailed(m, t, dt, u, rho, dw).state;
}

/// Heun predictor-corrector for d rho = v dt + sigma o dW.
inline NormalizedState heun_step_detailed(const ModelSpec& m, double t, double dt, const Control& u,
                                          const DensityMatrix& rho, double dw) {
  if (!(dt > 0.0) || !std::isfinite(dw)) throw ValidationError("heun_step: need dt > 0 and finite dW");
  const Operator& r = rho.matrix();
  const Operator v0 = strat_drift(m, t, u, r);
  const Operator s0 = diffusion(m, r);
  const Operator pred = hermitian_part(r + v0 * dt + s0 * dw);
  const Operator v1 = strat_drift(m, t + dt, u, pred);
  const Operator s1 = diffusion(m, pred);
  return normalize_state(r + 0.5 * dt * (v0 + v1) + 0.5 * dw * (s0 + s1));
}

inline DensityMatrix heun_step(const ModelSpec& m, double t, double dt, const Control& u, const DensityMatrix& rho,
                               double dw) {
  return heun_step_detailed(m, t, dt, u, rho, dw).state;
}

namespace detail {

template <typename StepFn>
Trajectory simulate_with(const ModelSpec& m, const FeedbackPolicy& policy, const DensityMatrix& rho0,
                         const NoisePath& noise, const StepFn& step) {
  require_state_dim(m, rho0.matrix(), "simulate");
  Trajectory tr;
  const std::size_t steps = noise.steps();
  tr.times.reserve(steps + 1);
  tr.states.reserve(steps + 1);
  DensityMatrix rho = rho0;
  double w = 0.0;
  double min_eig = min_eigenvalue(rho0.matrix());
  for (std::size_t k = 0;; ++k) {
    const double t = noise.time(k);
    const Control u = checked_control(m, policy(t, rho));
    push_point(tr, t, rho, u, w, min_eig);
    if (k == steps) break;
    const double dw = noise.increments()[k];
    NormalizedState next = step(t, noise.dt(), u, rho, dw);
    if (next.projected) ++tr.projections;
    tr.max_trace_dev_raw = std::max(tr.max_trace_dev_raw, std::abs(next.trace_raw - 1.0));
    min_eig = next.min_eig_raw;
    rho = std::move(next.state);
    w += dw;
  }
  return tr;
}

}  // namespace detail

/// Iterates em_step with u_k = policy(t_k, rho_k).
inline Trajectory simulate_ito(const ModelSpec& m, const FeedbackPolicy& policy, const DensityMatrix& rho0,
                               const NoisePath& noise) {
  return detail::simulate_with(m, policy, rho0, noise, [&](double t, double dt, const Control& u, const DensityMatrix& r, double dw) {
    return em_step_detailed(m, t, dt, u, r, dw);
  });
}

/// Iterates heun_step on the same noise increments.
inline Trajectory simulate_strat(const ModelSpec& m, const FeedbackPolicy& policy, const DensityMatrix& rho0,
                                 const NoisePath& noise) {
  return detail::simulate_with(m, policy, rho0, noise, [&](double t, double dt, const Control& u, const DensityMatrix& r, double dw) {
    return heun_step_detailed(m, t, dt, u, r, dw);
  });
}

/// Wong-Zakai: replace W by its polygonal interpolant on a mesh of width
/// lambda_mesh and RK4-integrate d rho/dt = v + sigma * dW_lambda/dt on the
/// noise mesh. The control is held fixed over each integration step.
inline Trajectory wong_zakai_solve(const ModelSpec& m, const FeedbackPolicy& policy, const DensityMatrix& rho0,
                                   const NoisePath& noise, double lambda_mesh) {
  require_state_dim(m, rho0.matrix(), "wong_zakai_solve");
  const double dt = noise.dt();
  if (!(lambda_mesh >= dt * (1.0 - 1e-12))) throw ValidationError("wong_zakai_solve: lambda_mesh must be >= dt");
  const double ratio = lambda_mesh / dt;
  const auto per_cell = static_cast<std::size_t>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(per_cell)) > 1e-6 * ratio)
    throw ValidationError("wong_zakai_solve: lambda_mesh must be a multiple of the noise dt");

  const std::size_t steps = noise.steps();
  const auto& dw = noise.increments();
  // Slope of the polygonal path on each lambda cell (a trailing partial cell
  // uses its own length).
  std::vector<double> slope(steps);
  for (std::size_t start = 0; start < steps; start += per_cell) {
    const std::size_t end = std::min(steps, start + per_cell);
    double inc = 0.0;
    for (std::size_t j = start; j < end; ++j) inc += dw[j];
    const double omega = inc / (static_cast<double>(end - start) * dt);
    for (std::size_t j = start; j < end; ++j) slope[j] = omega;
  }

  Trajectory tr;
  Operator rho = rho0.matrix();
  double w_lambda = 0.0;
  double min_eig = min_eigenvalue(rho);
  for (std::size_t k = 0;; ++k) {
    const double t = noise.time(k);
    const DensityMatrix cur = DensityMatrix::adopt(rho);
    const Control u = detail::checked_control(m, policy(t, cur));
    detail::push_point(tr, t, cur, u, w_lambda, min_eig);
    if (k == steps) break;
    const double omega = slope[k];
    auto f = [&](double s, const Operator& r) { return Operator(strat_drift(m, s, u, r) + omega * diffusion(m, r)); };
    NormalizedState next = normalize_state(rho + detail::rk4_increment(f, t, dt, rho));
    if (next.projected) ++tr.projections;
    tr.max_trace_dev_raw = std::max(tr.max_trace_dev_raw, std::abs(next.trace_raw - 1.0));
    min_eig = next.min_eig_raw;
    rho = next.state.matrix();
    w_lambda += omega * dt;
  }
  return tr;
}

}  // namespace qfc
