#pragma once

// Costs, super-Hamiltonians and the Hamilton-Pontryagin system.
//
// Sign convention used throughout: the super-Hamiltonian is the sup form
//   H(t, rho, X) = sup_u { <drift(t,u,rho), lambda I - X> - C(t,u,rho) },
// so the Bellman equation reads dS/dt = H(t, rho, dS) (deterministic) and the
// minimizing control of C + <drift, X> is the argmax of the bracket.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "qfc/filtering.hpp"

namespace qfc {

using RunningCostFn = std::function<double(double t, const Control& u, const Operator& rho)>;

/// Running cost C(u) = 1/2 g_ab u^a u^b + u^a F_a + C0 paired with the state,
/// plus the terminal observable S. A general callback may replace the LQ form.
class CostSpec {
 public:
  static CostSpec linear_quadratic(Eigen::MatrixXd g, std::vector<Operator> f, Operator c0, Operator s,
                                   const Tolerances& tol = kDefaultTolerances) {
    CostSpec c;
    c.g_ = std::move(g);
    c.f_ = std::move(f);
    c.c0_ = std::move(c0);
    c.s_ = std::move(s);
    c.lq_ = true;
    c.validate(tol);
    return c;
  }

  /// Generic running cost; g is kept for bookkeeping only (identity of size m).
  static CostSpec general(std::size_t num_controls, RunningCostFn running, Operator s,
                          const Tolerances& tol = kDefaultTolerances) {
    CostSpec c;
    const auto m = static_cast<Eigen::Index>(num_controls);
    c.g_ = Eigen::MatrixXd::Identity(m, m);
    c.c0_ = Operator::Zero(s.rows(), s.cols());
    c.s_ = std::move(s);
    c.general_ = std::move(running);
    c.lq_ = false;
    c.validate(tol);
    return c;
  }

  /// 1/2 |u|^2 running cost with terminal observable s.
  static CostSpec quadratic_effort(std::size_t num_controls, Operator s) {
    const auto m = static_cast<Eigen::Index>(num_controls);
    const Eigen::Index n = s.rows();
    return linear_quadratic(Eigen::MatrixXd::Identity(m, m), {}, Operator::Zero(n, n), std::move(s));
  }

  bool is_linear_quadratic() const noexcept { return lq_; }
  std::size_t num_controls() const noexcept { return static_cast<std::size_t>(g_.rows()); }
  Eigen::Index dim() const noexcept { return s_.rows(); }
  const Eigen::MatrixXd& metric() const noexcept { return g_; }
  const Eigen::MatrixXd& metric_inverse() const noexcept { return g_inv_; }
  const std::vector<Operator>& linear_terms() const noexcept { return f_; }
  const Operator& constant_term() const noexcept { return c0_; }
  const Operator& terminal() const noexcept { return s_; }
  const RunningCostFn& general_cost() const noexcept { return general_; }

  /// F_a, or zero when no linear terms were given.
  Operator linear_term(std::size_t a) const {
    return f_.empty() ? Operator::Zero(s_.rows(), s_.cols()) : f_[a];
  }

  /// The cost observable C(u) (LQ mode only).
  Operator observable(const Control& u) const {
    const Eigen::Index n = s_.rows();
    Operator c = c0_ + (0.5 * u.dot(g_ * u)) * identity(n);
    for (std::size_t a = 0; a < f_.size(); ++a) c += u(static_cast<Eigen::Index>(a)) * f_[a];
    return c;
  }

 private:
  CostSpec() = default;

  void validate(const Tolerances& tol) {
    const Eigen::Index m = g_.rows();
    if (g_.cols() != m) throw ValidationError("cost.g: must be square");
    if (s_.rows() == 0 || s_.rows() != s_.cols()) throw ValidationError("cost.S: terminal operator must be a non-empty square matrix");
    if (!all_finite(s_) || !is_hermitian(s_, tol.herm)) throw ValidationError("cost.S: must be finite and Hermitian");
    require_same_dim(s_, c0_, "cost.C0");
    if (!all_finite(c0_) || !is_hermitian(c0_, tol.herm)) throw ValidationError("cost.C0: must be finite and Hermitian");
    if (!f_.empty() && static_cast<Eigen::Index>(f_.size()) != m)
      throw ValidationError("cost.F: need one operator per control (or none)");
    for (const auto& f : f_) {
      require_same_dim(s_, f, "cost.F");
      if (!all_finite(f) || !is_hermitian(f, tol.herm)) throw ValidationError("cost.F: must be finite and Hermitian");
    }
    if (m > 0) {
      if (!g_.allFinite() || (g_ - g_.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw ValidationError("cost.g: must be finite and symmetric");
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g_, Eigen::EigenvaluesOnly);
      if (!(es.eigenvalues()(0) > 0.0)) throw ValidationError("cost.g: must be positive definite");
      g_inv_ = g_.inverse();
      if ((g_ * g_inv_ - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff() > 1e-12)
        throw ValidationError("cost.g: too ill-conditioned to invert to 1e-12");
    } else {
      g_inv_ = g_;
    }
  }

  Eigen::MatrixXd g_;
  Eigen::MatrixXd g_inv_;
  std::vector<Operator> f_;
  Operator c0_;
  Operator s_;
  RunningCostFn general_;
  bool lq_ = true;
};

inline void require_compatible(const ModelSpec& m, const CostSpec& c) {
  if (m.dim() != c.dim()) throw ValidationError("cost and model have different Hilbert-space dimensions");
  if (m.num_controls() != c.num_controls()) throw ValidationError("cost and model have different numbers of controls");
}

inline double running_cost(const CostSpec& c, double t, const Control& u, const Operator& rho) {
  if (!c.is_linear_quadratic()) return c.general_cost()(t, u, rho);
  double v = 0.5 * u.dot(c.metric() * u) * rho.trace().real() + pairing(rho, c.constant_term()).real();
  for (std::size_t a = 0; a < c.linear_terms().size(); ++a)
    v += u(static_cast<Eigen::Index>(a)) * pairing(rho, c.linear_terms()[a]).real();
  return v;
}
inline double running_cost(const CostSpec& c, double t, const Control& u, const DensityMatrix& rho) {
  return running_cost(c, t, u, rho.matrix());
}

inline double terminal_cost(const CostSpec& c, const Operator& rho) { return pairing(rho, c.terminal()).real(); }

/// K(t,u,rho,X) = <drift(t,u,rho), lambda I - X> - C(t,u,rho).
inline double k_function(const ModelSpec& m, const CostSpec& c, double t, const Control& u, const Operator& rho,
                         const Operator& x, DriftKind kind, double lambda_gauge = 0.0) {
  const Operator d = drift(m, kind, t, u, rho);
  const Operator target = lambda_gauge * identity(m.dim()) - x;
  return pairing(d, target).real() - running_cost(c, t, u, rho);
}

/// Unclipped stationary point u^a = -g^ab <P, F_b + (1/i)[Q, V_b]>.
inline Control optimal_control_lq_unclipped(const ModelSpec& m, const CostSpec& c, const Operator& p,
                                            const Operator& q) {
  if (!c.is_linear_quadratic()) throw ValidationError("optimal_control_lq: cost is not linear-quadratic");
  require_compatible(m, c);
  const auto nu = static_cast<Eigen::Index>(m.num_controls());
  Eigen::VectorXd a(nu);
  for (Eigen::Index k = 0; k < nu; ++k) {
    const Operator& v = m.control_operators()[static_cast<std::size_t>(k)];
    const Operator obs = c.linear_term(static_cast<std::size_t>(k)) + Complex(0, -1) * commutator(q, v);
    a(k) = pairing(p, obs).real();
  }
  return -(c.metric_inverse() * a);
}

/// Closed-form minimizer of <P, C(u)> + <w(u, P), Q>, clipped to the box.
inline Control optimal_control_lq(const ModelSpec& m, const CostSpec& c, const Operator& p, const Operator& q) {
  return m.clip(optimal_control_lq_unclipped(m, c, p, q));
}

struct SuperHamiltonianValue {
  double value;
  Control argmax;
};

struct InnerSearchOptions {
  int grid_per_axis = 21;
  int refine_iterations = 20;
};

namespace detail {

// Box grid search followed by a compass search that halves its step when no
// coordinate move improves. Deterministic and derivative-free.
template <typename Objective>
SuperHamiltonianValue box_maximize(const ModelSpec& m, const Objective& obj, const InnerSearchOptions& opt) {
  const auto nu = static_cast<Eigen::Index>(m.num_controls());
  if (nu == 0) {
    Control z(0);
    return {obj(z), z};
  }
  const int per = std::max(2, opt.grid_per_axis);
  double total = 1.0;
  for (Eigen::Index a = 0; a < nu; ++a) total *= per;
  if (total > 5e6) throw ValidationError("super_hamiltonian: control grid too large for generic search");

  Control best = m.zero_control();
  double best_val = -std::numeric_limits<double>::infinity();
  std::vector<int> idx(static_cast<std::size_t>(nu), 0);
  Control u(nu);
  for (long n = 0; n < static_cast<long>(total); ++n) {
    for (Eigen::Index a = 0; a < nu; ++a) {
      const double um = m.u_max()[static_cast<std::size_t>(a)];
      u(a) = -um + 2.0 * um * idx[static_cast<std::size_t>(a)] / (per - 1);
    }
    const double val = obj(u);
    if (val > best_val) {
      best_val = val;
      best = u;
    }
    for (Eigen::Index a = 0; a < nu; ++a) {
      if (++idx[static_cast<std::size_t>(a)] < per) break;
      idx[static_cast<std::size_t>(a)] = 0;
    }
  }

  Eigen::VectorXd step(nu);
  for (Eigen::Index a = 0; a < nu; ++a) step(a) = 2.0 * m.u_max()[static_cast<std::size_t>(a)] / (per - 1);
  for (int it = 0; it < opt.refine_iterations; ++it) {
    bool improved = false;
    for (Eigen::Index a = 0; a < nu; ++a) {
      for (double dir : {1.0, -1.0}) {
        Control trial = best;
        trial(a) += dir * step(a);
        trial = m.clip(trial);
        const double val = obj(trial);
        if (val > best_val) {
          best_val = val;
          best = trial;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return {best_val, best};
}

}  // namespace detail

/// sup_u K over the control box: closed form in LQ mode, grid + refinement otherwise.
inline SuperHamiltonianValue super_hamiltonian(const ModelSpec& m, const CostSpec& c, double t, const Operator& rho,
                                               const Operator& x, DriftKind kind, double lambda_gauge = 0.0,
                                               const InnerSearchOptions& opt = {}) {
  require_compatible(m, c);
  if (c.is_linear_quadratic()) {
    // The Ito/Stratonovich correction does not depend on u, so both drifts
    // share the LQ maximizer.
    const Control u = optimal_control_lq(m, c, rho, x);
    return {k_function(m, c, t, u, rho, x, kind, lambda_gauge), u};
  }
  auto obj = [&](const Control& u) { return k_function(m, c, t, u, rho, x, kind, lambda_gauge); };
  return detail::box_maximize(m, obj, opt);
}

struct HamiltonianGradients {
  Operator grad_p;
  Operator grad_q;
};

/// Numeric gradients of H(t, P, Q) in P and in Q (traceless representatives).
inline HamiltonianGradients hamiltonian_gradients(const ModelSpec& m, const CostSpec& c, double t, const Operator& p,
                                                  const Operator& q, DriftKind kind, double h = kDefaultDiffStep) {
  StateFunctional in_p{[&](const Operator& pp) { return super_hamiltonian(m, c, t, pp, q, kind).value; }, {}};
  StateFunctional in_q{[&](const Operator& qq) { return super_hamiltonian(m, c, t, p, qq, kind).value; }, {}};
  return {frechet_gradient(in_p, p, h), frechet_gradient(in_q, q, h)};
}

/// Same gradients with the control frozen at u (envelope-theorem check).
inline HamiltonianGradients hamiltonian_gradients_fixed_control(const ModelSpec& m, const CostSpec& c, double t,
                                                                const Control& u, const Operator& p,
                                                                const Operator& q, DriftKind kind,
                                                                double h = kDefaultDiffStep) {
  StateFunctional in_p{[&](const Operator& pp) { return k_function(m, c, t, u, pp, q, kind); }, {}};
  StateFunctional in_q{[&](const Operator& qq) { return k_function(m, c, t, u, p, qq, kind); }, {}};
  return {frechet_gradient(in_p, p, h), frechet_gradient(in_q, q, h)};
}

/// State/costate pairs along a candidate optimal path; Q at the final time is
/// the (traceless) terminal cost operator.
struct CostateRecord {
  std::vector<double> times;
  std::vector<DensityMatrix> states;
  std::vector<Operator> costates;
};

struct PontryaginResidual {
  double res_p;  // max || dP/dt + grad_Q H ||_1
  double res_q;  // max || dQ/dt - grad_P H ||_op
};

inline PontryaginResidual pontryagin_residual(const ModelSpec& m, const CostSpec& c, const CostateRecord& rec,
                                              DriftKind kind, double h = kDefaultDiffStep) {
  const std::size_t k = rec.times.size();
  if (k < 3 || rec.states.size() != k || rec.costates.size() != k)
    throw ValidationError("pontryagin_residual: need at least 3 aligned time points");
  const double dt = rec.times[1] - rec.times[0];
  if (!(dt > 0.0)) throw ValidationError("pontryagin_residual: times must increase");
  for (std::size_t i = 1; i < k; ++i) {
    if (std::abs((rec.times[i] - rec.times[i - 1]) - dt) > 1e-9 * std::max(1.0, std::abs(dt)) + 1e-12)
      throw ValidationError("pontryagin_residual: time mesh is not uniform");
  }
  PontryaginResidual out{0.0, 0.0};
  for (std::size_t i = 1; i + 1 < k; ++i) {
    const Operator& p = rec.states[i].matrix();
    const Operator& q = rec.costates[i];
    const HamiltonianGradients g = hamiltonian_gradients(m, c, rec.times[i], p, q, kind, h);
    const Operator pdot = (rec.states[i + 1].matrix() - rec.states[i - 1].matrix()) / (2.0 * dt);
    const Operator qdot = traceless_part(rec.costates[i + 1] - rec.costates[i - 1]) / (2.0 * dt);
    out.res_p = std::max(out.res_p, trace_norm(pdot + g.grad_q));
    out.res_q = std::max(out.res_q, operator_norm(qdot - g.grad_p));
  }
  return out;
}

}  // namespace qfc
