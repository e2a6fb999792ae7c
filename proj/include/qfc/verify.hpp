#pragma once

// Numerical checks of the filtering and control identities: generator forms,
// argmin invariance under the noise term, and scheme consistency ladders.

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "qfc/control.hpp"
#include "qfc/integrators.hpp"
#include "qfc/parallel.hpp"
#include "qfc/serialize.hpp"

namespace qfc {

/// Random full-rank state: A A^dagger / tr with Gaussian complex A.
inline DensityMatrix random_density_matrix(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Operator a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = Complex(nd(rng), nd(rng));
  Operator r = a * a.adjoint();
  r = hermitian_part(r);
  r /= r.trace().real();
  return DensityMatrix(r);
}

inline Operator random_hermitian(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Operator a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = Complex(nd(rng), nd(rng));
  return hermitian_part(a);
}

inline Control random_control(const ModelSpec& m, std::mt19937_64& rng) {
  Control u(static_cast<Eigen::Index>(m.num_controls()));
  for (Eigen::Index a = 0; a < u.size(); ++a) {
    const double um = m.u_max()[static_cast<std::size_t>(a)];
    std::uniform_real_distribution<double> ud(-um, um);
    u(a) = ud(rng);
  }
  return u;
}

/// max over random (u, rho) of |D1 F - D2 F| / (1 + |D1 F|).
inline double generator_identity_check(const ModelSpec& m, const std::vector<StateFunctional>& battery,
                                       std::size_t samples, std::uint64_t seed = 7, double h = kDefaultDiffStep) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const Control u = random_control(m, rng);
    const DensityMatrix rho = random_density_matrix(m.dim(), rng);
    for (const auto& f : battery) {
      const double d1 = generator_apply_second_order(m, 0.0, u, rho.matrix(), f, h);
      const double d2 = generator_apply_hormander(m, 0.0, u, rho.matrix(), f, h);
      worst = std::max(worst, std::abs(d1 - d2) / (1.0 + std::abs(d1)));
    }
  }
  return worst;
}

/// Linear, quadratic and cubic test functionals built from the observables `obs`.
inline std::vector<StateFunctional> polynomial_battery(const std::vector<Operator>& obs) {
  std::vector<StateFunctional> out;
  for (const auto& a : obs) {
    out.push_back(linear_functional(a));
    out.push_back({[a](const Operator& r) {
                     const double x = pairing(r, a).real();
                     return x * x;
                   },
                   {}});
    out.push_back({[a](const Operator& r) {
                     const double x = pairing(r, a).real();
                     return x * x * x;
                   },
                   {}});
  }
  if (obs.size() >= 2) {
    const Operator a = obs[0], b = obs[1];
    out.push_back({[a, b](const Operator& r) { return pairing(r, a).real() * pairing(r, b).real(); }, {}});
  }
  return out;
}

struct ArgminInvarianceResult {
  double max_deviation = 0.0;  // |argmin of C + <v + sigma*omega, X> - optimal_control_lq|_inf
  std::size_t samples = 0;
  bool passed = false;
};

/// Minimizer of the quadratic u -> C + <v(u) + sigma*omega, X>, recovered from
/// exact finite differences of the objective (no use of the closed form), then
/// clipped componentwise (exact for a diagonal metric).
inline Control quadratic_argmin_by_differences(const ModelSpec& m, const CostSpec& c, const Operator& rho,
                                               const Operator& x, double omega) {
  const auto nu = static_cast<Eigen::Index>(m.num_controls());
  const Operator noise = diffusion(m, rho);
  auto phi = [&](const Control& u) {
    return running_cost(c, 0.0, u, rho) + pairing(Operator(strat_drift(m, 0.0, u, rho) + omega * noise), x).real();
  };
  const Control zero = m.zero_control();
  const double f0 = phi(zero);
  Eigen::VectorXd grad(nu);
  Eigen::MatrixXd hess(nu, nu);
  std::vector<double> fp(static_cast<std::size_t>(nu)), fm(static_cast<std::size_t>(nu));
  for (Eigen::Index a = 0; a < nu; ++a) {
    Control e = zero;
    e(a) = 1.0;
    fp[static_cast<std::size_t>(a)] = phi(e);
    fm[static_cast<std::size_t>(a)] = phi(-e);
    grad(a) = 0.5 * (fp[static_cast<std::size_t>(a)] - fm[static_cast<std::size_t>(a)]);
    hess(a, a) = fp[static_cast<std::size_t>(a)] - 2.0 * f0 + fm[static_cast<std::size_t>(a)];
  }
  for (Eigen::Index a = 0; a < nu; ++a)
    for (Eigen::Index b = a + 1; b < nu; ++b) {
      Control e = zero;
      e(a) = 1.0;
      e(b) = 1.0;
      const double v = phi(e) - fp[static_cast<std::size_t>(a)] - fp[static_cast<std::size_t>(b)] + f0;
      hess(a, b) = v;
      hess(b, a) = v;
    }
  return m.clip(Control(-hess.ldlt().solve(grad)));
}

inline ArgminInvarianceResult argmin_invariance_check(const ModelSpec& m, const CostSpec& c, std::size_t samples,
                                                      const std::vector<double>& omegas, std::uint64_t seed = 11,
                                                      double tol = 1e-8) {
  if (!c.is_linear_quadratic()) throw ValidationError("argmin_invariance_check: cost is not linear-quadratic");
  std::mt19937_64 rng(seed);
  ArgminInvarianceResult r;
  for (std::size_t s = 0; s < samples; ++s) {
    const DensityMatrix rho = random_density_matrix(m.dim(), rng);
    const Operator x = random_hermitian(m.dim(), rng, 2.0);
    const Control closed = optimal_control_lq(m, c, rho.matrix(), x);
    for (double w : omegas) {
      const Control num = quadratic_argmin_by_differences(m, c, rho.matrix(), x, w);
      r.max_deviation = std::max(r.max_deviation, (num - closed).cwiseAbs().maxCoeff());
      ++r.samples;
    }
  }
  r.passed = r.max_deviation <= tol;
  return r;
}

struct GridSearchResult {
  double max_cells = 0.0;  // max over samples of max_a |u_grid - u*|_a / cell_a
  std::size_t samples = 0;
  bool passed = false;
};

/// Brute-force check of the LQ minimizer: minimize C + <drift + sigma*omega, Q>
/// over a per_axis^m lattice of the control box.
inline GridSearchResult lq_grid_search_check(const ModelSpec& m, const CostSpec& c, std::size_t samples, int per_axis,
                                             double omega = 0.0, DriftKind kind = DriftKind::Ito,
                                             std::uint64_t seed = 13, int threads = 1) {
  const auto nu = static_cast<Eigen::Index>(m.num_controls());
  std::mt19937_64 rng(seed);
  std::vector<DensityMatrix> ps;
  std::vector<Operator> qs;
  for (std::size_t s = 0; s < samples; ++s) {
    ps.push_back(random_density_matrix(m.dim(), rng));
    qs.push_back(random_hermitian(m.dim(), rng, 2.0));
  }
  long total = 1;
  for (Eigen::Index a = 0; a < nu; ++a) total *= per_axis;
  std::vector<double> cells(samples, 0.0);
  parallel_for(samples, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) {
      const Operator& p = ps[s].matrix();
      const Operator noise = diffusion(m, p);
      double best = std::numeric_limits<double>::infinity();
      Control best_u = m.zero_control();
      Control u(nu);
      for (long n = 0; n < total; ++n) {
        long rem = n;
        for (Eigen::Index a = 0; a < nu; ++a) {
          const double um = m.u_max()[static_cast<std::size_t>(a)];
          u(a) = -um + 2.0 * um * static_cast<double>(rem % per_axis) / (per_axis - 1);
          rem /= per_axis;
        }
        const double val =
            running_cost(c, 0.0, u, p) + pairing(Operator(drift(m, kind, 0.0, u, p) + omega * noise), qs[s]).real();
        if (val < best) {
          best = val;
          best_u = u;
        }
      }
      const Control star = optimal_control_lq(m, c, p, qs[s]);
      double worst = 0.0;
      for (Eigen::Index a = 0; a < nu; ++a) {
        const double cell = 2.0 * m.u_max()[static_cast<std::size_t>(a)] / (per_axis - 1);
        worst = std::max(worst, std::abs(best_u(a) - star(a)) / cell);
      }
      cells[s] = worst;
    }
  });
  GridSearchResult r;
  r.samples = samples;
  for (double v : cells) r.max_cells = std::max(r.max_cells, v);
  r.passed = r.max_cells <= 1.0;
  return r;
}

struct ConvergenceReport {
  std::string label;
  std::string parameter;            // "dt" or "lambda_mesh"
  std::vector<double> ladder;       // parameter per rung, coarse to fine
  std::vector<double> errors;       // mean terminal trace-norm difference per rung
  double order = 0.0;               // least-squares slope of log error vs log parameter
  bool strictly_decreasing = false;
};

inline Json to_json(const ConvergenceReport& r) {
  return Json{{"label", r.label},         {"parameter", r.parameter}, {"ladder", r.ladder},
              {"errors", r.errors},       {"order", r.order},         {"strictly_decreasing", r.strictly_decreasing}};
}

inline void finish_report(ConvergenceReport& r) {
  r.strictly_decreasing = r.errors.size() >= 2;
  for (std::size_t i = 1; i < r.errors.size(); ++i)
    if (!(r.errors[i] < r.errors[i - 1])) r.strictly_decreasing = false;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < r.errors.size(); ++i) {
    if (!(r.errors[i] > 0.0)) continue;
    const double x = std::log(r.ladder[i]), y = std::log(r.errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  const double den = static_cast<double>(n) * sxx - sx * sx;
  r.order = n >= 2 && den != 0.0 ? (static_cast<double>(n) * sxy - sx * sy) / den : 0.0;
}

struct SchemeLadderOptions {
  double t0 = 0.0;
  double T = 1.0;
  double coarse_dt = 4e-3;       // ladder (a): rung k uses coarse_dt / 2^k
  int rungs = 4;
  std::size_t paths = 32;
  double fine_dt = 1e-4;         // ladder (b): fixed noise resolution
  double coarse_lambda = 8e-3;   // ladder (b): rung k uses coarse_lambda / 2^k
  std::size_t wz_paths = 16;
  std::uint64_t seed = 2024;
  int threads = 1;
};

/// Ladder (a): E || rho_ito(T) - rho_strat(T) ||_1 on shared Brownian paths as
/// dt halves (each path is bridge-refined, so all rungs see the same W).
inline ConvergenceReport ito_strat_ladder(const ModelSpec& m, const FeedbackPolicy& policy, const DensityMatrix& rho0,
                                          const SchemeLadderOptions& o) {
  if (o.rungs < 3) throw ValidationError("scheme_consistency_report: ladder depth must be at least 3");
  ConvergenceReport r;
  r.label = "ito_vs_strat";
  r.parameter = "dt";
  const auto nr = static_cast<std::size_t>(o.rungs);
  std::vector<std::vector<double>> err(o.paths, std::vector<double>(nr));
  parallel_for(o.paths, o.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      NoisePath path = NoisePath::generate(o.t0, o.T, o.coarse_dt, derive_seed(o.seed, i));
      for (std::size_t k = 0; k < nr; ++k) {
        if (k > 0) path = path.refined();
        const auto a = simulate_ito(m, policy, rho0, path);
        const auto s = simulate_strat(m, policy, rho0, path);
        err[i][k] = trace_norm(a.final_state().matrix() - s.final_state().matrix());
      }
    }
  });
  for (std::size_t k = 0; k < nr; ++k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < o.paths; ++i) sum += err[i][k];
    r.ladder.push_back(o.coarse_dt / std::pow(2.0, static_cast<double>(k)));
    r.errors.push_back(sum / static_cast<double>(o.paths));
  }
  finish_report(r);
  return r;
}

/// Ladder (b): E || rho_wz(T) - rho_strat(T) ||_1 at fixed fine dt as the
/// polygonal mesh halves.
inline ConvergenceReport wong_zakai_ladder(const ModelSpec& m, const FeedbackPolicy& policy, const DensityMatrix& rho0,
                                           const SchemeLadderOptions& o) {
  if (o.rungs < 3) throw ValidationError("scheme_consistency_report: ladder depth must be at least 3");
  ConvergenceReport r;
  r.label = "wong_zakai_vs_strat";
  r.parameter = "lambda_mesh";
  const auto nr = static_cast<std::size_t>(o.rungs);
  std::vector<std::vector<double>> err(o.wz_paths, std::vector<double>(nr));
  parallel_for(o.wz_paths, o.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const NoisePath path = NoisePath::generate(o.t0, o.T, o.fine_dt, derive_seed(o.seed ^ 0x9e3779b97f4a7c15ULL, i));
      const auto s = simulate_strat(m, policy, rho0, path);
      for (std::size_t k = 0; k < nr; ++k) {
        const double lambda = o.coarse_lambda / std::pow(2.0, static_cast<double>(k));
        const auto w = wong_zakai_solve(m, policy, rho0, path, lambda);
        err[i][k] = trace_norm(w.final_state().matrix() - s.final_state().matrix());
      }
    }
  });
  for (std::size_t k = 0; k < nr; ++k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < o.wz_paths; ++i) sum += err[i][k];
    r.ladder.push_back(o.coarse_lambda / std::pow(2.0, static_cast<double>(k)));
    r.errors.push_back(sum / static_cast<double>(o.wz_paths));
  }
  finish_report(r);
  return r;
}

struct SchemeConsistency {
  ConvergenceReport ito_strat;
  ConvergenceReport wong_zakai;
};

inline SchemeConsistency scheme_consistency_report(const ModelSpec& m, const FeedbackPolicy& policy,
                                                   const DensityMatrix& rho0, const SchemeLadderOptions& o = {}) {
  return {ito_strat_ladder(m, policy, rho0, o), wong_zakai_ladder(m, policy, rho0, o)};
}

/// Value of the deterministic pure-state problem with terminal 1/2 (1 - z) and
/// running cost 1/2 |u|^2 at radius r and polar angle theta0: rotating by an
/// angle alpha at constant speed over tau costs alpha^2 / (2 tau) and lands at
/// polar angle theta0 - alpha, so the value is a 1-D convex minimization.
inline double geodesic_value(double r, double theta0, double tau) {
  if (!(tau > 0.0)) return 0.5 * (1.0 - r * std::cos(theta0));
  auto f = [&](double a) { return a * a / (2.0 * tau) + 0.5 * (1.0 - r * std::cos(theta0 - a)); };
  // minimizer lies in [0, theta0]; golden-section search
  double lo = 0.0, hi = theta0;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = f(x2);
    }
  }
  return std::min({f(0.5 * (lo + hi)), f(0.0), f(theta0)});
}

}  // namespace qfc
