#pragma once

// Closed-loop Monte-Carlo: cost accumulation along filtered trajectories and
// expected-cost estimates with reproducible per-trajectory seeds.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "qfc/control.hpp"
#include "qfc/integrators.hpp"
#include "qfc/parallel.hpp"
#include "qfc/serialize.hpp"

namespace qfc {

/// Fills tr.j_partial with the trapezoidal running-cost integral up to t_k.
inline void fill_running_cost(const CostSpec& cost, Trajectory& tr) {
  const std::size_t n = tr.size();
  tr.j_partial.assign(n, 0.0);
  if (n == 0) return;
  double prev = running_cost(cost, tr.times[0], tr.controls[0], tr.states[0]);
  for (std::size_t k = 1; k < n; ++k) {
    const double cur = running_cost(cost, tr.times[k], tr.controls[k], tr.states[k]);
    tr.j_partial[k] = tr.j_partial[k - 1] + 0.5 * (tr.times[k] - tr.times[k - 1]) * (prev + cur);
    prev = cur;
  }
}

/// Trapezoidal integral of the running cost plus <rho_K, S>.
inline double accumulate_cost(const CostSpec& cost, const Trajectory& tr) {
  if (tr.size() == 0) throw ValidationError("accumulate_cost: empty trajectory");
  double j = 0.0;
  double prev = running_cost(cost, tr.times[0], tr.controls[0], tr.states[0]);
  for (std::size_t k = 1; k < tr.size(); ++k) {
    const double cur = running_cost(cost, tr.times[k], tr.controls[k], tr.states[k]);
    j += 0.5 * (tr.times[k] - tr.times[k - 1]) * (prev + cur);
    prev = cur;
  }
  return j + terminal_cost(cost, tr.final_state().matrix());
}

struct CostReport {
  std::string policy;
  double t0 = 0.0;
  double T = 0.0;
  DensityMatrix rho0 = DensityMatrix::maximally_mixed(2);
  std::size_t n_traj = 0;
  double mean_j = 0.0;
  double stderr_j = 0.0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  double worst_min_eig_raw = std::numeric_limits<double>::infinity();  // over all steps, before projection
  double worst_trace_dev_raw = 0.0;
  std::size_t projections = 0;
  std::vector<double> samples;  // J per trajectory, index order
};

inline Json to_json(const CostReport& r) {
  return Json{{"policy", r.policy},
              {"t0", r.t0},
              {"T", r.T},
              {"rho0", state_to_json(r.rho0)},
              {"N_traj", r.n_traj},
              {"mean_J", r.mean_j},
              {"stderr_J", r.stderr_j},
              {"dt", r.dt},
              {"seed", r.seed},
              {"worst_min_eig_raw", r.worst_min_eig_raw},
              {"worst_trace_dev_raw", r.worst_trace_dev_raw},
              {"projections", r.projections}};
}

/// Sample mean and standard error (sample std / sqrt n). Identical samples
/// give exactly that value and a zero error.
inline std::pair<double, double> mean_and_stderr(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n == 0) return {0.0, 0.0};
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  if (*lo == *hi) return {*lo, 0.0};
  double sum = 0.0;
  for (double v : x) sum += v;
  const double mean = sum / static_cast<double>(n);
  if (n < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n))};
}

struct MonteCarloOptions {
  int threads = 0;
  std::size_t check_every = 100;  // spot-check of state invariants
  double herm_tol = 1e-10;
  double trace_tol = 1e-9;
};

inline NoisePath trajectory_noise(std::uint64_t master_seed, std::size_t index, double t0, double t1, double dt) {
  return NoisePath::generate(t0, t1, dt, derive_seed(master_seed, index));
}

/// N_traj independent Ito trajectories under `policy`; trajectory i uses
/// derive_seed(master_seed, i), so reports do not depend on the thread count.
inline CostReport estimate_expected_cost(const ModelSpec& m, const CostSpec& cost, const FeedbackPolicy& policy,
                                         const std::string& policy_id, const DensityMatrix& rho0, double t0, double t1,
                                         double dt, std::size_t n_traj, std::uint64_t master_seed,
                                         const MonteCarloOptions& opts = {}) {
  if (n_traj < 2) throw ValidationError("sim.N_traj: must be at least 2");
  require_compatible(m, cost);
  step_count(t0, t1, dt);
  std::vector<double> j(n_traj), min_eig(n_traj), trace_dev(n_traj);
  std::vector<std::size_t> proj(n_traj);
  parallel_for(n_traj, resolve_threads(opts.threads), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      try {
        const Trajectory tr = simulate_ito(m, policy, rho0, trajectory_noise(master_seed, i, t0, t1, dt));
        for (std::size_t k = 0; k < tr.size(); k += std::max<std::size_t>(1, opts.check_every)) {
          const Operator& r = tr.states[k].matrix();
          if (!is_hermitian(r, opts.herm_tol) || std::abs(r.trace().real() - 1.0) > opts.trace_tol)
            throw NumericalError("state invariants violated at step " + std::to_string(k));
        }
        j[i] = accumulate_cost(cost, tr);
        min_eig[i] = *std::min_element(tr.min_eig_raw.begin(), tr.min_eig_raw.end());
        trace_dev[i] = tr.max_trace_dev_raw;
        proj[i] = tr.projections;
      } catch (const Error& err) {
        throw NumericalError("trajectory " + std::to_string(i) + ": " + err.what());
      }
    }
  });
  CostReport r;
  r.policy = policy_id;
  r.t0 = t0;
  r.T = t1;
  r.rho0 = rho0;
  r.n_traj = n_traj;
  r.dt = dt;
  r.seed = master_seed;
  std::tie(r.mean_j, r.stderr_j) = mean_and_stderr(j);
  for (std::size_t i = 0; i < n_traj; ++i) {
    r.worst_min_eig_raw = std::min(r.worst_min_eig_raw, min_eig[i]);
    r.worst_trace_dev_raw = std::max(r.worst_trace_dev_raw, trace_dev[i]);
    r.projections += proj[i];
  }
  r.samples = std::move(j);
  return r;
}

/// Mean and standard error of per-trajectory differences a_i - b_i of two
/// reports computed on the same noise paths.
inline std::pair<double, double> paired_difference(const CostReport& a, const CostReport& b) {
  if (a.samples.size() != b.samples.size() || a.seed != b.seed)
    throw ValidationError("paired_difference: reports do not share noise paths");
  std::vector<double> d(a.samples.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.samples[i] - b.samples[i];
  return mean_and_stderr(d);
}

/// CSV dump: t, W, u_1..u_m, J_partial, then Re/Im of rho entries (row-major).
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  if (tr.size() == 0) return;
  const Eigen::Index n = tr.states[0].dim();
  const Eigen::Index m = tr.controls[0].size();
  os << "t,W";
  for (Eigen::Index a = 0; a < m; ++a) os << ",u_" << a + 1;
  os << ",J_partial";
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < n; ++k) os << ",rho_re_" << i << k << ",rho_im_" << i << k;
  os << '\n';
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    os << buf;
  };
  for (std::size_t s = 0; s < tr.size(); ++s) {
    std::snprintf(buf, sizeof buf, "%.17g", tr.times[s]);
    os << buf;
    put(tr.w[s]);
    for (Eigen::Index a = 0; a < m; ++a) put(tr.controls[s](a));
    put(s < tr.j_partial.size() ? tr.j_partial[s] : 0.0);
    const Operator& r = tr.states[s].matrix();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k < n; ++k) {
        put(r(i, k).real());
        put(r(i, k).imag());
      }
    os << '\n';
  }
}

}  // namespace qfc
