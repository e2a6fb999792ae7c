#pragma once

// The acceptance battery behind `qfc verify`: ten numbered checks, each with a
// pass/fail/inconclusive status and the measured quantities.

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "qfc/config.hpp"
#include "qfc/hjb.hpp"
#include "qfc/montecarlo.hpp"
#include "qfc/verify.hpp"

namespace qfc {

struct CheckResult {
  int id = 0;
  std::string name;
  std::string status;  // "pass", "fail", "inconclusive"
  Json measured = Json::object();
  std::string detail;

  bool passed() const { return status == "pass"; }
};

struct AcceptanceReport {
  std::vector<CheckResult> checks;
  Json meta = Json::object();

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed(); });
  }
  bool any_failed() const {
    return std::any_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.status == "fail"; });
  }
};

inline Json to_json(const AcceptanceReport& r) {
  Json checks = Json::array();
  for (const auto& c : r.checks)
    checks.push_back(Json{{"id", c.id}, {"name", c.name}, {"status", c.status}, {"measured", c.measured}, {"detail", c.detail}});
  Json j = r.meta;
  j["checks"] = checks;
  j["all_passed"] = r.all_passed();
  return j;
}

/// Sizes of every check; `full` follows the acceptance thresholds, `reduced`
/// is a quick variant used for the reproducibility comparison.
struct BatterySizes {
  std::size_t identity_states = 1000;
  std::size_t generator_samples = 100;
  std::size_t conservation_samples = 1000;
  std::size_t ladder_paths = 32;
  std::size_t wz_paths = 16;
  int oracle_N = 61;
  std::size_t oracle_points = 20;
  std::size_t lq_samples = 100;
  int lq_per_axis = 51;
  std::vector<int> pontryagin_ladder{21, 31, 41};

  static BatterySizes full() { return {}; }
  static BatterySizes reduced() {
    BatterySizes s;
    s.identity_states = 100;
    s.generator_samples = 20;
    s.conservation_samples = 100;
    s.ladder_paths = 4;
    s.wz_paths = 2;
    s.oracle_N = 21;
    s.lq_samples = 10;
    s.lq_per_axis = 21;
    s.pontryagin_ladder = {11, 15, 21};
    return s;
  }
};

/// Configuration used by the reproducibility check: the given scenario at
/// reduced size.
inline Json reduced_config_json(const Json& source) {
  Json j = source;
  j["reduced"] = true;
  j["grid"]["N"] = 15;
  j["grid"]["eps_N"] = 29;
  j["sim"]["N_traj"] = 200;
  j.erase("grid_file");
  return j;
}

namespace detail {

inline ModelSpec random_model(Eigen::Index n, std::mt19937_64& rng, CouplingConvention conv) {
  std::normal_distribution<double> nd(0.0, 1.0);
  auto cplx = [&] {
    Operator a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k < n; ++k) a(i, k) = Complex(nd(rng), nd(rng));
    return a;
  };
  std::vector<Operator> v{random_hermitian(n, rng), random_hermitian(n, rng)};
  std::vector<Operator> r{0.5 * cplx()};
  return ModelSpec(random_hermitian(n, rng), std::move(v), std::move(r), 0.7 * cplx(), {10.0, 10.0}, conv);
}

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

}  // namespace detail

struct AcceptanceContext {
  const ExperimentConfig& cfg;
  BatterySizes sizes;
  int threads;
  std::shared_ptr<const ValueGrid> grid;  // default-scenario grid (solved or loaded)
};

// 1. Stratonovich drift closed form equals w - c.
inline CheckResult check_strat_identity(const AcceptanceContext& ctx) {
  CheckResult r{1, "stratonovich_drift_identity", "", Json::object(), ""};
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (Eigen::Index n : {2, 3}) {
    const ModelSpec m = n == 2 ? ctx.cfg.m() : detail::random_model(3, rng, ctx.cfg.convention);
    for (std::size_t s = 0; s < ctx.sizes.identity_states; ++s) {
      const DensityMatrix rho = random_density_matrix(n, rng);
      const Control u = random_control(m, rng);
      const Operator lhs = strat_drift(m, 0.0, u, rho.matrix());
      const Operator rhs = ito_drift(m, 0.0, u, rho.matrix()) - strat_correction(m, rho.matrix());
      worst = std::max(worst, trace_norm(lhs - rhs));
    }
  }
  r.measured = {{"max_trace_norm_deviation", worst}, {"states_per_dim", ctx.sizes.identity_states}};
  r.status = worst <= 1e-12 ? "pass" : "fail";
  r.detail = "max ||v - (w - c)||_1 = " + detail::fmt(worst) + " (limit 1e-12)";
  return r;
}

// 2. Second-order and Hormander generators agree; hand value kappa^2.
inline CheckResult check_generator(const AcceptanceContext& ctx) {
  CheckResult r{2, "generator_equivalence", "", Json::object(), ""};
  const ModelSpec& m = ctx.cfg.m();
  std::vector<Operator> obs;
  if (m.dim() == 2) {
    obs = {pauli_x(), pauli_y(), pauli_z()};
  } else {
    std::mt19937_64 rng(202);
    obs = {random_hermitian(m.dim(), rng), random_hermitian(m.dim(), rng)};
  }
  const double dev = generator_identity_check(m, polynomial_battery(obs), ctx.sizes.generator_samples, 203);

  const ModelSpec q = ModelSpec::controlled_qubit(ctx.cfg.kappa, 10.0, ctx.cfg.convention);
  const StateFunctional zz{[](const Operator& rho) {
                             const double x = pairing(rho, pauli_z()).real();
                             return x * x;
                           },
                           {}};
  const Operator mixed = 0.5 * identity(2);
  const double d1 = generator_apply_second_order(q, 0.0, q.zero_control(), mixed, zz);
  const double d2 = generator_apply_hormander(q, 0.0, q.zero_control(), mixed, zz);
  const double k2 = ctx.cfg.kappa * ctx.cfg.kappa;
  const double point_err = std::max(std::abs(d1 - k2), std::abs(d2 - k2));
  r.measured = {{"max_relative_deviation", dev}, {"D1_at_mixed", d1}, {"D2_at_mixed", d2}, {"kappa_squared", k2}};
  r.status = dev <= 1e-5 && point_err <= 1e-4 ? "pass" : "fail";
  r.detail = "max rel deviation " + detail::fmt(dev) + " (limit 1e-5); |DF - kappa^2| = " + detail::fmt(point_err) +
             " (limit 1e-4)";
  return r;
}

struct MonteCarloArtifacts {
  CostReport hjb, zero;
  double value = 0.0, value_fine = 0.0, eps_grid = 0.0;
  int eps_N = 0;
};

// 3. Trace conservation pointwise and along Monte-Carlo paths.
inline CheckResult check_conservation(const AcceptanceContext& ctx, const MonteCarloArtifacts& mc) {
  CheckResult r{3, "conservation", "", Json::object(), ""};
  std::mt19937_64 rng(303);
  double worst_tr = 0.0;
  for (Eigen::Index n : {2, 3}) {
    const ModelSpec m = n == 2 ? ctx.cfg.m() : detail::random_model(3, rng, ctx.cfg.convention);
    for (std::size_t s = 0; s < ctx.sizes.conservation_samples; ++s) {
      const DensityMatrix rho = random_density_matrix(n, rng);
      const Control u = random_control(m, rng);
      worst_tr = std::max({worst_tr, std::abs(ito_drift(m, 0.0, u, rho.matrix()).trace()),
                           std::abs(diffusion(m, rho.matrix()).trace())});
    }
  }
  const double min_eig = std::min(mc.hjb.worst_min_eig_raw, mc.zero.worst_min_eig_raw);
  const double trace_dev = std::max(mc.hjb.worst_trace_dev_raw, mc.zero.worst_trace_dev_raw);
  const auto steps = step_count(ctx.cfg.sim.t0, ctx.cfg.sim.T, ctx.cfg.sim.dt);
  r.measured = {{"max_abs_trace_w_sigma", worst_tr},
                {"mc_worst_trace_deviation_raw", trace_dev},
                {"mc_worst_min_eigenvalue_pre_projection", min_eig},
                {"mc_paths_per_policy", mc.hjb.n_traj},
                {"mc_steps", steps}};
  r.status = worst_tr <= 1e-12 && trace_dev <= 1e-9 && min_eig >= -1e-8 ? "pass" : "fail";
  r.detail = "|tr w|,|tr sigma| <= " + detail::fmt(worst_tr) + "; MC |tr rho - 1| <= " + detail::fmt(trace_dev) +
             ", min eig >= " + detail::fmt(min_eig);
  return r;
}

inline SchemeLadderOptions ladder_options(const AcceptanceContext& ctx) {
  SchemeLadderOptions o;
  o.t0 = ctx.cfg.sim.t0;
  o.T = ctx.cfg.sim.T;
  o.paths = ctx.sizes.ladder_paths;
  o.wz_paths = ctx.sizes.wz_paths;
  o.seed = ctx.cfg.sim.master_seed;
  o.threads = ctx.threads;
  return o;
}

inline FeedbackPolicy scenario_policy(const AcceptanceContext& ctx) {
  return extract_policy(ctx.grid).as_feedback();
}

// 4. Ito (Euler-Maruyama) vs Stratonovich (Heun) on shared paths.
inline CheckResult check_ito_strat(const AcceptanceContext& ctx) {
  CheckResult r{4, "ito_stratonovich_consistency", "", Json::object(), ""};
  const ConvergenceReport rep = ito_strat_ladder(ctx.cfg.m(), scenario_policy(ctx), *ctx.cfg.rho0, ladder_options(ctx));
  r.measured = to_json(rep);
  r.status = rep.strictly_decreasing ? "pass" : "fail";
  r.detail = "errors";
  for (double e : rep.errors) r.detail += " " + detail::fmt(e);
  r.detail += ", fitted order " + detail::fmt(rep.order);
  return r;
}

// 5. Wong-Zakai polygonal approximation converges to the Stratonovich solution.
inline CheckResult check_wong_zakai(const AcceptanceContext& ctx) {
  CheckResult r{5, "wong_zakai_convergence", "", Json::object(), ""};
  const ConvergenceReport rep = wong_zakai_ladder(ctx.cfg.m(), scenario_policy(ctx), *ctx.cfg.rho0, ladder_options(ctx));
  r.measured = to_json(rep);
  r.status = rep.strictly_decreasing ? "pass" : "fail";
  r.detail = "errors";
  for (double e : rep.errors) r.detail += " " + detail::fmt(e);
  r.detail += ", fitted order " + detail::fmt(rep.order);
  return r;
}

// 6. Deterministic HJB vs the rotation-angle oracle on pure states.
inline CheckResult check_geodesic(const AcceptanceContext& ctx) {
  CheckResult r{6, "deterministic_hjb_vs_geodesic_oracle", "", Json::object(), ""};
  const ModelSpec m = ModelSpec::controlled_qubit(0.0, 10.0);
  const CostSpec c = CostSpec::quadratic_effort(3, bloch_observable(0.5, Vec3(0, 0, -0.5)));
  HjbOptions o;
  o.N = ctx.sizes.oracle_N;
  o.mode = HjbMode::Deterministic;
  o.keep_slices = false;
  o.threads = ctx.threads;
  const ValueGrid g = hjb_solve_qubit(m, c, o);
  struct Cand {
    double theta, phi;
    int i, j, l;
    double r;
  };
  std::vector<Cand> cands;
  const int n = g.N();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        const Vec3 p = g.point(i, j, l);
        const double rad = p.norm();
        if (std::abs(rad - 1.0) > g.h() + 1e-12) continue;
        const double theta = std::acos(std::clamp(p.z() / rad, -1.0, 1.0));
        if (theta < M_PI / 4.0 - 1e-12) continue;
        cands.push_back({theta, std::atan2(p.y(), p.x()), i, j, l, rad});
      }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return a.theta != b.theta ? a.theta < b.theta : a.phi < b.phi;
  });
  const std::size_t k = std::min(ctx.sizes.oracle_points, cands.size());
  double worst = 0.0;
  Json pts = Json::array();
  for (std::size_t s = 0; s < k; ++s) {
    const Cand& cd = cands[(s * (cands.size() - 1)) / std::max<std::size_t>(1, k - 1)];
    const double v = g.value_at_lattice(0, cd.i, cd.j, cd.l);
    const double oracle = geodesic_value(cd.r, cd.theta, o.T - o.t0);
    const double rel = std::abs(v - oracle) / std::abs(oracle);
    worst = std::max(worst, rel);
    pts.push_back(Json{{"p", {g.coord(cd.i), g.coord(cd.j), g.coord(cd.l)}}, {"S", v}, {"oracle", oracle}, {"rel", rel}});
  }
  r.measured = {{"N", g.N()}, {"dt_pde", g.dt()}, {"points", pts}, {"max_relative_error", worst}};
  r.status = k == ctx.sizes.oracle_points && worst <= 0.02 ? "pass" : "fail";
  r.detail = "max rel error " + detail::fmt(worst) + " over " + std::to_string(k) + " points (limit 0.02)";
  return r;
}

inline MonteCarloArtifacts run_monte_carlo(const AcceptanceContext& ctx) {
  const ExperimentConfig& cfg = ctx.cfg;
  MonteCarloArtifacts a;
  MonteCarloOptions mo;
  mo.threads = ctx.threads;
  a.hjb = estimate_expected_cost(cfg.m(), cfg.c(), scenario_policy(ctx), "hjb-grid", *cfg.rho0, cfg.sim.t0, cfg.sim.T,
                                 cfg.sim.dt, cfg.sim.N_traj, cfg.sim.master_seed, mo);
  a.zero = estimate_expected_cost(cfg.m(), cfg.c(), zero_policy(cfg.m()), "zero", *cfg.rho0, cfg.sim.t0, cfg.sim.T,
                                  cfg.sim.dt, cfg.sim.N_traj, cfg.sim.master_seed, mo);
  const Vec3 p0 = bloch_from_state(*cfg.rho0).p;
  a.value = ctx.grid->value(cfg.sim.t0, p0);
  HjbOptions fine = cfg.hjb_options();
  fine.N = cfg.grid.eps_N > 0 ? cfg.grid.eps_N : 2 * cfg.grid.N - 1;
  fine.dt = 0.0;
  fine.keep_slices = false;
  fine.threads = ctx.threads;
  a.eps_N = fine.N;
  a.value_fine = hjb_solve_qubit(cfg.m(), cfg.c(), fine).value(cfg.sim.t0, p0);
  a.eps_grid = std::abs(a.value - a.value_fine);
  return a;
}

// 7. Achieved cost of the HJB policy matches the value; it beats u = 0.
inline CheckResult check_value_closure(const MonteCarloArtifacts& mc) {
  CheckResult r{7, "dynamic_programming_closure", "", Json::object(), ""};
  const auto [diff, diff_se] = paired_difference(mc.zero, mc.hjb);
  const double gap = std::abs(mc.hjb.mean_j - mc.value);
  const double allowed = 3.0 * mc.hjb.stderr_j + mc.eps_grid;
  const double unpaired_se = std::hypot(mc.hjb.stderr_j, mc.zero.stderr_j);
  r.measured = {{"S_t0_p0", mc.value},
                {"S_fine_t0_p0", mc.value_fine},
                {"eps_grid", mc.eps_grid},
                {"eps_N", mc.eps_N},
                {"hjb", to_json(mc.hjb)},
                {"zero", to_json(mc.zero)},
                {"value_gap", gap},
                {"value_gap_allowed", allowed},
                {"zero_minus_hjb", diff},
                {"zero_minus_hjb_paired_stderr", diff_se},
                {"zero_minus_hjb_unpaired_stderr", unpaired_se}};
  const bool resolved = mc.hjb.n_traj >= 30 && 3.0 * mc.hjb.stderr_j <= 0.05;
  const bool ok = gap <= allowed && diff > 3.0 * diff_se;
  if (!resolved) {
    r.status = "inconclusive";
    r.detail = "stderr too large for the value comparison (N_traj=" + std::to_string(mc.hjb.n_traj) +
               ", 3*stderr=" + detail::fmt(3.0 * mc.hjb.stderr_j) + ")";
    return r;
  }
  r.status = ok ? "pass" : "fail";
  r.detail = "|mean_J - S| = " + detail::fmt(gap) + " <= " + detail::fmt(allowed) + "; J(0) - J(hjb) = " +
             detail::fmt(diff) + " vs 3*paired stderr " + detail::fmt(3.0 * diff_se);
  return r;
}

// 8. LQ closed form vs brute-force grid search; argmin invariance.
inline CheckResult check_lq_formula(const AcceptanceContext& ctx) {
  CheckResult r{8, "lq_optimal_control", "", Json::object(), ""};
  const ModelSpec& m = ctx.cfg.m();
  const CostSpec& c = ctx.cfg.c();
  const GridSearchResult gs = lq_grid_search_check(m, c, ctx.sizes.lq_samples, ctx.sizes.lq_per_axis, 0.0,
                                                   DriftKind::Ito, 801, ctx.threads);
  const GridSearchResult gs3 = lq_grid_search_check(m, c, ctx.sizes.lq_samples, ctx.sizes.lq_per_axis, 3.0,
                                                    DriftKind::Strat, 802, ctx.threads);
  const ArgminInvarianceResult inv = argmin_invariance_check(m, c, ctx.sizes.lq_samples, {0.0, 5.0, -5.0}, 803, 1e-9);
  r.measured = {{"grid_per_axis", ctx.sizes.lq_per_axis},
                {"samples", ctx.sizes.lq_samples},
                {"max_cells_K_w", gs.max_cells},
                {"max_cells_omega_3", gs3.max_cells},
                {"argmin_invariance_max_deviation", inv.max_deviation}};
  r.status = gs.passed && gs3.passed && inv.passed ? "pass" : "fail";
  r.detail = "grid argmin within " + detail::fmt(gs.max_cells) + " cells (omega=3: " + detail::fmt(gs3.max_cells) +
             "); invariance deviation " + detail::fmt(inv.max_deviation);
  return r;
}

// 9. Co-states read off the deterministic value grid satisfy the Hamilton system.
inline CheckResult check_pontryagin(const AcceptanceContext& ctx) {
  CheckResult r{9, "pontryagin_consistency", "", Json::object(), ""};
  const ModelSpec m = ModelSpec::controlled_qubit(0.0, 10.0);
  const CostSpec c = CostSpec::quadratic_effort(3, bloch_observable(0.5, Vec3(0, 0, -0.5)));
  const double theta = 100.0 * M_PI / 180.0;
  const Vec3 p0(0.9 * std::sin(theta), 0.0, 0.9 * std::cos(theta));
  Json rungs = Json::array();
  bool within = true, decreasing = true;
  double prev_p = std::numeric_limits<double>::infinity(), prev_q = prev_p;
  for (int n : ctx.sizes.pontryagin_ladder) {
    HjbOptions o;
    o.N = n;
    o.mode = HjbMode::Deterministic;
    o.store_dt = 0.1 / (n - 1) * 2.0;  // h / 10
    o.threads = ctx.threads;
    auto g = std::make_shared<const ValueGrid>(hjb_solve_qubit(m, c, o));
    const double traj_dt = (o.T - o.t0) / static_cast<double>(g->num_slices() - 1);
    const Trajectory tr = master_solve(m, o.t0, o.T, traj_dt, extract_policy(g).as_feedback(),
                                       state_from_bloch(BlochPoint{p0}));
    const PontryaginResidual res = pontryagin_residual(m, c, costate_from_value(*g, tr), DriftKind::Ito);
    const double bound = 10.0 * (g->h() + g->dt());
    within = within && res.res_p <= bound && res.res_q <= bound;
    decreasing = decreasing && res.res_p < prev_p && res.res_q < prev_q;
    prev_p = res.res_p;
    prev_q = res.res_q;
    rungs.push_back(Json{{"N", n}, {"h", g->h()}, {"dt_pde", g->dt()}, {"trajectory_dt", traj_dt},
                         {"res_p", res.res_p}, {"res_q", res.res_q}, {"bound", bound}});
  }
  r.measured = {{"rungs", rungs}};
  r.status = within && decreasing ? "pass" : "fail";
  r.detail = std::string(within ? "residuals within 10(h+dt)" : "residual above 10(h+dt)") +
             (decreasing ? ", decreasing under refinement" : ", not decreasing under refinement");
  return r;
}

inline AcceptanceReport run_acceptance(const ExperimentConfig& cfg, int threads_override = 0);

// 10. Reproducibility: identical reports across reruns and thread counts.
inline CheckResult check_reproducibility(const ExperimentConfig& cfg) {
  CheckResult r{10, "reproducibility", "", Json::object(), ""};
  const ExperimentConfig small = config_from_json(reduced_config_json(cfg.source));
  const std::string a = to_json(run_acceptance(small, 1)).dump();
  const std::string b = to_json(run_acceptance(small, 1)).dump();
  const std::string c = to_json(run_acceptance(small, 8)).dump();
  r.measured = {{"rerun_identical", a == b},
                {"threads_1_vs_8_identical", a == c},
                {"report_fingerprint", fingerprint(Json::parse(a))}};
  r.status = a == b && a == c ? "pass" : "fail";
  r.detail = std::string("rerun ") + (a == b ? "identical" : "differs") + ", threads 1 vs 8 " +
             (a == c ? "identical" : "differ");
  return r;
}

/// Runs the battery. A reduced configuration skips check 10 (which itself
/// runs reduced batteries).
inline AcceptanceReport run_acceptance(const ExperimentConfig& cfg, int threads_override) {
  if (cfg.m().dim() != 2) throw ValidationError("HJB grid solver supports n=2 only");
  AcceptanceContext ctx{cfg, cfg.reduced ? BatterySizes::reduced() : BatterySizes::full(),
                        threads_override > 0 ? threads_override : resolve_threads(cfg.threads), nullptr};
  if (!cfg.grid_file.empty()) {
    std::ifstream in(cfg.grid_file);
    if (!in) throw ValidationError("grid_file: cannot open " + cfg.grid_file);
    ctx.grid = std::make_shared<const ValueGrid>(read_value_grid(in, cfg.m(), cfg.c()));
  } else {
    HjbOptions o = cfg.hjb_options();
    o.threads = ctx.threads;
    ctx.grid = std::make_shared<const ValueGrid>(hjb_solve_qubit(cfg.m(), cfg.c(), o));
  }
  AcceptanceReport rep;
  rep.meta = {{"toolkit_version", kToolkitVersion},
              {"config_fingerprint", cfg.fingerprint()},
              {"seed", cfg.sim.master_seed},
              {"grid_fingerprint", ctx.grid->fingerprint()},
              {"reduced", cfg.reduced}};
  rep.checks.push_back(check_strat_identity(ctx));
  rep.checks.push_back(check_generator(ctx));
  const MonteCarloArtifacts mc = run_monte_carlo(ctx);
  rep.checks.push_back(check_conservation(ctx, mc));
  rep.checks.push_back(check_ito_strat(ctx));
  rep.checks.push_back(check_wong_zakai(ctx));
  rep.checks.push_back(check_geodesic(ctx));
  rep.checks.push_back(check_value_closure(mc));
  rep.checks.push_back(check_lq_formula(ctx));
  rep.checks.push_back(check_pontryagin(ctx));
  if (!cfg.reduced) rep.checks.push_back(check_reproducibility(cfg));
  return rep;
}

}  // namespace qfc
