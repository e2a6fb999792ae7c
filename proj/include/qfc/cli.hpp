#pragma once

// Command-line front end. run_cli is header-only so tests can drive it
// in-process; tools/qfc.cpp is a thin main around it.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qfc/acceptance.hpp"
#include "qfc/config.hpp"
#include "qfc/hjb.hpp"
#include "qfc/montecarlo.hpp"
#include "qfc/verify.hpp"

namespace qfc {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitNumerical = 2, kExitAcceptance = 3 };

namespace cli {

struct Common {
  std::string config_path;
  std::string out_dir = ".";
  std::string grid_path;
  std::string policy;
  long long seed = -1;
  bool quiet = false;
  std::size_t trajectories = 0;
};

inline ExperimentConfig load_config(const Common& o) {
  Json j = o.config_path.empty() ? default_config_json() : load_json_file(o.config_path);
  if (o.seed >= 0) {
    if (!j.contains("sim")) j["sim"] = Json::object();
    j["sim"]["master_seed"] = static_cast<std::uint64_t>(o.seed);
  }
  if (!o.grid_path.empty()) j["grid_file"] = o.grid_path;
  if (!o.policy.empty()) j["policy"] = o.policy;
  return config_from_json(j);
}

inline std::filesystem::path out_path(const Common& o, const std::string& name) {
  std::filesystem::create_directories(o.out_dir);
  return std::filesystem::path(o.out_dir) / name;
}

inline void write_json(const std::filesystem::path& p, const Json& j) {
  std::ofstream f(p);
  if (!f) throw ValidationError("cannot write " + p.string());
  f << j.dump(2) << '\n';
}

inline Json stamp(const ExperimentConfig& c) {
  return Json{{"toolkit_version", kToolkitVersion}, {"config_fingerprint", c.fingerprint()}, {"seed", c.sim.master_seed}};
}

inline std::shared_ptr<const ValueGrid> obtain_grid(const ExperimentConfig& c) {
  if (!c.grid_file.empty()) {
    std::ifstream in(c.grid_file);
    if (!in) throw ValidationError("grid file: cannot open " + c.grid_file);
    return std::make_shared<const ValueGrid>(read_value_grid(in, c.m(), c.c()));
  }
  return std::make_shared<const ValueGrid>(hjb_solve_qubit(c.m(), c.c(), c.hjb_options()));
}

inline FeedbackPolicy make_policy(const ExperimentConfig& c) {
  if (c.policy == "zero") return zero_policy(c.m());
  if (c.policy == "file" && c.grid_file.empty()) throw ValidationError("policy \"file\" needs --grid or grid_file");
  return extract_policy(obtain_grid(c)).as_feedback();
}

inline int cmd_solve_hjb(const Common& o, std::ostream& out) {
  const ExperimentConfig c = load_config(o);
  if (c.m().dim() != 2) throw ValidationError("HJB grid solver supports n=2 only");
  const ValueGrid g = hjb_solve_qubit(c.m(), c.c(), c.hjb_options());
  const auto grid_file = out_path(o, "value_grid.csv");
  {
    std::ofstream f(grid_file);
    if (!f) throw ValidationError("cannot write " + grid_file.string());
    write_value_grid(f, g);
  }
  Json values = Json::array();
  for (const Vec3& p : c.start_points)
    values.push_back(Json{{"t0", c.sim.t0}, {"p", {p(0), p(1), p(2)}}, {"S", g.value(c.sim.t0, p)}});
  Json summary = stamp(c);
  summary["command"] = "solve-hjb";
  summary["grid_fingerprint"] = g.fingerprint();
  summary["grid"] = g.header_json();
  summary["grid_file"] = grid_file.filename().string();
  summary["values"] = values;
  write_json(out_path(o, "solve_summary.json"), summary);
  if (!o.quiet) out << summary.dump(2) << '\n';
  return kExitOk;
}

inline int cmd_simulate(const Common& o, std::ostream& out) {
  const ExperimentConfig c = load_config(o);
  const FeedbackPolicy policy = make_policy(c);
  MonteCarloOptions mo;
  mo.threads = c.threads;
  const CostReport rep = estimate_expected_cost(c.m(), c.c(), policy, c.policy, *c.rho0, c.sim.t0, c.sim.T, c.sim.dt,
                                                c.sim.N_traj, c.sim.master_seed, mo);
  for (std::size_t i = 0; i < std::min(o.trajectories, c.sim.N_traj); ++i) {
    Trajectory tr = simulate_ito(c.m(), policy, *c.rho0, trajectory_noise(c.sim.master_seed, i, c.sim.t0, c.sim.T, c.sim.dt));
    fill_running_cost(c.c(), tr);
    char name[32];
    std::snprintf(name, sizeof name, "trajectory_%05zu.csv", i);
    std::ofstream f(out_path(o, name));
    write_trajectory_csv(f, tr);
  }
  Json j = stamp(c);
  j["command"] = "simulate";
  j["report"] = to_json(rep);
  write_json(out_path(o, "cost_report.json"), j);
  if (!o.quiet) out << j.dump(2) << '\n';
  return kExitOk;
}

inline int cmd_verify(const Common& o, std::ostream& out) {
  const ExperimentConfig c = load_config(o);
  const AcceptanceReport rep = run_acceptance(c);
  Json j = stamp(c);
  j["command"] = "verify";
  j["acceptance"] = to_json(rep);
  write_json(out_path(o, "verify_report.json"), j);
  if (!o.quiet) {
    for (const auto& chk : rep.checks)
      out << "[" << chk.status << "] " << chk.id << " " << chk.name << ": " << chk.detail << '\n';
  }
  return rep.all_passed() ? kExitOk : kExitAcceptance;
}

inline int cmd_master(const Common& o, std::ostream& out) {
  const ExperimentConfig c = load_config(o);
  const FeedbackPolicy policy = c.policy == "zero" ? zero_policy(c.m()) : make_policy(c);
  Trajectory tr = master_solve(c.m(), c.sim.t0, c.sim.T, c.sim.dt, policy, *c.rho0);
  fill_running_cost(c.c(), tr);
  {
    std::ofstream f(out_path(o, "master.csv"));
    write_trajectory_csv(f, tr);
  }
  Json j = stamp(c);
  j["command"] = "master";
  j["policy"] = c.policy;
  j["final_state"] = state_to_json(tr.final_state());
  j["cost"] = accumulate_cost(c.c(), tr);
  write_json(out_path(o, "master_summary.json"), j);
  if (!o.quiet) out << j.dump(2) << '\n';
  return kExitOk;
}

inline int cmd_convergence(const Common& o, std::ostream& out) {
  const ExperimentConfig c = load_config(o);
  const FeedbackPolicy policy = c.policy == "zero" ? zero_policy(c.m()) : make_policy(c);
  SchemeLadderOptions lo;
  lo.t0 = c.sim.t0;
  lo.T = c.sim.T;
  lo.seed = c.sim.master_seed;
  lo.threads = resolve_threads(c.threads);
  const SchemeConsistency sc = scheme_consistency_report(c.m(), policy, *c.rho0, lo);
  Json j = stamp(c);
  j["command"] = "convergence";
  j["ito_vs_strat"] = to_json(sc.ito_strat);
  j["wong_zakai"] = to_json(sc.wong_zakai);
  if (c.m().dim() == 2) {
    // grid self-convergence at the start points on nested lattices N, (N+1)/2, ...
    Json ladder = Json::array();
    std::vector<int> ns;
    for (int n = c.grid.N; n >= 5 && n % 2 == 1 && ns.size() < 3; n = (n + 1) / 2) ns.insert(ns.begin(), n);
    for (int n : ns) {
      HjbOptions ho = c.hjb_options();
      ho.N = n;
      ho.dt = 0.0;
      ho.keep_slices = false;
      const ValueGrid g = hjb_solve_qubit(c.m(), c.c(), ho);
      Json vals = Json::array();
      for (const Vec3& p : c.start_points) vals.push_back(g.value(c.sim.t0, p));
      ladder.push_back(Json{{"N", n}, {"dt_pde", g.dt()}, {"S", vals}});
    }
    j["grid_ladder"] = ladder;
  }
  write_json(out_path(o, "convergence.json"), j);
  {
    std::ofstream f(out_path(o, "convergence.csv"));
    f << "ladder,parameter,error\n";
    for (const auto* r : {&sc.ito_strat, &sc.wong_zakai})
      for (std::size_t k = 0; k < r->errors.size(); ++k) f << r->label << ',' << r->ladder[k] << ',' << r->errors[k] << '\n';
  }
  if (!o.quiet) out << j.dump(2) << '\n';
  return kExitOk;
}

}  // namespace cli

/// Entry point shared by the qfc tool and the tests. Returns the exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"qfc: quantum filtering and feedback control toolkit"};
  app.require_subcommand(1);
  cli::Common o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "experiment configuration (JSON); default scenario if omitted");
    sub->add_option("--out", o.out_dir, "output directory");
    sub->add_option("--seed", o.seed, "override sim.master_seed")->check(CLI::NonNegativeNumber);
    sub->add_flag("--quiet", o.quiet, "suppress console output");
  };
  CLI::App* solve = app.add_subcommand("solve-hjb", "solve the qubit HJB equation and write the value grid");
  CLI::App* sim = app.add_subcommand("simulate", "Monte-Carlo closed-loop cost estimate");
  CLI::App* verify = app.add_subcommand("verify", "run the acceptance battery");
  CLI::App* master = app.add_subcommand("master", "deterministic master-equation run");
  CLI::App* conv = app.add_subcommand("convergence", "scheme and grid convergence ladders");
  for (CLI::App* s : {solve, sim, verify, master, conv}) add_common(s);
  for (CLI::App* s : {sim, master, conv})
    s->add_option("--policy", o.policy, "policy source")->check(CLI::IsMember({"zero", "file", "hjb-grid"}));
  for (CLI::App* s : {sim, verify, master, conv}) s->add_option("--grid", o.grid_path, "precomputed value grid file");
  sim->add_option("--trajectories", o.trajectories, "number of trajectory CSV dumps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }
  try {
    if (*solve) return cli::cmd_solve_hjb(o, out);
    if (*sim) return cli::cmd_simulate(o, out);
    if (*verify) return cli::cmd_verify(o, out);
    if (*master) return cli::cmd_master(o, out);
    if (*conv) return cli::cmd_convergence(o, out);
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitValidation;
}

}  // namespace qfc
