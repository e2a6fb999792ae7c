#pragma once

// Experiment configuration: JSON in, validated model/cost/grid/simulation
// settings out. Every field error names the offending JSON path.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qfc/hjb.hpp"
#include "qfc/qubit.hpp"
#include "qfc/serialize.hpp"

namespace qfc {

struct GridConfig {
  int N = 41;
  double dt_pde = 0.0;  // 0: largest stable step
  double store_dt = 0.01;
  HjbMode mode = HjbMode::Stochastic;
  int band = 3;
  int eps_N = 0;  // lattice used for the grid-error estimate (0: 2N-1)
};

struct SimConfig {
  double dt = 1e-3;
  double T = 1.0;
  double t0 = 0.0;
  std::size_t N_traj = 2000;
  std::uint64_t master_seed = 20240601;
};

struct ExperimentConfig {
  Json source;  // the configuration as loaded (after overrides)
  std::optional<ModelSpec> model;
  std::optional<CostSpec> cost;
  double kappa = 1.0;  // dephasing rate of the controlled-qubit preset (or 2||L||)
  GridConfig grid;
  SimConfig sim;
  std::optional<DensityMatrix> rho0;
  std::vector<Vec3> start_points;
  CouplingConvention convention = CouplingConvention::Operator;
  int threads = 0;
  std::string policy = "hjb-grid";
  std::string grid_file;  // optional precomputed grid for simulate/verify
  bool reduced = false;   // smaller acceptance battery

  const ModelSpec& m() const { return *model; }
  const CostSpec& c() const { return *cost; }
  std::string fingerprint() const { return qfc::fingerprint(source); }

  HjbOptions hjb_options() const {
    HjbOptions o;
    o.N = grid.N;
    o.t0 = sim.t0;
    o.T = sim.T;
    o.dt = grid.dt_pde;
    o.store_dt = grid.store_dt;
    o.mode = grid.mode;
    o.band = grid.band;
    o.threads = threads;
    return o;
  }
};

namespace detail {

template <typename T>
T field(const Json& j, const char* key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(path + "." + key + ": wrong type");
  }
}

/// Operators may be given as {"dim","re","im"} or, for qubits, as
/// {"bloch": [q0, qx, qy, qz]} meaning q0 I + q.sigma.
inline Operator read_operator(const Json& j, const std::string& path) {
  if (j.is_object() && j.contains("bloch")) {
    const Json& b = j.at("bloch");
    if (!b.is_array() || b.size() != 4) throw ValidationError(path + ".bloch: expected [q0, qx, qy, qz]");
    try {
      return bloch_observable(b[0].get<double>(), Vec3(b[1].get<double>(), b[2].get<double>(), b[3].get<double>()));
    } catch (const Json::exception&) {
      throw ValidationError(path + ".bloch: entries must be numbers");
    }
  }
  try {
    return operator_from_json(j, path);
  } catch (const Json::exception&) {
    throw ValidationError(path + ": malformed operator");
  }
}

inline std::vector<Operator> read_operator_list(const Json& j, const char* key, const std::string& path) {
  std::vector<Operator> out;
  if (!j.contains(key)) return out;
  const Json& arr = j.at(key);
  if (!arr.is_array()) throw ValidationError(path + "." + key + ": expected an array of operators");
  for (std::size_t i = 0; i < arr.size(); ++i)
    out.push_back(read_operator(arr[i], path + "." + key + "[" + std::to_string(i) + "]"));
  return out;
}

inline std::vector<double> read_u_max(const Json& j, std::size_t nu) {
  if (!j.contains("u_max")) return std::vector<double>(nu, 10.0);
  const Json& u = j.at("u_max");
  std::vector<double> out;
  if (u.is_number()) {
    out.assign(nu, u.get<double>());
  } else if (u.is_array()) {
    for (const auto& x : u) {
      if (!x.is_number()) throw ValidationError("model.u_max: entries must be numbers");
      out.push_back(x.get<double>());
    }
    if (out.size() != nu) throw ValidationError("model.u_max: need one bound per control");
  } else {
    throw ValidationError("model.u_max: expected a number or an array");
  }
  for (double b : out)
    if (!(b > 0.0) || !std::isfinite(b)) throw ValidationError("model.u_max: bounds must be positive and finite");
  return out;
}

}  // namespace detail

inline ModelSpec model_from_json(const Json& j, CouplingConvention conv, double* kappa_out = nullptr) {
  if (!j.is_object()) throw ValidationError("model: expected an object");
  if (j.contains("preset")) {
    const std::string preset = detail::field<std::string>(j, "preset", "model", "");
    if (preset != "controlled_qubit") throw ValidationError("model.preset: unknown preset \"" + preset + "\"");
    const double kappa = detail::field<double>(j, "kappa", "model", 1.0);
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ValidationError("model.kappa: must be finite and >= 0");
    const double u_max = detail::field<double>(j, "u_max", "model", 10.0);
    if (!(u_max > 0.0) || !std::isfinite(u_max)) throw ValidationError("model.u_max: must be positive and finite");
    if (kappa_out) *kappa_out = kappa;
    return ModelSpec::controlled_qubit(kappa, u_max, conv);
  }
  for (const char* k : {"H0", "L"})
    if (!j.contains(k)) throw ValidationError(std::string("model.") + k + ": missing");
  const Operator h0 = detail::read_operator(j.at("H0"), "model.H0");
  const Operator l = detail::read_operator(j.at("L"), "model.L");
  std::vector<Operator> v = detail::read_operator_list(j, "V", "model");
  std::vector<Operator> r = detail::read_operator_list(j, "R", "model");
  const std::vector<double> u_max = detail::read_u_max(j, v.size());
  if (kappa_out) *kappa_out = 2.0 * operator_norm(l);
  return ModelSpec(h0, std::move(v), std::move(r), l, u_max, conv);
}

inline CostSpec cost_from_json(const Json& j, const ModelSpec& model) {
  if (!j.is_object()) throw ValidationError("cost: expected an object");
  if (!j.contains("S")) throw ValidationError("cost.S: missing terminal operator");
  const Operator s = detail::read_operator(j.at("S"), "cost.S");
  const std::size_t nu = model.num_controls();
  const Eigen::Index n = model.dim();
  Eigen::MatrixXd g = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(nu), static_cast<Eigen::Index>(nu));
  if (j.contains("g")) {
    const Json& gj = j.at("g");
    if (!gj.is_array() || gj.size() != nu) throw ValidationError("cost.g: expected an m x m array");
    for (std::size_t a = 0; a < nu; ++a) {
      if (!gj[a].is_array() || gj[a].size() != nu) throw ValidationError("cost.g: expected an m x m array");
      for (std::size_t b = 0; b < nu; ++b) {
        if (!gj[a][b].is_number()) throw ValidationError("cost.g: entries must be numbers");
        g(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = gj[a][b].get<double>();
      }
    }
  }
  std::vector<Operator> f = detail::read_operator_list(j, "F", "cost");
  const Operator c0 = j.contains("C0") ? detail::read_operator(j.at("C0"), "cost.C0") : Operator::Zero(n, n);
  CostSpec c = CostSpec::linear_quadratic(g, std::move(f), c0, s);
  require_compatible(model, c);
  return c;
}

inline DensityMatrix state_from_config(const Json& j, const std::string& path) {
  if (j.is_object() && j.contains("bloch")) {
    const Json& b = j.at("bloch");
    if (!b.is_array() || b.size() != 3) throw ValidationError(path + ".bloch: expected [x, y, z]");
    const Vec3 p(b[0].get<double>(), b[1].get<double>(), b[2].get<double>());
    if (!p.allFinite() || p.norm() > 1.0 + kBlochSlack) throw ValidationError(path + ".bloch: |p| must be <= 1");
    return state_from_bloch(BlochPoint{p});
  }
  return state_from_json(j, path);
}

/// Built-in default scenario (dephasing qubit, kappa = 1, quadratic effort,
/// terminal 1/2 (I - sigma_z), start at p = (0.6, 0, 0)).
inline Json default_config_json() {
  return Json::parse(R"({
    "model": {"preset": "controlled_qubit", "kappa": 1.0, "u_max": 10.0},
    "cost": {"S": {"bloch": [0.5, 0.0, 0.0, -0.5]}},
    "grid": {"N": 41, "store_dt": 0.01, "mode": "stochastic"},
    "sim": {"dt": 0.001, "T": 1.0, "t0": 0.0, "N_traj": 2000, "master_seed": 20240601,
            "rho0": {"bloch": [0.6, 0.0, 0.0]}},
    "start_points": [[0.6, 0.0, 0.0]],
    "convention": "operator"
  })");
}

inline ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::vector<std::string> known{"model", "cost", "grid", "sim", "start_points", "convention",
                                                "threads", "policy", "grid_file", "reduced", "comment"};
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ValidationError("config." + it.key() + ": unknown field");
  }
  ExperimentConfig c;
  c.source = j;
  c.convention = convention_from_string(detail::field<std::string>(j, "convention", "config", "operator"));
  if (!j.contains("model")) throw ValidationError("model: missing");
  if (!j.contains("cost")) throw ValidationError("cost: missing");
  c.model = model_from_json(j.at("model"), c.convention, &c.kappa);
  c.cost = cost_from_json(j.at("cost"), *c.model);

  const Json grid = j.value("grid", Json::object());
  c.grid.N = detail::field<int>(grid, "N", "grid", 41);
  c.grid.dt_pde = detail::field<double>(grid, "dt_pde", "grid", 0.0);
  c.grid.store_dt = detail::field<double>(grid, "store_dt", "grid", 0.01);
  c.grid.mode = hjb_mode_from_string(detail::field<std::string>(grid, "mode", "grid", "stochastic"));
  c.grid.band = detail::field<int>(grid, "band", "grid", 3);
  c.grid.eps_N = detail::field<int>(grid, "eps_N", "grid", 0);
  if (c.grid.N < 3 || c.grid.N % 2 == 0) throw ValidationError("grid.N: must be odd and at least 3");
  if (c.grid.dt_pde < 0.0) throw ValidationError("grid.dt_pde: must be >= 0");
  if (!(c.grid.store_dt > 0.0)) throw ValidationError("grid.store_dt: must be positive");
  if (c.grid.eps_N != 0 && (c.grid.eps_N < 3 || c.grid.eps_N % 2 == 0))
    throw ValidationError("grid.eps_N: must be odd and at least 3");

  const Json sim = j.value("sim", Json::object());
  c.sim.dt = detail::field<double>(sim, "dt", "sim", 1e-3);
  c.sim.T = detail::field<double>(sim, "T", "sim", 1.0);
  c.sim.t0 = detail::field<double>(sim, "t0", "sim", 0.0);
  c.sim.N_traj = detail::field<std::size_t>(sim, "N_traj", "sim", 2000);
  c.sim.master_seed = detail::field<std::uint64_t>(sim, "master_seed", "sim", 20240601);
  if (!(c.sim.dt > 0.0)) throw ValidationError("sim.dt: must be positive");
  if (!(c.sim.T > c.sim.t0)) throw ValidationError("sim.T: must exceed sim.t0");
  try {
    step_count(c.sim.t0, c.sim.T, c.sim.dt);
  } catch (const ValidationError&) {
    throw ValidationError("sim.dt: must divide T - t0");
  }
  if (c.sim.N_traj < 2) throw ValidationError("sim.N_traj: must be at least 2");
  const Eigen::Index n = c.model->dim();
  c.rho0 = sim.contains("rho0") ? state_from_config(sim.at("rho0"), "sim.rho0") : DensityMatrix::maximally_mixed(n);
  if (c.rho0->dim() != n) throw ValidationError("sim.rho0: dimension does not match the model");

  if (j.contains("start_points")) {
    const Json& sp = j.at("start_points");
    if (!sp.is_array()) throw ValidationError("start_points: expected an array of [x, y, z]");
    for (std::size_t i = 0; i < sp.size(); ++i) {
      const std::string path = "start_points[" + std::to_string(i) + "]";
      if (!sp[i].is_array() || sp[i].size() != 3) throw ValidationError(path + ": expected [x, y, z]");
      const Vec3 p(sp[i][0].get<double>(), sp[i][1].get<double>(), sp[i][2].get<double>());
      if (!p.allFinite() || p.norm() > 1.0 + kBlochSlack) throw ValidationError(path + ": |p| must be <= 1");
      c.start_points.push_back(p);
    }
  } else if (n == 2) {
    c.start_points.push_back(bloch_from_state(*c.rho0).p);
  }
  c.threads = detail::field<int>(j, "threads", "config", 0);
  if (c.threads < 0) throw ValidationError("config.threads: must be >= 0");
  c.policy = detail::field<std::string>(j, "policy", "config", "hjb-grid");
  if (c.policy != "zero" && c.policy != "file" && c.policy != "hjb-grid")
    throw ValidationError("config.policy: expected \"zero\", \"file\" or \"hjb-grid\"");
  c.grid_file = detail::field<std::string>(j, "grid_file", "config", "");
  c.reduced = detail::field<bool>(j, "reduced", "config", false);
  return c;
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ValidationError(path + ": invalid JSON: " + e.what());
  }
}

}  // namespace qfc
