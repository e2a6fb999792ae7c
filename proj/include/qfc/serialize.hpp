#pragma once

// JSON forms of operators, states, models, costs and noise paths, plus the
// stable fingerprints recorded in every output file.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"

#include "qfc/control.hpp"
#include "qfc/noise.hpp"

namespace qfc {

using Json = nlohmann::json;

inline constexpr const char* kToolkitVersion = "0.1.0";

inline Json operator_to_json(const Operator& a) {
  Json re = Json::array();
  Json im = Json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Json rr = Json::array();
    Json ri = Json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      rr.push_back(a(i, j).real());
      ri.push_back(a(i, j).imag());
    }
    re.push_back(rr);
    im.push_back(ri);
  }
  return Json{{"dim", a.rows()}, {"re", re}, {"im", im}};
}

inline Operator operator_from_json(const Json& j, const std::string& field = "operator") {
  if (!j.is_object() || !j.contains("dim") || !j.contains("re"))
    throw ValidationError(field + ": expected {\"dim\", \"re\", \"im\"}");
  const auto n = j.at("dim").get<long>();
  if (n < 1) throw ValidationError(field + ".dim: must be positive");
  const Json& re = j.at("re");
  const Json im = j.contains("im") ? j.at("im") : Json();
  Operator a = Operator::Zero(n, n);
  if (!re.is_array() || static_cast<long>(re.size()) != n) throw ValidationError(field + ".re: wrong number of rows");
  if (!im.is_null() && (!im.is_array() || static_cast<long>(im.size()) != n))
    throw ValidationError(field + ".im: wrong number of rows");
  for (long r = 0; r < n; ++r) {
    if (!re[r].is_array() || static_cast<long>(re[r].size()) != n) throw ValidationError(field + ".re: wrong row length");
    if (!im.is_null() && (!im[r].is_array() || static_cast<long>(im[r].size()) != n))
      throw ValidationError(field + ".im: wrong row length");
    for (long c = 0; c < n; ++c) {
      const double x = re[r][c].get<double>();
      const double y = im.is_null() ? 0.0 : im[r][c].get<double>();
      a(r, c) = Complex(x, y);
    }
  }
  if (!all_finite(a)) throw ValidationError(field + ": non-finite entries");
  return a;
}

inline Json state_to_json(const DensityMatrix& rho) { return operator_to_json(rho.matrix()); }

inline DensityMatrix state_from_json(const Json& j, const std::string& field = "state") {
  try {
    return DensityMatrix(operator_from_json(j, field));
  } catch (const ValidationError& e) {
    throw ValidationError(field + ": " + e.what());
  }
}

inline Json model_to_json(const ModelSpec& m) {
  Json v = Json::array();
  for (const auto& op : m.control_operators()) v.push_back(operator_to_json(op));
  Json r = Json::array();
  for (const auto& op : m.dissipators()) r.push_back(operator_to_json(op));
  return Json{{"dim", m.dim()},
              {"H0", operator_to_json(m.drift_hamiltonian())},
              {"V", v},
              {"R", r},
              {"L", operator_to_json(m.coupling())},
              {"u_max", m.u_max()},
              {"convention", to_string(m.convention())}};
}

inline Json cost_to_json(const CostSpec& c) {
  if (!c.is_linear_quadratic()) return Json{{"general", true}, {"S", operator_to_json(c.terminal())}};
  Json g = Json::array();
  for (Eigen::Index i = 0; i < c.metric().rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < c.metric().cols(); ++k) row.push_back(c.metric()(i, k));
    g.push_back(row);
  }
  Json f = Json::array();
  for (const auto& op : c.linear_terms()) f.push_back(operator_to_json(op));
  return Json{{"g", g}, {"F", f}, {"C0", operator_to_json(c.constant_term())}, {"S", operator_to_json(c.terminal())}};
}

/// FNV-1a over the canonical (key-sorted, compact) dump.
inline std::string fingerprint(const Json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string model_fingerprint(const ModelSpec& m) { return fingerprint(model_to_json(m)); }
inline std::string cost_fingerprint(const CostSpec& c) { return fingerprint(cost_to_json(c)); }

inline Json noise_to_json(const NoisePath& p) {
  Json j{{"t0", p.t0()}, {"T", p.t1()}, {"dt", p.dt()}, {"seed", p.seed()}};
  if (p.refinements() > 0) j["refinements"] = p.refinements();
  return j;
}

inline NoisePath noise_from_json(const Json& j) {
  for (const char* k : {"t0", "T", "dt", "seed"})
    if (!j.contains(k)) throw ValidationError(std::string("noise: missing field '") + k + "'");
  return NoisePath::from_description(j.at("t0").get<double>(), j.at("T").get<double>(), j.at("dt").get<double>(),
                                     j.at("seed").get<std::uint64_t>(), j.value("refinements", 0));
}

}  // namespace qfc
