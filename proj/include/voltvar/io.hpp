#pragma once

// JSON documents: circuits, scenario parameters, dispatch solutions and the
// sweep run manifest.
//
// Circuit document (all electrical quantities per-unit on `bases`):
//   {
//     "format": "voltvar-circuit/1",
//     "bases": {"v_base": V, "s_base": VA},
//     "v0_squared": 1.0,
//     "nodes": [{"index": 1, "p_c": .., "q_c": .., "p_g": .., "s": .., "has_pv": bool}, ...],
//     "links": [{"index": 0, "r": .., "x": .., "length_m": ..}, ...]
//   }
// Node entries are ordered 1..n and link entries 0..n-1; link j feeds node j+1.
// Doubles are written with round-trip precision, so load(dump(c)) == c.

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <string>

#include "voltvar/circuit.hpp"
#include "voltvar/dispatch.hpp"
#include "voltvar/errors.hpp"
#include "voltvar/experiments.hpp"

namespace voltvar {

using json = nlohmann::json;

inline constexpr const char* kCircuitFormat = "voltvar-circuit/1";

inline json circuit_to_json(const Circuit& c) {
  json j;
  j["format"] = kCircuitFormat;
  j["bases"] = {{"v_base", c.bases().v_base}, {"s_base", c.bases().s_base}};
  j["v0_squared"] = c.v0_squared();
  json nodes = json::array();
  for (std::size_t k = 1; k <= c.size(); ++k) {
    const auto& nd = c.node(k);
    nodes.push_back({{"index", k},
                     {"p_c", nd.p_c},
                     {"q_c", nd.q_c},
                     {"p_g", nd.p_g},
                     {"s", nd.s},
                     {"has_pv", nd.has_pv}});
  }
  json links = json::array();
  for (std::size_t k = 0; k < c.size(); ++k) {
    const auto& l = c.link(k);
    links.push_back({{"index", k}, {"r", l.r}, {"x", l.x}, {"length_m", l.length_m}});
  }
  j["nodes"] = std::move(nodes);
  j["links"] = std::move(links);
  return j;
}

namespace detail {

inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ParameterError(where + "." + key, "missing");
  return j.at(key);
}

inline double number(const json& j, const char* key, const std::string& where) {
  const json& v = require(j, key, where);
  if (!v.is_number()) throw ParameterError(where + "." + key, "expected a number");
  return v.get<double>();
}

}  // namespace detail

/// Parses a circuit document. Structural errors raise ParameterError naming
/// the field; physical invariants are left to validate().
inline Circuit circuit_from_json(const json& j) {
  using detail::number;
  using detail::require;
  if (j.contains("format") && j.at("format") != kCircuitFormat) {
    throw ParameterError("format", "unsupported circuit format");
  }
  const json& b = require(j, "bases", "circuit");
  const Bases bases{number(b, "v_base", "bases"), number(b, "s_base", "bases")};
  const double v0 = j.contains("v0_squared") ? number(j, "v0_squared", "circuit") : 1.0;

  const json& jn = require(j, "nodes", "circuit");
  const json& jl = require(j, "links", "circuit");
  if (!jn.is_array() || !jl.is_array()) throw ParameterError("circuit", "nodes/links must be arrays");
  std::vector<NodeLoad> nodes;
  for (std::size_t k = 0; k < jn.size(); ++k) {
    const json& e = jn[k];
    const std::string where = "nodes[" + std::to_string(k) + "]";
    if (e.contains("index") && e.at("index").get<std::size_t>() != k + 1) {
      throw ParameterError(where + ".index", "nodes must be listed in order 1..n");
    }
    NodeLoad nd;
    nd.p_c = number(e, "p_c", where);
    nd.q_c = number(e, "q_c", where);
    nd.p_g = e.contains("p_g") ? number(e, "p_g", where) : 0.0;
    nd.s = e.contains("s") ? number(e, "s", where) : 0.0;
    nd.has_pv = e.value("has_pv", false);
    nodes.push_back(nd);
  }
  std::vector<LinkImpedance> links;
  for (std::size_t k = 0; k < jl.size(); ++k) {
    const json& e = jl[k];
    const std::string where = "links[" + std::to_string(k) + "]";
    if (e.contains("index") && e.at("index").get<std::size_t>() != k) {
      throw ParameterError(where + ".index", "links must be listed in order 0..n-1");
    }
    links.push_back({number(e, "r", where), number(e, "x", where), number(e, "length_m", where)});
  }
  return Circuit(std::move(nodes), std::move(links), v0, bases);
}

inline void save_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ParameterError("path", "cannot write " + path);
  out << j.dump(2) << '\n';
}

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("path", "cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParameterError("path", path + ": " + e.what());
  }
}

inline json params_to_json(const ScenarioParams& p) {
  return {{"n", p.n},
          {"spacing_range", {p.spacing_m.lo, p.spacing_m.hi}},
          {"p_c_range", {p.p_c_kw.lo, p.p_c_kw.hi}},
          {"q_c_factor_range", {p.q_c_factor.lo, p.q_c_factor.hi}},
          {"p_g_value", p.p_g_kw},
          {"s_value", p.s_kva},
          {"penetration_r", p.penetration_r},
          {"epsilon", p.epsilon},
          {"seed", p.seed},
          {"impedance_per_km", {{"r", p.impedance_per_km.r}, {"x", p.impedance_per_km.x}}},
          {"v_base", p.v_base},
          {"s_base", p.s_base},
          {"v0_squared", p.v0_squared}};
}

/// DispatchSolution export: policy, q_g (per-unit and kVAr), objective,
/// KKT residual and status.
inline json solution_to_json(const DispatchSolution& sol, const Bases& bases) {
  json q_kvar = json::array();
  for (double q : sol.dispatch.q_g) q_kvar.push_back(bases.power_from_pu(q));
  json j = {{"policy", to_string(sol.dispatch.policy)},
            {"status", to_string(sol.status)},
            {"objective", sol.objective_value},
            {"kkt_residual", sol.kkt_residual},
            {"q_g", sol.dispatch.q_g},
            {"q_g_kvar", std::move(q_kvar)},
            {"active_box", sol.active_box},
            {"active_voltage", sol.active_voltage},
            {"iterations", sol.iterations}};
  if (sol.certificate_node >= 0) j["certificate_node"] = sol.certificate_node;
  return j;
}

inline json spec_to_json(const SweepSpec& spec) {
  json policies = json::array();
  for (Policy p : spec.policies) policies.push_back(to_string(p));
  return {{"base_params", params_to_json(spec.base_params)},
          {"s_values", spec.s_values},
          {"r_values", spec.r_values},
          {"n_realizations", spec.n_realizations},
          {"policies", std::move(policies)},
          {"ac_tol", spec.ac.tol},
          {"ac_max_iter", spec.ac.max_iter},
          {"qp_tol", spec.qp_tol}};
}

}  // namespace voltvar
