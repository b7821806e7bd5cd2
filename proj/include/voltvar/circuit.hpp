#pragma once

// Radial single-branch feeder model, per-unit bases and the seeded
// generator for prototype rural feeder realizations.
//
// Node 0 is the substation. Load nodes are numbered 1..n and link j
// (0-based) connects node j to node j+1, so link 0 feeds node 1.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "voltvar/errors.hpp"
#include "voltvar/random.hpp"

namespace voltvar {

/// Voltage and power bases. Impedance base follows as V^2 / S.
struct Bases {
  double v_base = 7200.0;    // volts, line-to-neutral
  double s_base = 100.0e3;   // volt-amperes, per phase

  double z_base() const { return v_base * v_base / s_base; }

  double power_to_pu(double kilo) const { return kilo * 1.0e3 / s_base; }
  double power_from_pu(double pu) const { return pu * s_base / 1.0e3; }
  double impedance_to_pu(double ohm) const { return ohm / z_base(); }
  double impedance_from_pu(double pu) const { return pu * z_base(); }

  bool operator==(const Bases&) const = default;
};

struct LinkImpedance {
  double r = 0.0;          // per-unit
  double x = 0.0;          // per-unit
  double length_m = 0.0;

  bool operator==(const LinkImpedance&) const = default;
};

/// Consumption, PV generation and inverter rating at one load node (per-unit).
struct NodeLoad {
  double p_c = 0.0;
  double q_c = 0.0;
  double p_g = 0.0;
  double s = 0.0;
  bool has_pv = false;

  bool operator==(const NodeLoad&) const = default;
};

class Circuit {
 public:
  Circuit() = default;
  Circuit(std::vector<NodeLoad> nodes, std::vector<LinkImpedance> links,
          double v0_squared = 1.0, Bases bases = {})
      : nodes_(std::move(nodes)),
        links_(std::move(links)),
        v0_squared_(v0_squared),
        bases_(bases) {
    if (nodes_.size() != links_.size()) {
      throw ParameterError("links", "expected one link per load node (" +
                                        std::to_string(nodes_.size()) + "), got " +
                                        std::to_string(links_.size()));
    }
  }

  /// Number of load nodes n (the substation is not counted).
  std::size_t size() const { return nodes_.size(); }

  /// Load node by 1-based index.
  const NodeLoad& node(std::size_t j) const { return nodes_.at(j - 1); }
  /// Link from node j to node j+1.
  const LinkImpedance& link(std::size_t j) const { return links_.at(j); }

  const std::vector<NodeLoad>& nodes() const { return nodes_; }
  const std::vector<LinkImpedance>& links() const { return links_; }
  double v0_squared() const { return v0_squared_; }
  const Bases& bases() const { return bases_; }

  /// 1-based indices of nodes carrying PV, ascending.
  std::vector<std::size_t> pv_nodes() const {
    std::vector<std::size_t> out;
    for (std::size_t j = 1; j <= size(); ++j) {
      if (node(j).has_pv) out.push_back(j);
    }
    return out;
  }

  /// Copy with every PV inverter rated at `s_pu`. The loads, spacings and PV
  /// placement are unchanged.
  Circuit with_inverter_capacity(double s_pu) const {
    Circuit out = *this;
    for (auto& nd : out.nodes_) {
      if (nd.has_pv) nd.s = s_pu;
    }
    return out;
  }

  Circuit with_v0_squared(double v0_squared) const {
    Circuit out = *this;
    out.v0_squared_ = v0_squared;
    return out;
  }

  bool operator==(const Circuit&) const = default;

 private:
  std::vector<NodeLoad> nodes_;
  std::vector<LinkImpedance> links_;
  double v0_squared_ = 1.0;
  Bases bases_;
};

/// Closed interval of draws. `lo == hi` is a valid degenerate range.
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool operator==(const Range&) const = default;
};

struct ImpedancePerKm {
  double r = 0.33;  // ohm / km
  double x = 0.38;  // ohm / km

  bool operator==(const ImpedancePerKm&) const = default;
};

/// Knobs for one random feeder realization. Powers in kW / kVAr / kVA.
/// Defaults describe the sparsely loaded 7.2 kV rural prototype.
struct ScenarioParams {
  int n = 100;
  Range spacing_m{200.0, 300.0};
  Range p_c_kw{0.0, 4.0};
  Range q_c_factor{0.2, 0.3};
  double p_g_kw = 1.0;
  double s_kva = 1.1;
  double penetration_r = 0.5;
  double epsilon = 0.05;
  std::uint64_t seed = 7;
  ImpedancePerKm impedance_per_km{};
  double v_base = 7200.0;
  double s_base = 100.0e3;
  double v0_squared = 1.0;

  Bases bases() const { return {v_base, s_base}; }

  bool operator==(const ScenarioParams&) const = default;
};

namespace detail {

inline void check_range(const Range& r, const char* field) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi)) throw ParameterError(field, "not finite");
  if (r.lo < 0.0) throw ParameterError(field, "must be nonnegative");
  if (r.hi < r.lo) throw ParameterError(field, "empty range (max < min)");
}

}  // namespace detail

/// Throws ParameterError naming the first invalid field.
inline void validate_params(const ScenarioParams& p) {
  if (p.n < 1) throw ParameterError("n", "need at least one load node");
  detail::check_range(p.spacing_m, "spacing_range");
  if (p.spacing_m.lo <= 0.0) throw ParameterError("spacing_range", "spacing must be positive");
  detail::check_range(p.p_c_kw, "p_c_range");
  detail::check_range(p.q_c_factor, "q_c_factor_range");
  if (!(p.p_g_kw >= 0.0)) throw ParameterError("p_g_value", "must be nonnegative");
  if (!(p.s_kva >= 0.0)) throw ParameterError("s_value", "must be nonnegative");
  if (p.penetration_r > 0.0 && p.s_kva < p.p_g_kw) {
    throw ParameterError("s_value", "inverter capacity below PV real output");
  }
  if (!(p.penetration_r >= 0.0 && p.penetration_r <= 1.0)) {
    throw ParameterError("penetration_r", "must lie in [0, 1]");
  }
  if (!(p.epsilon > 0.0 && p.epsilon < 1.0)) throw ParameterError("epsilon", "must lie in (0, 1)");
  if (!(p.impedance_per_km.r > 0.0)) throw ParameterError("impedance_per_km.r", "must be positive");
  if (!(p.impedance_per_km.x > 0.0)) throw ParameterError("impedance_per_km.x", "must be positive");
  if (!(p.v_base > 0.0)) throw ParameterError("v_base", "must be positive");
  if (!(p.s_base > 0.0)) throw ParameterError("s_base", "must be positive");
  if (!(p.v0_squared >= 1.0 - p.epsilon && p.v0_squared <= 1.0 + p.epsilon)) {
    throw ParameterError("v0_squared", "outside the voltage band");
  }
}

/// Number of PV nodes for penetration r on n nodes: r*n rounded half to even.
inline std::size_t pv_count(double penetration_r, int n) {
  return static_cast<std::size_t>(std::nearbyint(penetration_r * static_cast<double>(n)));
}

/// Draws one feeder realization. Sampling order is fixed: n spacings, then
/// for each node in order its p_c followed by its q_c factor, then the PV
/// node subset by partial Fisher-Yates over [1..n]. See random.hpp for the
/// portable stream, so a seed maps to the same circuit on every platform.
inline Circuit generate_circuit(const ScenarioParams& params) {
  validate_params(params);
  const Bases bases = params.bases();
  const auto n = static_cast<std::size_t>(params.n);
  Rng rng(params.seed);

  std::vector<LinkImpedance> links(n);
  for (auto& l : links) {
    l.length_m = rng.uniform(params.spacing_m.lo, params.spacing_m.hi);
    const double km = l.length_m / 1000.0;
    l.r = bases.impedance_to_pu(km * params.impedance_per_km.r);
    l.x = bases.impedance_to_pu(km * params.impedance_per_km.x);
  }

  std::vector<NodeLoad> nodes(n);
  for (auto& nd : nodes) {
    const double p_kw = rng.uniform(params.p_c_kw.lo, params.p_c_kw.hi);
    const double f = rng.uniform(params.q_c_factor.lo, params.q_c_factor.hi);
    nd.p_c = bases.power_to_pu(p_kw);
    nd.q_c = bases.power_to_pu(f * p_kw);
  }

  const std::size_t k = pv_count(params.penetration_r, params.n);
  for (std::size_t idx : rng.sample_without_replacement(n, k)) {
    auto& nd = nodes[idx];
    nd.has_pv = true;
    nd.p_g = bases.power_to_pu(params.p_g_kw);
    nd.s = bases.power_to_pu(params.s_kva);
  }
  return Circuit(std::move(nodes), std::move(links), params.v0_squared, bases);
}

/// Reactive headroom sqrt(s^2 - p_g^2) of a node's inverter; 0 without PV.
inline double capacity_bound(const NodeLoad& load) {
  if (!load.has_pv) return 0.0;
  if (load.s < load.p_g) {
    throw DomainError("inverter capacity s=" + std::to_string(load.s) +
                      " below real output p_g=" + std::to_string(load.p_g));
  }
  return std::sqrt((load.s - load.p_g) * (load.s + load.p_g));
}

struct Violation {
  enum class Kind { Node, Link, Circuit };
  Kind kind = Kind::Circuit;
  std::size_t index = 0;  // node index (1-based) or link index (0-based)
  std::string rule;

  std::string describe() const {
    switch (kind) {
      case Kind::Node: return "node " + std::to_string(index) + ": " + rule;
      case Kind::Link: return "link " + std::to_string(index) + ": " + rule;
      case Kind::Circuit: break;
    }
    return "circuit: " + rule;
  }
};

/// Checks every type invariant; an empty result means the circuit is well formed.
inline std::vector<Violation> validate(const Circuit& c, double epsilon = 0.05) {
  std::vector<Violation> out;
  auto node_v = [&](std::size_t j, std::string rule) {
    out.push_back({Violation::Kind::Node, j, std::move(rule)});
  };
  if (c.size() == 0) out.push_back({Violation::Kind::Circuit, 0, "no load nodes"});
  for (std::size_t j = 0; j < c.links().size(); ++j) {
    const auto& l = c.link(j);
    if (!(l.r > 0.0)) out.push_back({Violation::Kind::Link, j, "resistance must be positive"});
    if (!(l.x > 0.0)) out.push_back({Violation::Kind::Link, j, "reactance must be positive"});
    if (!(l.length_m > 0.0)) out.push_back({Violation::Kind::Link, j, "length must be positive"});
  }
  for (std::size_t j = 1; j <= c.size(); ++j) {
    const auto& nd = c.node(j);
    if (!(nd.p_c >= 0.0)) node_v(j, "p_c must be nonnegative");
    if (!(nd.q_c >= 0.0)) node_v(j, "q_c must be nonnegative");
    if (!(nd.p_g >= 0.0)) node_v(j, "p_g must be nonnegative");
    if (!(nd.s >= 0.0)) node_v(j, "s must be nonnegative");
    if (!nd.has_pv && (nd.p_g != 0.0 || nd.s != 0.0)) node_v(j, "generation without PV");
    if (nd.has_pv && nd.s < nd.p_g) node_v(j, "capacity below real output");
  }
  const double v0 = c.v0_squared();
  if (!(v0 >= 1.0 - epsilon && v0 <= 1.0 + epsilon)) {
    out.push_back({Violation::Kind::Circuit, 0, "substation voltage outside band"});
  }
  return out;
}

}  // namespace voltvar
