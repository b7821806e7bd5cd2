#pragma once

// Branch-flow (DistFlow) power flow on the single-branch feeder.
//
// State convention: P[j], Q[j] are the flows on link j, leaving node j toward
// node j+1, so P[0], Q[0] is the substation head flow. v_squared has one
// entry per node including the substation (index 0). Flow beyond node n is
// zero.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "voltvar/circuit.hpp"
#include "voltvar/errors.hpp"

namespace voltvar {

enum class Policy { Zero, Local, Optimal, Custom };

inline const char* to_string(Policy p) {
  switch (p) {
    case Policy::Zero: return "zero";
    case Policy::Local: return "local";
    case Policy::Optimal: return "optimal";
    case Policy::Custom: return "custom";
  }
  return "?";
}

inline Policy policy_from_string(const std::string& s) {
  if (s == "zero") return Policy::Zero;
  if (s == "local") return Policy::Local;
  if (s == "optimal") return Policy::Optimal;
  if (s == "custom") return Policy::Custom;
  throw ParameterError("policy", "unknown policy '" + s + "'");
}

/// Inverter reactive setpoints, one per load node (index 0 is node 1).
/// Positive values are generation.
struct Dispatch {
  std::vector<double> q_g;
  Policy policy = Policy::Custom;

  double at(std::size_t node) const { return q_g.at(node - 1); }
};

/// Largest violation of the inverter capability bound (0 when within bounds)
/// plus any setpoint at a node without PV.
inline double bound_violation(const Circuit& c, const Dispatch& d) {
  if (d.q_g.size() != c.size()) {
    throw ParameterError("dispatch", "expected " + std::to_string(c.size()) + " setpoints");
  }
  double worst = 0.0;
  for (std::size_t j = 1; j <= c.size(); ++j) {
    const double q = d.at(j);
    const double excess = c.node(j).has_pv ? std::abs(q) - capacity_bound(c.node(j)) : std::abs(q);
    worst = std::max(worst, excess);
  }
  return worst;
}

enum class FlowModel { AC, LIN };

struct FlowState {
  std::vector<double> P;
  std::vector<double> Q;
  std::vector<double> v_squared;
  FlowModel model = FlowModel::LIN;
  int iterations = 0;

  std::size_t size() const { return P.size(); }
};

namespace detail {

inline void check_dispatch_shape(const Circuit& c, const Dispatch& d) {
  if (d.q_g.size() != c.size()) {
    throw ParameterError("dispatch", "expected " + std::to_string(c.size()) +
                                         " setpoints, got " + std::to_string(d.q_g.size()));
  }
}

/// Net withdrawal (p_j, q_j) at node j.
inline double net_p(const Circuit& c, std::size_t j) { return c.node(j).p_c - c.node(j).p_g; }
inline double net_q(const Circuit& c, const Dispatch& d, std::size_t j) {
  return c.node(j).q_c - d.at(j);
}

}  // namespace detail

/// Linearized flows: suffix sums of net withdrawals and the linear voltage drop.
inline FlowState solve_lin(const Circuit& c, const Dispatch& d) {
  detail::check_dispatch_shape(c, d);
  const std::size_t n = c.size();
  FlowState s;
  s.model = FlowModel::LIN;
  s.P.assign(n, 0.0);
  s.Q.assign(n, 0.0);
  s.v_squared.assign(n + 1, c.v0_squared());
  double p_acc = 0.0;
  double q_acc = 0.0;
  for (std::size_t j = n; j-- > 0;) {
    p_acc += detail::net_p(c, j + 1);
    q_acc += detail::net_q(c, d, j + 1);
    s.P[j] = p_acc;
    s.Q[j] = q_acc;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const auto& l = c.link(j);
    s.v_squared[j + 1] = s.v_squared[j] - 2.0 * (l.r * s.P[j] + l.x * s.Q[j]);
  }
  return s;
}

/// Max absolute residual of each branch-flow equation over all links.
struct Residuals {
  double real = 0.0;      // P_{j+1} = P_j - r l_j - p_{j+1}
  double reactive = 0.0;  // Q_{j+1} = Q_j - x l_j - q_{j+1}
  double voltage = 0.0;   // v_{j+1} = v_j - 2(r P_j + x Q_j) + |z|^2 l_j

  double max() const { return std::max({real, reactive, voltage}); }
};

/// Residuals of the AC equations evaluated with the state's own voltages;
/// l_j = (P_j^2 + Q_j^2) / v_j.
inline Residuals residuals(const Circuit& c, const Dispatch& d, const FlowState& s) {
  detail::check_dispatch_shape(c, d);
  const std::size_t n = c.size();
  if (s.P.size() != n || s.Q.size() != n || s.v_squared.size() != n + 1) {
    throw ParameterError("state", "array sizes do not match the circuit");
  }
  Residuals res;
  for (std::size_t j = 0; j < n; ++j) {
    const auto& l = c.link(j);
    const double sq = (s.P[j] * s.P[j] + s.Q[j] * s.Q[j]) / s.v_squared[j];
    const double p_next = j + 1 < n ? s.P[j + 1] : 0.0;
    const double q_next = j + 1 < n ? s.Q[j + 1] : 0.0;
    const double e_p = p_next - (s.P[j] - l.r * sq - detail::net_p(c, j + 1));
    const double e_q = q_next - (s.Q[j] - l.x * sq - detail::net_q(c, d, j + 1));
    const double e_v = s.v_squared[j + 1] -
                       (s.v_squared[j] - 2.0 * (l.r * s.P[j] + l.x * s.Q[j]) +
                        (l.r * l.r + l.x * l.x) * sq);
    res.real = std::max(res.real, std::abs(e_p));
    res.reactive = std::max(res.reactive, std::abs(e_q));
    res.voltage = std::max(res.voltage, std::abs(e_v));
  }
  return res;
}

struct AcOptions {
  double tol = 1e-10;
  int max_iter = 50;
};

/// Backward/forward sweep for the AC branch-flow equations.
///
/// Each iteration: the backward pass accumulates downstream withdrawals plus
/// link losses computed from the previous iterate; the forward pass walks
/// voltages out from the substation with the new flows. Starts from flat
/// voltages and zero losses. When `history` is given it receives the max
/// residual after every iteration.
inline FlowState solve_ac(const Circuit& c, const Dispatch& d, const AcOptions& opt = {},
                          std::vector<double>* history = nullptr) {
  detail::check_dispatch_shape(c, d);
  if (!(opt.tol > 0.0)) throw ParameterError("tol", "must be positive");
  if (opt.max_iter < 1) throw ParameterError("max_iter", "must be at least 1");
  const std::size_t n = c.size();
  FlowState s;
  s.model = FlowModel::AC;
  s.P.assign(n, 0.0);
  s.Q.assign(n, 0.0);
  s.v_squared.assign(n + 1, c.v0_squared());
  std::vector<double> loss_term(n, 0.0);  // (P^2 + Q^2) / v on each link

  double last = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opt.max_iter; ++it) {
    double p_acc = 0.0;
    double q_acc = 0.0;
    for (std::size_t j = n; j-- > 0;) {
      const auto& l = c.link(j);
      p_acc += detail::net_p(c, j + 1) + l.r * loss_term[j];
      q_acc += detail::net_q(c, d, j + 1) + l.x * loss_term[j];
      s.P[j] = p_acc;
      s.Q[j] = q_acc;
    }
    for (std::size_t j = 0; j < n; ++j) {
      const auto& l = c.link(j);
      loss_term[j] = (s.P[j] * s.P[j] + s.Q[j] * s.Q[j]) / s.v_squared[j];
      const double next = s.v_squared[j] - 2.0 * (l.r * s.P[j] + l.x * s.Q[j]) +
                          (l.r * l.r + l.x * l.x) * loss_term[j];
      // a diverging sweep overflows instead of crossing zero; both mean no operating point
      if (!(next > 0.0) || !std::isfinite(next)) {
        throw InfeasibleOperatingPoint(
            "voltage collapse at node " + std::to_string(j + 1), static_cast<int>(j + 1));
      }
      s.v_squared[j + 1] = next;
    }
    last = residuals(c, d, s).max();
    if (history) history->push_back(last);
    s.iterations = it;
    if (last <= opt.tol) return s;
  }
  throw ConvergenceError("AC sweep did not converge, last residual " + std::to_string(last), last,
                         s.iterations);
}

/// Resistive losses sum_j r_j (P_j^2 + Q_j^2) / v_j, per-unit.
inline double losses(const Circuit& c, const FlowState& s) {
  if (s.P.size() != c.size() || s.v_squared.size() != c.size() + 1) {
    throw ParameterError("state", "array sizes do not match the circuit");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) {
    total += c.link(j).r * (s.P[j] * s.P[j] + s.Q[j] * s.Q[j]) / s.v_squared[j];
  }
  return total;
}

struct BandCheck {
  bool ok = true;
  std::size_t min_node = 0;
  std::size_t max_node = 0;
  double min_v_squared = 0.0;
  double max_v_squared = 0.0;
  /// Node with the largest excursion outside the band; meaningful when !ok.
  std::size_t worst_node = 0;
};

inline BandCheck voltage_band_ok(const FlowState& s, double epsilon) {
  BandCheck out;
  if (s.v_squared.empty()) return out;
  const auto [lo, hi] = std::minmax_element(s.v_squared.begin(), s.v_squared.end());
  out.min_node = static_cast<std::size_t>(lo - s.v_squared.begin());
  out.max_node = static_cast<std::size_t>(hi - s.v_squared.begin());
  out.min_v_squared = *lo;
  out.max_v_squared = *hi;
  const double under = (1.0 - epsilon) - *lo;
  const double over = *hi - (1.0 + epsilon);
  out.ok = under <= 0.0 && over <= 0.0;
  out.worst_node = under >= over ? out.min_node : out.max_node;
  return out;
}

/// CSV with columns node, v_squared, v, P_out, Q_out; P_out at node n is 0.
inline void write_flow_csv(std::ostream& os, const FlowState& s) {
  os << "node,v_squared,v,P_out,Q_out\n";
  char buf[160];
  for (std::size_t j = 0; j < s.v_squared.size(); ++j) {
    const double p = j < s.P.size() ? s.P[j] : 0.0;
    const double q = j < s.Q.size() ? s.Q[j] : 0.0;
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", j, s.v_squared[j],
                  std::sqrt(s.v_squared[j]), p, q);
    os << buf;
  }
}

}  // namespace voltvar
