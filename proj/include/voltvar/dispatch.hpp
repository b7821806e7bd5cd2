#pragma once

// Reactive-power dispatch policies for the PV inverters.
//
// The optimal policy minimizes the linearized loss objective
//   sum_j r_j (P_j^2 + Q_j^2) / v0^2
// over the PV setpoints, with the capability box per inverter and the
// linearized voltage band at every node. P does not depend on the setpoints
// and Q is affine in them, so the problem is a QP in the PV coordinates only.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "voltvar/circuit.hpp"
#include "voltvar/errors.hpp"
#include "voltvar/powerflow.hpp"
#include "voltvar/qp.hpp"

namespace voltvar {

/// Reduced QP over the setpoints of the PV nodes.
///
/// With R(k), X(k) the cumulative resistance/reactance from the substation to
/// node k and w = 1 / v0^2:
///   H[a][b]       = 2 w R(min(k_a, k_b))
///   dv_i / dq_a   = 2 X(min(i, k_a))
/// Constraint rows: one box row per PV node, then one voltage row per load
/// node 1..n.
struct QpProblem {
  std::vector<std::size_t> pv_nodes;  // 1-based, ascending
  qp::Problem qp;
  double constant = 0.0;              // objective at q_g = 0 minus linear/quad parts
  Eigen::VectorXd v_squared_at_zero;  // LIN v^2 at q_g = 0, nodes 0..n
  double epsilon = 0.05;
  double v0_squared = 1.0;

  std::size_t dim() const { return pv_nodes.size(); }
  std::size_t box_rows() const { return pv_nodes.size(); }

  /// LIN objective at reduced setpoints x.
  double objective(const Eigen::VectorXd& x) const { return qp.objective(x) + constant; }

  Eigen::VectorXd reduce(const Dispatch& d) const {
    Eigen::VectorXd x(static_cast<Eigen::Index>(dim()));
    for (std::size_t a = 0; a < dim(); ++a) x(static_cast<Eigen::Index>(a)) = d.at(pv_nodes[a]);
    return x;
  }

  Dispatch expand(const Eigen::VectorXd& x, std::size_t n, Policy policy) const {
    Dispatch d{std::vector<double>(n, 0.0), policy};
    for (std::size_t a = 0; a < dim(); ++a) d.q_g[pv_nodes[a] - 1] = x(static_cast<Eigen::Index>(a));
    return d;
  }
};

inline QpProblem build_qp(const Circuit& c, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ParameterError("epsilon", "must lie in (0, 1)");
  const std::size_t n = c.size();
  QpProblem prob;
  prob.pv_nodes = c.pv_nodes();
  prob.epsilon = epsilon;
  prob.v0_squared = c.v0_squared();
  const auto m = static_cast<Eigen::Index>(prob.pv_nodes.size());
  const double w = 1.0 / c.v0_squared();

  const FlowState base = solve_lin(c, Dispatch{std::vector<double>(n, 0.0), Policy::Zero});
  prob.v_squared_at_zero = Eigen::Map<const Eigen::VectorXd>(base.v_squared.data(),
                                                             static_cast<Eigen::Index>(n + 1));

  // cumulative impedance to node k, and prefix sums of r_j Q0_j
  std::vector<double> cum_r(n + 1, 0.0);
  std::vector<double> cum_x(n + 1, 0.0);
  std::vector<double> cum_rq(n + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    cum_r[j + 1] = cum_r[j] + c.link(j).r;
    cum_x[j + 1] = cum_x[j] + c.link(j).x;
    cum_rq[j + 1] = cum_rq[j] + c.link(j).r * base.Q[j];
  }
  prob.constant = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    prob.constant += w * c.link(j).r * (base.P[j] * base.P[j] + base.Q[j] * base.Q[j]);
  }

  auto& pb = prob.qp;
  pb.H.resize(m, m);
  pb.c.resize(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const std::size_t ka = prob.pv_nodes[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < m; ++b) {
      const std::size_t kb = prob.pv_nodes[static_cast<std::size_t>(b)];
      pb.H(a, b) = 2.0 * w * cum_r[std::min(ka, kb)];
    }
    pb.c(a) = -2.0 * w * cum_rq[ka];
  }

  const auto rows = m + static_cast<Eigen::Index>(n);
  pb.A = Eigen::MatrixXd::Zero(rows, m);
  pb.lower.resize(rows);
  pb.upper.resize(rows);
  for (Eigen::Index a = 0; a < m; ++a) {
    const double b = capacity_bound(c.node(prob.pv_nodes[static_cast<std::size_t>(a)]));
    pb.A(a, a) = 1.0;
    pb.lower(a) = -b;
    pb.upper(a) = b;
  }
  for (std::size_t i = 1; i <= n; ++i) {
    const Eigen::Index row = m + static_cast<Eigen::Index>(i - 1);
    for (Eigen::Index a = 0; a < m; ++a) {
      pb.A(row, a) = 2.0 * cum_x[std::min(i, prob.pv_nodes[static_cast<std::size_t>(a)])];
    }
    pb.lower(row) = (1.0 - epsilon) - base.v_squared[i];
    pb.upper(row) = (1.0 + epsilon) - base.v_squared[i];
  }
  return prob;
}

/// LIN objective of a full dispatch evaluated straight from the linear flows,
/// with denominators frozen at v0^2.
inline double lin_objective(const Circuit& c, const Dispatch& d) {
  const FlowState s = solve_lin(c, d);
  double total = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) {
    total += c.link(j).r * (s.P[j] * s.P[j] + s.Q[j] * s.Q[j]);
  }
  return total / c.v0_squared();
}

inline Dispatch zero_dispatch(const Circuit& c) {
  return Dispatch{std::vector<double>(c.size(), 0.0), Policy::Zero};
}

/// Each inverter cancels its own node's reactive demand as far as its
/// capability allows.
inline Dispatch local_dispatch(const Circuit& c) {
  Dispatch d{std::vector<double>(c.size(), 0.0), Policy::Local};
  for (std::size_t j = 1; j <= c.size(); ++j) {
    const auto& nd = c.node(j);
    if (!nd.has_pv) continue;
    const double b = capacity_bound(nd);
    d.q_g[j - 1] = std::clamp(nd.q_c, -b, b);
  }
  return d;
}

enum class SolveStatus { Optimal, Infeasible, MaxIter };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::MaxIter: return "max_iter";
  }
  return "?";
}

struct KktReport {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
  int active_box = 0;
  int active_voltage = 0;

  double max() const { return std::max({stationarity, primal, complementarity}); }
};

/// KKT residuals of a candidate dispatch for the reduced QP. Constraints
/// within `tol` of binding count as active. Primal infeasibility is reported
/// in the row's own units (per-unit reactive power for the box, per-unit v^2
/// for the voltage rows).
inline KktReport kkt_check(const QpProblem& prob, const Dispatch& candidate, double tol) {
  const Eigen::VectorXd x = prob.reduce(candidate);
  const qp::KktReport r = qp::kkt_check(prob.qp, x, tol);
  KktReport out;
  out.stationarity = r.stationarity;
  out.primal = r.primal;
  out.complementarity = r.complementarity;
  const Eigen::VectorXd ax = prob.qp.A * x;
  for (Eigen::Index i = 0; i < prob.qp.rows(); ++i) {
    const bool act = ax(i) - prob.qp.lower(i) <= tol || prob.qp.upper(i) - ax(i) <= tol;
    if (!act) continue;
    if (i < static_cast<Eigen::Index>(prob.box_rows())) {
      ++out.active_box;
    } else {
      ++out.active_voltage;
    }
  }
  return out;
}

struct DispatchSolution {
  Dispatch dispatch;
  double objective_value = 0.0;
  double kkt_residual = 0.0;
  SolveStatus status = SolveStatus::MaxIter;
  /// Node whose voltage bound cannot be met when status is Infeasible.
  int certificate_node = -1;
  int active_box = 0;
  int active_voltage = 0;
  int iterations = 0;
};

/// Node (0..n) whose LIN v^2 lies furthest outside the band, or -1.
inline int worst_band_node(const Eigen::VectorXd& v_squared, double epsilon) {
  int worst = -1;
  double excess = 0.0;
  for (Eigen::Index i = 0; i < v_squared.size(); ++i) {
    const double e = std::max((1.0 - epsilon) - v_squared(i), v_squared(i) - (1.0 + epsilon));
    if (e > excess) {
      excess = e;
      worst = static_cast<int>(i);
    }
  }
  return worst;
}

/// Globally optimal LIN dispatch with voltage band `epsilon`.
inline DispatchSolution optimal_dispatch(const Circuit& c, double epsilon, double qp_tol = 1e-8) {
  if (!(qp_tol > 0.0)) throw ParameterError("qp_tol", "must be positive");
  const QpProblem prob = build_qp(c, epsilon);
  DispatchSolution sol;

  const double v0 = c.v0_squared();
  if (v0 < 1.0 - epsilon || v0 > 1.0 + epsilon) {
    sol.dispatch = zero_dispatch(c);
    sol.status = SolveStatus::Infeasible;
    sol.certificate_node = 0;
    return sol;
  }

  const qp::Result res = qp::solve(prob.qp);
  sol.iterations = res.iterations;
  sol.dispatch = prob.expand(res.x, c.size(), Policy::Optimal);
  sol.objective_value = prob.objective(res.x);
  if (res.status == qp::Status::Infeasible) {
    sol.status = SolveStatus::Infeasible;
    const auto row = res.blocking_row;
    const auto box = static_cast<Eigen::Index>(prob.box_rows());
    sol.certificate_node = row >= box ? static_cast<int>(row - box + 1)
                                      : static_cast<int>(prob.pv_nodes[static_cast<std::size_t>(row)]);
    return sol;
  }

  // snap box rows that the solver left a rounding error outside
  Eigen::VectorXd x = res.x;
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    x(a) = std::clamp(x(a), prob.qp.lower(a), prob.qp.upper(a));
  }
  sol.dispatch = prob.expand(x, c.size(), Policy::Optimal);
  sol.objective_value = prob.objective(x);

  const KktReport kkt = kkt_check(prob, sol.dispatch, 1e-9);
  sol.kkt_residual = kkt.max();
  sol.active_box = kkt.active_box;
  sol.active_voltage = kkt.active_voltage;
  if (res.status == qp::Status::MaxIter) {
    sol.status = SolveStatus::MaxIter;
  } else {
    sol.status = sol.kkt_residual <= qp_tol ? SolveStatus::Optimal : SolveStatus::MaxIter;
  }
  return sol;
}

/// Exhaustive search over a uniform grid of `grid_steps` points on each PV
/// node's interval [-bound, bound]. Evaluates the LIN objective and voltage
/// band directly from suffix sums. Intended for at most four PV nodes.
inline Dispatch brute_force_oracle(const Circuit& c, double epsilon, int grid_steps) {
  const auto pv = c.pv_nodes();
  if (pv.size() > 4) throw ParameterError("pv_nodes", "oracle limited to 4 PV nodes");
  if (grid_steps < 1) throw ParameterError("grid_steps", "must be at least 1");
  const std::size_t n = c.size();
  const std::size_t m = pv.size();

  std::vector<std::vector<double>> grid(m);
  for (std::size_t a = 0; a < m; ++a) {
    const double b = capacity_bound(c.node(pv[a]));
    grid[a].resize(static_cast<std::size_t>(grid_steps));
    for (int s = 0; s < grid_steps; ++s) {
      grid[a][static_cast<std::size_t>(s)] =
          grid_steps == 1 ? 0.0 : -b + 2.0 * b * s / static_cast<double>(grid_steps - 1);
    }
  }

  std::vector<double> q_g(n, 0.0);
  std::vector<double> best_q;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> idx(m, 0);
  const double lo = 1.0 - epsilon;
  const double hi = 1.0 + epsilon;
  while (true) {
    for (std::size_t a = 0; a < m; ++a) q_g[pv[a] - 1] = grid[a][idx[a]];

    double p_acc = 0.0;
    double q_acc = 0.0;
    std::vector<double> P(n), Q(n);
    for (std::size_t j = n; j-- > 0;) {
      const auto& nd = c.node(j + 1);
      p_acc += nd.p_c - nd.p_g;
      q_acc += nd.q_c - q_g[j];
      P[j] = p_acc;
      Q[j] = q_acc;
    }
    double v = c.v0_squared();
    bool feasible = v >= lo && v <= hi;
    double obj = 0.0;
    for (std::size_t j = 0; j < n && feasible; ++j) {
      const auto& l = c.link(j);
      obj += l.r * (P[j] * P[j] + Q[j] * Q[j]);
      v -= 2.0 * (l.r * P[j] + l.x * Q[j]);
      feasible = v >= lo && v <= hi;
    }
    obj /= c.v0_squared();
    if (feasible && obj < best) {
      best = obj;
      best_q = q_g;
    }

    std::size_t a = 0;
    while (a < m && ++idx[a] == static_cast<std::size_t>(grid_steps)) idx[a++] = 0;
    if (a == m) break;
  }
  if (best_q.empty()) {
    const FlowState s = solve_lin(c, zero_dispatch(c));
    const int worst = worst_band_node(
        Eigen::Map<const Eigen::VectorXd>(s.v_squared.data(), static_cast<Eigen::Index>(n + 1)),
        epsilon);
    throw InfeasibleDispatch("no grid point satisfies the voltage band", worst);
  }
  return Dispatch{best_q, Policy::Custom};
}

/// Percentage of zero-dispatch AC losses removed by `d`.
inline double savings(const Circuit& c, const Dispatch& d, const AcOptions& opt = {}) {
  const double base = losses(c, solve_ac(c, zero_dispatch(c), opt));
  const double with = losses(c, solve_ac(c, d, opt));
  if (!(base > 0.0)) {
    throw UndefinedSavings("baseline losses are zero; savings undefined", with);
  }
  return 100.0 * (base - with) / base;
}

}  // namespace voltvar
