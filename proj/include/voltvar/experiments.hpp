#pragma once

// Seeded Monte Carlo sweeps over inverter capacity s and PV penetration r.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "voltvar/circuit.hpp"
#include "voltvar/dispatch.hpp"
#include "voltvar/errors.hpp"
#include "voltvar/powerflow.hpp"

namespace voltvar {

struct SweepSpec {
  ScenarioParams base_params{};
  std::vector<double> s_values{1.1};  // kVA
  std::vector<double> r_values{1.0};
  int n_realizations = 20;
  std::vector<Policy> policies{Policy::Zero, Policy::Local, Policy::Optimal};
  AcOptions ac{};
  double qp_tol = 1e-8;
  unsigned threads = 1;
};

inline void validate_spec(const SweepSpec& spec) {
  if (spec.s_values.empty()) throw ParameterError("s_values", "empty");
  if (spec.r_values.empty()) throw ParameterError("r_values", "empty");
  if (spec.policies.empty()) throw ParameterError("policies", "empty");
  if (spec.n_realizations < 1) throw ParameterError("n_realizations", "must be at least 1");
  for (Policy p : spec.policies) {
    if (p == Policy::Custom) throw ParameterError("policies", "custom policy cannot be swept");
  }
  for (double r : spec.r_values) {
    if (!(r >= 0.0 && r <= 1.0)) throw ParameterError("r_values", "must lie in [0, 1]");
  }
  for (double s : spec.s_values) {
    if (!(s >= spec.base_params.p_g_kw)) {
      throw ParameterError("s_values", "capacity below PV real output");
    }
  }
  ScenarioParams probe = spec.base_params;
  probe.s_kva = *std::max_element(spec.s_values.begin(), spec.s_values.end());
  validate_params(probe);
}

enum class RowStatus { Ok, Infeasible, MaxIter, AcFailed };

inline const char* to_string(RowStatus s) {
  switch (s) {
    case RowStatus::Ok: return "ok";
    case RowStatus::Infeasible: return "infeasible";
    case RowStatus::MaxIter: return "max_iter";
    case RowStatus::AcFailed: return "ac_failed";
  }
  return "?";
}

/// One (s, r, policy, realization) evaluation.
struct SweepRow {
  double s_kva = 0.0;
  double r = 0.0;
  Policy policy = Policy::Zero;
  std::uint64_t seed = 0;
  RowStatus status = RowStatus::Ok;
  double baseline_losses_kw = 0.0;  // AC, zero dispatch
  double losses_kw = 0.0;           // AC, this policy
  double savings_pct = 0.0;         // AC
  double lin_objective = 0.0;       // per-unit
  double lin_savings_pct = 0.0;
  double kkt_residual = 0.0;
  int active_box = 0;
  int active_voltage = 0;
  bool band_ok = true;  // LIN voltages of this dispatch inside the band
};

struct CellStats {
  double s_kva = 0.0;
  double r = 0.0;
  Policy policy = Policy::Zero;
  int n_ok = 0;
  int n_infeasible = 0;
  int n_failed = 0;
  double mean_savings_pct = 0.0;
  double min_savings_pct = 0.0;
  double max_savings_pct = 0.0;
  double mean_losses_kw = 0.0;
  double mean_lin_savings_pct = 0.0;
  /// mean LOCAL / mean OPTIMAL savings in the same (s, r) cell; NaN when
  /// either policy is absent or the optimal mean is zero.
  double local_over_optimal = std::numeric_limits<double>::quiet_NaN();
};

struct SweepResult {
  std::vector<SweepRow> rows;  // sorted by (s, r, policy, seed)
  std::vector<CellStats> cells;

  const CellStats* cell(double s_kva, double r, Policy p) const {
    for (const auto& c : cells) {
      if (c.policy == p && std::abs(c.s_kva - s_kva) < 1e-12 && std::abs(c.r - r) < 1e-12) return &c;
    }
    return nullptr;
  }
};

inline std::vector<CellStats> aggregate(const std::vector<SweepRow>& rows) {
  std::vector<CellStats> cells;
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t end = i;
    while (end < rows.size() && rows[end].s_kva == rows[i].s_kva && rows[end].r == rows[i].r &&
           rows[end].policy == rows[i].policy) {
      ++end;
    }
    CellStats cs;
    cs.s_kva = rows[i].s_kva;
    cs.r = rows[i].r;
    cs.policy = rows[i].policy;
    cs.min_savings_pct = std::numeric_limits<double>::infinity();
    cs.max_savings_pct = -std::numeric_limits<double>::infinity();
    for (std::size_t k = i; k < end; ++k) {
      const auto& row = rows[k];
      if (row.status == RowStatus::Infeasible) ++cs.n_infeasible;
      if (row.status == RowStatus::AcFailed || row.status == RowStatus::MaxIter) ++cs.n_failed;
      if (row.status != RowStatus::Ok) continue;
      ++cs.n_ok;
      cs.mean_savings_pct += row.savings_pct;
      cs.mean_lin_savings_pct += row.lin_savings_pct;
      cs.mean_losses_kw += row.losses_kw;
      cs.min_savings_pct = std::min(cs.min_savings_pct, row.savings_pct);
      cs.max_savings_pct = std::max(cs.max_savings_pct, row.savings_pct);
    }
    if (cs.n_ok > 0) {
      cs.mean_savings_pct /= cs.n_ok;
      cs.mean_lin_savings_pct /= cs.n_ok;
      cs.mean_losses_kw /= cs.n_ok;
    } else {
      cs.mean_savings_pct = cs.min_savings_pct = cs.max_savings_pct = 0.0;
      cs.mean_lin_savings_pct = cs.mean_losses_kw = 0.0;
    }
    cells.push_back(cs);
    i = end;
  }
  for (auto& cs : cells) {
    const CellStats* local = nullptr;
    const CellStats* opt = nullptr;
    for (const auto& other : cells) {
      if (other.s_kva != cs.s_kva || other.r != cs.r) continue;
      if (other.policy == Policy::Local) local = &other;
      if (other.policy == Policy::Optimal) opt = &other;
    }
    if (local && opt && local->n_ok > 0 && opt->n_ok > 0 && opt->mean_savings_pct != 0.0) {
      cs.local_over_optimal = local->mean_savings_pct / opt->mean_savings_pct;
    }
  }
  return cells;
}

namespace detail {

// Rows of every s value and policy for one (r, realization) pair. The circuit
// is drawn once; only the inverter ratings change with s.
inline std::vector<SweepRow> evaluate_realization(const SweepSpec& spec, double r, int k) {
  ScenarioParams params = spec.base_params;
  params.penetration_r = r;
  params.seed = spec.base_params.seed + static_cast<std::uint64_t>(k);
  params.s_kva = spec.s_values.front();
  const Circuit drawn = generate_circuit(params);
  const Bases& bases = drawn.bases();
  const double eps = params.epsilon;

  std::vector<SweepRow> out;
  double base_loss = std::numeric_limits<double>::quiet_NaN();
  bool base_ok = true;
  try {
    base_loss = losses(drawn, solve_ac(drawn, zero_dispatch(drawn), spec.ac));
  } catch (const NumericalError&) {
    base_ok = false;
  }
  const double base_lin = lin_objective(drawn, zero_dispatch(drawn));

  for (double s : spec.s_values) {
    const Circuit c = drawn.with_inverter_capacity(bases.power_to_pu(s));
    for (Policy policy : spec.policies) {
      SweepRow row;
      row.s_kva = s;
      row.r = r;
      row.policy = policy;
      row.seed = params.seed;
      row.baseline_losses_kw = base_ok ? bases.power_from_pu(base_loss) : 0.0;
      Dispatch d;
      if (policy == Policy::Optimal) {
        const DispatchSolution sol = optimal_dispatch(c, eps, spec.qp_tol);
        row.kkt_residual = sol.kkt_residual;
        row.active_box = sol.active_box;
        row.active_voltage = sol.active_voltage;
        if (sol.status == SolveStatus::Infeasible) row.status = RowStatus::Infeasible;
        if (sol.status == SolveStatus::MaxIter) row.status = RowStatus::MaxIter;
        d = sol.dispatch;
      } else {
        d = policy == Policy::Local ? local_dispatch(c) : zero_dispatch(c);
      }
      row.band_ok = row.status != RowStatus::Infeasible && voltage_band_ok(solve_lin(c, d), eps + 1e-9).ok;
      row.lin_objective = lin_objective(c, d);
      row.lin_savings_pct = base_lin > 0.0 ? 100.0 * (base_lin - row.lin_objective) / base_lin : 0.0;
      if (!base_ok) {
        row.status = RowStatus::AcFailed;
      } else {
        try {
          const double loss = losses(c, solve_ac(c, d, spec.ac));
          row.losses_kw = bases.power_from_pu(loss);
          row.savings_pct = base_loss > 0.0 ? 100.0 * (base_loss - loss) / base_loss : 0.0;
        } catch (const NumericalError&) {
          row.status = RowStatus::AcFailed;
        }
      }
      out.push_back(row);
    }
  }
  return out;
}

}  // namespace detail

/// Evaluates every (s, r, policy) cell over `n_realizations` seeded circuits.
/// Realization k uses seed base_seed + k. Individual failures are recorded in
/// the row status and excluded from the cell statistics.
inline SweepResult run_sweep(const SweepSpec& spec) {
  validate_spec(spec);
  std::vector<std::pair<double, int>> tasks;
  for (double r : spec.r_values) {
    for (int k = 0; k < spec.n_realizations; ++k) tasks.emplace_back(r, k);
  }

  SweepResult result;
  const unsigned workers = std::max(1u, std::min<unsigned>(spec.threads, static_cast<unsigned>(tasks.size())));
  if (workers == 1) {
    for (const auto& [r, k] : tasks) {
      auto rows = detail::evaluate_realization(spec, r, k);
      result.rows.insert(result.rows.end(), rows.begin(), rows.end());
    }
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        while (true) {
          std::size_t i;
          {
            std::lock_guard lock(mu);
            if (next >= tasks.size()) return;
            i = next++;
          }
          auto rows = detail::evaluate_realization(spec, tasks[i].first, tasks[i].second);
          std::lock_guard lock(mu);
          result.rows.insert(result.rows.end(), rows.begin(), rows.end());
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  std::sort(result.rows.begin(), result.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tuple(a.s_kva, a.r, static_cast<int>(a.policy), a.seed) <
           std::tuple(b.s_kva, b.r, static_cast<int>(b.policy), b.seed);
  });
  result.cells = aggregate(result.rows);
  return result;
}

namespace detail {

inline std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kSummaryHeader =
    "s_kva,r,policy,n_ok,n_infeasible,n_failed,mean_savings_pct,min_savings_pct,"
    "max_savings_pct,mean_losses_kw,mean_lin_savings_pct,local_over_optimal";

/// Per-cell statistics, one line per (s, r, policy) in sorted order.
inline std::string summarize(const SweepResult& result) {
  std::ostringstream os;
  os << kSummaryHeader << '\n';
  for (const auto& c : result.cells) {
    using detail::num;
    os << num(c.s_kva) << ',' << num(c.r) << ',' << to_string(c.policy) << ',' << c.n_ok << ','
       << c.n_infeasible << ',' << c.n_failed << ',' << num(c.mean_savings_pct) << ','
       << num(c.min_savings_pct) << ',' << num(c.max_savings_pct) << ',' << num(c.mean_losses_kw)
       << ',' << num(c.mean_lin_savings_pct) << ',' << num(c.local_over_optimal) << '\n';
  }
  return os.str();
}

inline constexpr const char* kRowsHeader =
    "s_kva,r,policy,seed,status,baseline_losses_kw,losses_kw,savings_pct,lin_objective,"
    "lin_savings_pct,kkt_residual,active_box,active_voltage,band_ok";

inline std::string rows_csv(const SweepResult& result) {
  std::ostringstream os;
  os << kRowsHeader << '\n';
  for (const auto& r : result.rows) {
    using detail::num;
    os << num(r.s_kva) << ',' << num(r.r) << ',' << to_string(r.policy) << ',' << r.seed << ','
       << to_string(r.status) << ',' << num(r.baseline_losses_kw) << ',' << num(r.losses_kw) << ','
       << num(r.savings_pct) << ',' << num(r.lin_objective) << ',' << num(r.lin_savings_pct) << ','
       << num(r.kkt_residual) << ',' << r.active_box << ',' << r.active_voltage << ',' << (r.band_ok ? 1 : 0) << '\n';
  }
  return os.str();
}

/// Baseline and optimally dispatched AC operating points of one realization.
struct ProfileCase {
  Circuit circuit;
  FlowState baseline;
  FlowState optimal;
  DispatchSolution solution;
};

inline ProfileCase voltage_profile_case(const ScenarioParams& params, const AcOptions& ac = {},
                                        double qp_tol = 1e-8) {
  ProfileCase pc;
  pc.circuit = generate_circuit(params);
  pc.solution = optimal_dispatch(pc.circuit, params.epsilon, qp_tol);
  if (pc.solution.status == SolveStatus::Infeasible) {
    throw InfeasibleDispatch("voltage band infeasible", pc.solution.certificate_node);
  }
  if (pc.solution.status == SolveStatus::MaxIter) {
    throw ConvergenceError("dispatch QP did not reach tolerance", pc.solution.kkt_residual,
                           pc.solution.iterations);
  }
  pc.baseline = solve_ac(pc.circuit, zero_dispatch(pc.circuit), ac);
  pc.optimal = solve_ac(pc.circuit, pc.solution.dispatch, ac);
  return pc;
}

/// Columns: node, v_ratio_baseline, v_ratio_optimal (V_j / V_0), q_g_kvar.
inline std::string profile_csv(const ProfileCase& pc) {
  std::ostringstream os;
  os << "node,v_ratio_baseline,v_ratio_optimal,q_g_kvar\n";
  const double v0 = pc.circuit.v0_squared();
  for (std::size_t j = 0; j < pc.baseline.v_squared.size(); ++j) {
    const double q = j == 0 ? 0.0 : pc.circuit.bases().power_from_pu(pc.solution.dispatch.at(j));
    os << j << ',' << detail::num(std::sqrt(pc.baseline.v_squared[j] / v0)) << ','
       << detail::num(std::sqrt(pc.optimal.v_squared[j] / v0)) << ',' << detail::num(q) << '\n';
  }
  return os.str();
}

}  // namespace voltvar
