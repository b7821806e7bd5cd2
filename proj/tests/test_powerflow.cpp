#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "voltvar/dispatch.hpp"
#include "voltvar/powerflow.hpp"

using namespace voltvar;

namespace {

// Two load nodes, loads large enough that the loss terms are visible.
Circuit two_node() {
  std::vector<NodeLoad> nodes(2);
  nodes[0].p_c = 0.3;
  nodes[0].q_c = 0.1;
  nodes[1].p_c = 0.2;
  nodes[1].q_c = 0.05;
  std::vector<LinkImpedance> links = {{0.01, 0.02, 100.0}, {0.015, 0.01, 100.0}};
  return Circuit(nodes, links);
}

Circuit prototype(double r, std::uint64_t seed, double s_kva = 1.1) {
  ScenarioParams p;
  p.penetration_r = r;
  p.seed = seed;
  p.s_kva = s_kva;
  return generate_circuit(p);
}

Dispatch zeros(const Circuit& c) { return zero_dispatch(c); }

}  // namespace

TEST(SolveLin, ZeroLoadIsFlat) {
  ScenarioParams p;
  p.p_c_kw = {0.0, 0.0};
  p.penetration_r = 0.0;
  const Circuit c = generate_circuit(p);
  const FlowState s = solve_lin(c, zeros(c));
  for (double v : s.P) EXPECT_EQ(v, 0.0);
  for (double v : s.Q) EXPECT_EQ(v, 0.0);
  for (double v : s.v_squared) EXPECT_EQ(v, c.v0_squared());
  EXPECT_EQ(losses(c, s), 0.0);
  const Residuals res = residuals(c, zeros(c), s);
  EXPECT_EQ(res.max(), 0.0);
}

TEST(SolveLin, TwoNodeHandCalculation) {
  // P1 = 0.2, Q1 = 0.05, P0 = 0.5, Q0 = 0.15
  // v1 = 1 - 2(0.01*0.5 + 0.02*0.15) = 0.984
  // v2 = 0.984 - 2(0.015*0.2 + 0.01*0.05) = 0.977
  const Circuit c = two_node();
  const FlowState s = solve_lin(c, zeros(c));
  EXPECT_EQ(s.model, FlowModel::LIN);
  ASSERT_EQ(s.P.size(), 2u);
  ASSERT_EQ(s.v_squared.size(), 3u);
  EXPECT_NEAR(s.P[0], 0.5, 1e-15);
  EXPECT_NEAR(s.P[1], 0.2, 1e-15);
  EXPECT_NEAR(s.Q[0], 0.15, 1e-15);
  EXPECT_NEAR(s.Q[1], 0.05, 1e-15);
  EXPECT_NEAR(s.v_squared[1], 0.984, 1e-15);
  EXPECT_NEAR(s.v_squared[2], 0.977, 1e-15);
  // the dropped loss terms show up as residuals
  const Residuals res = residuals(c, zeros(c), s);
  EXPECT_NEAR(res.real, 0.01 * (0.25 + 0.0225), 1e-15);
  EXPECT_GT(res.voltage, 0.0);
}

TEST(SolveLin, SetpointShiftsUpstreamReactiveFlowOnly) {
  const Circuit c = prototype(1.0, 11);
  Dispatch d = zeros(c);
  const FlowState before = solve_lin(c, d);
  const std::size_t k = 40;
  const double delta = 0.003;
  d.q_g[k - 1] += delta;
  const FlowState after = solve_lin(c, d);
  for (std::size_t j = 0; j < c.size(); ++j) {
    EXPECT_EQ(before.P[j], after.P[j]);
    if (j < k) {
      EXPECT_NEAR(after.Q[j], before.Q[j] - delta, 1e-15);
    } else {
      EXPECT_EQ(after.Q[j], before.Q[j]);
    }
  }
}

TEST(SolveLin, IsAffineInDispatch) {
  const Circuit c = prototype(0.8, 21, 1.5);
  Dispatch d1 = local_dispatch(c);
  Dispatch d2 = zeros(c);
  for (std::size_t j = 1; j <= c.size(); ++j) {
    if (c.node(j).has_pv) d2.q_g[j - 1] = -0.5 * capacity_bound(c.node(j));
  }
  Dispatch mid = zeros(c);
  for (std::size_t j = 0; j < c.size(); ++j) mid.q_g[j] = 0.5 * d1.q_g[j] + 0.5 * d2.q_g[j];
  const FlowState s1 = solve_lin(c, d1);
  const FlowState s2 = solve_lin(c, d2);
  const FlowState sm = solve_lin(c, mid);
  for (std::size_t j = 0; j < c.size(); ++j) {
    EXPECT_NEAR(sm.Q[j], 0.5 * s1.Q[j] + 0.5 * s2.Q[j], 1e-12);
    EXPECT_NEAR(sm.P[j], 0.5 * s1.P[j] + 0.5 * s2.P[j], 1e-12);
  }
  for (std::size_t j = 0; j <= c.size(); ++j) {
    EXPECT_NEAR(sm.v_squared[j], 0.5 * s1.v_squared[j] + 0.5 * s2.v_squared[j], 1e-12);
  }
}

TEST(SolveLin, HeadFlowEqualsNetLoad) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Circuit c = prototype(0.5, seed);
    const FlowState s = solve_lin(c, local_dispatch(c));
    double net = 0.0;
    for (const auto& nd : c.nodes()) net += nd.p_c - nd.p_g;
    EXPECT_NEAR(s.P[0], net, 1e-13);
  }
}

TEST(SolveLin, VoltageNonIncreasingWithNonnegativeLoads) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Circuit c = prototype(0.0, seed);
    const FlowState s = solve_lin(c, zeros(c));
    for (std::size_t j = 0; j < c.size(); ++j) EXPECT_LE(s.v_squared[j + 1], s.v_squared[j]);
  }
}

TEST(SolveAc, ZeroLoadMatchesLinInOneSweep) {
  ScenarioParams p;
  p.p_c_kw = {0.0, 0.0};
  p.penetration_r = 0.0;
  const Circuit c = generate_circuit(p);
  const FlowState ac = solve_ac(c, zeros(c));
  const FlowState lin = solve_lin(c, zeros(c));
  EXPECT_EQ(ac.iterations, 1);
  EXPECT_EQ(ac.model, FlowModel::AC);
  EXPECT_EQ(ac.P, lin.P);
  EXPECT_EQ(ac.Q, lin.Q);
  EXPECT_EQ(ac.v_squared, lin.v_squared);
}

TEST(SolveAc, TwoNodeMatchesShootingOracle) {
  // frozen from tests/oracles/two_node_ac.py (50-digit forward shooting)
  const Circuit c = two_node();
  const FlowState s = solve_ac(c, zeros(c), {1e-14, 50});
  EXPECT_NEAR(s.P[0], 0.50343038238707093084, 1e-10);
  EXPECT_NEAR(s.P[1], 0.20065263024279644609, 1e-10);
  EXPECT_NEAR(s.Q[0], 0.15599059111707993355, 1e-10);
  EXPECT_NEAR(s.Q[1], 0.050435086828530964063, 1e-10);
  EXPECT_NEAR(s.v_squared[1], 0.98383065631478910828, 1e-10);
  EXPECT_NEAR(s.v_squared[2], 0.97681651599286185195, 1e-10);
  EXPECT_NEAR(losses(c, s), 0.0034303823870709308383, 1e-10);
}

TEST(SolveAc, ResidualsWithinToleranceOnPrototypes) {
  for (double r : {0.0, 0.5, 1.0}) {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
      const Circuit c = prototype(r, seed);
      for (const Dispatch& d : {zeros(c), local_dispatch(c)}) {
        const FlowState s = solve_ac(c, d);
        EXPECT_LE(residuals(c, d, s).max(), 1e-10);
        EXPECT_LE(s.iterations, 50);
      }
    }
  }
}

TEST(SolveAc, ResidualsContractMonotonically) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Circuit c = prototype(0.5, seed);
    std::vector<double> hist;
    solve_ac(c, zeros(c), {1e-15, 50}, &hist);
    ASSERT_GE(hist.size(), 2u);
    for (std::size_t i = 1; i < hist.size(); ++i) {
      if (hist[i - 1] < 1e-15) break;  // at rounding level
      EXPECT_LT(hist[i], hist[i - 1]) << "seed " << seed << " iteration " << i;
    }
  }
}

TEST(SolveAc, EnergyBalance) {
  const AcOptions opt{1e-10, 50};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Circuit c = prototype(0.7, seed);
    const FlowState s = solve_ac(c, local_dispatch(c), opt);
    double net = 0.0;
    for (const auto& nd : c.nodes()) net += nd.p_c - nd.p_g;
    EXPECT_NEAR(s.P[0], net + losses(c, s), 10 * opt.tol);
    EXPECT_NEAR(s.P[0], net + losses(c, s), 1e-9);
  }
}

TEST(SolveAc, LinResidualsAreLossSized) {
  const Circuit c = prototype(0.0, 7);
  const FlowState lin = solve_lin(c, zeros(c));
  const Residuals res = residuals(c, zeros(c), lin);
  double biggest_loss_term = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) {
    biggest_loss_term = std::max(
        biggest_loss_term,
        c.link(j).r * (lin.P[j] * lin.P[j] + lin.Q[j] * lin.Q[j]) / lin.v_squared[j]);
  }
  EXPECT_GT(res.real, 0.0);
  EXPECT_NEAR(res.real, biggest_loss_term, 1e-3 * biggest_loss_term);
}

TEST(SolveAc, NonConvergenceCarriesResidual) {
  const Circuit c = prototype(0.0, 3);
  try {
    solve_ac(c, zeros(c), {1e-30, 2});
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.iterations(), 2);
    EXPECT_GT(e.last_residual(), 0.0);
  }
}

TEST(SolveAc, VoltageCollapseIsReported) {
  std::vector<NodeLoad> nodes(3);
  for (auto& nd : nodes) {
    nd.p_c = 5.0;
    nd.q_c = 2.0;
  }
  std::vector<LinkImpedance> links(3, LinkImpedance{0.05, 0.08, 1000.0});
  const Circuit c(nodes, links);
  EXPECT_THROW(solve_ac(c, zeros(c)), InfeasibleOperatingPoint);
}

TEST(SolveAc, RejectsBadOptionsAndShapes) {
  const Circuit c = two_node();
  EXPECT_THROW(solve_ac(c, zeros(c), {0.0, 10}), ParameterError);
  EXPECT_THROW(solve_ac(c, Dispatch{{0.0}, Policy::Custom}), ParameterError);
  EXPECT_THROW(solve_lin(c, Dispatch{{0.0, 0.0, 0.0}, Policy::Custom}), ParameterError);
}

TEST(Losses, SingleLinkHandValue) {
  std::vector<NodeLoad> nodes(1);
  nodes[0].p_c = 0.4;
  nodes[0].q_c = 0.1;
  const Circuit c(nodes, {{0.02, 0.03, 500.0}});
  const FlowState s = solve_lin(c, zeros(c));
  EXPECT_NEAR(losses(c, s), 0.02 * (0.16 + 0.01) / 1.0, 1e-16);
}

TEST(VoltageBand, FlatAndConstructedViolations) {
  FlowState s;
  s.v_squared.assign(11, 1.0);
  EXPECT_TRUE(voltage_band_ok(s, 0.05).ok);

  s.v_squared[5] = 0.94;
  const BandCheck b = voltage_band_ok(s, 0.05);
  EXPECT_FALSE(b.ok);
  EXPECT_EQ(b.worst_node, 5u);
  EXPECT_EQ(b.min_node, 5u);

  s.v_squared[5] = 1.0;
  s.v_squared[8] = 1.07;
  const BandCheck hi = voltage_band_ok(s, 0.05);
  EXPECT_FALSE(hi.ok);
  EXPECT_EQ(hi.worst_node, 8u);
  EXPECT_EQ(hi.max_node, 8u);
}

TEST(FlowCsv, HasDocumentedColumns) {
  const Circuit c = two_node();
  std::ostringstream os;
  write_flow_csv(os, solve_lin(c, zeros(c)));
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "node,v_squared,v,P_out,Q_out");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 3);
}
