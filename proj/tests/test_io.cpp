#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "voltvar/io.hpp"

using namespace voltvar;

TEST(Io, CircuitRoundTripIsBitExact) {
  ScenarioParams p;
  p.seed = 31;
  p.penetration_r = 0.6;
  const Circuit c = generate_circuit(p);
  const Circuit back = circuit_from_json(json::parse(circuit_to_json(c).dump()));
  EXPECT_EQ(c, back);
  EXPECT_EQ(c.bases().z_base(), back.bases().z_base());
  EXPECT_EQ(c.v0_squared(), back.v0_squared());
}

TEST(Io, FileRoundTrip) {
  const Circuit c = generate_circuit(ScenarioParams{});
  const auto path = (std::filesystem::temp_directory_path() / "voltvar_io_test.json").string();
  save_json(path, circuit_to_json(c));
  EXPECT_EQ(circuit_from_json(load_json(path)), c);
  std::remove(path.c_str());
  EXPECT_THROW(load_json(path), ParameterError);
}

TEST(Io, StructuralErrorsAreParameterErrors) {
  const json good = circuit_to_json(generate_circuit(ScenarioParams{}));
  json bad = good;
  bad["format"] = "something-else";
  EXPECT_THROW(circuit_from_json(bad), ParameterError);
  bad = good;
  bad.erase("links");
  EXPECT_THROW(circuit_from_json(bad), ParameterError);
  bad = good;
  bad["nodes"][0].erase("q_c");
  EXPECT_THROW(circuit_from_json(bad), ParameterError);
  bad = good;
  bad["links"].erase(0);
  EXPECT_THROW(circuit_from_json(bad), ParameterError);
  EXPECT_THROW(circuit_from_json(json::array()), ParameterError);
}

TEST(Io, SolutionExportFields) {
  ScenarioParams p;
  p.n = 20;
  const Circuit c = generate_circuit(p);
  const DispatchSolution sol = optimal_dispatch(c, 0.05);
  const json j = solution_to_json(sol, c.bases());
  for (const char* key : {"policy", "status", "objective", "kkt_residual", "q_g", "q_g_kvar"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["policy"], "optimal");
  EXPECT_EQ(j["status"], "optimal");
  ASSERT_EQ(j["q_g"].size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_DOUBLE_EQ(j["q_g_kvar"][i].get<double>(), c.bases().power_from_pu(sol.dispatch.q_g[i]));
  }
}

TEST(Io, ParamsExportCarriesSeed) {
  ScenarioParams p;
  p.seed = 18446744073709551615ull;
  EXPECT_EQ(params_to_json(p)["seed"].get<std::uint64_t>(), p.seed);
}
