#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "voltvar/voltvar.hpp"

using namespace voltvar;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
};

// Runs the CLI with `args`; stdout is captured, stderr is discarded unless asked for.
CliRun cli(const std::string& args, bool capture_stderr = false, const std::string& env = "") {
  const std::string cmd =
      env + " \"" VOLTVAR_CLI_PATH "\" " + args + (capture_stderr ? " 2>&1" : " 2>/dev/null");
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("voltvar_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const char* name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

std::string flow_csv(const FlowState& s, const Circuit& c) {
  std::ostringstream os;
  write_flow_csv(os, s);
  char buf[96];
  std::snprintf(buf, sizeof buf, "# losses_kw,%.17g\n", c.bases().power_from_pu(losses(c, s)));
  os << buf;
  return os.str();
}

}  // namespace

TEST_F(Cli, GenerateThenSolveMatchesLibrary) {
  ASSERT_EQ(cli("generate --n 25 --r 0.4 --seed 3 --out " + path("c.json")).code, 0);
  const Circuit from_file = circuit_from_json(load_json(path("c.json")));
  ScenarioParams p;
  p.n = 25;
  p.penetration_r = 0.4;
  p.seed = 3;
  const Circuit c = generate_circuit(p);
  EXPECT_EQ(from_file, c);

  const CliRun a = cli("solve --circuit " + path("c.json") + " --policy local");
  const CliRun b = cli("solve --n 25 --r 0.4 --seed 3 --policy local");
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out, flow_csv(solve_ac(c, local_dispatch(c)), c));

  const CliRun lin = cli("solve --n 25 --r 0.4 --seed 3 --model lin");
  EXPECT_EQ(lin.out, flow_csv(solve_lin(c, zero_dispatch(c)), c));
}

TEST_F(Cli, DispatchWritesSolutionJson) {
  const CliRun r = cli("dispatch --n 30 --r 0.5 --policy optimal");
  ASSERT_EQ(r.code, 0);
  const json j = json::parse(r.out);
  EXPECT_EQ(j["policy"], "optimal");
  EXPECT_EQ(j["status"], "optimal");
  EXPECT_LE(j["kkt_residual"].get<double>(), 1e-8);
  EXPECT_EQ(j["q_g"].size(), 30u);
}

TEST_F(Cli, ParameterErrorsExitOne) {
  const CliRun r = cli("generate --r 1.5", true);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("penetration_r"), std::string::npos);
  EXPECT_EQ(cli("generate --n abc").code, 1);
  EXPECT_EQ(cli("nonsense").code, 1);
  EXPECT_EQ(cli("").code, 1);
  EXPECT_EQ(cli("solve --model dc").code, 1);
}

TEST_F(Cli, NumericalErrorsExitTwo) {
  const CliRun r = cli("solve --pc 4000:5000 --n 100", true);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("\"error\""), std::string::npos);
  EXPECT_EQ(cli("solve --ac-max-iter 1").code, 2);
}

TEST_F(Cli, FlagsBeatEnvironmentBeatConfig) {
  {
    std::ofstream cfg(path("cfg.json"));
    cfg << R"({"n": 12, "seed": 5})";
  }
  const std::string base = "generate --config " + path("cfg.json");
  const json from_cfg = json::parse(cli(base).out);
  EXPECT_EQ(from_cfg["nodes"].size(), 12u);

  const json from_env = json::parse(cli(base, false, "VOLTVAR_N=14").out);
  EXPECT_EQ(from_env["nodes"].size(), 14u);

  const json from_flag = json::parse(cli(base + " --n 16", false, "VOLTVAR_N=14").out);
  EXPECT_EQ(from_flag["nodes"].size(), 16u);

  ScenarioParams p;
  p.n = 12;
  p.seed = 5;
  EXPECT_EQ(circuit_from_json(from_cfg), generate_circuit(p));
}

TEST_F(Cli, ConfigRejectsUnknownKeys) {
  {
    std::ofstream cfg(path("cfg.json"));
    cfg << R"({"n": 12, "bogus": 1})";
  }
  const CliRun r = cli("generate --config " + path("cfg.json"), true);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("bogus"), std::string::npos);
}

TEST_F(Cli, SweepWritesSummaryRowsAndManifest) {
  const std::string args = "sweep-s --n 20 --s 1.0:1.2:0.1 --realizations 2 --out " + path("sum.csv") +
                           " --rows " + path("rows.csv") + " --manifest " + path("m.json");
  ASSERT_EQ(cli(args).code, 0);
  const std::string summary = slurp(path("sum.csv"));
  EXPECT_EQ(summary.substr(0, summary.find('\n')), kSummaryHeader);
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 1 + 3 * 3);
  const std::string rows = slurp(path("rows.csv"));
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 1 + 3 * 3 * 2);
  const json m = load_json(path("m.json"));
  EXPECT_EQ(m["tool"], "voltvar");
  EXPECT_EQ(m["spec"]["n_realizations"], 2);

  // same inputs, same bytes
  ASSERT_EQ(cli("sweep-s --n 20 --s 1.0:1.2:0.1 --realizations 2 --threads 2 --out " + path("sum2.csv")).code, 0);
  EXPECT_EQ(slurp(path("sum2.csv")), summary);
}

TEST_F(Cli, SweepRUsesPenetrationGrid) {
  const CliRun r = cli("sweep-r --n 20 --r 0,0.5 --realizations 1 --policies zero,optimal");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1 + 2 * 2);
}

TEST_F(Cli, ProfileCsv) {
  const CliRun r = cli("profile --n 40");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "node,v_ratio_baseline,v_ratio_optimal,q_g_kvar");
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 42);
}

TEST_F(Cli, HelpShowsDefaults) {
  const CliRun r = cli("sweep-s --help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("1.0:2.0:0.1"), std::string::npos);
  EXPECT_NE(r.out.find("VOLTVAR_SEED"), std::string::npos);
}
