// voltvar: feeder generation, power flow, reactive dispatch and sweeps.
//
// Option values are resolved per key with precedence
//   command-line flag > VOLTVAR_<KEY> environment variable > --config file > default.
// The config file is a flat JSON object keyed by long option names, e.g.
//   {"r": 0.9, "s": "1.0:2.0:0.1", "seed": 11, "ac-tol": 1e-12}

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "voltvar/voltvar.hpp"

namespace {

using namespace voltvar;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum Sub : unsigned {
  kGenerate = 1u << 0,
  kSolve = 1u << 1,
  kDispatch = 1u << 2,
  kSweepS = 1u << 3,
  kSweepR = 1u << 4,
  kProfile = 1u << 5,
};
constexpr unsigned kScenario = kGenerate | kSolve | kDispatch | kSweepS | kSweepR | kProfile;
constexpr unsigned kSweeps = kSweepS | kSweepR;

struct OptionSpec {
  std::string key;
  std::string help;
  std::string fallback;
  unsigned subs;
};

// Defaults follow the 7.2 kV prototype rural feeder.
const std::vector<OptionSpec>& option_table() {
  static const std::vector<OptionSpec> table = {
      {"n", "load nodes (prototype rural feeder: 100)", "100", kScenario},
      {"spacing", "node spacing range in meters, LO:HI (prototype: 200:300)", "200:300", kScenario},
      {"pc", "real load range in kW, LO:HI (prototype: 0:4)", "0:4", kScenario},
      {"qc-factor", "reactive/real load ratio range, LO:HI (prototype: 0.2:0.3)", "0.2:0.3", kScenario},
      {"pg", "PV real output in kW (prototype: 1)", "1", kScenario},
      {"s", "inverter capacity in kVA; START:STOP:STEP grid for sweep-s (prototype: 1.1)", "", kScenario},
      {"r", "PV penetration fraction; START:STOP:STEP grid for sweep-r", "", kScenario},
      {"epsilon", "half-width of the squared-voltage band (prototype: 0.05)", "0.05", kScenario},
      {"seed", "base random seed", "7", kScenario},
      {"r-per-km", "line resistance in ohm/km (prototype: 0.33)", "0.33", kScenario},
      {"x-per-km", "line reactance in ohm/km (prototype: 0.38)", "0.38", kScenario},
      {"v-base", "base voltage in V, line-to-neutral (prototype: 7200)", "7200", kScenario},
      {"s-base", "base power in VA (100 kVA)", "100000", kScenario},
      {"v0-squared", "substation squared voltage, per-unit", "1", kScenario},
      {"ac-tol", "AC sweep residual tolerance, per-unit", "1e-10", kScenario},
      {"ac-max-iter", "AC sweep iteration cap", "50", kScenario},
      {"qp-tol", "KKT tolerance for the optimal dispatch", "1e-8", kScenario},
      {"circuit", "circuit JSON to use instead of generating one", "", kSolve | kDispatch},
      {"policy", "dispatch policy: zero, local or optimal", "zero", kSolve | kDispatch},
      {"model", "power-flow model for solve: ac or lin", "ac", kSolve},
      {"policies", "comma-separated policies to sweep", "zero,local,optimal", kSweeps},
      {"realizations", "realizations per cell", "20", kSweeps},
      {"threads", "worker threads", "1", kSweeps},
      {"rows", "optional per-realization CSV", "", kSweeps},
      {"manifest", "optional JSON run manifest", "", kSweeps},
      {"out", "output path ('-' for stdout)", "-", kScenario},
  };
  return table;
}

std::string subcommand_default(const std::string& sub, const std::string& key) {
  if (key == "s") {
    if (sub == "sweep-s") return "1.0:2.0:0.1";
    if (sub == "profile") return "2.0";
    return "1.1";
  }
  if (key == "r") {
    if (sub == "sweep-s") return "1.0";
    if (sub == "sweep-r") return "0:1:0.1";
    if (sub == "profile") return "0.9";
    return "0.5";
  }
  for (const auto& o : option_table())
    if (o.key == key) return o.fallback;
  return "";
}

std::string env_name(const std::string& key) {
  std::string out = "VOLTVAR_";
  for (char ch : key) out += ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

class Values {
 public:
  Values(std::string sub, std::map<std::string, std::string> resolved)
      : sub_(std::move(sub)), v_(std::move(resolved)) {}

  bool has(const std::string& key) const { return v_.count(key) > 0; }
  const std::string& str(const std::string& key) const { return v_.at(key); }

  double num(const std::string& key) const {
    const std::string& s = str(key);
    try {
      std::size_t pos = 0;
      const double d = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return d;
    } catch (const std::exception&) {
      throw UsageError("--" + key + ": expected a number, got '" + s + "'");
    }
  }

  long integer(const std::string& key) const {
    const double d = num(key);
    if (d != std::floor(d)) throw UsageError("--" + key + ": expected an integer");
    return static_cast<long>(d);
  }

  Range range(const std::string& key) const {
    const auto parts = split(str(key), ':');
    if (parts.size() != 2) throw UsageError("--" + key + ": expected LO:HI");
    return {to_double(parts[0], key), to_double(parts[1], key)};
  }

  /// START:STOP:STEP (inclusive stop within 1e-12), a comma list, or one value.
  std::vector<double> grid(const std::string& key) const {
    const std::string& s = str(key);
    std::vector<double> out;
    if (s.find(':') != std::string::npos) {
      const auto parts = split(s, ':');
      if (parts.size() != 3) throw UsageError("--" + key + ": expected START:STOP:STEP");
      const double a = to_double(parts[0], key);
      const double b = to_double(parts[1], key);
      const double step = to_double(parts[2], key);
      if (!(step > 0.0) || b < a) throw UsageError("--" + key + ": empty or invalid grid");
      for (long i = 0;; ++i) {
        const double v = a + static_cast<double>(i) * step;
        if (v > b + 1e-12) break;
        out.push_back(snap(v));
      }
    } else {
      for (const auto& part : split(s, ',')) out.push_back(to_double(part, key));
    }
    return out;
  }

  double scalar(const std::string& key) const {
    const auto g = grid(key);
    if (g.size() != 1) throw UsageError("--" + key + ": expected a single value for " + sub_);
    return g.front();
  }

 private:
  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    return out;
  }

  static double to_double(const std::string& s, const std::string& key) {
    try {
      std::size_t pos = 0;
      const double d = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return d;
    } catch (const std::exception&) {
      throw UsageError("--" + key + ": bad number '" + s + "'");
    }
  }

  // grid points such as 1.0 + 3 * 0.1 print as 1.3
  static double snap(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return std::strtod(buf, nullptr);
  }

  std::string sub_;
  std::map<std::string, std::string> v_;
};

std::map<std::string, std::string> read_config(const std::string& path, unsigned sub_mask) {
  std::map<std::string, std::string> out;
  json j;
  try {
    j = load_json(path);
  } catch (const ParameterError& e) {
    throw UsageError(std::string("--config: ") + e.what());
  }
  if (!j.is_object()) throw UsageError("--config: expected a JSON object");
  for (const auto& [key, val] : j.items()) {
    const auto& table = option_table();
    const auto it = std::find_if(table.begin(), table.end(), [&](const OptionSpec& o) { return o.key == key; });
    if (it == table.end()) throw UsageError("--config: unknown key '" + key + "'");
    if (!(it->subs & sub_mask)) continue;
    if (val.is_string()) {
      out[key] = val.get<std::string>();
    } else if (val.is_number() || val.is_boolean()) {
      out[key] = val.dump();
    } else if (val.is_array() && val.size() == 2 && val[0].is_number() && val[1].is_number()) {
      out[key] = val[0].dump() + ":" + val[1].dump();
    } else {
      throw UsageError("--config: unsupported value for '" + key + "'");
    }
  }
  return out;
}

ScenarioParams scenario(const Values& v, double s_kva, double r) {
  ScenarioParams p;
  const long n = v.integer("n");
  if (n < 1 || n > 1000000) throw UsageError("--n: out of range");
  p.n = static_cast<int>(n);
  p.spacing_m = v.range("spacing");
  p.p_c_kw = v.range("pc");
  p.q_c_factor = v.range("qc-factor");
  p.p_g_kw = v.num("pg");
  p.s_kva = s_kva;
  p.penetration_r = r;
  p.epsilon = v.num("epsilon");
  try {
    std::size_t pos = 0;
    const std::string& txt = v.str("seed");
    if (txt.empty() || txt[0] == '-') throw std::invalid_argument(txt);
    p.seed = std::stoull(txt, &pos);
    if (pos != txt.size()) throw std::invalid_argument(txt);
  } catch (const std::exception&) {
    throw UsageError("--seed: expected a nonnegative integer");
  }
  p.impedance_per_km = {v.num("r-per-km"), v.num("x-per-km")};
  p.v_base = v.num("v-base");
  p.s_base = v.num("s-base");
  p.v0_squared = v.num("v0-squared");
  return p;
}

AcOptions ac_options(const Values& v) {
  return {v.num("ac-tol"), static_cast<int>(v.integer("ac-max-iter"))};
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-" && !path.empty()) {
      file_.open(path);
      if (!file_) throw UsageError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

Circuit circuit_for(const Values& v) {
  if (v.has("circuit") && !v.str("circuit").empty()) {
    Circuit c = circuit_from_json(load_json(v.str("circuit")));
    const auto bad = validate(c, v.num("epsilon"));
    if (!bad.empty()) throw ParameterError("circuit", bad.front().describe());
    return c;
  }
  return generate_circuit(scenario(v, v.scalar("s"), v.scalar("r")));
}

Dispatch dispatch_for(const Circuit& c, Policy policy, const Values& v, DispatchSolution* sol_out) {
  switch (policy) {
    case Policy::Zero: return zero_dispatch(c);
    case Policy::Local: return local_dispatch(c);
    case Policy::Optimal: {
      DispatchSolution sol = optimal_dispatch(c, v.num("epsilon"), v.num("qp-tol"));
      if (sol.status == SolveStatus::Infeasible) {
        throw InfeasibleDispatch("voltage band infeasible at node " + std::to_string(sol.certificate_node),
                                 sol.certificate_node);
      }
      if (sol.status == SolveStatus::MaxIter) {
        throw ConvergenceError("dispatch QP stopped at KKT residual " + std::to_string(sol.kkt_residual),
                               sol.kkt_residual, sol.iterations);
      }
      if (sol_out) *sol_out = sol;
      return sol.dispatch;
    }
    case Policy::Custom: break;
  }
  throw UsageError("--policy: custom is not selectable here");
}

int run_generate(const Values& v) {
  const Circuit c = circuit_for(v);
  Output out(v.str("out"));
  out.stream() << circuit_to_json(c).dump(2) << '\n';
  return 0;
}

int run_solve(const Values& v) {
  const Circuit c = circuit_for(v);
  const Dispatch d = dispatch_for(c, policy_from_string(v.str("policy")), v, nullptr);
  const std::string model = v.str("model");
  FlowState s;
  if (model == "ac") {
    s = solve_ac(c, d, ac_options(v));
  } else if (model == "lin") {
    s = solve_lin(c, d);
  } else {
    throw UsageError("--model: expected ac or lin");
  }
  Output out(v.str("out"));
  write_flow_csv(out.stream(), s);
  char buf[96];
  std::snprintf(buf, sizeof buf, "# losses_kw,%.17g\n", c.bases().power_from_pu(losses(c, s)));
  out.stream() << buf;
  return 0;
}

int run_dispatch(const Values& v) {
  const Circuit c = circuit_for(v);
  const Policy policy = policy_from_string(v.str("policy"));
  DispatchSolution sol;
  if (policy == Policy::Optimal) {
    dispatch_for(c, policy, v, &sol);
  } else {
    sol.dispatch = dispatch_for(c, policy, v, nullptr);
    const QpProblem prob = build_qp(c, v.num("epsilon"));
    sol.objective_value = lin_objective(c, sol.dispatch);
    sol.kkt_residual = kkt_check(prob, sol.dispatch, 1e-9).max();
    sol.status = voltage_band_ok(solve_lin(c, sol.dispatch), v.num("epsilon")).ok
                     ? SolveStatus::Optimal
                     : SolveStatus::Infeasible;
  }
  Output out(v.str("out"));
  out.stream() << solution_to_json(sol, c.bases()).dump(2) << '\n';
  return 0;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int run_sweep_cmd(const Values& v, const std::string& sub, const std::string& command_line) {
  SweepSpec spec;
  spec.s_values = v.grid("s");
  spec.r_values = v.grid("r");
  spec.base_params = scenario(v, *std::max_element(spec.s_values.begin(), spec.s_values.end()),
                              spec.r_values.front());
  const long reals = v.integer("realizations");
  if (reals < 1) throw UsageError("--realizations: must be at least 1");
  spec.n_realizations = static_cast<int>(reals);
  spec.policies.clear();
  std::istringstream is(v.str("policies"));
  for (std::string tok; std::getline(is, tok, ',');) spec.policies.push_back(policy_from_string(tok));
  spec.ac = ac_options(v);
  spec.qp_tol = v.num("qp-tol");
  const long threads = v.integer("threads");
  if (threads < 1) throw UsageError("--threads: must be at least 1");
  spec.threads = static_cast<unsigned>(threads);

  const std::string started = utc_now();
  const SweepResult result = run_sweep(spec);
  {
    Output out(v.str("out"));
    out.stream() << summarize(result);
  }
  if (!v.str("rows").empty()) {
    Output rows(v.str("rows"));
    rows.stream() << rows_csv(result);
  }
  if (!v.str("manifest").empty()) {
    json m = {{"tool", "voltvar"},
              {"version", VOLTVAR_VERSION},
              {"subcommand", sub},
              {"command", command_line},
              {"spec", spec_to_json(spec)},
              {"started_utc", started},
              {"finished_utc", utc_now()},
              {"rows", result.rows.size()},
              {"outputs", {{"summary", v.str("out")}, {"rows", v.str("rows")}}}};
    save_json(v.str("manifest"), m);
  }
  return 0;
}

int run_profile(const Values& v) {
  const ProfileCase pc =
      voltage_profile_case(scenario(v, v.scalar("s"), v.scalar("r")), ac_options(v), v.num("qp-tol"));
  Output out(v.str("out"));
  out.stream() << profile_csv(pc);
  return 0;
}

void report(const char* kind, const std::string& message) {
  json e = {{"error", kind}, {"message", message}};
  std::cerr << e.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reactive power dispatch for PV inverters on a radial distribution feeder"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --config follow the subcommand name
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file keyed by long option names");

  struct SubInfo {
    const char* name;
    Sub bit;
    const char* help;
  };
  const SubInfo subs[] = {
      {"generate", kGenerate, "draw a feeder realization and write it as JSON"},
      {"solve", kSolve, "solve power flow for a dispatch policy; writes a flow CSV"},
      {"dispatch", kDispatch, "compute a dispatch and write it as JSON"},
      {"sweep-s", kSweepS, "savings versus inverter capacity s"},
      {"sweep-r", kSweepR, "savings versus PV penetration r"},
      {"profile", kProfile, "voltage profile with and without optimal dispatch"},
  };

  std::map<std::string, std::map<std::string, std::string>> flags;
  std::map<std::string, CLI::App*> apps;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    apps[s.name] = sub;
    for (const auto& o : option_table()) {
      if (!(o.subs & s.bit)) continue;
      const std::string def = subcommand_default(s.name, o.key);
      std::string help = o.help;
      if (!def.empty()) help += " [default: " + def + "]";
      help += " (env " + env_name(o.key) + ")";
      sub->add_option("--" + o.key, flags[s.name][o.key], help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report("usage", e.what());
    return 1;
  }

  std::string command_line;
  for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);

  try {
    std::string name;
    Sub bit = kGenerate;
    for (const auto& s : subs) {
      if (apps[s.name]->parsed()) {
        name = s.name;
        bit = s.bit;
      }
    }

    std::map<std::string, std::string> resolved;
    const auto from_file = config_path.empty() ? std::map<std::string, std::string>{}
                                               : read_config(config_path, bit);
    for (const auto& o : option_table()) {
      if (!(o.subs & bit)) continue;
      std::string value = subcommand_default(name, o.key);
      if (auto it = from_file.find(o.key); it != from_file.end()) value = it->second;
      if (const char* env = std::getenv(env_name(o.key).c_str())) value = env;
      if (apps[name]->count("--" + o.key) > 0) value = flags[name][o.key];
      resolved[o.key] = value;
    }
    const Values v(name, std::move(resolved));

    if (name == "generate") return run_generate(v);
    if (name == "solve") return run_solve(v);
    if (name == "dispatch") return run_dispatch(v);
    if (name == "sweep-s" || name == "sweep-r") return run_sweep_cmd(v, name, command_line);
    if (name == "profile") return run_profile(v);
    report("usage", "unknown subcommand");
    return 1;
  } catch (const UsageError& e) {
    report("usage", e.what());
    return 1;
  } catch (const ParameterError& e) {
    report("parameter", e.what());
    return 1;
  } catch (const ConvergenceError& e) {
    report("convergence", e.what());
    return 2;
  } catch (const InfeasibleOperatingPoint& e) {
    report("infeasible_operating_point", e.what());
    return 2;
  } catch (const InfeasibleDispatch& e) {
    report("infeasible_dispatch", e.what());
    return 2;
  } catch (const NumericalError& e) {
    report("numerical", e.what());
    return 2;
  } catch (const DomainError& e) {
    report("domain", e.what());
    return 1;
  } catch (const std::exception& e) {
    report("internal", e.what());
    return 2;
  }
}
