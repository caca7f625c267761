// Command-line front end: validate, simulate, solve-robust, mpc, scenario, export-lp.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fnc/errors.hpp"
#include "fnc/io.hpp"
#include "fnc/scenario.hpp"
#include "fnc/validation.hpp"

namespace fs = std::filesystem;
using fnc::io::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string target;
  std::string out = "results";
  std::uint64_t seed = 1;
  std::string backend = "highs";
};

/// Inputs read by one run, hashed into the manifest.
struct Inputs {
  std::vector<fs::path> files;

  void add(const fs::path& p) { files.push_back(p); }
  json to_json() const {
    json arr = json::array();
    std::uint64_t all = 14695981039346656037ULL;
    for (const auto& f : files) {
      std::ifstream in(f, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      const auto bytes = ss.str();
      arr.push_back({{"path", f.generic_string()}, {"fnv1a", fnc::io::hex64(fnc::io::fnv1a(bytes))}});
      all = fnc::io::fnv1a(bytes, all);
    }
    return {{"files", arr}, {"hash", fnc::io::hex64(all)}};
  }
};

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& argv,
                    const Inputs& inputs, const Common& c, const fnc::SolverBackend& backend,
                    const json& timings = json::object()) {
  json m;
  m["command"] = command;
  m["argv"] = argv;
  m["inputs"] = inputs.to_json();
  m["seed"] = c.seed;
  m["versions"] = {{"fnc", kVersion}, {"backend", backend.name()}, {"backend_version", backend.version()}};
  m["created"] = timestamp();
  m["timings"] = timings;
  fnc::io::write_json(dir / "manifest.json", m);
}

const fnc::SolverBackend& backend_for(const std::string& name) {
  static const fnc::HighsBackend highs;
  if (name == "highs") return highs;
  throw UsageError("unknown backend \"" + name + "\" (available: highs)");
}

fnc::Scenario scenario_for(const std::string& name, Inputs& inputs) {
  const auto dir = fnc::scenario_directory();
  const auto known = fnc::list_scenarios(dir);
  if (std::find(known.begin(), known.end(), name) == known.end()) {
    std::string list;
    for (const auto& k : known) list += (list.empty() ? "" : ", ") + k;
    throw UsageError("unknown scenario \"" + name + "\" (known: " + list + ")");
  }
  auto sc = fnc::load_scenario(name, dir);
  inputs.add(dir / (name + ".json"));
  inputs.add(sc.network_path);
  return sc;
}

fs::path prepare_out(const std::string& out) {
  fs::path p(out);
  fs::create_directories(p);
  return p;
}

void write_trajectory_files(const fs::path& dir, const std::string& stem, const fnc::NetworkModel& net,
                            const fnc::Trajectory& tr) {
  std::ofstream csv(dir / (stem + ".csv"));
  fnc::io::write_trajectory_csv(csv, net, tr);
  std::ofstream contour(dir / (stem + "_contour.csv"));
  fnc::io::write_contour_csv(contour, tr);
}

fnc::SolverOptions solver_options(const Common& c) {
  fnc::SolverOptions o;
  o.seed = c.seed;
  return o;
}

// validate <scenario | network.json>
int cmd_validate(const Common& c, const std::vector<std::string>& argv) {
  Inputs inputs;
  std::optional<fnc::NetworkModel> net;
  if (fs::is_regular_file(c.target)) {
    net = fnc::io::load_network(c.target);
    inputs.add(c.target);
  } else {
    net = scenario_for(c.target, inputs).net;
  }
  const auto report = fnc::validate(*net);
  std::cout << report.to_text();
  const auto dir = prepare_out(c.out);
  std::ofstream(dir / "validation.txt") << report.to_text();
  write_manifest(dir, "validate", argv, inputs, c, backend_for(c.backend));
  return report.valid() ? 0 : 1;
}

struct SimulateOpts {
  std::string variant;
  std::string controller = "uncontrolled";
  std::optional<std::size_t> ladder;
  std::optional<double> kappa;
};

int cmd_simulate(const Common& c, const SimulateOpts& o, const std::vector<std::string>& argv) {
  Inputs inputs;
  const auto sc = scenario_for(c.target, inputs);
  const auto& backend = backend_for(c.backend);
  auto net = sc.net;
  fnc::Mat w = fnc::demand_matrix(net, sc.demand, sc.steps);
  if (!o.variant.empty()) {
    const auto it = std::find_if(sc.variants.begin(), sc.variants.end(), [&](const auto& v) { return v.name == o.variant; });
    if (it == sc.variants.end()) throw UsageError("scenario " + sc.name + " has no variant \"" + o.variant + "\"");
    net = fnc::variant_network(sc, *it);
    w = fnc::variant_demand(sc, net, *it);
  }
  if (o.ladder) {
    if (!sc.demand_ladder || *o.ladder < 1 || *o.ladder > sc.demand_ladder->scales.size()) {
      throw UsageError("--demand-ladder out of range");
    }
    w = fnc::ladder_demand(w, *sc.demand_ladder, *o.ladder - 1);
  }
  fnc::UncertaintyRealization real(net, w);
  if (o.kappa) {
    if (!sc.kappa_ladder) throw UsageError("scenario " + sc.name + " defines no kappa ladder");
    real = fnc::kappa_realization(net, w, *sc.kappa_ladder, *o.kappa);
  }

  fnc::Trajectory tr;
  if (o.controller == "uncontrolled") {
    const auto open = fnc::uncontrolled_network(net);
    tr = fnc::simulate(open, sc.rho0, fnc::ControlInput::greedy(), real, sc.steps);
  } else if (o.controller == "greedy") {
    tr = fnc::simulate(net, sc.rho0, fnc::ControlInput::greedy(), real, sc.steps);
  } else if (o.controller == "ne") {
    const fnc::StudyContext ctx(sc, backend, solver_options(c));
    tr = fnc::simulate(net, sc.rho0, fnc::ControlInput::policy(fnc::robust_policy(net, ctx.space, ctx.robust)), real,
                       sc.steps);
  } else {
    throw UsageError("unknown controller \"" + o.controller + "\" (uncontrolled, greedy, ne)");
  }

  const auto dir = prepare_out(c.out);
  write_trajectory_files(dir, "trajectory", net, tr);
  auto summary = fnc::io::trajectory_summary(tr);
  summary["tts_basis_value"] = fnc::tts_on_basis(net, tr, sc.basis);
  summary["tts_basis"] = sc.basis == fnc::TtsBasis::PerLane ? "per_lane" : "total";
  summary["controller"] = o.controller;
  fnc::io::write_json(dir / "summary.json", summary);
  write_manifest(dir, "simulate", argv, inputs, c, backend);
  std::cout << sc.name << ": TTS " << tr.tts << " h (" << o.controller << ")\n";
  return 0;
}

int cmd_solve_robust(const Common& c, bool dump_solution, const std::vector<std::string>& argv) {
  Inputs inputs;
  const auto sc = scenario_for(c.target, inputs);
  const auto& backend = backend_for(c.backend);
  const fnc::StudyContext ctx(sc, backend, solver_options(c));
  const auto& r = ctx.robust;
  const auto open = fnc::uncontrolled_network(sc.net);
  const auto unc = fnc::simulate(open, sc.rho0, fnc::ControlInput::greedy(), fnc::worst_case(sc.net, ctx.model), sc.steps);

  const auto dir = prepare_out(c.out);
  fnc::io::write_json(dir / "lp_stats.json", {{"rows", r.lp.rows},
                                              {"columns", r.lp.cols},
                                              {"nonzeros", r.lp.nonzeros},
                                              {"status", fnc::to_string(r.lp.status)},
                                              {"max_residual", r.lp.max_residual},
                                              {"backend", backend.name()}});
  write_trajectory_files(dir, "trajectory", sc.net, r.reference);
  write_trajectory_files(dir, "uncontrolled", sc.net, unc);
  json summary;
  summary["c_star_hours"] = r.c_star;
  summary["reference_tts_hours"] = r.reference.tts;
  summary["uncontrolled_tts_hours"] = unc.tts;
  summary["improvement_percent"] = 100.0 * (unc.tts - r.c_star) / unc.tts;
  summary["reconstruction"] = {{"gap", r.reconstruction.gap}, {"tight", r.reconstruction.tight}};
  summary["asymmetric_assumption"] = {{"pass", r.asymmetric.pass}, {"checks", r.asymmetric.checks},
                                      {"failures", r.asymmetric.failures.size()}};
  summary["violations"] = fnc::io::trajectory_summary(r.reference)["violations"];
  fnc::io::write_json(dir / "summary.json", summary);
  if (dump_solution) {
    std::ofstream sol(dir / "solution.csv");
    fnc::write_solution_csv(sol, r.program.problem, r.lp);
  }
  write_manifest(dir, "solve-robust", argv, inputs, c, backend, {{"lp_solve_seconds", r.lp.wall_seconds}});
  std::cout << sc.name << ": C* = " << r.c_star << " h, uncontrolled " << unc.tts << " h, LP " << r.lp.rows
            << " rows x " << r.lp.cols << " columns solved in " << r.lp.wall_seconds << " s\n";
  return 0;
}

struct MpcOpts {
  std::string horizon;
  std::size_t interval = 1;
  std::optional<std::size_t> ladder;
  std::optional<double> kappa;
  bool naive = false;
};

int cmd_mpc(const Common& c, const MpcOpts& o, const std::vector<std::string>& argv) {
  Inputs inputs;
  const auto sc = scenario_for(c.target, inputs);
  const auto& backend = backend_for(c.backend);
  std::size_t horizon = 0;
  try {
    horizon = fnc::io::duration_to_steps(o.horizon, sc.net.dt());
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--Tc: ") + e.what());
  }
  if (horizon == 0) throw UsageError("--Tc must be positive");
  if (o.interval == 0) throw UsageError("--k must be positive");
  if (!o.naive && horizon % o.interval != 0) {
    throw UsageError("--Tc must be a multiple of --k re-optimization intervals for the terminal-constrained controller");
  }
  if (o.ladder && (!sc.demand_ladder || *o.ladder < 1 || *o.ladder > sc.demand_ladder->scales.size())) {
    throw UsageError("--demand-ladder out of range");
  }
  if (o.kappa && !sc.kappa_ladder) throw UsageError("scenario " + sc.name + " defines no kappa ladder");

  const auto opts = solver_options(c);
  const fnc::StudyContext ctx(sc, backend, opts);
  const auto actual = fnc::study_realization(sc, ctx, o.ladder, o.kappa);
  const double optimal = fnc::solve_at(sc.net, sc.rho0, actual, sc.steps, backend, opts).objective;
  const auto mc = fnc::run_mpc_case(sc, ctx, actual, optimal, horizon, o.interval, o.naive, backend, opts);

  const auto dir = prepare_out(c.out);
  {
    std::ofstream log(dir / "mpc_log.jsonl");
    fnc::write_mpc_log_jsonl(log, mc.run);
  }
  fnc::Table table{{"horizon_steps", "horizon_minutes", "interval_steps", "naive", "mpc_tts", "optimal_tts", "c_star",
                    "suboptimality_percent", "exceeds_c_star"},
                   {{static_cast<double>(horizon), static_cast<double>(horizon) * sc.net.dt() * 60.0,
                     static_cast<double>(o.interval), o.naive ? 1.0 : 0.0, mc.run.trajectory.tts, optimal,
                     ctx.robust.c_star, mc.suboptimality_percent, mc.run.exceeds_reference ? 1.0 : 0.0}}};
  {
    std::ofstream csv(dir / "suboptimality.csv");
    fnc::write_table_csv(csv, table);
  }
  write_trajectory_files(dir, "trajectory", sc.net, mc.run.trajectory);
  json summary;
  summary["mpc_tts_hours"] = mc.run.trajectory.tts;
  summary["optimal_tts_hours"] = optimal;
  summary["c_star_hours"] = ctx.robust.c_star;
  summary["suboptimality_percent"] = mc.suboptimality_percent;
  summary["terminal_constraint"] = !o.naive;
  summary["all_subproblems_feasible"] = mc.run.all_feasible;
  summary["guarantee_asserted"] = mc.run.guarantee_asserted;
  summary["exceeds_c_star"] = mc.run.exceeds_reference;
  summary["predicted_cost_non_increasing"] = mc.trace_non_increasing;
  summary["violations"] = fnc::io::trajectory_summary(mc.run.trajectory)["violations"];
  fnc::io::write_json(dir / "summary.json", summary);
  json subproblem_seconds = json::array();
  for (const auto& it : mc.run.log) subproblem_seconds.push_back(it.wall_seconds);
  write_manifest(dir, "mpc", argv, inputs, c, backend,
                 {{"robust_lp_seconds", ctx.robust.lp.wall_seconds}, {"subproblem_seconds", subproblem_seconds}});

  std::cout << sc.name << ": " << (o.naive ? "naive " : "") << "MPC TTS " << mc.run.trajectory.tts << " h, optimal "
            << optimal << " h, suboptimality " << mc.suboptimality_percent << " %, C* " << ctx.robust.c_star << " h\n";
  if (mc.run.exceeds_reference) {
    std::cout << "warning: closed-loop TTS exceeds the worst-case cost C*"
              << (o.naive ? " (no terminal constraint, no guarantee)" : "") << '\n';
  }
  return 0;
}

int cmd_scenario(const Common& c, bool skip_ladders, bool mpc_study, const std::vector<std::string>& argv) {
  Inputs inputs;
  const auto sc = scenario_for(c.target, inputs);
  const auto& backend = backend_for(c.backend);
  fnc::ScenarioOptions opts;
  opts.run_ladders = !skip_ladders;
  opts.run_mpc = mpc_study;
  opts.solver = solver_options(c);
  const auto report = fnc::run_scenario(sc, backend, opts);
  const auto dir = prepare_out(c.out);
  report.write(dir);
  write_manifest(dir, "scenario", argv, inputs, c, backend, report.timings);
  for (const auto& ch : report.checks) {
    std::cout << (ch.pass ? "[check pass] " : "[check FAIL] ") << ch.name << (ch.detail.empty() ? "" : ": ")
              << ch.detail << '\n';
  }
  for (const auto& t : report.targets) {
    std::cout << '[' << fnc::to_string(t.status) << "] " << t.target.id << " = " << t.value << " (reference "
              << t.target.value << ")\n";
  }
  return 0;
}

int cmd_export_lp(const Common& c, const std::string& horizon_text, const std::vector<std::string>& argv) {
  Inputs inputs;
  const auto sc = scenario_for(c.target, inputs);
  const auto& backend = backend_for(c.backend);
  fnc::require_lp_eligible(sc.net);
  std::size_t steps = sc.steps;
  if (!horizon_text.empty()) {
    try {
      steps = fnc::io::duration_to_steps(horizon_text, sc.net.dt());
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--horizon: ") + e.what());
    }
    if (steps == 0 || steps > sc.steps) throw UsageError("--horizon must lie within the scenario horizon");
  }
  const fnc::Mat w = fnc::demand_matrix(sc.net, sc.demand, sc.steps).leftCols(static_cast<Eigen::Index>(steps));
  const auto model = fnc::UncertaintyModel::nominal(sc.net, w);
  fnc::FncProgram program;
  try {
    program = fnc::build_relaxed_fnc(sc.net, sc.rho0, fnc::worst_case(sc.net, model), steps);
  } catch (const std::invalid_argument& e) {
    throw fnc::DomainError(std::string("network is not LP-eligible: ") + e.what());
  }
  const auto dir = prepare_out(c.out);
  backend.write_lp(program.problem, (dir / (sc.name + ".lp")).string());
  write_manifest(dir, "export-lp", argv, inputs, c, backend);
  std::cout << "wrote " << (dir / (sc.name + ".lp")).string() << " (" << program.problem.num_rows() << " rows, "
            << program.problem.num_cols() << " columns)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust freeway network control: simulation, LP solution and receding-horizon control"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  const std::vector<std::string> args(argv, argv + argc);

  Common common;
  auto add_common = [&](CLI::App* sub, const char* what) {
    sub->add_option("target", common.target, what)->required();
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", common.seed, "Seed for randomized components")->capture_default_str();
    sub->add_option("--backend", common.backend, "LP backend")->capture_default_str();
  };

  auto* validate = app.add_subcommand("validate", "Check a network against the structural assumptions");
  add_common(validate, "Scenario name or network JSON file");

  SimulateOpts sim;
  auto* simulate = app.add_subcommand("simulate", "Forward-simulate a scenario");
  add_common(simulate, "Scenario name");
  simulate->add_option("--variant", sim.variant, "Scenario variant");
  simulate->add_option("--controller", sim.controller, "uncontrolled, greedy or ne")->capture_default_str();
  simulate->add_option("--demand-ladder", sim.ladder, "Demand ladder index (1 = worst case)");
  simulate->add_option("--kappa", sim.kappa, "Capacity scaling of the kappa-ladder cells");

  bool dump_solution = false;
  auto* robust = app.add_subcommand("solve-robust", "Solve the worst-case LP and reconstruct the reference trajectory");
  add_common(robust, "Scenario name");
  robust->add_flag("--dump-solution", dump_solution, "Also write every LP variable to solution.csv");

  MpcOpts mpc;
  auto* mpc_cmd = app.add_subcommand("mpc", "Receding-horizon control against one realization");
  add_common(mpc_cmd, "Scenario name");
  mpc_cmd->add_option("--Tc", mpc.horizon, "Control horizon, e.g. 10min, 600s or a step count")->required();
  mpc_cmd->add_option("--k", mpc.interval, "Re-optimization interval in steps")->capture_default_str();
  mpc_cmd->add_option("--demand-ladder", mpc.ladder, "Demand ladder index (1 = worst case)");
  mpc_cmd->add_option("--kappa", mpc.kappa, "Capacity scaling of the kappa-ladder cells");
  mpc_cmd->add_flag("--naive", mpc.naive, "Drop the terminal constraint");

  bool skip_ladders = false;
  auto* scenario = app.add_subcommand("scenario", "Run a scenario and grade it against its reference values");
  add_common(scenario, "Scenario name");
  scenario->add_flag("--no-ladders", skip_ladders, "Skip the demand and kappa ladders");
  bool mpc_study = false;
  scenario->add_flag("--mpc-study", mpc_study, "Also run the receding-horizon study (slow)");

  std::string lp_horizon;
  auto* export_lp = app.add_subcommand("export-lp", "Write the worst-case LP in LP text format");
  add_common(export_lp, "Scenario name");
  export_lp->add_option("--horizon", lp_horizon, "Truncate the horizon, e.g. 10min");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*validate) return cmd_validate(common, args);
    if (*simulate) return cmd_simulate(common, sim, args);
    if (*robust) return cmd_solve_robust(common, dump_solution, args);
    if (*mpc_cmd) return cmd_mpc(common, mpc, args);
    if (*scenario) return cmd_scenario(common, skip_ladders, mpc_study, args);
    if (*export_lp) return cmd_export_lp(common, lp_horizon, args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const fnc::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const fnc::io::FormatError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
