#include "fnc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>

#include "fnc/errors.hpp"
#include "fnc/tctm.hpp"
#include "fnc/validation.hpp"

#ifndef FNC_SOURCE_SCENARIO_DIR
#define FNC_SOURCE_SCENARIO_DIR "scenarios"
#endif

namespace fnc {

using io::FormatError;
using io::json;

double Profile::at(double minutes) const {
  if (points.empty()) return 0.0;
  if (minutes < points.front().first) return kind == Kind::Steps ? 0.0 : points.front().second;
  if (kind == Kind::Steps) {
    double v = points.front().second;
    for (const auto& [m, value] : points) {
      if (m <= minutes) v = value;
    }
    return v;
  }
  for (std::size_t k = 1; k < points.size(); ++k) {
    const auto& [m0, v0] = points[k - 1];
    const auto& [m1, v1] = points[k];
    if (minutes <= m1) return m1 > m0 ? v0 + (v1 - v0) * (minutes - m0) / (m1 - m0) : v1;
  }
  return points.back().second;
}

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw FormatError(where + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) throw FormatError(where + ": unknown key \"" + key + "\"");
  }
}

Profile parse_profile(const json& p, const std::map<std::string, Profile>& named, const std::string& where) {
  if (p.contains("profile")) {
    check_keys(p, {"profile", "scale"}, where);
    const auto name = p.at("profile").get<std::string>();
    const auto it = named.find(name);
    if (it == named.end()) throw FormatError(where + ": unknown profile \"" + name + "\"");
    Profile out = it->second;
    const double s = p.value("scale", 1.0);
    for (auto& pt : out.points) pt.second *= s;
    return out;
  }
  check_keys(p, {"kind", "points"}, where);
  Profile out;
  const auto kind = p.value("kind", std::string("steps"));
  if (kind == "steps") out.kind = Profile::Kind::Steps;
  else if (kind == "linear") out.kind = Profile::Kind::Linear;
  else throw FormatError(where + ".kind: expected steps or linear");
  for (const auto& pt : p.at("points")) {
    if (!pt.is_array() || pt.size() != 2) throw FormatError(where + ".points: expected [minute, value] pairs");
    out.points.emplace_back(pt[0].get<double>(), pt[1].get<double>());
  }
  for (std::size_t k = 1; k < out.points.size(); ++k) {
    if (out.points[k].first < out.points[k - 1].first) throw FormatError(where + ".points: minutes must increase");
  }
  return out;
}

std::map<std::string, Profile> parse_demand(const json& d, const std::map<std::string, Profile>& named,
                                            const std::string& where) {
  if (!d.is_object()) throw FormatError(where + ": expected an object keyed by cell name");
  std::map<std::string, Profile> out;
  for (const auto& [cell, p] : d.items()) out[cell] = parse_profile(p, named, where + "." + cell);
  return out;
}

json apply_overrides(json doc, const json& overrides) {
  for (const auto& [name, patch] : overrides.items()) {
    bool found = false;
    for (auto& c : doc.at("cells")) {
      if (c.at("name") == name) {
        for (const auto& [k, v] : patch.items()) c[k] = v;
        found = true;
      }
    }
    if (!found) throw FormatError("cell_overrides: unknown cell \"" + name + "\"");
  }
  return doc;
}

bool within(double value, const Target& t) {
  const double err = std::abs(value - t.value);
  return t.absolute ? err <= t.tolerance : err <= t.tolerance * std::abs(t.value);
}

bool non_increasing(const std::vector<double>& v, double rel = 1e-6) {
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[k - 1] + rel * (1.0 + std::abs(v[k - 1]))) return false;
  }
  return true;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

}  // namespace

std::filesystem::path scenario_directory() {
  if (const char* env = std::getenv("FNC_SCENARIO_DIR"); env && *env) return env;
  return FNC_SOURCE_SCENARIO_DIR;
}

std::vector<std::string> list_scenarios(const std::filesystem::path& dir) {
  std::vector<std::string> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") out.push_back(entry.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Scenario load_scenario(const std::string& name, const std::filesystem::path& dir) {
  const auto path = dir / (name + ".json");
  if (!std::filesystem::is_regular_file(path)) {
    std::string known;
    for (const auto& s : list_scenarios(dir)) known += (known.empty() ? "" : ", ") + s;
    throw FormatError("unknown scenario \"" + name + "\" (known: " + known + ")");
  }
  try {
    return parse_scenario(io::read_json(path), dir);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Scenario parse_scenario(const json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc,
             {"name", "description", "network", "horizon_minutes", "initial_density", "profiles", "demand", "variants",
              "experiment", "tts_basis", "targets", "demand_ladder", "kappa_ladder", "mpc", "monitor"},
             "scenario");
  const auto net_path = base_dir / doc.at("network").get<std::string>();
  auto net_doc = io::read_json(net_path);
  Scenario sc{.net = io::parse_network(net_doc)};
  sc.network_doc = std::move(net_doc);
  sc.network_path = net_path;
  sc.name = doc.at("name").get<std::string>();
  sc.description = doc.value("description", std::string());

  const double minutes = doc.at("horizon_minutes").get<double>();
  const double steps = minutes / 60.0 / sc.net.dt();
  if (std::abs(steps - std::round(steps)) > 1e-9 * steps) {
    throw FormatError("horizon_minutes is not a whole number of sampling intervals");
  }
  sc.steps = static_cast<std::size_t>(std::round(steps));

  sc.rho0 = Vec::Zero(static_cast<Eigen::Index>(sc.net.size()));
  if (doc.contains("initial_density")) {
    for (const auto& [cell, v] : doc.at("initial_density").items()) {
      sc.rho0[static_cast<Eigen::Index>(io::cell_index(sc.net, cell))] = v.get<double>();
    }
  }

  std::map<std::string, Profile> named;
  if (doc.contains("profiles")) {
    for (const auto& [name, p] : doc.at("profiles").items()) named[name] = parse_profile(p, {}, "profiles." + name);
  }
  if (doc.contains("demand")) sc.demand = parse_demand(doc.at("demand"), named, "demand");
  for (const auto& [cell, _] : sc.demand) io::cell_index(sc.net, cell);

  if (doc.contains("variants")) {
    for (const auto& v : doc.at("variants")) {
      check_keys(v, {"name", "cell_overrides", "demand"}, "variants[]");
      Variant var;
      var.name = v.at("name").get<std::string>();
      if (v.contains("cell_overrides")) var.cell_overrides = v.at("cell_overrides");
      if (v.contains("demand")) var.demand = parse_demand(v.at("demand"), named, "variants." + var.name + ".demand");
      sc.variants.push_back(std::move(var));
    }
  }

  const auto exp = doc.at("experiment").get<std::string>();
  if (exp == "demand_increase") sc.experiment = Experiment::DemandIncrease;
  else if (exp == "speed_limit") sc.experiment = Experiment::SpeedLimit;
  else if (exp == "network_study") sc.experiment = Experiment::NetworkStudy;
  else throw FormatError("experiment: expected demand_increase, speed_limit or network_study");

  const auto basis = doc.value("tts_basis", std::string("total"));
  if (basis == "total") sc.basis = TtsBasis::Total;
  else if (basis == "per_lane") sc.basis = TtsBasis::PerLane;
  else throw FormatError("tts_basis: expected total or per_lane");

  if (doc.contains("targets")) {
    for (const auto& t : doc.at("targets")) {
      check_keys(t, {"id", "label", "value", "tolerance", "absolute", "contingent", "bound"}, "targets[]");
      sc.targets.push_back({t.at("id").get<std::string>(), t.value("label", std::string()), t.at("value").get<double>(),
                            t.value("tolerance", 0.05), t.value("absolute", false), t.value("contingent", false),
                            t.value("bound", false)});
    }
  }
  if (doc.contains("demand_ladder")) {
    const auto& d = doc.at("demand_ladder");
    check_keys(d, {"scales"}, "demand_ladder");
    DemandLadder lad{d.at("scales").get<std::vector<double>>()};
    if (lad.scales.empty() || lad.scales.front() != 1.0) throw FormatError("demand_ladder: the first scale must be 1");
    for (std::size_t k = 1; k < lad.scales.size(); ++k) {
      if (lad.scales[k] > lad.scales[k - 1] || lad.scales[k] < 0.0) {
        throw FormatError("demand_ladder: scales must be non-increasing and >= 0");
      }
    }
    sc.demand_ladder = std::move(lad);
  }
  if (doc.contains("kappa_ladder")) {
    const auto& k = doc.at("kappa_ladder");
    check_keys(k, {"values", "cells"}, "kappa_ladder");
    KappaLadder lad;
    lad.values = k.at("values").get<std::vector<double>>();
    for (double v : lad.values) {
      if (v < 1.0) throw FormatError("kappa_ladder: values must be >= 1");
    }
    for (const auto& c : k.at("cells")) lad.cells.push_back(io::cell_index(sc.net, c.get<std::string>()));
    sc.kappa_ladder = std::move(lad);
  }
  if (doc.contains("mpc")) {
    const auto& m = doc.at("mpc");
    check_keys(m,
               {"horizons", "interval_steps", "naive_horizon", "ladder_indices", "kappa_values", "ladder_min_horizon",
                "kappa_min_horizon"},
               "mpc");
    MpcStudy st;
    st.horizons = m.at("horizons").get<std::vector<std::string>>();
    st.interval = m.value("interval_steps", std::size_t{1});
    st.naive_horizon = m.value("naive_horizon", std::string());
    st.ladder_indices = m.value("ladder_indices", std::vector<std::size_t>{});
    st.kappa_values = m.value("kappa_values", std::vector<double>{});
    st.ladder_min_horizon = m.value("ladder_min_horizon", std::string());
    st.kappa_min_horizon = m.value("kappa_min_horizon", std::string());
    auto steps_of = [&](const std::string& text) {
      try {
        return io::duration_to_steps(text, sc.net.dt());
      } catch (const std::invalid_argument& e) {
        throw FormatError("mpc: " + std::string(e.what()));
      }
    };
    for (const auto& h : st.horizons) {
      if (steps_of(h) % st.interval != 0) throw FormatError("mpc: horizon " + h + " is not a multiple of the interval");
    }
    for (const auto* h : {&st.naive_horizon, &st.ladder_min_horizon, &st.kappa_min_horizon}) {
      if (!h->empty()) steps_of(*h);
    }
    for (auto i : st.ladder_indices) {
      if (!sc.demand_ladder || i < 1 || i > sc.demand_ladder->scales.size()) {
        throw FormatError("mpc: ladder index " + std::to_string(i) + " out of range");
      }
    }
    if (!st.kappa_values.empty() && !sc.kappa_ladder) throw FormatError("mpc: kappa_values need a kappa_ladder");
    sc.mpc = std::move(st);
  }
  if (doc.contains("monitor")) {
    const auto& m = doc.at("monitor");
    check_keys(m, {"cell", "critical_density"}, "monitor");
    sc.monitor = Monitor{io::cell_index(sc.net, m.at("cell").get<std::string>()), m.at("critical_density").get<double>()};
  }
  return sc;
}

Mat demand_matrix(const NetworkModel& net, const std::map<std::string, Profile>& profiles, std::size_t steps) {
  Mat w = Mat::Zero(static_cast<Eigen::Index>(net.size()), static_cast<Eigen::Index>(steps));
  for (const auto& [cell, p] : profiles) {
    const auto e = static_cast<Eigen::Index>(io::cell_index(net, cell));
    for (std::size_t t = 0; t < steps; ++t) {
      w(e, static_cast<Eigen::Index>(t)) = p.at(static_cast<double>(t) * net.dt() * 60.0);
    }
  }
  return w;
}

NetworkModel variant_network(const Scenario& sc, const Variant& v) {
  if (v.cell_overrides.empty()) return sc.net;
  return io::parse_network(apply_overrides(sc.network_doc, v.cell_overrides));
}

Mat variant_demand(const Scenario& sc, const NetworkModel& net, const Variant& v) {
  auto profiles = sc.demand;
  for (const auto& [cell, p] : v.demand) profiles[cell] = p;
  return demand_matrix(net, profiles, sc.steps);
}

NetworkModel uncontrolled_network(const NetworkModel& net) {
  return NetworkModel(net.cells(), net.links(), net.dt(), {}, MergeModel{MergeRule::ProportionalPriority, {}},
                      net.ramp_caps());
}

FundamentalDiagram kappa_scaled(const FundamentalDiagram& fd, double kappa) {
  const auto pieces = fd.demand.pieces();
  if (pieces.empty()) throw std::invalid_argument("kappa scaling needs a bounded demand");
  double v = 0.0;
  for (const auto& p : pieces) v = std::max(v, p.slope);
  const double cap = fd.demand.supremum().value_or(0.0);
  if (fd.supply.is_unbounded()) return {ConcavePwa::triangular_demand(v, kappa * cap), fd.supply, std::nullopt};
  const double jam = fd.supply.zero_crossing().value_or(0.0);
  const double w = fd.supply.max_abs_slope();
  return {ConcavePwa::triangular_demand(v, kappa * cap), ConcavePwa::triangular_supply(kappa * cap, kappa * jam, w),
          std::nullopt};
}

UncertaintyRealization kappa_realization(const NetworkModel& net, const Mat& w, const KappaLadder& ladder,
                                         double kappa) {
  UncertaintyRealization r(net, w);
  if (kappa == 1.0) return r;
  for (auto e : ladder.cells) {
    const auto fd = kappa_scaled(net.cell(e).fd, kappa);
    r.set_demand(e, fd.demand);
    if (!net.is_source(e)) r.set_supply(e, fd.supply);
  }
  return r;
}

Mat ladder_demand(const Mat& w_upper, const DemandLadder& ladder, std::size_t k) {
  return ladder.scales.at(k) * w_upper;
}

double tts_on_basis(const NetworkModel& net, const Trajectory& tr, TtsBasis basis) {
  if (basis == TtsBasis::Total) return tr.tts;
  Vec weights = net.lengths();
  for (std::size_t e = 0; e < net.size(); ++e) weights[static_cast<Eigen::Index>(e)] /= net.cell(e).lanes;
  return total_time_spent(tr.rho, weights, tr.dt);
}

std::string to_string(TargetStatus s) {
  switch (s) {
    case TargetStatus::Pass: return "pass";
    case TargetStatus::SoftPass: return "soft-pass";
    case TargetStatus::Fail: return "fail";
  }
  return "fail";
}

bool ScenarioReport::checks_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

json ScenarioReport::to_json() const {
  json j;
  j["scenario"] = scenario;
  j["values"] = values;
  j["checks"] = json::array();
  for (const auto& c : checks) j["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  j["targets"] = json::array();
  for (const auto& t : targets) {
    j["targets"].push_back({{"id", t.target.id},
                            {"label", t.target.label},
                            {"reference", t.target.value},
                            {"tolerance", t.target.tolerance},
                            {"absolute", t.target.absolute},
                            {"contingent", t.target.contingent},
                            {"value", t.value},
                            {"status", to_string(t.status)}});
  }
  j["tables"] = json::array();
  for (const auto& [name, _] : tables) j["tables"].push_back(name + ".csv");
  j["details"] = details;
  return j;
}

void write_table_csv(std::ostream& os, const Table& table) {
  for (std::size_t c = 0; c < table.columns.size(); ++c) os << (c ? "," : "") << table.columns[c];
  os << '\n' << std::setprecision(10);
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << row[c];
    os << '\n';
  }
}

void ScenarioReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  io::write_json(dir / "report.json", to_json());
  for (const auto& [name, table] : tables) {
    std::ofstream out(dir / (name + ".csv"));
    write_table_csv(out, table);
  }
}

void grade_targets(ScenarioReport& report, const std::vector<Target>& targets) {
  const bool qualitative = report.checks_pass();
  for (const auto& t : targets) {
    TargetOutcome o{t, NAN, TargetStatus::Fail};
    if (const auto it = report.values.find(t.id); it != report.values.end()) {
      o.value = it->second;
      if (t.bound ? o.value <= t.value : within(o.value, t)) o.status = TargetStatus::Pass;
      else if (t.contingent && qualitative) o.status = TargetStatus::SoftPass;
    }
    report.targets.push_back(o);
  }
}

LpSolution solve_at(const NetworkModel& net, const Vec& rho0, const UncertaintyRealization& real, std::size_t steps,
                    const SolverBackend& backend, const SolverOptions& options) {
  const auto program = build_relaxed_fnc(net, rho0, real, steps);
  auto sol = solve(program.problem, backend, options);
  if (!sol.optimal()) throw DomainError("optimal-control LP " + to_string(sol.status) + ": " + sol.message);
  return sol;
}

namespace {

double open_loop_tts(const NetworkModel& open, const Vec& rho0, const UncertaintyRealization& real, std::size_t T,
                     TtsBasis basis) {
  return tts_on_basis(open, simulate(open, rho0, ControlInput::greedy(), real, T), basis);
}

void run_demand_increase(const Scenario& sc, const SolverBackend& backend, const ScenarioOptions& opt,
                         ScenarioReport& rep) {
  if (sc.variants.size() < 2) throw FormatError(sc.name + ": demand_increase needs two variants (lower, higher)");
  Table table{{"variant", "uncontrolled_tts", "optimal_tts", "reconstruction_gap"}, {}};
  std::vector<double> open;
  std::vector<double> best;
  for (std::size_t k = 0; k < sc.variants.size(); ++k) {
    const auto& v = sc.variants[k];
    const auto net = variant_network(sc, v);
    const UncertaintyRealization real(net, variant_demand(sc, net, v));
    const double u = open_loop_tts(uncontrolled_network(net), sc.rho0, real, sc.steps, sc.basis);
    const auto program = build_relaxed_fnc(net, sc.rho0, real, sc.steps);
    const auto sol = solve(program.problem, backend, opt.solver);
    if (!sol.optimal()) throw DomainError("optimal-control LP " + to_string(sol.status) + ": " + sol.message);
    const TctmSpace space(net);
    const auto rec = reconstruct_feasible(net, space, program, sol, real);
    rep.values["uncontrolled:" + v.name] = u;
    rep.values["optimal:" + v.name] = sol.objective;
    rep.details["reconstruction_tight:" + v.name] = rec.tight;
    open.push_back(u);
    best.push_back(sol.objective);
    table.rows.push_back({static_cast<double>(k), u, sol.objective, rec.gap});
  }
  const auto& lo = sc.variants.front().name;
  const auto& hi = sc.variants.back().name;
  rep.checks.push_back({"uncontrolled TTS decreases when demand increases", open.back() < open.front(),
                        "uncontrolled " + lo + " " + fmt(open.front()) + " h, " + hi + " " + fmt(open.back()) + " h"});
  rep.checks.push_back({"optimal TTS does not decrease when demand increases",
                        best.back() >= best.front() - 1e-6 * (1.0 + best.front()),
                        "optimal " + lo + " " + fmt(best.front()) + " h, " + hi + " " + fmt(best.back()) + " h"});
  rep.tables["tts_by_variant"] = std::move(table);
}

void run_speed_limit(const Scenario& sc, ScenarioReport& rep) {
  if (sc.variants.size() < 2) throw FormatError(sc.name + ": speed_limit needs two variants (baseline, limited)");
  Table table{{"variant", "tts", "peak_density"}, {}};
  std::vector<double> tts;
  std::vector<double> peak;
  for (std::size_t k = 0; k < sc.variants.size(); ++k) {
    const auto& v = sc.variants[k];
    const auto net = variant_network(sc, v);
    const UncertaintyRealization real(net, variant_demand(sc, net, v));
    const auto tr = simulate(net, sc.rho0, ControlInput::greedy(), real, sc.steps);
    const double value = tts_on_basis(net, tr, sc.basis);
    double p = 0.0;
    if (sc.monitor) p = tr.rho.row(static_cast<Eigen::Index>(sc.monitor->cell)).maxCoeff();
    rep.values["uncontrolled:" + v.name] = value;
    rep.values["peak_density:" + v.name] = p;
    tts.push_back(value);
    peak.push_back(p);
    table.rows.push_back({static_cast<double>(k), value, p});
  }
  rep.checks.push_back({"limited TTS below baseline TTS", tts.back() < tts.front(),
                        fmt(tts.back()) + " h vs " + fmt(tts.front()) + " h"});
  if (sc.monitor) {
    rep.checks.push_back({"critical density never exceeded under the limit", peak.back() <= sc.monitor->critical_density,
                          "peak " + fmt(peak.back()) + " vs critical " + fmt(sc.monitor->critical_density) +
                              " cars/km (baseline peak " + fmt(peak.front()) + ")"});
  }
  rep.tables["tts_by_variant"] = std::move(table);
}

void run_mpc_study(const Scenario& sc, const StudyContext& ctx, const SolverBackend& backend,
                   const ScenarioOptions& opt, ScenarioReport& rep);

void run_network_study(const Scenario& sc, const SolverBackend& backend, const ScenarioOptions& opt,
                       ScenarioReport& rep) {
  const auto& net = sc.net;
  const StudyContext ctx(sc, backend, opt.solver);
  const auto& w_upper = ctx.w_upper;
  const auto& robust = ctx.robust;
  const auto open = uncontrolled_network(net);
  const auto wc = worst_case(net, ctx.model);

  const double u = open_loop_tts(open, sc.rho0, wc, sc.steps, sc.basis);
  rep.values["uncontrolled:worst"] = u;
  rep.values["optimal:worst"] = robust.c_star;
  rep.values["improvement_percent"] = 100.0 * (u - robust.c_star) / u;
  rep.values["ne:worst"] = robust.reference.tts;
  rep.details["lp"] = {{"rows", robust.lp.rows},
                       {"columns", robust.lp.cols},
                       {"nonzeros", robust.lp.nonzeros},
                       {"max_residual", robust.lp.max_residual}};
  rep.timings["lp_solve_seconds"] = robust.lp.wall_seconds;
  rep.details["reconstruction"] = {{"gap", robust.reconstruction.gap}, {"tight", robust.reconstruction.tight}};
  rep.details["asymmetric_assumption"] = {{"pass", robust.asymmetric.pass},
                                          {"checks", robust.asymmetric.checks},
                                          {"failures", robust.asymmetric.failures.size()}};
  rep.checks.push_back({"reconstruction is tight", robust.reconstruction.tight,
                        "gap " + fmt(robust.reconstruction.gap) + " h"});
  const Policy ne = robust_policy(net, ctx.space, robust);

  if (opt.run_ladders && sc.demand_ladder) {
    Table table{{"index", "scale", "uncontrolled_tts", "ne_tts", "optimal_tts"}, {}};
    std::vector<double> ne_v;
    std::vector<double> opt_v;
    for (std::size_t k = 0; k < sc.demand_ladder->scales.size(); ++k) {
      const UncertaintyRealization real(net, ladder_demand(w_upper, *sc.demand_ladder, k));
      const double uo = open_loop_tts(open, sc.rho0, real, sc.steps, sc.basis);
      const double n = tts_on_basis(net, simulate(net, sc.rho0, ControlInput::policy(ne), real, sc.steps), sc.basis);
      const double o = solve_at(net, sc.rho0, real, sc.steps, backend, opt.solver).objective;
      ne_v.push_back(n);
      opt_v.push_back(o);
      table.rows.push_back({static_cast<double>(k + 1), sc.demand_ladder->scales[k], uo, n, o});
    }
    rep.checks.push_back({"NE-policy TTS non-increasing along the demand ladder", non_increasing(ne_v), ""});
    rep.checks.push_back({"optimal TTS non-increasing along the demand ladder", non_increasing(opt_v), ""});
    rep.checks.push_back({"NE-policy TTS at or below the worst-case cost",
                          std::all_of(ne_v.begin(), ne_v.end(),
                                      [&](double x) { return x <= robust.c_star * (1.0 + 1e-6) + 1e-6; }),
                          ""});
    rep.tables["tts_vs_demand_ladder"] = std::move(table);
  }

  if (opt.run_ladders && sc.kappa_ladder) {
    Table table{{"kappa", "uncontrolled_tts", "ne_tts", "optimal_tts"}, {}};
    std::vector<double> ne_v;
    std::vector<double> opt_v;
    std::map<double, double> open_by_kappa;
    for (double kappa : sc.kappa_ladder->values) {
      const auto real = kappa_realization(net, w_upper, *sc.kappa_ladder, kappa);
      const double uo = open_loop_tts(open, sc.rho0, real, sc.steps, sc.basis);
      const double n = tts_on_basis(net, simulate(net, sc.rho0, ControlInput::policy(ne), real, sc.steps), sc.basis);
      const double o = solve_at(net, sc.rho0, real, sc.steps, backend, opt.solver).objective;
      ne_v.push_back(n);
      opt_v.push_back(o);
      open_by_kappa[kappa] = uo;
      table.rows.push_back({kappa, uo, n, o});
    }
    rep.checks.push_back({"NE-policy TTS non-increasing in kappa", non_increasing(ne_v), ""});
    rep.checks.push_back({"optimal TTS non-increasing in kappa", non_increasing(opt_v), ""});
    if (open_by_kappa.contains(1.4) && open_by_kappa.contains(1.8)) {
      rep.values["uncontrolled:kappa1.4"] = open_by_kappa[1.4];
      rep.values["uncontrolled:kappa1.8"] = open_by_kappa[1.8];
      // Observed rather than required: reported beside the hard checks.
      rep.details["uncontrolled_increases_1.4_to_1.8"] = open_by_kappa[1.8] > open_by_kappa[1.4];
    }
    rep.tables["tts_vs_kappa"] = std::move(table);
  }

  if (opt.run_mpc && sc.mpc) run_mpc_study(sc, ctx, backend, opt, rep);
}

}  // namespace

StudyContext::StudyContext(const Scenario& sc, const SolverBackend& backend, const SolverOptions& options)
    : w_upper((require_lp_eligible(sc.net), demand_matrix(sc.net, sc.demand, sc.steps))),
      model(UncertaintyModel::nominal(sc.net, w_upper)),
      space(sc.net),
      robust(solve_robust(sc.net, space, sc.rho0, model, backend, options)) {}

UncertaintyRealization study_realization(const Scenario& sc, const StudyContext& ctx,
                                         std::optional<std::size_t> ladder_index, std::optional<double> kappa) {
  Mat w = ctx.w_upper;
  if (ladder_index) {
    if (!sc.demand_ladder || *ladder_index < 1 || *ladder_index > sc.demand_ladder->scales.size()) {
      throw std::invalid_argument("demand ladder index out of range");
    }
    w = ladder_demand(ctx.w_upper, *sc.demand_ladder, *ladder_index - 1);
  }
  if (kappa) {
    if (!sc.kappa_ladder) throw std::invalid_argument(sc.name + " defines no kappa ladder");
    if (*kappa < 1.0) throw std::invalid_argument("kappa must be >= 1");
    return kappa_realization(sc.net, w, *sc.kappa_ladder, *kappa);
  }
  return UncertaintyRealization(sc.net, w);
}

MpcCase run_mpc_case(const Scenario& sc, const StudyContext& ctx, const UncertaintyRealization& actual,
                     double optimal_tts, std::size_t horizon_steps, std::size_t interval, bool naive,
                     const SolverBackend& backend, const SolverOptions& options) {
  MpcConfig cfg;
  cfg.horizon = horizon_steps;
  cfg.interval = interval;
  cfg.terminal = naive ? TerminalMode::None : TerminalMode::TerminalConstraint;
  MpcCase out;
  out.horizon_steps = horizon_steps;
  out.naive = naive;
  out.run = run_mpc(sc.net, ctx.space, sc.rho0, ctx.model, cfg, backend, actual, ctx.robust, options);
  out.optimal_tts = optimal_tts;
  out.suboptimality_percent = 100.0 * (out.run.trajectory.tts - optimal_tts) / optimal_tts;
  out.trace_non_increasing = trace_non_increasing(predicted_cost_trace(out.run), ctx.robust.c_star);
  return out;
}

namespace {

void run_mpc_study(const Scenario& sc, const StudyContext& ctx, const SolverBackend& backend,
                   const ScenarioOptions& opt, ScenarioReport& rep) {
  const auto& st = *sc.mpc;
  const double dt = sc.net.dt();
  auto steps_of = [&](const std::string& text) { return text.empty() ? 0 : io::duration_to_steps(text, dt); };
  // kind: 0 demand ladder (case = index), 1 kappa ladder (case = kappa)
  Table table{{"kind", "case", "horizon_minutes", "naive", "mpc_tts", "optimal_tts", "suboptimality_percent",
               "exceeds_c_star", "trace_non_increasing"},
              {}};
  double worst_ladder = 0.0;
  double worst_kappa = 0.0;
  bool bounded = true;
  bool traces = true;
  auto run_one = [&](double kind, double label, const UncertaintyRealization& actual, double optimal,
                     std::size_t horizon, bool naive) {
    const auto mc = run_mpc_case(sc, ctx, actual, optimal, horizon, st.interval, naive, backend, opt.solver);
    table.rows.push_back({kind, label, static_cast<double>(horizon) * dt * 60.0, naive ? 1.0 : 0.0,
                          mc.run.trajectory.tts, optimal, mc.suboptimality_percent,
                          mc.run.exceeds_reference ? 1.0 : 0.0, mc.trace_non_increasing ? 1.0 : 0.0});
    return mc;
  };

  std::vector<std::pair<std::size_t, double>> ladder_optima;
  for (auto i : st.ladder_indices) {
    const auto real = study_realization(sc, ctx, i, std::nullopt);
    ladder_optima.emplace_back(i, solve_at(sc.net, sc.rho0, real, sc.steps, backend, opt.solver).objective);
  }
  std::vector<std::pair<double, double>> kappa_optima;
  for (double k : st.kappa_values) {
    const auto real = study_realization(sc, ctx, std::nullopt, k);
    kappa_optima.emplace_back(k, solve_at(sc.net, sc.rho0, real, sc.steps, backend, opt.solver).objective);
  }

  for (const auto& h : st.horizons) {
    const auto horizon = steps_of(h);
    for (const auto& [i, optimal] : ladder_optima) {
      const auto mc = run_one(0.0, static_cast<double>(i), study_realization(sc, ctx, i, std::nullopt), optimal,
                              horizon, false);
      bounded = bounded && !mc.run.exceeds_reference;
      traces = traces && mc.trace_non_increasing;
      if (horizon >= steps_of(st.ladder_min_horizon)) worst_ladder = std::max(worst_ladder, mc.suboptimality_percent);
    }
    for (const auto& [k, optimal] : kappa_optima) {
      const auto mc = run_one(1.0, k, study_realization(sc, ctx, std::nullopt, k), optimal, horizon, false);
      bounded = bounded && !mc.run.exceeds_reference;
      traces = traces && mc.trace_non_increasing;
      if (horizon >= steps_of(st.kappa_min_horizon)) worst_kappa = std::max(worst_kappa, mc.suboptimality_percent);
    }
  }
  if (!ladder_optima.empty()) rep.values["mpc_max_suboptimality:ladder"] = worst_ladder;
  if (!kappa_optima.empty()) rep.values["mpc_max_suboptimality:kappa"] = worst_kappa;
  rep.checks.push_back({"terminal-constrained MPC TTS at or below the worst-case cost", bounded, ""});
  rep.checks.push_back({"MPC predicted cost non-increasing", traces, ""});

  if (!st.naive_horizon.empty()) {
    // At the worst case, where the optimum is C* itself.
    const auto real = study_realization(sc, ctx, std::nullopt, std::nullopt);
    const auto mc = run_one(0.0, 1.0, real, ctx.robust.c_star, steps_of(st.naive_horizon), true);
    rep.values["naive_mpc_tts"] = mc.run.trajectory.tts;
    rep.values["naive_mpc_suboptimality"] = mc.suboptimality_percent;
    // Flagged, never asserted: without terminal rows there is no cost guarantee.
    rep.details["naive_mpc"] = {{"horizon", st.naive_horizon},
                                {"exceeds_c_star", mc.run.exceeds_reference},
                                {"guarantee_asserted", mc.run.guarantee_asserted}};
  }
  rep.tables["suboptimality_vs_horizon"] = std::move(table);
}

}  // namespace

ScenarioReport run_scenario(const Scenario& sc, const SolverBackend& backend, const ScenarioOptions& options) {
  ScenarioReport rep;
  rep.scenario = sc.name;
  switch (sc.experiment) {
    case Experiment::DemandIncrease: run_demand_increase(sc, backend, options, rep); break;
    case Experiment::SpeedLimit: run_speed_limit(sc, rep); break;
    case Experiment::NetworkStudy: run_network_study(sc, backend, options, rep); break;
  }
  grade_targets(rep, sc.targets);
  return rep;
}

}  // namespace fnc
