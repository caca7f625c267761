#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fnc/io.hpp"
#include "fnc/lp.hpp"
#include "fnc/network.hpp"
#include "fnc/realization.hpp"
#include "fnc/robust.hpp"
#include "fnc/tctm.hpp"

namespace fnc {

/// External demand over time, in cars/h, with time in minutes.
struct Profile {
  enum class Kind { Steps, Linear };
  Kind kind = Kind::Steps;
  /// (minute, value) pairs, increasing in the minute. Steps: the value holds
  /// from its minute until the next point. Linear: interpolated, held
  /// constant outside the range.
  std::vector<std::pair<double, double>> points;

  double at(double minutes) const;
};

enum class Experiment { DemandIncrease, SpeedLimit, NetworkStudy };
enum class TtsBasis { Total, PerLane };

/// A reference value to compare against. `contingent` marks values that
/// depend on reconstructed layout data.
struct Target {
  std::string id;
  std::string label;
  double value = 0.0;
  double tolerance = 0.05;
  bool absolute = false;  ///< tolerance in the unit of the value instead of relative
  bool contingent = false;
  bool bound = false;  ///< pass when the value is at most `value`
};

struct Variant {
  std::string name;
  /// Per-cell key overrides applied to the network document before parsing.
  io::json cell_overrides = io::json::object();
  /// Demand profiles replacing the base ones, keyed by cell name.
  std::map<std::string, Profile> demand;
};

/// Ordered external demand profiles w(1) >= ... >= w(K), w(1) = w_upper,
/// expressed as scale factors of the worst case.
struct DemandLadder {
  std::vector<double> scales;
};

/// Capacity scaling of a set of cells: d = min{v rho, kappa C},
/// s = min{kappa C, (kappa rho_jam - rho) w}.
struct KappaLadder {
  std::vector<double> values;
  std::vector<std::size_t> cells;
};

/// Receding-horizon runs: every horizon against every listed ladder rung and
/// kappa value, plus one naive run at the second ladder rung.
struct MpcStudy {
  std::vector<std::string> horizons;  ///< durations like "5min"
  std::size_t interval = 1;
  std::string naive_horizon{};  ///< empty: no naive run
  std::vector<std::size_t> ladder_indices{};  ///< 1-based
  std::vector<double> kappa_values{};
  /// Shortest horizons counted in the suboptimality summary values.
  std::string ladder_min_horizon{};
  std::string kappa_min_horizon{};
};

struct Monitor {
  std::size_t cell = 0;
  double critical_density = 0.0;  ///< cars/km over all lanes
};

struct Scenario {
  std::string name{};
  std::string description{};
  std::filesystem::path network_path{};
  io::json network_doc{};
  NetworkModel net;
  Vec rho0{};
  std::size_t steps = 0;
  std::map<std::string, Profile> demand{};
  std::vector<Variant> variants{};
  Experiment experiment = Experiment::NetworkStudy;
  TtsBasis basis = TtsBasis::Total;
  std::vector<Target> targets{};
  std::optional<DemandLadder> demand_ladder{};
  std::optional<KappaLadder> kappa_ladder{};
  std::optional<MpcStudy> mpc{};
  std::optional<Monitor> monitor{};
};

/// Directory searched by load_scenario: $FNC_SCENARIO_DIR if set, otherwise
/// the scenarios/ directory of the source tree.
std::filesystem::path scenario_directory();
std::vector<std::string> list_scenarios(const std::filesystem::path& dir = scenario_directory());

/// Loads `<dir>/<name>.json`; throws io::FormatError for unknown names.
Scenario load_scenario(const std::string& name, const std::filesystem::path& dir = scenario_directory());
Scenario parse_scenario(const io::json& doc, const std::filesystem::path& base_dir);

/// External demand matrix (n x T) from profiles sampled at t * dt.
Mat demand_matrix(const NetworkModel& net, const std::map<std::string, Profile>& profiles, std::size_t steps);

NetworkModel variant_network(const Scenario& sc, const Variant& v);
Mat variant_demand(const Scenario& sc, const NetworkModel& net, const Variant& v);

/// Same cells and routing with all merges (including onramps) under the
/// proportional-priority rule; the open-loop comparison network.
NetworkModel uncontrolled_network(const NetworkModel& net);

/// Triangular diagram of `fd` with capacity and jam density scaled by kappa.
FundamentalDiagram kappa_scaled(const FundamentalDiagram& fd, double kappa);
UncertaintyRealization kappa_realization(const NetworkModel& net, const Mat& w, const KappaLadder& ladder,
                                         double kappa);
/// Demand ladder realization k (0-based): w = scales[k] * w_upper.
Mat ladder_demand(const Mat& w_upper, const DemandLadder& ladder, std::size_t k);

/// TTS on the chosen basis; PerLane divides each cell's density by its lanes.
double tts_on_basis(const NetworkModel& net, const Trajectory& tr, TtsBasis basis);

enum class TargetStatus { Pass, SoftPass, Fail };
std::string to_string(TargetStatus s);

struct TargetOutcome {
  Target target;
  double value = 0.0;
  TargetStatus status = TargetStatus::Fail;
};

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct ScenarioReport {
  std::string scenario;
  std::map<std::string, double> values;
  std::vector<TargetOutcome> targets;
  std::vector<Check> checks;
  std::map<std::string, Table> tables;
  io::json details = io::json::object();
  /// Wall-clock timings; not part of to_json() so reports stay byte-identical.
  io::json timings = io::json::object();

  bool checks_pass() const;
  io::json to_json() const;
  /// report.json plus one CSV per table.
  void write(const std::filesystem::path& dir) const;
};

/// Target statuses: Pass within tolerance; SoftPass when a contingent target
/// misses but every qualitative check passes; Fail otherwise.
void grade_targets(ScenarioReport& report, const std::vector<Target>& targets);

struct ScenarioOptions {
  bool run_ladders = true;
  bool run_mpc = false;
  SolverOptions solver;
};

/// Runs the configured experiment and grades its targets.
ScenarioReport run_scenario(const Scenario& sc, const SolverBackend& backend, const ScenarioOptions& options = {});

/// Optimal TTS at one realization (LP optimum of the relaxed program).
LpSolution solve_at(const NetworkModel& net, const Vec& rho0, const UncertaintyRealization& real, std::size_t steps,
                    const SolverBackend& backend, const SolverOptions& options = {});

void write_table_csv(std::ostream& os, const Table& table);

/// Worst-case data shared by all runs on a network study: demand bound,
/// uncertainty model, backlog transform and robust solution.
struct StudyContext {
  StudyContext(const Scenario& sc, const SolverBackend& backend, const SolverOptions& options = {});

  Mat w_upper;
  UncertaintyModel model;
  TctmSpace space;
  RobustSolution robust;
};

/// Realization for a demand-ladder index (1-based) and/or a kappa value;
/// neither gives the worst case.
UncertaintyRealization study_realization(const Scenario& sc, const StudyContext& ctx,
                                         std::optional<std::size_t> ladder_index, std::optional<double> kappa);

struct MpcCase {
  std::size_t horizon_steps = 0;
  bool naive = false;
  MpcRun run;
  double optimal_tts = 0.0;
  /// 100 (TTS_mpc - TTS_opt) / TTS_opt
  double suboptimality_percent = 0.0;
  bool trace_non_increasing = true;
};

MpcCase run_mpc_case(const Scenario& sc, const StudyContext& ctx, const UncertaintyRealization& actual,
                     double optimal_tts, std::size_t horizon_steps, std::size_t interval, bool naive,
                     const SolverBackend& backend, const SolverOptions& options = {});

}  // namespace fnc
