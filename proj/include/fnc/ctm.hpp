#pragma once

#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "fnc/network.hpp"
#include "fnc/realization.hpp"

namespace fnc {

enum class EventKind {
  DemandClamp,          ///< requested controlled flow outside [0, d]
  SupplyScale,          ///< controlled merge flows scaled to fit the downstream supply
  AsymmetricViolation,  ///< onramp flow above downstream supply
  MainlineFloor,        ///< asymmetric mainline residual supply negative
};

struct SimEvent {
  EventKind kind;
  std::size_t step;
  std::size_t cell;
  double excess;
};

/// Requested flows (length n, only actuated entries are read) as a function
/// of step and current densities.
using Policy = std::function<Vec(std::size_t t, const Vec& rho)>;

/// Source of requested flows for the actuated cells: controlled merge inputs
/// under the controlled merge rule, and asymmetric onramps under any rule.
class ControlInput {
 public:
  /// Requests +inf everywhere; clamping turns this into "serve demand, then
  /// scale proportionally to the downstream supply".
  static ControlInput greedy();
  /// Fixed n x T sequence of requested flows.
  static ControlInput sequence(Mat flows);
  static ControlInput policy(Policy p);

  Vec request(std::size_t t, const Vec& rho) const;

 private:
  struct Greedy {};
  std::variant<Greedy, Mat, Policy> src_;
};

/// True when the flow of cell i is chosen by the controller rather than by a
/// junction rule.
bool is_actuated(const NetworkModel& net, std::size_t i);

enum class ClampMode {
  Clamp,  ///< clamp actuated requests into the feasible set and log events
  Raw,    ///< take actuated requests verbatim (TCTM semantics)
};

/// Flows phi(t) for densities rho at step t.
Vec compute_flows(const NetworkModel& net, const Vec& rho, const Vec& requested,
                  const UncertaintyRealization& real, std::size_t t,
                  std::vector<SimEvent>* events = nullptr, ClampMode mode = ClampMode::Clamp);

struct StepResult {
  Vec next;
  Vec flows;
};

/// One step of the conservation law. Throws std::logic_error if a density
/// drops below -1e-9; smaller negative values are set to zero.
StepResult step(const NetworkModel& net, const Vec& rho, const Vec& requested,
                const UncertaintyRealization& real, std::size_t t,
                std::vector<SimEvent>* events = nullptr);

/// rho + dt/l * (R phi - phi + w) without any checks.
Vec conservation_update(const NetworkModel& net, const Vec& rho, const Vec& flows, const Vec& w);

struct Trajectory {
  double dt = 0.0;
  Vec lengths;
  Mat rho;  ///< n x (T+1), cars/km
  Mat phi;  ///< n x T, cars/h
  std::vector<SimEvent> events;
  double tts = 0.0;  ///< hours

  std::size_t cells() const { return static_cast<std::size_t>(rho.rows()); }
  std::size_t horizon() const { return rho.cols() > 0 ? static_cast<std::size_t>(rho.cols() - 1) : 0; }
  /// DemandClamp and SupplyScale events.
  std::size_t clamp_count() const;
  std::size_t count(EventKind kind) const;
};

/// dt * sum_t sum_e l_e rho_e(t) over all stored columns.
double total_time_spent(const Mat& rho, const Vec& lengths, double dt);

/// Simulates T steps from rho0.
Trajectory simulate(const NetworkModel& net, const Vec& rho0, const ControlInput& control,
                    const UncertaintyRealization& real, std::size_t steps);

/// Demand-proportional merge on effective (turning-ratio weighted) demands:
/// each flow is d_i * min{1, s / sum d}.
std::vector<double> merge_proportional(std::span<const double> demands, double supply);

/// Priority merge with redistribution of unused priority shares.
std::vector<double> merge_daganzo(std::span<const double> demands, double supply,
                                  std::span<const double> priorities);

struct MainlineFlow {
  double flow = 0.0;
  bool violation = false;
};

/// min{d_mainline, s_downstream - phi_onramp}, floored at zero.
MainlineFlow asymmetric_mainline_flow(double d_mainline, double s_downstream, double phi_onramp);

struct AsymmetricCheckEntry {
  std::size_t step;
  std::size_t onramp;
  double onramp_demand;
  double downstream_supply;
};

struct AsymmetricCheck {
  bool pass = true;
  std::size_t checks = 0;
  std::vector<AsymmetricCheckEntry> failures;
};

/// A posteriori check of d_onramp(rho) <= s_downstream(rho) along a trajectory.
AsymmetricCheck verify_asymmetric_assumption(const Trajectory& traj, const NetworkModel& net,
                                             const UncertaintyRealization& real);

}  // namespace fnc
