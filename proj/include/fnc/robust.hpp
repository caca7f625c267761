#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fnc/ctm.hpp"
#include "fnc/lp.hpp"
#include "fnc/network.hpp"
#include "fnc/realization.hpp"
#include "fnc/tctm.hpp"

namespace fnc {

/// Box-like uncertainty set: external demands below w_upper, demand and
/// supply functions pointwise above the given lower bounds and below gamma rho.
struct UncertaintyModel {
  Mat w_upper;  ///< n x T, cars/h
  std::vector<ConcavePwa> d_lower;
  std::vector<ConcavePwa> s_lower;

  /// Lower bounds equal to the network's nominal diagrams.
  static UncertaintyModel nominal(const NetworkModel& net, Mat w_upper);

  std::size_t steps() const { return static_cast<std::size_t>(w_upper.cols()); }
  /// Lipschitz bound shared by all members: max slope of the lower bounds.
  double gamma() const;
  /// Problems with the model itself (empty when usable).
  std::vector<std::string> check(const NetworkModel& net) const;
};

/// The tuple of maximal external demand and minimal demand/supply functions.
UncertaintyRealization worst_case(const NetworkModel& net, const UncertaintyModel& model);

struct MembershipReport {
  bool member = true;
  std::vector<std::string> reasons;
};

/// Checks w <= w_upper, d >= d_lower, d <= gamma rho and s >= s_lower on a
/// density grid over [0, jam density] for every cell and step.
MembershipReport is_member(const NetworkModel& net, const UncertaintyModel& model,
                           const UncertaintyRealization& real, std::size_t grid = 64);

/// Random member: w = w_upper scaled by per-step uniform factors, functions
/// equal to the lower bound plus nonnegative piecewise-linear bumps (demand
/// capped at gamma rho). Demand samples are in general not monotone.
UncertaintyRealization sample_realization(const NetworkModel& net, const UncertaintyModel& model,
                                          std::mt19937_64& rng);

struct RobustSolution {
  FncProgram program;
  LpSolution lp;
  Reconstruction reconstruction;
  /// Worst-case cost C*; equals the LP optimum.
  double c_star = 0.0;
  /// Reference trajectory: the reconstructed CTM trajectory at the worst case.
  Trajectory reference;
  AsymmetricCheck asymmetric;
};

/// Builds and solves the FNC program at the worst case, reconstructs a CTM
/// trajectory and checks the onramp assumption. Throws DomainError if the
/// program is infeasible or the network is not LP-eligible.
RobustSolution solve_robust(const NetworkModel& net, const TctmSpace& space, const Vec& rho0,
                            const UncertaintyModel& model, const SolverBackend& backend,
                            const SolverOptions& options = {});

/// NE feedback around the reference of a robust solution.
Policy robust_policy(const NetworkModel& net, const TctmSpace& space, const RobustSolution& sol);

enum class TerminalMode { TerminalConstraint, None };

struct MpcConfig {
  std::size_t horizon = 0;   ///< T_c in steps
  std::size_t interval = 1;  ///< re-optimization interval k in steps
  TerminalMode terminal = TerminalMode::TerminalConstraint;
  /// Steps at the start of each subproblem that use the actual realization;
  /// defaults to the re-optimization interval.
  std::optional<std::size_t> certainty_window;
  /// Slack added to the terminal bound to absorb solver noise, relative to 1 + |bound|.
  double terminal_slack = 1e-7;
};

struct MpcIteration {
  std::size_t t = 0;
  std::size_t horizon = 0;
  bool terminal_rows = false;
  LpStatus status = LpStatus::Error;
  double objective = 0.0;
  double wall_seconds = 0.0;
  std::size_t clamps = 0;
  /// Realized cost so far + subproblem cost + reference cost after the horizon.
  double predicted_cost = 0.0;
};

struct MpcRun {
  Trajectory trajectory;
  std::vector<MpcIteration> log;
  double reference_cost = 0.0;
  TerminalMode terminal = TerminalMode::TerminalConstraint;
  bool all_feasible = true;
  /// Only terminal-constrained runs carry the cost guarantee.
  bool guarantee_asserted = false;
  bool exceeds_reference = false;
};

/// Receding-horizon control at the worst case, simulated against `actual`.
/// With TerminalConstraint an infeasible subproblem throws DomainError.
MpcRun run_mpc(const NetworkModel& net, const TctmSpace& space, const Vec& rho0, const UncertaintyModel& model,
               const MpcConfig& config, const SolverBackend& backend, const UncertaintyRealization& actual,
               const RobustSolution& reference, const SolverOptions& options = {});

/// Same loop without terminal rows.
MpcRun run_mpc_naive(const NetworkModel& net, const TctmSpace& space, const Vec& rho0,
                     const UncertaintyModel& model, MpcConfig config, const SolverBackend& backend,
                     const UncertaintyRealization& actual, const RobustSolution& reference,
                     const SolverOptions& options = {});

std::vector<double> predicted_cost_trace(const MpcRun& run);

/// True when the trace starts at or below C* and never increases by more
/// than 1e-6 (1 + |value|).
bool trace_non_increasing(const std::vector<double>& trace, double c_star);

/// One JSON object per re-optimization.
void write_mpc_log_jsonl(std::ostream& os, const MpcRun& run);

}  // namespace fnc
