#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fnc/ctm.hpp"
#include "fnc/network.hpp"
#include "fnc/realization.hpp"
#include "fnc/tctm.hpp"

namespace fnc {

inline constexpr double kLpInf = std::numeric_limits<double>::infinity();

struct LpEntry {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Solver-neutral linear program: minimize c^T x + offset subject to
/// row_lower <= A x <= row_upper and col_lower <= x <= col_upper.
struct LpProblem {
  std::vector<double> cost;
  std::vector<double> col_lower;
  std::vector<double> col_upper;
  std::vector<std::string> col_names;
  std::vector<double> row_lower;
  std::vector<double> row_upper;
  std::vector<std::string> row_names;
  std::vector<LpEntry> entries;
  double offset = 0.0;

  std::size_t num_cols() const { return cost.size(); }
  std::size_t num_rows() const { return row_lower.size(); }

  std::size_t add_col(std::string name, double c, double lo, double hi);
  std::size_t add_row(std::string name, double lo, double hi);
  void add_entry(std::size_t row, std::size_t col, double value);
};

enum class LpStatus { Optimal, Infeasible, Unbounded, Limit, Error };

std::string to_string(LpStatus s);

struct LpSolution {
  LpStatus status = LpStatus::Error;
  std::string message;
  double objective = 0.0;
  std::vector<double> x;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t nonzeros = 0;
  double wall_seconds = 0.0;
  /// Largest row or bound violation, scaled by 1 + |bound|.
  double max_residual = 0.0;

  bool optimal() const { return status == LpStatus::Optimal; }
};

struct SolverOptions {
  double feasibility_tolerance = 1e-7;
  double optimality_tolerance = 1e-7;
  double time_limit_seconds = kLpInf;
  std::uint64_t seed = 0;
};

class SolverBackend {
 public:
  virtual ~SolverBackend() = default;
  virtual std::string name() const = 0;
  virtual std::string version() const = 0;
  virtual LpSolution solve(const LpProblem& problem, const SolverOptions& options) const = 0;
  /// Writes the problem in the CPLEX LP text format.
  virtual void write_lp(const LpProblem& problem, const std::string& path) const = 0;
};

class HighsBackend final : public SolverBackend {
 public:
  std::string name() const override { return "highs"; }
  std::string version() const override;
  LpSolution solve(const LpProblem& problem, const SolverOptions& options) const override;
  void write_lp(const LpProblem& problem, const std::string& path) const override;
};

/// Solves and checks the returned point against every row and bound. An
/// "optimal" answer whose scaled residual exceeds `residual_tolerance` is
/// downgraded to Error.
LpSolution solve(const LpProblem& problem, const SolverBackend& backend, const SolverOptions& options = {},
                 double residual_tolerance = 1e-6);

/// Column layout of the FNC program: rho_e(t) and phi_e(t) for t = 0..T.
struct FncLayout {
  std::size_t cells = 0;
  std::size_t steps = 0;

  std::size_t rho(std::size_t e, std::size_t t) const { return t * cells + e; }
  std::size_t phi(std::size_t e, std::size_t t) const { return (steps + 1) * cells + t * cells + e; }
  std::size_t num_cols() const { return 2 * cells * (steps + 1); }
};

/// Upper bound on the backlog P L rho(step) at one step of the horizon.
struct TerminalBound {
  std::size_t step = 0;
  Vec backlog;
};

struct FncProgram {
  LpProblem problem;
  FncLayout layout;
};

/// Relaxed FNC program at a realization: conservation equalities, one demand
/// row per affine piece for every cell, one supply row per piece for cells
/// with predecessors and bounded supply, ramp caps as bounds on l_e rho_e, and
/// optional terminal rows. Throws std::invalid_argument naming the cell if a
/// demand or supply function is not concave piecewise-affine.
FncProgram build_relaxed_fnc(const NetworkModel& net, const Vec& rho0, const UncertaintyRealization& real,
                             std::size_t steps, const std::optional<TerminalBound>& terminal = std::nullopt,
                             const TctmSpace* space = nullptr);

/// Densities (n x (T+1)) and flows (n x T) of an LP point, with TTS.
Trajectory lp_trajectory(const NetworkModel& net, const FncLayout& layout, const LpSolution& sol);

struct Reconstruction {
  Trajectory relaxed;    ///< the LP point itself
  Trajectory simulated;  ///< CTM under the NE policy around the LP point
  double lp_objective = 0.0;
  double gap = 0.0;  ///< simulated TTS - LP objective
  bool tight = false;
};

/// Forward-simulates the CTM at `real` under the NE policy built from the LP
/// solution; tight when the simulated TTS is within 1e-4 (1 + |obj|) of the
/// LP objective.
Reconstruction reconstruct_feasible(const NetworkModel& net, const TctmSpace& space, const FncProgram& program,
                                    const LpSolution& sol, const UncertaintyRealization& real,
                                    double tolerance = 1e-4);

struct OracleResult {
  double best_tts = kLpInf;
  Mat best_requests;  ///< n x T requested flows of the best candidate
  std::size_t candidates = 0;
};

/// Exhaustive search over actuated flows u * d_e(rho_e), u on a uniform grid
/// with `resolution` intervals, for every step t < T. Refuses instances with
/// more than 4 cells, 4 steps or 2 actuated flows.
OracleResult brute_force_oracle(const NetworkModel& net, const Vec& rho0, const UncertaintyRealization& real,
                                std::size_t steps, std::size_t resolution);

/// "variable,value" rows for every column of the problem.
void write_solution_csv(std::ostream& os, const LpProblem& problem, const LpSolution& sol);

}  // namespace fnc
