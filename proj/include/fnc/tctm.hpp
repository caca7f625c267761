#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fnc/ctm.hpp"
#include "fnc/network.hpp"
#include "fnc/realization.hpp"

namespace fnc {

/// Backlog coordinates z = P L rho with P = (I - Rr)^-1, where the reduced
/// routing matrix Rr drops the columns of the controlled flows.
class TctmSpace {
 public:
  explicit TctmSpace(const NetworkModel& net);

  std::size_t size() const { return static_cast<std::size_t>(p_.rows()); }
  const Mat& reduced_routing() const { return reduced_; }
  const Mat& p_matrix() const { return p_; }
  const Vec& lengths() const { return lengths_; }
  /// c = 1^T (I - Rr), so that c^T z = sum_e l_e rho_e.
  const Vec& cost_vector() const { return cost_; }
  /// P (R - Rr): how a controlled flow adds to the backlogs downstream.
  const Mat& controlled_gain() const { return gain_; }

  Vec to_backlog(const Vec& rho) const;
  Vec from_backlog(const Vec& z) const;
  /// Row p_e^T L, mapping densities to the backlog of cell e.
  Vec backlog_row(std::size_t e) const;

 private:
  Mat reduced_;
  Mat p_;
  Vec lengths_;
  Vec cost_;
  Mat gain_;
  Mat i_minus_reduced_;
};

/// Controlled flows max{0, (z_e - v_e)/dt} for actuated cells, NaN elsewhere.
Vec flows_from_inputs(const NetworkModel& net, const Vec& z, const Vec& v);

/// z(t+1) = z - dt phi + dt P (w + (R - Rr) phi).
Vec tctm_step(const TctmSpace& space, const NetworkModel& net, const Vec& z, const Vec& v,
              const UncertaintyRealization& real, std::size_t t);

enum class ConstraintKind { Demand, Supply, Ramp };

struct TctmResiduals {
  Vec values;
  std::vector<ConstraintKind> kinds;
  std::vector<std::size_t> cells;

  double max() const { return values.size() ? values.maxCoeff() : -std::numeric_limits<double>::infinity(); }
  bool feasible(double tol = 1e-9) const { return values.size() == 0 || values.maxCoeff() <= tol; }
};

/// Stacked residuals g(z, v, omega_t): demand rows for actuated cells, supply
/// rows below controlled merges, ramp rows for capped sources. Feasible iff all <= 0.
TctmResiduals tctm_constraints(const TctmSpace& space, const NetworkModel& net, const Vec& z,
                               const Vec& v, const UncertaintyRealization& real, std::size_t t);

/// Affine feedback phi_e = max{0, phi*_e(t) + p_e^T L (rho - rho*(t)) / dt} on
/// the actuated cells, around a reference trajectory. Queries at or beyond
/// the reference horizon throw std::out_of_range.
Policy ne_policy(const TctmSpace& space, const NetworkModel& net, const Trajectory& reference);

/// Open-loop backlog inputs v*_e(t) = p_e^T L rho*(t) - dt phi*_e(t) (n x T,
/// zero on non-actuated rows).
Mat ne_inputs(const TctmSpace& space, const NetworkModel& net, const Trajectory& reference);

struct MonotonicityOptions {
  std::size_t trials = 1000;
  std::uint64_t seed = 1;
  unsigned threads = 0;  ///< 0 = hardware concurrency
  double tolerance = 1e-9;
  /// Upper end of sampled densities on cells without a jam density.
  double source_density_cap = 200.0;
  /// Upper end of sampled worst-case external demand on sources (cars/h).
  double max_external_demand = 6000.0;
};

struct MonotonicityWitness {
  std::size_t trial = 0;
  std::string component;  ///< "f" or "g"
  std::size_t index = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  Vec z;
  Vec z_upper;
  Vec v;
  Vec w;
  Vec w_upper;
};

struct MonotonicityReport {
  std::size_t trials = 0;
  std::size_t violations = 0;
  std::size_t rejected_samples = 0;
  std::optional<MonotonicityWitness> witness;  ///< lowest-index violating trial

  bool pass() const { return violations == 0; }
  std::string to_json() const;
};

/// Samples ordered pairs z <= z' inside the image of the density box, a fixed
/// input v, demands w <= w_upper and realizations d >= d_lower, s >= s_lower,
/// and checks f(z, v, w, d, s) <= f(z', v, w_upper, d_lower, s_lower) and the
/// same ordering for g. The lower bounds are the network's nominal diagrams.
MonotonicityReport check_monotonicity(const TctmSpace& space, const NetworkModel& net,
                                      const MonotonicityOptions& options = {});

}  // namespace fnc
