#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fnc/pwa.hpp"

namespace fnc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Dense index of a cell (edge of the network graph).
enum class CellId : std::uint32_t {};

constexpr std::size_t idx(CellId c) { return static_cast<std::size_t>(c); }
constexpr CellId cell_id(std::size_t i) { return static_cast<CellId>(i); }

/// Parameters of a discontinuous capacity drop applied on top of a demand
/// function. Cells carrying one are valid for simulation but not for the LP.
struct CapacityDrop {
  double critical_density = 0.0;
  double drop_fraction = 0.0;
};

/// Demand/supply pair of one cell. Densities are cars/km over all lanes,
/// flows cars/h.
struct FundamentalDiagram {
  ConcavePwa demand;
  ConcavePwa supply;  ///< unbounded for infinite-capacity (source) cells
  std::optional<CapacityDrop> capacity_drop;

  /// Largest absolute slope over both functions (1/h).
  double gamma() const { return std::max(demand.max_abs_slope(), supply.max_abs_slope()); }
  /// Root of the supply function; nullopt for unbounded supply.
  std::optional<double> jam_density() const;
  /// The demand as a flow function, including the capacity drop if present.
  FlowFunction demand_function() const;

  /// Lane-scaled triangular diagram: d = min{v rho, F lanes},
  /// s = min{F lanes, (jam lanes - rho) w}.
  static FundamentalDiagram triangular(double free_speed, double wave_speed, double lane_capacity,
                                       double lane_jam_density, int lanes);
  /// Triangular demand with unbounded supply, for source cells.
  static FundamentalDiagram source(double free_speed, double lane_capacity, int lanes);
};

double eval_demand(const FundamentalDiagram& fd, double rho);
/// Supply floored at zero above the jam density; +inf for unbounded supply.
double eval_supply(const FundamentalDiagram& fd, double rho);

enum class CellKind { Source, Internal };

struct Cell {
  std::string name;
  double length_km = 0.0;
  int lanes = 1;
  FundamentalDiagram fd;
};

/// Turning ratio beta from `from` into `to`; R(to, from) = beta.
struct Link {
  CellId from{};
  CellId to{};
  double beta = 1.0;
};

/// Onramp merge where only the onramp flow is metered and the mainline takes
/// the residual downstream supply.
struct AsymmetricJunction {
  CellId onramp{};
  CellId mainline{};
  CellId downstream{};
};

enum class MergeRule { Controlled, ProportionalPriority, DaganzoPriority };

struct MergeModel {
  MergeRule rule = MergeRule::Controlled;
  /// Daganzo priorities keyed by the downstream cell of a merge, ordered like
  /// `NetworkModel::predecessors(downstream)`. Missing entries mean equal shares.
  std::map<std::size_t, std::vector<double>> priorities;
};

/// Directed cell graph with routing matrix and per-cell fundamental diagrams.
/// Immutable after construction. Structural assumptions are not enforced here;
/// see `validate()`.
class NetworkModel {
 public:
  NetworkModel(std::vector<Cell> cells, std::vector<Link> links, double dt_hours,
               std::vector<AsymmetricJunction> asymmetric = {}, MergeModel merge = {},
               std::map<std::size_t, double> ramp_caps = {});

  std::size_t size() const { return cells_.size(); }
  const Cell& cell(std::size_t i) const { return cells_.at(i); }
  const std::vector<Cell>& cells() const { return cells_; }
  const std::vector<Link>& links() const { return links_; }
  double dt() const { return dt_; }
  const Mat& routing() const { return routing_; }
  const Vec& lengths() const { return lengths_; }
  const MergeModel& merge_model() const { return merge_; }
  const std::vector<AsymmetricJunction>& asymmetric_junctions() const { return asymmetric_; }

  const std::vector<std::size_t>& successors(std::size_t i) const { return succ_.at(i); }
  const std::vector<std::size_t>& predecessors(std::size_t i) const { return pred_.at(i); }
  double beta(std::size_t to, std::size_t from) const { return routing_(static_cast<Eigen::Index>(to), static_cast<Eigen::Index>(from)); }

  CellKind kind(std::size_t i) const { return pred_.at(i).empty() ? CellKind::Source : CellKind::Internal; }
  bool is_source(std::size_t i) const { return kind(i) == CellKind::Source; }
  /// Downstream cells of merging junctions (in-degree of the tail vertex > 1).
  const std::vector<std::size_t>& merge_cells() const { return merge_cells_; }
  bool is_merge_cell(std::size_t j) const { return pred_.at(j).size() > 1; }

  /// Controlled flows: inflows to controlled merges plus asymmetric onramps.
  const std::vector<std::size_t>& controlled() const { return controlled_; }
  bool is_controlled(std::size_t i) const { return controlled_mask_.at(i); }

  const AsymmetricJunction* asymmetric_by_mainline(std::size_t i) const;
  const AsymmetricJunction* asymmetric_by_downstream(std::size_t j) const;

  std::optional<double> ramp_cap(std::size_t i) const;
  const std::map<std::size_t, double>& ramp_caps() const { return ramp_caps_; }

  /// Network-wide Lipschitz bound: max slope over all demand/supply pieces.
  double gamma() const;
  /// 1 - sum_i beta(i, e): fraction of the flow out of e leaving the network.
  double exit_fraction(std::size_t e) const;

  NetworkModel with_merge_model(MergeModel merge) const;
  NetworkModel with_dt(double dt_hours) const;

 private:
  std::vector<Cell> cells_;
  std::vector<Link> links_;
  double dt_;
  std::vector<AsymmetricJunction> asymmetric_;
  MergeModel merge_;
  std::map<std::size_t, double> ramp_caps_;

  Mat routing_;
  Vec lengths_;
  std::vector<std::vector<std::size_t>> succ_;
  std::vector<std::vector<std::size_t>> pred_;
  std::vector<std::size_t> merge_cells_;
  std::vector<std::size_t> controlled_;
  std::vector<bool> controlled_mask_;
};

}  // namespace fnc
