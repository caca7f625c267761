#pragma once

#include <vector>

#include "fnc/network.hpp"

namespace fnc {

/// One uncertainty realization: external demands w_e(t) plus optional
/// per-cell (and optionally per-step) demand and supply functions. Cells
/// without an override use the network's nominal diagram.
class UncertaintyRealization {
 public:
  /// `external_demand` is n x T in cars/h; steps at or beyond T read as zero.
  UncertaintyRealization(const NetworkModel& network, Mat external_demand);

  std::size_t cells() const { return static_cast<std::size_t>(w_.rows()); }
  std::size_t steps() const { return static_cast<std::size_t>(w_.cols()); }
  const Mat& external_demand() const { return w_; }

  double w(std::size_t e, std::size_t t) const;
  Vec w_at(std::size_t t) const;

  /// Time-invariant override for one cell.
  void set_demand(std::size_t e, FlowFunction f);
  void set_supply(std::size_t e, FlowFunction f);
  /// Per-step overrides; the last entry is reused past the end of the list.
  void set_demand_sequence(std::size_t e, std::vector<FlowFunction> fs);
  void set_supply_sequence(std::size_t e, std::vector<FlowFunction> fs);

  bool has_demand_override(std::size_t e) const { return !demand_.at(e).empty(); }
  bool has_supply_override(std::size_t e) const { return !supply_.at(e).empty(); }

  /// Demand at (e, t), floored at zero.
  double demand(const NetworkModel& net, std::size_t e, std::size_t t, double rho) const;
  /// Supply at (e, t), floored at zero; +inf for unbounded functions.
  double supply(const NetworkModel& net, std::size_t e, std::size_t t, double rho) const;

  /// Concave PWA demand at (e, t) or nullptr if the function is not LP-usable
  /// (capacity drop or a sampled non-concave member).
  const ConcavePwa* demand_pwa(const NetworkModel& net, std::size_t e, std::size_t t) const;
  const ConcavePwa* supply_pwa(const NetworkModel& net, std::size_t e, std::size_t t) const;

  /// Copy restricted to steps [from, from + count), with the same function
  /// overrides shifted accordingly.
  UncertaintyRealization window(std::size_t from, std::size_t count) const;

 private:
  UncertaintyRealization() = default;
  static const FlowFunction* pick(const std::vector<FlowFunction>& fs, std::size_t t);

  Mat w_;
  std::vector<std::vector<FlowFunction>> demand_;
  std::vector<std::vector<FlowFunction>> supply_;
};

}  // namespace fnc
