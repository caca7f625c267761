#include "fnc/network.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace fnc {

std::optional<double> FundamentalDiagram::jam_density() const {
  if (supply.is_unbounded()) return std::nullopt;
  return supply.zero_crossing();
}

FlowFunction FundamentalDiagram::demand_function() const {
  if (capacity_drop) {
    return CapacityDropDemand{demand, capacity_drop->critical_density, capacity_drop->drop_fraction};
  }
  return demand;
}

FundamentalDiagram FundamentalDiagram::triangular(double free_speed, double wave_speed,
                                                  double lane_capacity, double lane_jam_density,
                                                  int lanes) {
  const double cap = lane_capacity * lanes;
  return {ConcavePwa::triangular_demand(free_speed, cap),
          ConcavePwa::triangular_supply(cap, lane_jam_density * lanes, wave_speed),
          std::nullopt};
}

FundamentalDiagram FundamentalDiagram::source(double free_speed, double lane_capacity, int lanes) {
  return {ConcavePwa::triangular_demand(free_speed, lane_capacity * lanes), ConcavePwa::unbounded(),
          std::nullopt};
}

double eval_demand(const FundamentalDiagram& fd, double rho) {
  if (fd.capacity_drop) {
    return CapacityDropDemand{fd.demand, fd.capacity_drop->critical_density,
                              fd.capacity_drop->drop_fraction}(rho);
  }
  return fd.demand(rho);
}

double eval_supply(const FundamentalDiagram& fd, double rho) {
  if (fd.supply.is_unbounded()) return std::numeric_limits<double>::infinity();
  return std::max(0.0, fd.supply(rho));
}

NetworkModel::NetworkModel(std::vector<Cell> cells, std::vector<Link> links, double dt_hours,
                           std::vector<AsymmetricJunction> asymmetric, MergeModel merge,
                           std::map<std::size_t, double> ramp_caps)
    : cells_(std::move(cells)),
      links_(std::move(links)),
      dt_(dt_hours),
      asymmetric_(std::move(asymmetric)),
      merge_(std::move(merge)),
      ramp_caps_(std::move(ramp_caps)) {
  const std::size_t n = cells_.size();
  if (n == 0) throw std::invalid_argument("network has no cells");
  if (!(dt_ > 0.0)) throw std::invalid_argument("sampling time must be positive");

  routing_ = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  lengths_ = Vec::Zero(static_cast<Eigen::Index>(n));
  succ_.assign(n, {});
  pred_.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    if (!(cells_[i].length_km > 0.0)) {
      throw std::invalid_argument("cell " + std::to_string(i) + " has non-positive length");
    }
    lengths_[static_cast<Eigen::Index>(i)] = cells_[i].length_km;
  }
  for (const auto& l : links_) {
    const auto from = idx(l.from);
    const auto to = idx(l.to);
    if (from >= n || to >= n) throw std::invalid_argument("link refers to unknown cell");
    auto& entry = routing_(static_cast<Eigen::Index>(to), static_cast<Eigen::Index>(from));
    if (entry != 0.0) {
      throw std::invalid_argument("duplicate link " + std::to_string(from) + " -> " + std::to_string(to));
    }
    entry = l.beta;
    succ_[from].push_back(to);
    pred_[to].push_back(from);
  }
  for (auto& s : succ_) std::sort(s.begin(), s.end());
  for (auto& p : pred_) std::sort(p.begin(), p.end());

  for (const auto& j : asymmetric_) {
    if (idx(j.onramp) >= n || idx(j.mainline) >= n || idx(j.downstream) >= n) {
      throw std::invalid_argument("asymmetric junction refers to unknown cell");
    }
  }
  for (const auto& [c, cap] : ramp_caps_) {
    if (c >= n) throw std::invalid_argument("ramp cap refers to unknown cell");
  }

  controlled_mask_.assign(n, false);
  for (std::size_t j = 0; j < n; ++j) {
    if (pred_[j].size() < 2) continue;
    merge_cells_.push_back(j);
    const auto* asym = asymmetric_by_downstream(j);
    for (auto i : pred_[j]) {
      if (asym && idx(asym->mainline) == i) continue;
      controlled_mask_[i] = true;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (controlled_mask_[i]) controlled_.push_back(i);
  }
}

const AsymmetricJunction* NetworkModel::asymmetric_by_mainline(std::size_t i) const {
  for (const auto& j : asymmetric_) {
    if (idx(j.mainline) == i) return &j;
  }
  return nullptr;
}

const AsymmetricJunction* NetworkModel::asymmetric_by_downstream(std::size_t j) const {
  for (const auto& a : asymmetric_) {
    if (idx(a.downstream) == j) return &a;
  }
  return nullptr;
}

std::optional<double> NetworkModel::ramp_cap(std::size_t i) const {
  const auto it = ramp_caps_.find(i);
  if (it == ramp_caps_.end()) return std::nullopt;
  return it->second;
}

double NetworkModel::gamma() const {
  double g = 0.0;
  for (const auto& c : cells_) g = std::max(g, c.fd.gamma());
  return g;
}

double NetworkModel::exit_fraction(std::size_t e) const {
  return 1.0 - routing_.col(static_cast<Eigen::Index>(e)).sum();
}

NetworkModel NetworkModel::with_merge_model(MergeModel merge) const {
  return NetworkModel(cells_, links_, dt_, asymmetric_, std::move(merge), ramp_caps_);
}

NetworkModel NetworkModel::with_dt(double dt_hours) const {
  return NetworkModel(cells_, links_, dt_hours, asymmetric_, merge_, ramp_caps_);
}

}  // namespace fnc
