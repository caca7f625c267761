#include "fnc/realization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fnc {

UncertaintyRealization::UncertaintyRealization(const NetworkModel& network, Mat external_demand)
    : w_(std::move(external_demand)) {
  const auto n = network.size();
  if (static_cast<std::size_t>(w_.rows()) != n) {
    throw std::invalid_argument("external demand must have one row per cell");
  }
  for (std::size_t e = 0; e < n; ++e) {
    for (Eigen::Index t = 0; t < w_.cols(); ++t) {
      const double v = w_(static_cast<Eigen::Index>(e), t);
      if (!std::isfinite(v) || v < 0.0) {
        throw std::invalid_argument("external demand must be finite and nonnegative");
      }
      if (v != 0.0 && !network.is_source(e)) {
        throw std::invalid_argument("external demand on non-source cell " + std::to_string(e));
      }
    }
  }
  demand_.assign(n, {});
  supply_.assign(n, {});
}

double UncertaintyRealization::w(std::size_t e, std::size_t t) const {
  if (t >= steps()) return 0.0;
  return w_(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(t));
}

Vec UncertaintyRealization::w_at(std::size_t t) const {
  if (t >= steps()) return Vec::Zero(w_.rows());
  return w_.col(static_cast<Eigen::Index>(t));
}

void UncertaintyRealization::set_demand(std::size_t e, FlowFunction f) { demand_.at(e) = {std::move(f)}; }
void UncertaintyRealization::set_supply(std::size_t e, FlowFunction f) { supply_.at(e) = {std::move(f)}; }
void UncertaintyRealization::set_demand_sequence(std::size_t e, std::vector<FlowFunction> fs) {
  demand_.at(e) = std::move(fs);
}
void UncertaintyRealization::set_supply_sequence(std::size_t e, std::vector<FlowFunction> fs) {
  supply_.at(e) = std::move(fs);
}

const FlowFunction* UncertaintyRealization::pick(const std::vector<FlowFunction>& fs, std::size_t t) {
  if (fs.empty()) return nullptr;
  return &fs[std::min(t, fs.size() - 1)];
}

double UncertaintyRealization::demand(const NetworkModel& net, std::size_t e, std::size_t t, double rho) const {
  const auto* f = pick(demand_[e], t);
  const double v = f ? (*f)(rho) : eval_demand(net.cell(e).fd, rho);
  return std::max(0.0, v);
}

double UncertaintyRealization::supply(const NetworkModel& net, std::size_t e, std::size_t t, double rho) const {
  const auto* f = pick(supply_[e], t);
  if (!f) return eval_supply(net.cell(e).fd, rho);
  const double v = (*f)(rho);
  return std::isinf(v) ? v : std::max(0.0, v);
}

const ConcavePwa* UncertaintyRealization::demand_pwa(const NetworkModel& net, std::size_t e, std::size_t t) const {
  if (const auto* f = pick(demand_[e], t)) return f->as_concave();
  const auto& fd = net.cell(e).fd;
  return fd.capacity_drop ? nullptr : &fd.demand;
}

const ConcavePwa* UncertaintyRealization::supply_pwa(const NetworkModel& net, std::size_t e, std::size_t t) const {
  if (const auto* f = pick(supply_[e], t)) return f->as_concave();
  return &net.cell(e).fd.supply;
}

UncertaintyRealization UncertaintyRealization::window(std::size_t from, std::size_t count) const {
  UncertaintyRealization out;
  out.w_ = Mat::Zero(w_.rows(), static_cast<Eigen::Index>(count));
  for (std::size_t k = 0; k < count; ++k) {
    if (from + k < steps()) out.w_.col(static_cast<Eigen::Index>(k)) = w_.col(static_cast<Eigen::Index>(from + k));
  }
  auto shift = [from](const std::vector<FlowFunction>& fs) {
    if (fs.size() <= 1) return fs;
    std::vector<FlowFunction> r;
    for (std::size_t k = std::min(from, fs.size() - 1); k < fs.size(); ++k) r.push_back(fs[k]);
    return r;
  };
  for (const auto& fs : demand_) out.demand_.push_back(shift(fs));
  for (const auto& fs : supply_) out.supply_.push_back(shift(fs));
  return out;
}

}  // namespace fnc
