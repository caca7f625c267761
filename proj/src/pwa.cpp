#include "fnc/pwa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fnc {

ConcavePwa::ConcavePwa(std::vector<AffinePiece> pieces) : pieces_(std::move(pieces)) {
  for (const auto& p : pieces_) {
    if (!std::isfinite(p.slope) || !std::isfinite(p.intercept)) {
      throw std::invalid_argument("affine piece coefficients must be finite");
    }
  }
}

ConcavePwa ConcavePwa::triangular_demand(double free_speed, double capacity) {
  return ConcavePwa({{free_speed, 0.0}, {0.0, capacity}});
}

ConcavePwa ConcavePwa::triangular_supply(double capacity, double jam_density, double wave_speed) {
  return ConcavePwa({{0.0, capacity}, {-wave_speed, wave_speed * jam_density}});
}

double ConcavePwa::operator()(double rho) const {
  double v = std::numeric_limits<double>::infinity();
  for (const auto& p : pieces_) v = std::min(v, p(rho));
  return v;
}

double ConcavePwa::max_abs_slope() const {
  double g = 0.0;
  for (const auto& p : pieces_) g = std::max(g, std::abs(p.slope));
  return g;
}

std::optional<double> ConcavePwa::zero_crossing() const {
  std::optional<double> best;
  for (const auto& p : pieces_) {
    if (p.slope < 0.0) {
      const double root = -p.intercept / p.slope;
      if (!best || root < *best) best = root;
    }
  }
  return best;
}

std::optional<double> ConcavePwa::supremum() const {
  if (pieces_.empty()) return std::nullopt;
  std::optional<double> sup;
  for (const auto& p : pieces_) {
    if (p.slope < 0.0) return std::nullopt;  // decreasing tail, no finite limit from above
    if (p.slope == 0.0) sup = sup ? std::min(*sup, p.intercept) : p.intercept;
  }
  return sup;
}

PiecewiseLinear::PiecewiseLinear(std::vector<double> xs, std::vector<double> ys)
    : xs_(std::move(xs)), ys_(std::move(ys)) {
  if (xs_.size() != ys_.size() || xs_.empty()) {
    throw std::invalid_argument("piecewise-linear breakpoints must be non-empty and paired");
  }
  if (!std::is_sorted(xs_.begin(), xs_.end())) {
    throw std::invalid_argument("piecewise-linear breakpoints must be sorted");
  }
}

double PiecewiseLinear::operator()(double x) const {
  if (xs_.empty()) return 0.0;
  if (x <= xs_.front()) return ys_.front();
  if (x >= xs_.back()) return ys_.back();
  const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
  const auto hi = static_cast<std::size_t>(it - xs_.begin());
  const auto lo = hi - 1;
  const double span = xs_[hi] - xs_[lo];
  if (span <= 0.0) return ys_[hi];
  const double a = (x - xs_[lo]) / span;
  return (1.0 - a) * ys_[lo] + a * ys_[hi];
}

double BumpedFunction::operator()(double rho) const {
  double v = lower(rho);
  if (std::isfinite(v)) v = std::max(0.0, v) + bump(rho);
  if (gamma_cap) v = std::min(v, *gamma_cap * rho);
  return v;
}

double FlowFunction::operator()(double rho) const {
  return std::visit([rho](const auto& f) { return f(rho); }, fn_);
}

}  // namespace fnc
