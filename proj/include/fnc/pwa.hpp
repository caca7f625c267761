#pragma once

#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace fnc {

/// One affine piece `slope * rho + intercept` of a concave function.
struct AffinePiece {
  double slope = 0.0;
  double intercept = 0.0;

  double operator()(double rho) const { return slope * rho + intercept; }
  friend bool operator==(const AffinePiece&, const AffinePiece&) = default;
};

/// Concave piecewise-affine function stored as the pointwise minimum of its
/// affine pieces. An empty piece list is the typed "unbounded" function
/// (value +inf everywhere), used for cells of infinite capacity.
class ConcavePwa {
 public:
  ConcavePwa() = default;
  explicit ConcavePwa(std::vector<AffinePiece> pieces);

  static ConcavePwa unbounded() { return ConcavePwa{}; }

  /// min{v * rho, capacity}
  static ConcavePwa triangular_demand(double free_speed, double capacity);
  /// min{capacity, (jam_density - rho) * wave_speed}
  static ConcavePwa triangular_supply(double capacity, double jam_density, double wave_speed);

  double operator()(double rho) const;

  bool is_unbounded() const { return pieces_.empty(); }
  std::span<const AffinePiece> pieces() const { return pieces_; }

  double max_abs_slope() const;
  /// Smallest rho >= 0 where the function reaches zero along a decreasing
  /// piece; nullopt for functions that never decrease to zero.
  std::optional<double> zero_crossing() const;
  /// Limit value for rho -> +inf if all slopes are >= 0 and some piece is
  /// flat; nullopt if the function is unbounded above.
  std::optional<double> supremum() const;

  friend bool operator==(const ConcavePwa&, const ConcavePwa&) = default;

 private:
  std::vector<AffinePiece> pieces_;
};

/// Demand with a discontinuous capacity drop: below the critical density the
/// base function applies; above it, flow is `(1 - drop_fraction) * base(critical)`.
struct CapacityDropDemand {
  ConcavePwa base;
  double critical_density = 0.0;
  double drop_fraction = 0.0;

  double capacity() const { return base(critical_density); }
  double operator()(double rho) const {
    return rho > critical_density ? (1.0 - drop_fraction) * capacity() : base(rho);
  }
};

/// Piecewise-linear interpolant through breakpoints, constant outside the
/// breakpoint range. Used for nonnegative "bumps" added to lower bounds.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  PiecewiseLinear(std::vector<double> xs, std::vector<double> ys);

  double operator()(double x) const;
  std::span<const double> xs() const { return xs_; }
  std::span<const double> ys() const { return ys_; }

 private:
  std::vector<double> xs_;
  std::vector<double> ys_;
};

/// `lower(rho) + bump(rho)`, optionally capped by `gamma * rho`. Not concave in
/// general; represents arbitrary members of a pointwise-lower-bounded set.
struct BumpedFunction {
  ConcavePwa lower;
  PiecewiseLinear bump;
  std::optional<double> gamma_cap;

  double operator()(double rho) const;
};

/// Any density-to-flow function a realization may carry for one cell and step.
class FlowFunction {
 public:
  using Storage = std::variant<ConcavePwa, CapacityDropDemand, BumpedFunction>;

  FlowFunction(ConcavePwa f) : fn_(std::move(f)) {}
  FlowFunction(CapacityDropDemand f) : fn_(std::move(f)) {}
  FlowFunction(BumpedFunction f) : fn_(std::move(f)) {}

  double operator()(double rho) const;

  /// Non-null only when the function is concave piecewise-affine, i.e. usable
  /// inside a linear program.
  const ConcavePwa* as_concave() const { return std::get_if<ConcavePwa>(&fn_); }
  const Storage& storage() const { return fn_; }

 private:
  Storage fn_;
};

}  // namespace fnc
