#include "fnc/tctm.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <thread>

#include <Eigen/LU>
#include <json.hpp>

namespace fnc {

TctmSpace::TctmSpace(const NetworkModel& net) {
  const auto n = static_cast<Eigen::Index>(net.size());
  reduced_ = net.routing();
  for (auto j : net.controlled()) reduced_.col(static_cast<Eigen::Index>(j)).setZero();
  i_minus_reduced_ = Mat::Identity(n, n) - reduced_;
  p_ = i_minus_reduced_.partialPivLu().solve(Mat::Identity(n, n));
  lengths_ = net.lengths();
  cost_ = i_minus_reduced_.colwise().sum().transpose();
  gain_ = p_ * (net.routing() - reduced_);
}

Vec TctmSpace::to_backlog(const Vec& rho) const { return p_ * lengths_.cwiseProduct(rho); }

Vec TctmSpace::from_backlog(const Vec& z) const { return (i_minus_reduced_ * z).cwiseQuotient(lengths_); }

Vec TctmSpace::backlog_row(std::size_t e) const {
  return p_.row(static_cast<Eigen::Index>(e)).transpose().cwiseProduct(lengths_);
}

Vec flows_from_inputs(const NetworkModel& net, const Vec& z, const Vec& v) {
  Vec req = Vec::Constant(z.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t e = 0; e < net.size(); ++e) {
    if (!is_actuated(net, e)) continue;
    const auto k = static_cast<Eigen::Index>(e);
    req[k] = std::max(0.0, (z[k] - v[k]) / net.dt());
  }
  return req;
}

Vec tctm_step(const TctmSpace& space, const NetworkModel& net, const Vec& z, const Vec& v,
              const UncertaintyRealization& real, std::size_t t) {
  const Vec rho = space.from_backlog(z);
  const Vec req = flows_from_inputs(net, z, v);
  const Vec phi = compute_flows(net, rho, req, real, t, nullptr, ClampMode::Raw);
  return z - net.dt() * phi + net.dt() * (space.p_matrix() * real.w_at(t) + space.controlled_gain() * phi);
}

TctmResiduals tctm_constraints(const TctmSpace& space, const NetworkModel& net, const Vec& z,
                               const Vec& v, const UncertaintyRealization& real, std::size_t t) {
  const Vec rho = space.from_backlog(z);
  const double dt = net.dt();
  std::vector<double> vals;
  TctmResiduals out;
  auto push = [&](ConstraintKind k, std::size_t cell, double value) {
    vals.push_back(value);
    out.kinds.push_back(k);
    out.cells.push_back(cell);
  };

  for (std::size_t e = 0; e < net.size(); ++e) {
    if (!is_actuated(net, e)) continue;
    const auto k = static_cast<Eigen::Index>(e);
    push(ConstraintKind::Demand, e, z[k] - v[k] - dt * real.demand(net, e, t, rho[k]));
  }
  // Asymmetric junctions carry no supply row: the onramp assumption d <= s is
  // verified along trajectories instead.
  if (net.merge_model().rule == MergeRule::Controlled) {
    for (auto j : net.merge_cells()) {
      if (net.asymmetric_by_downstream(j)) continue;
      const double s = real.supply(net, j, t, rho[static_cast<Eigen::Index>(j)]);
      if (std::isinf(s)) continue;
      double inflow = 0.0;
      for (auto i : net.predecessors(j)) {
        const auto k = static_cast<Eigen::Index>(i);
        inflow += net.beta(j, i) * std::max(0.0, (z[k] - v[k]) / dt);
      }
      push(ConstraintKind::Supply, j, inflow - s);
    }
  }
  for (const auto& [e, cap] : net.ramp_caps()) {
    push(ConstraintKind::Ramp, e, z[static_cast<Eigen::Index>(e)] - cap);
  }
  out.values = Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  return out;
}

Policy ne_policy(const TctmSpace& space, const NetworkModel& net, const Trajectory& reference) {
  std::vector<std::size_t> act;
  for (std::size_t e = 0; e < net.size(); ++e) {
    if (is_actuated(net, e)) act.push_back(e);
  }
  std::vector<Vec> rows;
  for (auto e : act) rows.push_back(space.backlog_row(e));
  const double dt = net.dt();
  return [act, rows, reference, dt](std::size_t t, const Vec& rho) -> Vec {
    if (t >= reference.horizon()) throw std::out_of_range("policy queried beyond the reference horizon");
    const auto tk = static_cast<Eigen::Index>(t);
    const Vec diff = rho - reference.rho.col(tk);
    Vec req = Vec::Zero(rho.size());
    for (std::size_t k = 0; k < act.size(); ++k) {
      const auto e = static_cast<Eigen::Index>(act[k]);
      req[e] = std::max(0.0, reference.phi(e, tk) + rows[k].dot(diff) / dt);
    }
    return req;
  };
}

Mat ne_inputs(const TctmSpace& space, const NetworkModel& net, const Trajectory& reference) {
  const auto n = static_cast<Eigen::Index>(net.size());
  const auto T = static_cast<Eigen::Index>(reference.horizon());
  Mat v = Mat::Zero(n, T);
  for (std::size_t e = 0; e < net.size(); ++e) {
    if (!is_actuated(net, e)) continue;
    const Vec row = space.backlog_row(e);
    const auto ek = static_cast<Eigen::Index>(e);
    for (Eigen::Index t = 0; t < T; ++t) v(ek, t) = row.dot(reference.rho.col(t)) - net.dt() * reference.phi(ek, t);
  }
  return v;
}

namespace {

struct TrialOutcome {
  bool rejected = false;
  std::size_t attempts = 0;
  std::optional<MonotonicityWitness> witness;
};

PiecewiseLinear random_bump(std::mt19937_64& rng, double top, double height) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> xs{0.0, u(rng) * top, top};
  std::sort(xs.begin(), xs.end());
  std::vector<double> ys{u(rng) * height, u(rng) * height, u(rng) * height};
  return PiecewiseLinear(xs, ys);
}

TrialOutcome run_trial(const TctmSpace& space, const NetworkModel& net, const MonotonicityOptions& opt,
                       std::size_t trial) {
  std::mt19937_64 rng(opt.seed * 0x9E3779B97F4A7C15ULL + trial);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto n = net.size();
  const auto nk = static_cast<Eigen::Index>(n);

  Vec cap(nk);
  for (std::size_t e = 0; e < n; ++e) {
    cap[static_cast<Eigen::Index>(e)] = net.cell(e).fd.jam_density().value_or(opt.source_density_cap);
  }
  auto inside = [&](const Vec& rho) {
    for (Eigen::Index e = 0; e < nk; ++e) {
      if (rho[e] < -1e-12 || rho[e] > cap[e] * (1.0 + 1e-12)) return false;
    }
    return true;
  };

  TrialOutcome out;
  Vec z, zu;
  bool found = false;
  for (int attempt = 0; attempt < 100 && !found; ++attempt) {
    ++out.attempts;
    Vec rho(nk);
    for (Eigen::Index e = 0; e < nk; ++e) rho[e] = u(rng) < 0.1 ? 0.0 : u(rng) * cap[e];
    z = space.to_backlog(rho);
    Vec delta = Vec::Zero(nk);
    for (Eigen::Index e = 0; e < nk; ++e) {
      if (u(rng) < 0.5) delta[e] = u(rng) * 0.25 * space.lengths()[e] * cap[e];
    }
    for (int halving = 0; halving < 12; ++halving) {
      zu = z + delta;
      if (inside(space.from_backlog(zu))) {
        found = true;
        break;
      }
      delta *= 0.5;
    }
  }
  if (!found) {
    out.rejected = true;
    return out;
  }

  Vec v = Vec::Zero(nk);
  for (Eigen::Index e = 0; e < nk; ++e) {
    if (is_actuated(net, static_cast<std::size_t>(e))) v[e] = u(rng) * 1.2 * std::max(z[e], zu[e]);
  }
  Mat w_hi = Mat::Zero(nk, 1);
  Mat w_lo = Mat::Zero(nk, 1);
  for (std::size_t e = 0; e < n; ++e) {
    if (!net.is_source(e)) continue;
    const auto k = static_cast<Eigen::Index>(e);
    w_hi(k, 0) = u(rng) * opt.max_external_demand;
    w_lo(k, 0) = u(rng) * w_hi(k, 0);
  }

  UncertaintyRealization hi(net, w_hi);
  UncertaintyRealization lo(net, w_lo);
  const double gamma = net.gamma();
  for (std::size_t e = 0; e < n; ++e) {
    const auto& fd = net.cell(e).fd;
    const double top = cap[static_cast<Eigen::Index>(e)];
    if (u(rng) < 0.7) {
      const double h = 0.3 * fd.demand.supremum().value_or(fd.demand(top));
      lo.set_demand(e, BumpedFunction{fd.demand, random_bump(rng, top, h), gamma});
    }
    if (!fd.supply.is_unbounded() && u(rng) < 0.7) {
      const double h = 0.3 * fd.supply(0.0);
      lo.set_supply(e, BumpedFunction{fd.supply, random_bump(rng, top, h), std::nullopt});
    }
  }

  auto compare = [&](const char* comp, const Vec& a, const Vec& b) -> bool {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (a[i] > b[i] + opt.tolerance * (1.0 + std::abs(b[i]))) {
        out.witness = MonotonicityWitness{trial, comp, static_cast<std::size_t>(i), a[i], b[i],
                                          z, zu, v, w_lo.col(0), w_hi.col(0)};
        return false;
      }
    }
    return true;
  };

  const Vec f_lo = tctm_step(space, net, z, v, lo, 0);
  const Vec f_hi = tctm_step(space, net, zu, v, hi, 0);
  if (!compare("f", f_lo, f_hi)) return out;
  const auto g_lo = tctm_constraints(space, net, z, v, lo, 0);
  const auto g_hi = tctm_constraints(space, net, zu, v, hi, 0);
  compare("g", g_lo.values, g_hi.values);
  return out;
}

nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

std::string MonotonicityReport::to_json() const {
  nlohmann::json j;
  j["trials"] = trials;
  j["violations"] = violations;
  j["rejected_samples"] = rejected_samples;
  j["pass"] = pass();
  if (witness) {
    const auto& w = *witness;
    j["witness"] = {{"trial", w.trial}, {"component", w.component}, {"index", w.index},
                    {"lhs", w.lhs},     {"rhs", w.rhs},             {"z", vec_json(w.z)},
                    {"z_upper", vec_json(w.z_upper)}, {"v", vec_json(w.v)},
                    {"w", vec_json(w.w)}, {"w_upper", vec_json(w.w_upper)}};
  } else {
    j["witness"] = nullptr;
  }
  return j.dump(2);
}

MonotonicityReport check_monotonicity(const TctmSpace& space, const NetworkModel& net,
                                      const MonotonicityOptions& options) {
  std::vector<TrialOutcome> outcomes(options.trials);
  unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, options.trials)));
  {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < threads; ++k) {
      pool.emplace_back([&, k] {
        for (std::size_t i = k; i < options.trials; i += threads) outcomes[i] = run_trial(space, net, options, i);
      });
    }
  }
  MonotonicityReport rep;
  rep.trials = options.trials;
  for (const auto& o : outcomes) {
    rep.rejected_samples += o.attempts > 0 ? o.attempts - 1 : 0;
    if (o.rejected) continue;
    if (o.witness) {
      ++rep.violations;
      if (!rep.witness) rep.witness = o.witness;
    }
  }
  return rep;
}

}  // namespace fnc
