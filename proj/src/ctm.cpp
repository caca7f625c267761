#include "fnc/ctm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fnc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double event_tol(double x) { return 1e-6 * (1.0 + std::abs(x)); }

void log(std::vector<SimEvent>* events, EventKind kind, std::size_t t, std::size_t cell, double excess) {
  if (events) events->push_back({kind, t, cell, excess});
}

/// Clamps a request into [0, d], logging requests outside by more than the tolerance.
double clamp_request(double req, double d, std::size_t t, std::size_t cell, std::vector<SimEvent>* events) {
  if (std::isnan(req)) req = 0.0;
  if (req > d) {
    if (std::isfinite(req) && req - d > event_tol(d)) log(events, EventKind::DemandClamp, t, cell, req - d);
    return d;
  }
  if (req < 0.0) {
    if (-req > event_tol(0.0)) log(events, EventKind::DemandClamp, t, cell, -req);
    return 0.0;
  }
  return req;
}

}  // namespace

ControlInput ControlInput::greedy() {
  ControlInput c;
  c.src_ = Greedy{};
  return c;
}

ControlInput ControlInput::sequence(Mat flows) {
  ControlInput c;
  c.src_ = std::move(flows);
  return c;
}

ControlInput ControlInput::policy(Policy p) {
  ControlInput c;
  c.src_ = std::move(p);
  return c;
}

Vec ControlInput::request(std::size_t t, const Vec& rho) const {
  if (std::holds_alternative<Greedy>(src_)) return Vec::Constant(rho.size(), kInf);
  if (const auto* m = std::get_if<Mat>(&src_)) {
    if (static_cast<Eigen::Index>(t) >= m->cols()) {
      throw std::out_of_range("control sequence shorter than the simulation horizon");
    }
    return m->col(static_cast<Eigen::Index>(t));
  }
  return std::get<Policy>(src_)(t, rho);
}

bool is_actuated(const NetworkModel& net, std::size_t i) {
  if (!net.is_controlled(i)) return false;
  if (net.merge_model().rule == MergeRule::Controlled) return true;
  for (const auto& a : net.asymmetric_junctions()) {
    if (idx(a.onramp) == i) return true;
  }
  return false;
}

Vec compute_flows(const NetworkModel& net, const Vec& rho, const Vec& requested,
                  const UncertaintyRealization& real, std::size_t t, std::vector<SimEvent>* events,
                  ClampMode mode) {
  const auto n = net.size();
  const bool clamp = mode == ClampMode::Clamp;
  Vec d(static_cast<Eigen::Index>(n));
  Vec s(static_cast<Eigen::Index>(n));
  for (std::size_t e = 0; e < n; ++e) {
    const auto k = static_cast<Eigen::Index>(e);
    d[k] = real.demand(net, e, t, rho[k]);
    s[k] = real.supply(net, e, t, rho[k]);
  }

  Vec phi = Vec::Constant(static_cast<Eigen::Index>(n), std::numeric_limits<double>::quiet_NaN());
  const auto& model = net.merge_model();

  for (auto j : net.merge_cells()) {
    const auto& preds = net.predecessors(j);
    const auto jk = static_cast<Eigen::Index>(j);
    if (const auto* a = net.asymmetric_by_downstream(j)) {
      const auto e = idx(a->onramp);
      const auto i = idx(a->mainline);
      const auto ek = static_cast<Eigen::Index>(e);
      const auto ik = static_cast<Eigen::Index>(i);
      const double be = net.beta(j, e);
      const double bi = net.beta(j, i);
      double u = requested[ek];
      if (clamp) {
        u = clamp_request(u, d[ek], t, e, events);
        if (be * u > s[jk]) {
          if (be * u - s[jk] > event_tol(s[jk])) log(events, EventKind::AsymmetricViolation, t, e, be * u - s[jk]);
          u = s[jk] / be;
        }
      }
      phi[ek] = u;
      const auto m = asymmetric_mainline_flow(d[ik], s[jk] / bi, be * u / bi);
      if (m.violation) log(events, EventKind::MainlineFloor, t, i, 0.0);
      phi[ik] = m.flow;
      continue;
    }

    if (model.rule == MergeRule::Controlled) {
      double total = 0.0;
      for (auto i : preds) {
        const auto ik = static_cast<Eigen::Index>(i);
        phi[ik] = clamp ? clamp_request(requested[ik], d[ik], t, i, events) : requested[ik];
        total += net.beta(j, i) * phi[ik];
      }
      if (clamp && total > s[jk]) {
        if (total - s[jk] > event_tol(s[jk])) log(events, EventKind::SupplyScale, t, j, total - s[jk]);
        const double scale = s[jk] / total;
        for (auto i : preds) phi[static_cast<Eigen::Index>(i)] *= scale;
      }
      continue;
    }

    std::vector<double> eff(preds.size());
    for (std::size_t k = 0; k < preds.size(); ++k) {
      eff[k] = net.beta(j, preds[k]) * d[static_cast<Eigen::Index>(preds[k])];
    }
    std::vector<double> out;
    if (model.rule == MergeRule::ProportionalPriority) {
      out = merge_proportional(eff, s[jk]);
    } else {
      const auto it = model.priorities.find(j);
      std::vector<double> prio = it != model.priorities.end()
                                     ? it->second
                                     : std::vector<double>(preds.size(), 1.0 / static_cast<double>(preds.size()));
      out = merge_daganzo(eff, s[jk], prio);
    }
    for (std::size_t k = 0; k < preds.size(); ++k) {
      phi[static_cast<Eigen::Index>(preds[k])] = out[k] / net.beta(j, preds[k]);
    }
  }

  for (std::size_t e = 0; e < n; ++e) {
    const auto ek = static_cast<Eigen::Index>(e);
    if (!std::isnan(phi[ek])) continue;
    double f = d[ek];
    for (auto i : net.successors(e)) f = std::min(f, s[static_cast<Eigen::Index>(i)] / net.beta(i, e));
    phi[ek] = f;
  }
  return phi;
}

Vec conservation_update(const NetworkModel& net, const Vec& rho, const Vec& flows, const Vec& w) {
  const Vec net_inflow = net.routing() * flows - flows + w;
  return rho + (net.dt() * net_inflow.array() / net.lengths().array()).matrix();
}

StepResult step(const NetworkModel& net, const Vec& rho, const Vec& requested,
                const UncertaintyRealization& real, std::size_t t, std::vector<SimEvent>* events) {
  StepResult r;
  r.flows = compute_flows(net, rho, requested, real, t, events, ClampMode::Clamp);
  r.next = conservation_update(net, rho, r.flows, real.w_at(t));
  for (Eigen::Index e = 0; e < r.next.size(); ++e) {
    if (r.next[e] < 0.0) {
      if (r.next[e] < -1e-9) {
        throw std::logic_error("internal error: density of cell " + std::to_string(e) +
                               " became negative at step " + std::to_string(t));
      }
      r.next[e] = 0.0;
    }
  }
  return r;
}

std::size_t Trajectory::count(EventKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [kind](const SimEvent& e) { return e.kind == kind; }));
}

std::size_t Trajectory::clamp_count() const { return count(EventKind::DemandClamp) + count(EventKind::SupplyScale); }

double total_time_spent(const Mat& rho, const Vec& lengths, double dt) {
  double sum = 0.0;
  for (Eigen::Index t = 0; t < rho.cols(); ++t) sum += lengths.dot(rho.col(t));
  return dt * sum;
}

Trajectory simulate(const NetworkModel& net, const Vec& rho0, const ControlInput& control,
                    const UncertaintyRealization& real, std::size_t steps) {
  const auto n = static_cast<Eigen::Index>(net.size());
  if (rho0.size() != n) throw std::invalid_argument("initial density has wrong dimension");
  Trajectory tr;
  tr.dt = net.dt();
  tr.lengths = net.lengths();
  tr.rho = Mat::Zero(n, static_cast<Eigen::Index>(steps + 1));
  tr.phi = Mat::Zero(n, static_cast<Eigen::Index>(steps));
  tr.rho.col(0) = rho0;
  Vec rho = rho0;
  for (std::size_t t = 0; t < steps; ++t) {
    const Vec req = control.request(t, rho);
    auto r = step(net, rho, req, real, t, &tr.events);
    tr.phi.col(static_cast<Eigen::Index>(t)) = r.flows;
    rho = std::move(r.next);
    tr.rho.col(static_cast<Eigen::Index>(t + 1)) = rho;
  }
  tr.tts = total_time_spent(tr.rho, tr.lengths, tr.dt);
  return tr;
}

std::vector<double> merge_proportional(std::span<const double> demands, double supply) {
  const double total = std::accumulate(demands.begin(), demands.end(), 0.0);
  std::vector<double> out(demands.size(), 0.0);
  if (total <= 0.0) return out;
  const double frac = std::min(1.0, supply / total);
  for (std::size_t i = 0; i < demands.size(); ++i) out[i] = demands[i] * frac;
  return out;
}

std::vector<double> merge_daganzo(std::span<const double> demands, double supply,
                                  std::span<const double> priorities) {
  const auto m = demands.size();
  if (priorities.size() != m) throw std::invalid_argument("one priority per merging flow required");
  std::vector<double> out(demands.begin(), demands.end());
  const double total = std::accumulate(demands.begin(), demands.end(), 0.0);
  if (total <= supply) return out;

  std::vector<bool> active(m, true);
  double remaining = supply;
  for (;;) {
    double psum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (active[i]) {
        psum += priorities[i];
        ++count;
      }
    }
    if (count == 0) break;
    auto share = [&](std::size_t i) {
      return psum > 0.0 ? remaining * priorities[i] / psum : remaining / static_cast<double>(count);
    };
    bool fixed_any = false;
    for (std::size_t i = 0; i < m; ++i) {
      if (active[i] && demands[i] <= share(i)) {
        out[i] = demands[i];
        active[i] = false;
        fixed_any = true;
      }
    }
    if (!fixed_any) {
      for (std::size_t i = 0; i < m; ++i) {
        if (active[i]) out[i] = share(i);
      }
      break;
    }
    remaining = supply;
    for (std::size_t i = 0; i < m; ++i) {
      if (!active[i]) remaining -= out[i];
    }
  }
  return out;
}

MainlineFlow asymmetric_mainline_flow(double d_mainline, double s_downstream, double phi_onramp) {
  const double residual = s_downstream - phi_onramp;
  if (residual < 0.0) return {0.0, true};
  return {std::min(d_mainline, residual), false};
}

AsymmetricCheck verify_asymmetric_assumption(const Trajectory& traj, const NetworkModel& net,
                                             const UncertaintyRealization& real) {
  AsymmetricCheck out;
  for (std::size_t t = 0; t < traj.horizon(); ++t) {
    for (const auto& a : net.asymmetric_junctions()) {
      const auto e = idx(a.onramp);
      const auto j = idx(a.downstream);
      const double d = net.beta(j, e) * real.demand(net, e, t, traj.rho(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(t)));
      const double s = real.supply(net, j, t, traj.rho(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t)));
      ++out.checks;
      if (d > s + 1e-9 * (1.0 + std::abs(s))) {
        out.pass = false;
        out.failures.push_back({t, e, d, s});
      }
    }
  }
  return out;
}

}  // namespace fnc
