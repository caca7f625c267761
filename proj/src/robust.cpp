#include "fnc/robust.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "fnc/errors.hpp"

namespace fnc {

UncertaintyModel UncertaintyModel::nominal(const NetworkModel& net, Mat w_upper) {
  UncertaintyModel m;
  m.w_upper = std::move(w_upper);
  for (const auto& c : net.cells()) {
    if (c.fd.capacity_drop) {
      // Concave minorant of a capacity-drop demand: the base function capped at the dropped capacity.
      std::vector<AffinePiece> pieces(c.fd.demand.pieces().begin(), c.fd.demand.pieces().end());
      const double cap = (1.0 - c.fd.capacity_drop->drop_fraction) * c.fd.demand(c.fd.capacity_drop->critical_density);
      pieces.push_back({0.0, cap});
      m.d_lower.emplace_back(std::move(pieces));
    } else {
      m.d_lower.push_back(c.fd.demand);
    }
    m.s_lower.push_back(c.fd.supply);
  }
  return m;
}

double UncertaintyModel::gamma() const {
  double g = 0.0;
  for (const auto& d : d_lower) g = std::max(g, d.max_abs_slope());
  for (const auto& s : s_lower) g = std::max(g, s.max_abs_slope());
  return g;
}

std::vector<std::string> UncertaintyModel::check(const NetworkModel& net) const {
  std::vector<std::string> out;
  const auto n = net.size();
  if (static_cast<std::size_t>(w_upper.rows()) != n || d_lower.size() != n || s_lower.size() != n) {
    out.push_back("uncertainty model dimensions do not match the network");
    return out;
  }
  for (std::size_t e = 0; e < n; ++e) {
    for (Eigen::Index t = 0; t < w_upper.cols(); ++t) {
      const double w = w_upper(static_cast<Eigen::Index>(e), t);
      if (w < 0.0 || (w > 0.0 && !net.is_source(e))) {
        out.push_back("external demand bound of cell " + std::to_string(e) + " must be >= 0 and only on sources");
        break;
      }
    }
    if (d_lower[e].is_unbounded()) out.push_back("demand lower bound of cell " + std::to_string(e) + " is unbounded");
    for (const auto& p : d_lower[e].pieces()) {
      if (p.slope < 0.0) out.push_back("demand lower bound of cell " + std::to_string(e) + " decreases");
    }
    if (!d_lower[e].is_unbounded() && std::abs(d_lower[e](0.0)) > 1e-9) {
      out.push_back("demand lower bound of cell " + std::to_string(e) + " is nonzero at zero density");
    }
    for (const auto& p : s_lower[e].pieces()) {
      if (p.slope > 0.0) out.push_back("supply lower bound of cell " + std::to_string(e) + " increases");
    }
    if (net.is_source(e) && !s_lower[e].is_unbounded()) {
      out.push_back("source cell " + std::to_string(e) + " needs an unbounded supply lower bound");
    }
  }
  const double g = gamma();
  for (std::size_t e = 0; e < n; ++e) {
    if (g > 0.0 && net.dt() > net.cell(e).length_km / g * (1.0 + 1e-12)) {
      out.push_back("sampling time exceeds l/gamma on cell " + std::to_string(e));
    }
  }
  return out;
}

UncertaintyRealization worst_case(const NetworkModel& net, const UncertaintyModel& model) {
  UncertaintyRealization r(net, model.w_upper);
  for (std::size_t e = 0; e < net.size(); ++e) {
    r.set_demand(e, model.d_lower[e]);
    r.set_supply(e, model.s_lower[e]);
  }
  return r;
}

namespace {

double grid_top(const NetworkModel& net, const UncertaintyModel& model, std::size_t e) {
  if (const auto jam = model.s_lower[e].zero_crossing()) return *jam;
  if (const auto jam = net.cell(e).fd.jam_density()) return *jam;
  const double g = std::max(model.d_lower[e].max_abs_slope(), 1e-9);
  return 4.0 * model.d_lower[e].supremum().value_or(1000.0) / g;
}

}  // namespace

MembershipReport is_member(const NetworkModel& net, const UncertaintyModel& model,
                           const UncertaintyRealization& real, std::size_t grid) {
  MembershipReport rep;
  const double gamma = model.gamma();
  const std::size_t T = std::max(model.steps(), real.steps());
  auto fail = [&](std::string why) {
    rep.member = false;
    if (rep.reasons.size() < 20) rep.reasons.push_back(std::move(why));
  };
  for (std::size_t e = 0; e < net.size(); ++e) {
    for (std::size_t t = 0; t < T; ++t) {
      const double wb = t < model.steps() ? model.w_upper(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(t)) : 0.0;
      if (real.w(e, t) > wb + 1e-9 * (1.0 + wb)) {
        fail("external demand above bound at cell " + std::to_string(e) + ", step " + std::to_string(t));
      }
    }
    const bool varying = real.has_demand_override(e) || real.has_supply_override(e);
    const std::size_t t_end = varying ? T + 1 : 1;
    const double top = grid_top(net, model, e);
    for (std::size_t t = 0; t < t_end; ++t) {
      for (std::size_t k = 0; k <= grid; ++k) {
        const double rho = top * static_cast<double>(k) / static_cast<double>(grid);
        const double d = real.demand(net, e, t, rho);
        const double dl = std::max(0.0, model.d_lower[e](rho));
        const double tol = 1e-9 * (1.0 + std::abs(dl));
        if (d < dl - tol) fail("demand below lower bound at cell " + std::to_string(e) + ", step " + std::to_string(t));
        if (d > gamma * rho + 1e-9 * (1.0 + gamma * rho)) {
          fail("demand above gamma rho at cell " + std::to_string(e) + ", step " + std::to_string(t));
        }
        if (!model.s_lower[e].is_unbounded()) {
          const double s = real.supply(net, e, t, rho);
          const double sl = std::max(0.0, model.s_lower[e](rho));
          if (s < sl - 1e-9 * (1.0 + sl)) {
            fail("supply below lower bound at cell " + std::to_string(e) + ", step " + std::to_string(t));
          }
        }
        if (!rep.member && rep.reasons.size() >= 20) return rep;
      }
    }
  }
  return rep;
}

UncertaintyRealization sample_realization(const NetworkModel& net, const UncertaintyModel& model,
                                          std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat w = model.w_upper;
  for (Eigen::Index t = 0; t < w.cols(); ++t) {
    const double scale = u(rng);
    for (Eigen::Index e = 0; e < w.rows(); ++e) w(e, t) *= scale;
  }
  UncertaintyRealization r(net, w);
  const double gamma = model.gamma();
  const std::size_t T = model.steps();

  auto bump = [&](double top, double height) {
    std::vector<double> xs{0.0, u(rng) * top, u(rng) * top, top};
    std::sort(xs.begin(), xs.end());
    std::vector<double> ys(xs.size());
    for (auto& y : ys) y = u(rng) * height;
    return PiecewiseLinear(xs, ys);
  };

  for (std::size_t e = 0; e < net.size(); ++e) {
    const double top = grid_top(net, model, e);
    const auto& dl = model.d_lower[e];
    const double dh = 0.3 * dl.supremum().value_or(dl(top));
    const double mode = u(rng);
    if (mode < 0.3) {
      r.set_demand(e, dl);
    } else if (mode < 0.7) {
      r.set_demand(e, BumpedFunction{dl, bump(top, dh), gamma});
    } else {
      std::vector<FlowFunction> variants{dl, BumpedFunction{dl, bump(top, dh), gamma},
                                         BumpedFunction{dl, bump(top, dh), gamma}};
      std::vector<FlowFunction> seq;
      std::size_t current = 0;
      for (std::size_t t = 0; t <= T; ++t) {
        if (u(rng) < 0.1) current = static_cast<std::size_t>(u(rng) * 3.0) % 3;
        seq.push_back(variants[current]);
      }
      r.set_demand_sequence(e, std::move(seq));
    }

    const auto& sl = model.s_lower[e];
    if (sl.is_unbounded() || u(rng) < 0.3) {
      r.set_supply(e, sl);
    } else {
      r.set_supply(e, BumpedFunction{sl, bump(top, 0.3 * sl(0.0)), std::nullopt});
    }
  }
  return r;
}

RobustSolution solve_robust(const NetworkModel& net, const TctmSpace& space, const Vec& rho0,
                            const UncertaintyModel& model, const SolverBackend& backend,
                            const SolverOptions& options) {
  if (const auto issues = model.check(net); !issues.empty()) throw DomainError("invalid uncertainty model: " + issues.front());
  const auto wc = worst_case(net, model);
  RobustSolution out;
  try {
    out.program = build_relaxed_fnc(net, rho0, wc, model.steps());
  } catch (const std::invalid_argument& e) {
    throw DomainError(std::string("network is not LP-eligible: ") + e.what());
  }
  out.lp = solve(out.program.problem, backend, options);
  if (!out.lp.optimal()) {
    throw DomainError("robust problem " + to_string(out.lp.status) + ": " + out.lp.message);
  }
  out.reconstruction = reconstruct_feasible(net, space, out.program, out.lp, wc);
  out.c_star = out.lp.objective;
  out.reference = out.reconstruction.simulated;
  out.asymmetric = verify_asymmetric_assumption(out.reference, net, wc);
  return out;
}

Policy robust_policy(const NetworkModel& net, const TctmSpace& space, const RobustSolution& sol) {
  return ne_policy(space, net, sol.reference);
}

namespace {

UncertaintyRealization subproblem_realization(const NetworkModel& net, const UncertaintyModel& model,
                                              const UncertaintyRealization& actual, std::size_t t,
                                              std::size_t horizon, std::size_t window) {
  const auto n = static_cast<Eigen::Index>(net.size());
  Mat w = Mat::Zero(n, static_cast<Eigen::Index>(horizon));
  for (std::size_t k = 0; k < horizon; ++k) {
    for (Eigen::Index e = 0; e < n; ++e) {
      const auto ee = static_cast<std::size_t>(e);
      if (k < window) {
        w(e, static_cast<Eigen::Index>(k)) = actual.w(ee, t + k);
      } else if (t + k < model.steps()) {
        w(e, static_cast<Eigen::Index>(k)) = model.w_upper(e, static_cast<Eigen::Index>(t + k));
      }
    }
  }
  UncertaintyRealization r(net, w);
  for (std::size_t e = 0; e < net.size(); ++e) {
    std::vector<FlowFunction> ds;
    std::vector<FlowFunction> ss;
    for (std::size_t k = 0; k <= horizon; ++k) {
      const ConcavePwa* d = k < window ? actual.demand_pwa(net, e, t + k) : nullptr;
      const ConcavePwa* s = k < window ? actual.supply_pwa(net, e, t + k) : nullptr;
      ds.emplace_back(d ? *d : model.d_lower[e]);
      ss.emplace_back(s ? *s : model.s_lower[e]);
    }
    r.set_demand_sequence(e, std::move(ds));
    r.set_supply_sequence(e, std::move(ss));
  }
  return r;
}

}  // namespace

MpcRun run_mpc(const NetworkModel& net, const TctmSpace& space, const Vec& rho0, const UncertaintyModel& model,
               const MpcConfig& config, const SolverBackend& backend, const UncertaintyRealization& actual,
               const RobustSolution& reference, const SolverOptions& options) {
  const std::size_t T = model.steps();
  if (config.horizon == 0 || config.interval == 0) throw std::invalid_argument("MPC horizon and interval must be positive");
  const bool terminal = config.terminal == TerminalMode::TerminalConstraint;
  if (terminal && config.horizon % config.interval != 0) {
    throw std::invalid_argument("control horizon must be a multiple of the re-optimization interval");
  }
  const std::size_t window = config.certainty_window.value_or(config.interval);
  const auto n = static_cast<Eigen::Index>(net.size());
  const double dt = net.dt();
  const auto& len = net.lengths();
  const Mat& ref_rho = reference.reference.rho;

  std::vector<Vec> act_rows;
  std::vector<std::size_t> act;
  for (std::size_t e = 0; e < net.size(); ++e) {
    if (is_actuated(net, e)) {
      act.push_back(e);
      act_rows.push_back(space.backlog_row(e));
    }
  }

  MpcRun run;
  run.terminal = config.terminal;
  run.reference_cost = reference.c_star;
  run.guarantee_asserted = terminal;
  auto& tr = run.trajectory;
  tr.dt = dt;
  tr.lengths = len;
  tr.rho = Mat::Zero(n, static_cast<Eigen::Index>(T + 1));
  tr.phi = Mat::Zero(n, static_cast<Eigen::Index>(T));
  tr.rho.col(0) = rho0;
  Vec rho = rho0;
  double realized = 0.0;

  for (std::size_t t = 0; t < T; t += config.interval) {
    const std::size_t H = std::min(config.horizon, T - t);
    const auto sub_real = subproblem_realization(net, model, actual, t, H, std::min(window, H));
    std::optional<TerminalBound> bound;
    if (terminal && t + config.horizon <= T) {
      // Backlog already above the reference (numerical slack from earlier
      // subproblems) cannot always be discharged, so it is carried forward.
      const Vec ahead = space.to_backlog(rho) - space.to_backlog(ref_rho.col(static_cast<Eigen::Index>(t)));
      const double excess = std::max(0.0, ahead.maxCoeff());
      Vec b = space.to_backlog(ref_rho.col(static_cast<Eigen::Index>(t + config.horizon)));
      for (Eigen::Index e = 0; e < b.size(); ++e) b[e] += excess + config.terminal_slack * (1.0 + std::abs(b[e]));
      bound = TerminalBound{H, b};
    }
    const auto program = build_relaxed_fnc(net, rho, sub_real, H, bound, &space);
    const auto sol = solve(program.problem, backend, options);

    MpcIteration it;
    it.t = t;
    it.horizon = H;
    it.terminal_rows = bound.has_value();
    it.status = sol.status;
    it.wall_seconds = sol.wall_seconds;
    if (!sol.optimal()) {
      run.all_feasible = false;
      run.log.push_back(it);
      throw DomainError("MPC subproblem at step " + std::to_string(t) + " is " + to_string(sol.status) +
                        (terminal ? " despite the terminal constraint" : ""));
    }
    it.objective = sol.objective;
    double tail = 0.0;
    for (std::size_t tau = t + H + 1; tau <= T; ++tau) tail += len.dot(ref_rho.col(static_cast<Eigen::Index>(tau)));
    it.predicted_cost = realized + sol.objective + dt * tail;

    const auto sub = lp_trajectory(net, program.layout, sol);
    const std::size_t m = std::min(config.interval, T - t);
    const std::size_t before = tr.events.size();
    for (std::size_t k = 0; k < m; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const Vec diff = rho - sub.rho.col(kk);
      Vec req = Vec::Zero(n);
      for (std::size_t a = 0; a < act.size(); ++a) {
        const auto e = static_cast<Eigen::Index>(act[a]);
        req[e] = std::max(0.0, sub.phi(e, kk) + act_rows[a].dot(diff) / dt);
      }
      realized += dt * len.dot(rho);
      auto r = step(net, rho, req, actual, t + k, &tr.events);
      tr.phi.col(static_cast<Eigen::Index>(t + k)) = r.flows;
      rho = std::move(r.next);
      tr.rho.col(static_cast<Eigen::Index>(t + k + 1)) = rho;
    }
    it.clamps = 0;
    for (std::size_t q = before; q < tr.events.size(); ++q) {
      if (tr.events[q].kind == EventKind::DemandClamp || tr.events[q].kind == EventKind::SupplyScale) ++it.clamps;
    }
    run.log.push_back(it);
  }
  tr.tts = total_time_spent(tr.rho, tr.lengths, tr.dt);
  run.exceeds_reference = tr.tts > run.reference_cost + 1e-6 * (1.0 + std::abs(run.reference_cost));
  return run;
}

MpcRun run_mpc_naive(const NetworkModel& net, const TctmSpace& space, const Vec& rho0,
                     const UncertaintyModel& model, MpcConfig config, const SolverBackend& backend,
                     const UncertaintyRealization& actual, const RobustSolution& reference,
                     const SolverOptions& options) {
  config.terminal = TerminalMode::None;
  return run_mpc(net, space, rho0, model, config, backend, actual, reference, options);
}

std::vector<double> predicted_cost_trace(const MpcRun& run) {
  std::vector<double> out;
  out.reserve(run.log.size());
  for (const auto& it : run.log) out.push_back(it.predicted_cost);
  return out;
}

bool trace_non_increasing(const std::vector<double>& trace, double c_star) {
  if (trace.empty()) return true;
  if (trace.front() > c_star + 1e-6 * (1.0 + std::abs(c_star))) return false;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i] > trace[i - 1] + 1e-6 * (1.0 + std::abs(trace[i - 1]))) return false;
  }
  return true;
}

void write_mpc_log_jsonl(std::ostream& os, const MpcRun& run) {
  for (const auto& it : run.log) {
    nlohmann::json j{{"t", it.t},
                     {"horizon", it.horizon},
                     {"terminal_rows", it.terminal_rows},
                     {"status", to_string(it.status)},
                     {"objective", it.objective},
                     {"predicted_cost", it.predicted_cost},
                     {"clamps", it.clamps}};
    os << j.dump() << '\n';
  }
}

}  // namespace fnc
