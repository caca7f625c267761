#include "fnc/lp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <stdexcept>

namespace fnc {

std::size_t LpProblem::add_col(std::string name, double c, double lo, double hi) {
  cost.push_back(c);
  col_lower.push_back(lo);
  col_upper.push_back(hi);
  col_names.push_back(std::move(name));
  return cost.size() - 1;
}

std::size_t LpProblem::add_row(std::string name, double lo, double hi) {
  row_lower.push_back(lo);
  row_upper.push_back(hi);
  row_names.push_back(std::move(name));
  return row_lower.size() - 1;
}

void LpProblem::add_entry(std::size_t row, std::size_t col, double value) {
  if (value != 0.0) entries.push_back({row, col, value});
}

std::string to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::Limit: return "limit";
    case LpStatus::Error: return "error";
  }
  return "error";
}

namespace {

double scaled_violation(double value, double lo, double hi) {
  if (value < lo) return (lo - value) / (1.0 + std::abs(lo));
  if (value > hi) return (value - hi) / (1.0 + std::abs(hi));
  return 0.0;
}

}  // namespace

LpSolution solve(const LpProblem& problem, const SolverBackend& backend, const SolverOptions& options,
                 double residual_tolerance) {
  const auto start = std::chrono::steady_clock::now();
  LpSolution sol = backend.solve(problem, options);
  sol.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  sol.rows = problem.num_rows();
  sol.cols = problem.num_cols();
  sol.nonzeros = problem.entries.size();
  if (!sol.optimal()) return sol;
  if (sol.x.size() != problem.num_cols()) {
    sol.status = LpStatus::Error;
    sol.message = "backend returned a point of the wrong dimension";
    return sol;
  }

  std::vector<double> activity(problem.num_rows(), 0.0);
  for (const auto& e : problem.entries) activity[e.row] += e.value * sol.x[e.col];
  double worst = 0.0;
  for (std::size_t r = 0; r < activity.size(); ++r) {
    worst = std::max(worst, scaled_violation(activity[r], problem.row_lower[r], problem.row_upper[r]));
  }
  for (std::size_t c = 0; c < sol.x.size(); ++c) {
    worst = std::max(worst, scaled_violation(sol.x[c], problem.col_lower[c], problem.col_upper[c]));
  }
  sol.max_residual = worst;
  if (worst > residual_tolerance) {
    sol.status = LpStatus::Error;
    sol.message = "optimal point fails the residual check (" + std::to_string(worst) + ")";
  }
  return sol;
}

FncProgram build_relaxed_fnc(const NetworkModel& net, const Vec& rho0, const UncertaintyRealization& real,
                             std::size_t steps, const std::optional<TerminalBound>& terminal,
                             const TctmSpace* space) {
  const auto n = net.size();
  if (static_cast<std::size_t>(rho0.size()) != n) throw std::invalid_argument("initial density has wrong dimension");
  if (terminal && !space) throw std::invalid_argument("terminal rows need the backlog transform");
  if (terminal && terminal->step > steps) throw std::invalid_argument("terminal step beyond the horizon");

  for (std::size_t e = 0; e < n; ++e) {
    for (std::size_t t = 0; t <= steps; ++t) {
      if (!real.demand_pwa(net, e, t) || !real.supply_pwa(net, e, t)) {
        const auto& name = net.cell(e).name;
        throw std::invalid_argument("cell " + std::to_string(e) + (name.empty() ? "" : " (" + name + ")") +
                                    " has a demand or supply function that is not concave piecewise-affine");
      }
    }
  }

  FncProgram out;
  out.layout = {n, steps};
  auto& lp = out.problem;
  const double dt = net.dt();
  const auto& len = net.lengths();
  auto tag = [](const char* what, std::size_t e, std::size_t t) {
    return std::string(what) + "_" + std::to_string(e) + "_" + std::to_string(t);
  };

  for (std::size_t t = 0; t <= steps; ++t) {
    for (std::size_t e = 0; e < n; ++e) {
      const double l = len[static_cast<Eigen::Index>(e)];
      double lo = 0.0;
      double hi = kLpInf;
      if (t == 0) lo = hi = rho0[static_cast<Eigen::Index>(e)];
      if (const auto cap = net.ramp_cap(e); cap && t > 0) hi = *cap / l;
      lp.add_col(tag("rho", e, t), dt * l, lo, hi);
    }
  }
  for (std::size_t t = 0; t <= steps; ++t) {
    for (std::size_t e = 0; e < n; ++e) lp.add_col(tag("phi", e, t), 0.0, 0.0, kLpInf);
  }
  const auto& L = out.layout;

  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t e = 0; e < n; ++e) {
      const double l = len[static_cast<Eigen::Index>(e)];
      const double w = real.w(e, t);
      const auto r = lp.add_row(tag("cons", e, t), dt * w, dt * w);
      lp.add_entry(r, L.rho(e, t + 1), l);
      lp.add_entry(r, L.rho(e, t), -l);
      lp.add_entry(r, L.phi(e, t), dt);
      for (auto i : net.predecessors(e)) lp.add_entry(r, L.phi(i, t), -dt * net.beta(e, i));
    }
  }

  for (std::size_t t = 0; t <= steps; ++t) {
    for (std::size_t e = 0; e < n; ++e) {
      const auto* d = real.demand_pwa(net, e, t);
      std::size_t k = 0;
      for (const auto& p : d->pieces()) {
        const auto r = lp.add_row(tag("dem", e, t) + "_" + std::to_string(k++), -kLpInf, p.intercept);
        lp.add_entry(r, L.phi(e, t), 1.0);
        lp.add_entry(r, L.rho(e, t), -p.slope);
      }
      if (net.predecessors(e).empty()) continue;
      const auto* s = real.supply_pwa(net, e, t);
      k = 0;
      for (const auto& p : s->pieces()) {
        const auto r = lp.add_row(tag("sup", e, t) + "_" + std::to_string(k++), -kLpInf, p.intercept);
        for (auto i : net.predecessors(e)) lp.add_entry(r, L.phi(i, t), net.beta(e, i));
        lp.add_entry(r, L.rho(e, t), -p.slope);
      }
    }
  }

  if (terminal) {
    const Mat pl = space->p_matrix() * net.lengths().asDiagonal();
    for (std::size_t e = 0; e < n; ++e) {
      const auto r = lp.add_row(tag("term", e, terminal->step), -kLpInf, terminal->backlog[static_cast<Eigen::Index>(e)]);
      for (std::size_t j = 0; j < n; ++j) {
        lp.add_entry(r, L.rho(j, terminal->step), pl(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(j)));
      }
    }
  }
  return out;
}

Trajectory lp_trajectory(const NetworkModel& net, const FncLayout& layout, const LpSolution& sol) {
  const auto n = static_cast<Eigen::Index>(layout.cells);
  const auto T = static_cast<Eigen::Index>(layout.steps);
  Trajectory tr;
  tr.dt = net.dt();
  tr.lengths = net.lengths();
  tr.rho = Mat::Zero(n, T + 1);
  tr.phi = Mat::Zero(n, T);
  for (std::size_t t = 0; t <= layout.steps; ++t) {
    for (std::size_t e = 0; e < layout.cells; ++e) {
      const auto ek = static_cast<Eigen::Index>(e);
      const auto tk = static_cast<Eigen::Index>(t);
      tr.rho(ek, tk) = std::max(0.0, sol.x[layout.rho(e, t)]);
      if (t < layout.steps) tr.phi(ek, tk) = std::max(0.0, sol.x[layout.phi(e, t)]);
    }
  }
  tr.tts = total_time_spent(tr.rho, tr.lengths, tr.dt);
  return tr;
}

Reconstruction reconstruct_feasible(const NetworkModel& net, const TctmSpace& space, const FncProgram& program,
                                    const LpSolution& sol, const UncertaintyRealization& real, double tolerance) {
  if (!sol.optimal()) throw std::invalid_argument("reconstruction needs an optimal LP solution");
  Reconstruction r;
  r.relaxed = lp_trajectory(net, program.layout, sol);
  r.lp_objective = sol.objective;
  const auto policy = ne_policy(space, net, r.relaxed);
  r.simulated = simulate(net, r.relaxed.rho.col(0), ControlInput::policy(policy), real, program.layout.steps);
  r.gap = r.simulated.tts - r.lp_objective;
  r.tight = std::abs(r.gap) <= tolerance * (1.0 + std::abs(r.lp_objective));
  return r;
}

OracleResult brute_force_oracle(const NetworkModel& net, const Vec& rho0, const UncertaintyRealization& real,
                                std::size_t steps, std::size_t resolution) {
  std::vector<std::size_t> act;
  for (std::size_t e = 0; e < net.size(); ++e) {
    if (is_actuated(net, e)) act.push_back(e);
  }
  if (net.size() > 4 || steps > 4 || act.size() > 2 || resolution == 0) {
    throw std::invalid_argument("instance too large for exhaustive search (need n <= 4, T <= 4, <= 2 controlled flows)");
  }
  const auto n = static_cast<Eigen::Index>(net.size());
  const auto& len = net.lengths();
  const double dt = net.dt();

  std::size_t per_step = 1;
  for (std::size_t k = 0; k < act.size(); ++k) per_step *= resolution + 1;

  OracleResult best;
  Mat requests = Mat::Zero(n, static_cast<Eigen::Index>(steps));

  std::function<void(std::size_t, const Vec&, double)> dfs = [&](std::size_t t, const Vec& rho, double acc) {
    if (t == steps) {
      ++best.candidates;
      if (acc < best.best_tts) {
        best.best_tts = acc;
        best.best_requests = requests;
      }
      return;
    }
    for (std::size_t combo = 0; combo < per_step; ++combo) {
      Vec req = Vec::Zero(n);
      std::size_t code = combo;
      for (auto e : act) {
        const auto ek = static_cast<Eigen::Index>(e);
        const double u = static_cast<double>(code % (resolution + 1)) / static_cast<double>(resolution);
        code /= resolution + 1;
        req[ek] = u * real.demand(net, e, t, rho[ek]);
      }
      requests.col(static_cast<Eigen::Index>(t)) = req;
      const auto r = step(net, rho, req, real, t);
      dfs(t + 1, r.next, acc + dt * len.dot(r.next));
    }
  };
  dfs(0, rho0, dt * len.dot(rho0));
  return best;
}

void write_solution_csv(std::ostream& os, const LpProblem& problem, const LpSolution& sol) {
  os << "variable,value\n";
  os.precision(17);
  for (std::size_t c = 0; c < problem.num_cols() && c < sol.x.size(); ++c) {
    os << problem.col_names[c] << ',' << sol.x[c] + 0.0 << '\n';
  }
}

}  // namespace fnc
