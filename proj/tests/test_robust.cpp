#include <doctest.h>

#include <random>
#include <sstream>

#include "fnc/errors.hpp"
#include "fnc/robust.hpp"
#include "fnc/scenario.hpp"
#include "support.hpp"

using namespace fnc;
using fnc::test::link;
using fnc::test::source_cell;
using fnc::test::triangular_cell;

namespace {

const HighsBackend highs;

struct Toy {
  NetworkModel net;
  Vec rho0;
  UncertaintyModel model;
};

// Merge of a 2-lane mainline and a 1-lane ramp into a 2-lane cell, loaded
// enough to congest.
Toy loaded_merge(std::size_t steps = 30) {
  std::vector<Cell> cells{source_cell("main", 0.5, 2), source_cell("ramp", 0.5, 1), triangular_cell("down", 0.5, 2),
                          triangular_cell("exit", 0.5, 1)};
  NetworkModel net(cells, {link(0, 2), link(1, 2), link(2, 3, 0.6)}, 0.004);
  Mat w = Mat::Zero(4, static_cast<Eigen::Index>(steps));
  for (std::size_t t = 0; t < steps * 2 / 3; ++t) {
    w(0, static_cast<Eigen::Index>(t)) = 3600.0;
    w(1, static_cast<Eigen::Index>(t)) = 1500.0;
  }
  Vec rho0(4);
  rho0 << 20.0, 10.0, 60.0, 30.0;
  auto model = UncertaintyModel::nominal(net, w);
  return {std::move(net), std::move(rho0), std::move(model)};
}

}  // namespace

TEST_CASE("worst case and membership") {
  const auto toy = loaded_merge();
  const auto wc = worst_case(toy.net, toy.model);
  CHECK(is_member(toy.net, toy.model, wc).member);
  CHECK(toy.model.check(toy.net).empty());

  const auto zero = UncertaintyModel::nominal(toy.net, Mat::Zero(4, 5));
  CHECK(worst_case(toy.net, zero).external_demand().isZero());

  UncertaintyRealization above(toy.net, toy.model.w_upper * 1.1);
  const auto report = is_member(toy.net, toy.model, above);
  CHECK_FALSE(report.member);
  CHECK_FALSE(report.reasons.empty());

  std::mt19937_64 rng(4);
  for (int k = 0; k < 20; ++k) {
    CHECK(is_member(toy.net, toy.model, sample_realization(toy.net, toy.model, rng)).member);
  }
}

TEST_CASE("zero demand: C* is the cost of draining the initial state") {
  const NetworkModel net({source_cell("e1", 0.5, 1), triangular_cell("e2", 0.5, 1), triangular_cell("e3", 0.5, 1)},
                         {link(0, 1), link(1, 2)}, 0.004);
  const auto model = UncertaintyModel::nominal(net, Mat::Zero(3, 40));
  Vec rho0(3);
  rho0 << 30.0, 90.0, 10.0;
  const TctmSpace space(net);
  const auto sol = solve_robust(net, space, rho0, model, highs);
  const auto drain = simulate(net, rho0, ControlInput::greedy(), worst_case(net, model), 40);
  CHECK(sol.c_star == doctest::Approx(drain.tts).epsilon(1e-7));
  CHECK(sol.reference.tts == doctest::Approx(drain.tts).epsilon(1e-7));
}

TEST_CASE("NE policy stays within C* and never clamps on sampled realizations") {
  const auto toy = loaded_merge();
  const TctmSpace space(toy.net);
  const auto sol = solve_robust(toy.net, space, toy.rho0, toy.model, highs);
  REQUIRE(sol.reconstruction.tight);
  const auto policy = robust_policy(toy.net, space, sol);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 50; ++k) {
    const auto omega = sample_realization(toy.net, toy.model, rng);
    const auto tr = simulate(toy.net, toy.rho0, ControlInput::policy(policy), omega, toy.model.steps());
    CHECK(tr.tts <= sol.c_star * (1.0 + 1e-6));
    CHECK(tr.clamp_count() == 0);
  }
}

TEST_CASE("NE policy preserves the ordering of backlogs for ordered demands") {
  const auto toy = loaded_merge();
  const TctmSpace space(toy.net);
  const auto sol = solve_robust(toy.net, space, toy.rho0, toy.model, highs);
  const auto policy = robust_policy(toy.net, space, sol);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    Mat hi = toy.model.w_upper;
    for (Eigen::Index t = 0; t < hi.cols(); ++t) hi.col(t) *= U(rng);
    Mat lo = hi;
    for (Eigen::Index t = 0; t < lo.cols(); ++t) lo.col(t) *= U(rng);
    const auto a = simulate(toy.net, toy.rho0, ControlInput::policy(policy), UncertaintyRealization(toy.net, lo),
                            toy.model.steps());
    const auto b = simulate(toy.net, toy.rho0, ControlInput::policy(policy), UncertaintyRealization(toy.net, hi),
                            toy.model.steps());
    for (Eigen::Index t = 0; t < a.rho.cols(); ++t) {
      const Vec za = space.to_backlog(a.rho.col(t));
      const Vec zb = space.to_backlog(b.rho.col(t));
      CHECK((za - zb).maxCoeff() <= 1e-9 * (1.0 + zb.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("MPC with the full horizon at the worst case reproduces C*") {
  const auto toy = loaded_merge();
  const TctmSpace space(toy.net);
  const auto sol = solve_robust(toy.net, space, toy.rho0, toy.model, highs);
  const auto wc = worst_case(toy.net, toy.model);
  MpcConfig cfg;
  cfg.horizon = 30;
  cfg.interval = 5;
  const auto run = run_mpc(toy.net, space, toy.rho0, toy.model, cfg, highs, wc, sol);
  CHECK(run.all_feasible);
  CHECK(run.guarantee_asserted);
  CHECK(run.trajectory.tts == doctest::Approx(sol.c_star).epsilon(1e-6));

  const auto trace = predicted_cost_trace(run);
  CHECK(trace_non_increasing(trace, sol.c_star));
  CHECK(trace.back() == doctest::Approx(run.trajectory.tts).epsilon(1e-6));

  cfg.terminal = TerminalMode::None;
  const auto naive = run_mpc_naive(toy.net, space, toy.rho0, toy.model, cfg, highs, wc, sol);
  CHECK_FALSE(naive.guarantee_asserted);
  CHECK(naive.trajectory.tts == doctest::Approx(run.trajectory.tts).epsilon(1e-6));
}

TEST_CASE("MPC on a benign realization: predicted cost decreases") {
  const auto toy = loaded_merge();
  const TctmSpace space(toy.net);
  const auto sol = solve_robust(toy.net, space, toy.rho0, toy.model, highs);
  const UncertaintyRealization benign(toy.net, 0.7 * toy.model.w_upper);
  MpcConfig cfg;
  cfg.horizon = 10;
  cfg.interval = 2;
  const auto run = run_mpc(toy.net, space, toy.rho0, toy.model, cfg, highs, benign, sol);
  const auto trace = predicted_cost_trace(run);
  CHECK(trace_non_increasing(trace, sol.c_star));
  CHECK(trace.back() < trace.front());
  CHECK(run.trajectory.tts <= sol.c_star);
  CHECK_FALSE(run.exceeds_reference);

  std::ostringstream log;
  write_mpc_log_jsonl(log, run);
  const auto text = log.str();
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == run.log.size());
  CHECK(text.find("\"status\":\"optimal\"") != std::string::npos);
}

TEST_CASE("zero demand: both MPC modes drain at C*") {
  auto toy = loaded_merge(20);
  toy.model = UncertaintyModel::nominal(toy.net, Mat::Zero(4, 20));
  const TctmSpace space(toy.net);
  const auto sol = solve_robust(toy.net, space, toy.rho0, toy.model, highs);
  const auto wc = worst_case(toy.net, toy.model);
  MpcConfig cfg;
  cfg.horizon = 4;
  cfg.interval = 2;
  const auto a = run_mpc(toy.net, space, toy.rho0, toy.model, cfg, highs, wc, sol);
  cfg.terminal = TerminalMode::None;
  const auto b = run_mpc(toy.net, space, toy.rho0, toy.model, cfg, highs, wc, sol);
  CHECK(a.trajectory.tts == doctest::Approx(sol.c_star).epsilon(1e-6));
  CHECK(b.trajectory.tts == doctest::Approx(sol.c_star).epsilon(1e-6));
}

TEST_CASE("MPC trace against a hand-rolled loop with horizon = interval = 1") {
  const auto toy = loaded_merge(12);
  const auto& net = toy.net;
  const TctmSpace space(net);
  const auto sol = solve_robust(net, space, toy.rho0, toy.model, highs);
  const UncertaintyRealization actual(net, 0.8 * toy.model.w_upper);
  MpcConfig cfg;
  cfg.horizon = 1;
  cfg.interval = 1;
  const auto run = run_mpc(net, space, toy.rho0, toy.model, cfg, highs, actual, sol);

  // One-step program from the observed state at the actual realization, with
  // the backlog bound of the reference one step ahead.
  const std::size_t T = toy.model.steps();
  const double dt = net.dt();
  const auto& len = net.lengths();
  const Mat& ref = sol.reference.rho;
  Vec rho = toy.rho0;
  double realized = 0.0;
  REQUIRE(run.log.size() == T);
  for (std::size_t t = 0; t < T; ++t) {
    Mat w1 = actual.external_demand().col(static_cast<Eigen::Index>(t));
    const UncertaintyRealization one(net, w1);
    const Vec ahead = space.to_backlog(rho) - space.to_backlog(ref.col(static_cast<Eigen::Index>(t)));
    const double excess = std::max(0.0, ahead.maxCoeff());
    Vec bound = space.to_backlog(ref.col(static_cast<Eigen::Index>(t + 1)));
    for (Eigen::Index e = 0; e < bound.size(); ++e) bound[e] += excess + 1e-7 * (1.0 + std::abs(bound[e]));
    const auto program = build_relaxed_fnc(net, rho, one, 1, TerminalBound{1, bound}, &space);
    const auto lp = solve(program.problem, highs);
    REQUIRE(lp.optimal());
    double tail = 0.0;
    for (std::size_t tau = t + 2; tau <= T; ++tau) tail += len.dot(ref.col(static_cast<Eigen::Index>(tau)));
    CHECK(run.log[t].predicted_cost == doctest::Approx(realized + lp.objective + dt * tail).epsilon(1e-6));

    Vec req = Vec::Zero(4);
    for (std::size_t e = 0; e < 4; ++e) {
      if (is_actuated(net, e)) req[static_cast<Eigen::Index>(e)] = lp.x[program.layout.phi(e, 0)];
    }
    realized += dt * len.dot(rho);
    rho = step(net, rho, req, actual, t).next;
    CHECK((rho - run.trajectory.rho.col(static_cast<Eigen::Index>(t + 1))).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("MPC argument checks") {
  const auto toy = loaded_merge();
  const TctmSpace space(toy.net);
  const auto sol = solve_robust(toy.net, space, toy.rho0, toy.model, highs);
  MpcConfig cfg;
  cfg.horizon = 7;
  cfg.interval = 2;
  CHECK_THROWS_AS(run_mpc(toy.net, space, toy.rho0, toy.model, cfg, highs, worst_case(toy.net, toy.model), sol),
                  std::invalid_argument);
  cfg.horizon = 0;
  CHECK_THROWS_AS(run_mpc(toy.net, space, toy.rho0, toy.model, cfg, highs, worst_case(toy.net, toy.model), sol),
                  std::invalid_argument);
}

TEST_CASE("trace_non_increasing") {
  CHECK(trace_non_increasing({10.0, 9.0, 9.0, 8.5}, 10.0));
  CHECK_FALSE(trace_non_increasing({10.0, 9.0, 9.5}, 10.0));
  CHECK_FALSE(trace_non_increasing({10.5}, 10.0));
  CHECK(trace_non_increasing({10.0, 10.0 + 1e-9}, 10.0));
}
