#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "fnc/lp.hpp"
#include "fnc/scenario.hpp"
#include "support.hpp"

using namespace fnc;
using fnc::test::link;
using fnc::test::source_cell;
using fnc::test::triangular_cell;

namespace {

const HighsBackend highs;

NetworkModel two_cell_line() {
  return NetworkModel({source_cell("e1", 0.5, 1), triangular_cell("e2", 0.5, 1)}, {link(0, 1)}, 0.004);
}

}  // namespace

TEST_CASE("trivial programs") {
  SUBCASE("zero problem") {
    LpProblem p;
    const auto x = p.add_col("x", 0.0, 0.0, 1.0);
    const auto r = p.add_row("r", 0.0, kLpInf);
    p.add_entry(r, x, 1.0);
    const auto sol = solve(p, highs);
    CHECK(sol.optimal());
    CHECK(sol.objective == doctest::Approx(0.0));
  }
  SUBCASE("one empty cell, one step") {
    const NetworkModel net({triangular_cell("e1", 0.5, 1)}, {}, 0.004);
    const UncertaintyRealization real(net, Mat::Zero(1, 1));
    const auto program = build_relaxed_fnc(net, Vec::Zero(1), real, 1);
    const auto sol = solve(program.problem, highs);
    REQUIRE(sol.optimal());
    CHECK(sol.objective == doctest::Approx(0.0));
  }
  SUBCASE("small textbook LP") {
    // min -x - y s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0 -> (1.6, 1.2)
    LpProblem p;
    const auto x = p.add_col("x", -1.0, 0.0, kLpInf);
    const auto y = p.add_col("y", -1.0, 0.0, kLpInf);
    const auto a = p.add_row("a", -kLpInf, 4.0);
    const auto b = p.add_row("b", -kLpInf, 6.0);
    p.add_entry(a, x, 1.0);
    p.add_entry(a, y, 2.0);
    p.add_entry(b, x, 3.0);
    p.add_entry(b, y, 1.0);
    const auto sol = solve(p, highs);
    REQUIRE(sol.optimal());
    CHECK(sol.x[x] == doctest::Approx(1.6));
    CHECK(sol.x[y] == doctest::Approx(1.2));
    CHECK(sol.objective == doctest::Approx(-2.8));
    CHECK(sol.max_residual < 1e-9);
  }
  SUBCASE("infeasible bounds") {
    LpProblem p;
    const auto x = p.add_col("x", 1.0, 0.0, 1.0);
    const auto r = p.add_row("r", 2.0, kLpInf);
    p.add_entry(r, x, 1.0);
    CHECK(solve(p, highs).status == LpStatus::Infeasible);
  }
}

TEST_CASE("free flow on a 2-cell line: LP optimum equals the simulated TTS") {
  const auto net = two_cell_line();
  Mat w = Mat::Zero(2, 3);
  w.row(0).setConstant(800.0);
  const UncertaintyRealization real(net, w);
  Vec rho0(2);
  rho0 << 5.0, 3.0;
  const auto program = build_relaxed_fnc(net, rho0, real, 3);
  const auto sol = solve(program.problem, highs);
  REQUIRE(sol.optimal());
  const auto tr = simulate(net, rho0, ControlInput::greedy(), real, 3);
  CHECK(sol.objective == doctest::Approx(tr.tts).epsilon(1e-7));

  const TctmSpace space(net);
  const auto rec = reconstruct_feasible(net, space, program, sol, real);
  CHECK(rec.tight);
  // Optimal trajectories are not unique (holding cars in e1 on the last step
  // costs the same as moving them), so only the cost is compared.
  CHECK(rec.simulated.tts == doctest::Approx(tr.tts).epsilon(1e-7));
}

TEST_CASE("a zero ramp cap with positive demand is infeasible") {
  std::vector<Cell> cells{source_cell("ramp", 0.5, 1), triangular_cell("down", 0.5, 1)};
  const NetworkModel net(cells, {link(0, 1)}, 0.004, {}, MergeModel{}, {{0, 0.0}});
  Mat w = Mat::Zero(2, 4);
  w.row(0).setConstant(3000.0);
  const UncertaintyRealization real(net, w);
  const auto program = build_relaxed_fnc(net, Vec::Zero(2), real, 4);
  CHECK(solve(program.problem, highs).status == LpStatus::Infeasible);
}

TEST_CASE("capacity drops are refused by the LP builder") {
  const auto sc = load_scenario("example2");
  const UncertaintyRealization real(sc.net, demand_matrix(sc.net, sc.demand, sc.steps));
  CHECK_THROWS_AS(build_relaxed_fnc(sc.net, sc.rho0, real, sc.steps), std::invalid_argument);
}

TEST_CASE("program layout and counts") {
  const auto net = test::merge_toy();
  Mat w = Mat::Zero(3, 5);
  w.topRows(2).setConstant(100.0);
  const UncertaintyRealization real(net, w);
  const auto program = build_relaxed_fnc(net, Vec::Zero(3), real, 5);
  CHECK(program.layout.num_cols() == 2 * 3 * 6);
  CHECK(program.problem.num_cols() == program.layout.num_cols());
  CHECK(program.problem.num_rows() > 0);
  CHECK(program.layout.phi(0, 0) == 18);
  CHECK(program.layout.rho(2, 1) == 5);
}

TEST_CASE("relaxation is tight on random controlled networks") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto rn = test::random_network(rng, 3 + static_cast<std::size_t>(trial % 6), 12);
    const UncertaintyRealization real(rn.net, rn.w);
    const auto program = build_relaxed_fnc(rn.net, rn.rho0, real, 12);
    const auto sol = solve(program.problem, highs);
    REQUIRE(sol.optimal());
    const TctmSpace space(rn.net);
    const auto rec = reconstruct_feasible(rn.net, space, program, sol, real);
    CHECK(rec.tight);
    CHECK(rec.simulated.clamp_count() == 0);
    CHECK(std::abs(rec.gap) <= 1e-4 * (1.0 + std::abs(sol.objective)));
  }
}

TEST_CASE("brute-force oracle") {
  SUBCASE("no controlled flows: plain simulation") {
    const auto net = two_cell_line();
    Mat w = Mat::Constant(2, 3, 0.0);
    w.row(0).setConstant(1500.0);
    const UncertaintyRealization real(net, w);
    Vec rho0(2);
    rho0 << 10.0, 60.0;
    const auto oracle = brute_force_oracle(net, rho0, real, 3, 10);
    CHECK(oracle.best_tts == doctest::Approx(simulate(net, rho0, ControlInput::greedy(), real, 3).tts));
  }
  SUBCASE("merge toy: bounded below by the LP and converging") {
    const auto net = test::merge_toy();
    Mat w = Mat::Zero(3, 2);
    w.row(0).setConstant(1800.0);
    w.row(1).setConstant(1600.0);
    const UncertaintyRealization real(net, w);
    Vec rho0(3);
    rho0 << 15.0, 12.0, 70.0;
    const auto program = build_relaxed_fnc(net, rho0, real, 2);
    const auto lp = solve(program.problem, highs);
    REQUIRE(lp.optimal());
    const TctmSpace space(net);
    const auto rec = reconstruct_feasible(net, space, program, lp, real);
    double previous = kLpInf;
    for (std::size_t grid : {10u, 20u, 40u}) {
      const auto o = brute_force_oracle(net, rho0, real, 2, grid);
      CHECK(o.best_tts >= lp.objective - 1e-9);
      CHECK(o.best_tts >= rec.simulated.tts - 1e-6);
      CHECK(o.best_tts <= previous + 1e-12);
      previous = o.best_tts;
    }
    CHECK((previous - lp.objective) / lp.objective < 0.01);
  }
  SUBCASE("refuses large instances") {
    const auto sc = load_scenario("example1");
    const UncertaintyRealization real(sc.net, Mat::Zero(9, 2));
    CHECK_THROWS(brute_force_oracle(sc.net, sc.rho0, real, 2, 10));
  }
}

TEST_CASE("solution and LP export") {
  const auto net = two_cell_line();
  Mat w = Mat::Zero(2, 2);
  w.row(0).setConstant(100.0);
  const UncertaintyRealization real(net, w);
  const auto program = build_relaxed_fnc(net, Vec::Zero(2), real, 2);
  const auto sol = solve(program.problem, highs);
  std::ostringstream os;
  write_solution_csv(os, program.problem, sol);
  const auto text = os.str();
  CHECK(text.rfind("variable,value\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == program.problem.num_cols() + 1);

  const auto path = std::filesystem::temp_directory_path() / "fnc_test_export.lp";
  highs.write_lp(program.problem, path.string());
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str().find("obj") != std::string::npos);
  std::filesystem::remove(path);
  CHECK_FALSE(highs.version().empty());
}
