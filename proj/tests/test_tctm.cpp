#include <doctest.h>

#include <random>

#include "fnc/scenario.hpp"
#include "fnc/tctm.hpp"
#include "support.hpp"

using namespace fnc;
using fnc::test::triangular_cell;

namespace {

// Requested flows that the raw TCTM step can reproduce exactly: a random
// fraction of each actuated demand.
Vec random_requests(const NetworkModel& net, const Vec& rho, const UncertaintyRealization& real, std::size_t t,
                    std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Vec req = Vec::Zero(static_cast<Eigen::Index>(net.size()));
  for (std::size_t e = 0; e < net.size(); ++e) {
    if (is_actuated(net, e)) req[static_cast<Eigen::Index>(e)] = U(rng) * real.demand(net, e, t, rho[static_cast<Eigen::Index>(e)]);
  }
  return req;
}

}  // namespace

TEST_CASE("backlog coordinates") {
  const auto sc = load_scenario("example1");
  const TctmSpace space(sc.net);
  CHECK(space.to_backlog(Vec::Zero(9)).isZero());

  const NetworkModel single({triangular_cell("e1", 0.5, 1)}, {}, 0.004);
  const TctmSpace one(single);
  Vec rho(1);
  rho << 10.0;
  CHECK(one.to_backlog(rho)[0] == doctest::Approx(5.0));

  // z5 = l5 rho5 + beta(5,1) l1 rho1
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 100.0);
  Vec r(9);
  for (int i = 0; i < 9; ++i) r[i] = U(rng);
  const Vec z = space.to_backlog(r);
  const auto& l = sc.net.lengths();
  CHECK(z[4] == doctest::Approx(l[4] * r[4] + sc.net.beta(4, 0) * l[0] * r[0]));
  CHECK((space.from_backlog(z) - r).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(space.cost_vector().dot(z) == doctest::Approx(l.dot(r)));
}

TEST_CASE("inputs above the backlog stop the controlled flows") {
  const auto sc = load_scenario("example1");
  const TctmSpace space(sc.net);
  const UncertaintyRealization real(sc.net, Mat::Zero(9, 1));
  const Vec rho = Vec::Constant(9, 20.0);
  const Vec z = space.to_backlog(rho);
  const Vec v = z + Vec::Constant(9, 1.0);
  const Vec phi = flows_from_inputs(sc.net, z, v);
  const Vec next = tctm_step(space, sc.net, z, v, real, 0);
  for (std::size_t e = 0; e < 9; ++e) {
    if (!is_actuated(sc.net, e)) continue;
    CHECK(phi[static_cast<Eigen::Index>(e)] == 0.0);
    CHECK(next[static_cast<Eigen::Index>(e)] <= z[static_cast<Eigen::Index>(e)] + 1e-12);
  }
}

TEST_CASE("v = z - dt phi reproduces any nonnegative controlled flow") {
  const auto sc = load_scenario("example1");
  const Vec z = Vec::Constant(9, 40.0);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 3000.0);
  Vec target = Vec::Zero(9);
  for (auto e : sc.net.controlled()) target[static_cast<Eigen::Index>(e)] = U(rng);
  const Vec v = z - sc.net.dt() * target;
  const Vec phi = flows_from_inputs(sc.net, z, v);
  for (auto e : sc.net.controlled()) {
    CHECK(phi[static_cast<Eigen::Index>(e)] == doctest::Approx(target[static_cast<Eigen::Index>(e)]));
  }
}

TEST_CASE("TCTM step matches the CTM step under the transform") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto rn = test::random_network(rng, 3 + static_cast<std::size_t>(trial % 6), 3);
    const TctmSpace space(rn.net);
    const UncertaintyRealization real(rn.net, rn.w);
    Vec rho = rn.rho0;
    for (std::size_t e = 0; e < rn.net.size(); ++e) {
      if (const auto jam = rn.net.cell(e).fd.jam_density()) rho[static_cast<Eigen::Index>(e)] = U(rng) * *jam;
    }
    const Vec req = random_requests(rn.net, rho, real, 0, rng);
    const Vec phi = compute_flows(rn.net, rho, req, real, 0, nullptr, ClampMode::Raw);
    const Vec ctm_next = conservation_update(rn.net, rho, phi, real.w_at(0));

    const Vec z = space.to_backlog(rho);
    Vec v = z;
    for (std::size_t e = 0; e < rn.net.size(); ++e) {
      if (is_actuated(rn.net, e)) v[static_cast<Eigen::Index>(e)] -= rn.net.dt() * phi[static_cast<Eigen::Index>(e)];
    }
    const Vec z_next = tctm_step(space, rn.net, z, v, real, 0);
    const Vec expected = space.to_backlog(ctm_next);
    CHECK((z_next - expected).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + expected.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("TCTM constraint residuals") {
  const auto net = test::merge_toy();
  const TctmSpace space(net);
  const UncertaintyRealization real(net, Mat::Zero(3, 1));

  const auto empty = tctm_constraints(space, net, Vec::Zero(3), Vec::Zero(3), real, 0);
  CHECK(empty.feasible());

  Vec rho(3);
  rho << 10.0, 10.0, 0.0;  // demand 1000 on each input
  const Vec z = space.to_backlog(rho);
  Vec v = z;
  v[0] -= net.dt() * 1500.0;
  const auto over = tctm_constraints(space, net, z, v, real, 0);
  CHECK_FALSE(over.feasible());
  bool demand_row = false;
  for (Eigen::Index k = 0; k < over.values.size(); ++k) {
    if (over.kinds[static_cast<std::size_t>(k)] == ConstraintKind::Demand && over.cells[static_cast<std::size_t>(k)] == 0) {
      demand_row = true;
      CHECK(over.values[k] == doctest::Approx(net.dt() * 500.0));  // in cars
    }
  }
  CHECK(demand_row);
}

TEST_CASE("NE policy around a reference") {
  const auto net = test::merge_toy();
  const TctmSpace space(net);
  Mat w = Mat::Zero(3, 20);
  w.row(0).setConstant(1500.0);
  w.row(1).setConstant(1200.0);
  const UncertaintyRealization real(net, w);
  const auto ref = simulate(net, Vec::Zero(3), ControlInput::greedy(), real, 20);
  const auto policy = ne_policy(space, net, ref);

  for (std::size_t t = 0; t < 20; ++t) {
    const Vec at = policy(t, ref.rho.col(static_cast<Eigen::Index>(t)));
    for (auto e : net.controlled()) {
      CHECK(at[static_cast<Eigen::Index>(e)] == doctest::Approx(ref.phi(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(t))));
    }
    const Vec below = policy(t, 0.5 * ref.rho.col(static_cast<Eigen::Index>(t)));
    for (auto e : net.controlled()) {
      CHECK(below[static_cast<Eigen::Index>(e)] <= at[static_cast<Eigen::Index>(e)] + 1e-9);
    }
  }
  CHECK_THROWS_AS(policy(20, ref.rho.col(20)), std::out_of_range);

  // Closed loop at the reference realization reproduces the reference.
  const auto closed = simulate(net, Vec::Zero(3), ControlInput::policy(policy), real, 20);
  CHECK(closed.tts == doctest::Approx(ref.tts).epsilon(1e-9));
}

TEST_CASE("monotonicity holds with controlled merges and fails without") {
  const auto sc = load_scenario("example1");
  MonotonicityOptions opt;
  opt.trials = 200;
  opt.threads = 1;
  const auto controlled = check_monotonicity(TctmSpace(sc.net), sc.net, opt);
  CHECK(controlled.pass());
  CHECK(controlled.trials == 200);

  const auto open = uncontrolled_network(sc.net);
  opt.trials = 1000;
  const auto negative = check_monotonicity(TctmSpace(open), open, opt);
  CHECK(negative.violations > 0);
  REQUIRE(negative.witness.has_value());
  CHECK(negative.witness->lhs > negative.witness->rhs);
}

TEST_CASE("monotonicity report is reproducible for a fixed seed") {
  const auto sc = load_scenario("example1");
  MonotonicityOptions opt;
  opt.trials = 300;
  opt.threads = 4;
  const TctmSpace space(sc.net);
  const auto open = uncontrolled_network(sc.net);
  const TctmSpace open_space(open);
  const auto a = check_monotonicity(open_space, open, opt);
  opt.threads = 1;
  const auto b = check_monotonicity(open_space, open, opt);
  CHECK(a.violations == b.violations);
  CHECK(a.to_json() == b.to_json());
}
