#include <doctest.h>

#include <random>

#include "fnc/ctm.hpp"
#include "fnc/scenario.hpp"
#include "support.hpp"

using namespace fnc;
using fnc::test::link;
using fnc::test::source_cell;
using fnc::test::triangular_cell;

TEST_CASE("proportional merge") {
  const std::vector<double> a{1000.0, 3000.0};
  auto f = merge_proportional(a, 2000.0);
  CHECK(f[0] == doctest::Approx(500.0));
  CHECK(f[1] == doctest::Approx(1500.0));

  const std::vector<double> b{1000.0, 500.0};
  f = merge_proportional(b, 4000.0);
  CHECK(f[0] == doctest::Approx(1000.0));
  CHECK(f[1] == doctest::Approx(500.0));

  const std::vector<double> z{0.0, 0.0};
  f = merge_proportional(z, 100.0);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 0.0);
  f = merge_proportional(z, 0.0);
  CHECK(f[0] == 0.0);
}

TEST_CASE("priority merge") {
  const std::vector<double> p{0.5, 0.5};
  const std::vector<double> a{1000.0, 1000.0};
  auto f = merge_daganzo(a, 3000.0, p);
  CHECK(f[0] == doctest::Approx(1000.0));
  CHECK(f[1] == doctest::Approx(1000.0));

  const std::vector<double> b{2000.0, 2000.0};
  f = merge_daganzo(b, 2000.0, p);
  CHECK(f[0] == doctest::Approx(1000.0));
  CHECK(f[1] == doctest::Approx(1000.0));

  // The first input uses less than its share; the second takes the rest.
  const std::vector<double> c{500.0, 2000.0};
  f = merge_daganzo(c, 2000.0, p);
  CHECK(f[0] == doctest::Approx(500.0));
  CHECK(f[1] == doctest::Approx(1500.0));

  const std::vector<double> q{0.25, 0.75};
  f = merge_daganzo(b, 2000.0, q);
  CHECK(f[0] == doctest::Approx(500.0));
  CHECK(f[1] == doctest::Approx(1500.0));
}

TEST_CASE("asymmetric mainline flow") {
  auto m = asymmetric_mainline_flow(3000.0, 4000.0, 500.0);
  CHECK(m.flow == doctest::Approx(3000.0));
  CHECK_FALSE(m.violation);
  m = asymmetric_mainline_flow(3000.0, 3000.0, 500.0);
  CHECK(m.flow == doctest::Approx(2500.0));
  CHECK_FALSE(m.violation);
  m = asymmetric_mainline_flow(1000.0, 900.0, 1000.0);
  CHECK(m.flow == 0.0);
  CHECK(m.violation);
}

TEST_CASE("empty network stays empty") {
  const auto sc = load_scenario("example1");
  const UncertaintyRealization real(sc.net, Mat::Zero(9, 10));
  const Vec zero = Vec::Zero(9);
  const auto r = step(sc.net, zero, Vec::Zero(9), real, 0);
  CHECK(r.next.isZero());
  CHECK(r.flows.isZero());
  const auto tr = simulate(sc.net, zero, ControlInput::greedy(), real, 10);
  CHECK(tr.tts == 0.0);
}

TEST_CASE("single cell draining into free space") {
  // rho' = 10 - (dt / l) * 1000 with dt = 1/240 h, l = 0.5 km
  const NetworkModel net({triangular_cell("e1", 0.5, 1, 100.0, 25.0, 2000.0, 120.0)}, {}, 1.0 / 240.0);
  const UncertaintyRealization real(net, Mat::Zero(1, 1));
  Vec rho(1);
  rho << 10.0;
  const auto r = step(net, rho, Vec::Zero(1), real, 0);
  CHECK(r.flows[0] == doctest::Approx(1000.0));
  CHECK(r.next[0] == doctest::Approx(10.0 - 1000.0 / 120.0));
  CHECK(r.next[0] == doctest::Approx(1.6667).epsilon(1e-4));
}

TEST_CASE("controlled merge requests above the downstream supply are scaled") {
  const auto net = test::merge_toy();
  const UncertaintyRealization real(net, Mat::Zero(3, 1));
  Vec rho(3);
  rho << 30.0, 30.0, 100.0;  // supply of c: (120 - 100) * 25 = 500
  Vec req(3);
  req << 2500.0, 2500.0, 0.0;
  std::vector<SimEvent> events;
  const auto phi = compute_flows(net, rho, req, real, 0, &events);
  CHECK(phi[0] + phi[1] <= 500.0 + 1e-9);
  CHECK(phi[0] == doctest::Approx(250.0));
  CHECK(phi[1] == doctest::Approx(250.0));
  CHECK(std::any_of(events.begin(), events.end(), [](const SimEvent& e) { return e.kind == EventKind::SupplyScale; }));
  CHECK(std::any_of(events.begin(), events.end(), [](const SimEvent& e) { return e.kind == EventKind::DemandClamp; }));
}

TEST_CASE("raw mode takes requests verbatim") {
  const auto net = test::merge_toy();
  const UncertaintyRealization real(net, Mat::Zero(3, 1));
  Vec rho(3);
  rho << 30.0, 30.0, 0.0;
  Vec req(3);
  req << 100.0, 200.0, 0.0;
  const auto phi = compute_flows(net, rho, req, real, 0, nullptr, ClampMode::Raw);
  CHECK(phi[0] == 100.0);
  CHECK(phi[1] == 200.0);
}

TEST_CASE("uncontrolled simulation agrees with the oracle CTM") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t cells = 3 + static_cast<std::size_t>(trial % 6);
    const auto rn = test::random_network(rng, cells, 30, MergeRule::ProportionalPriority);
    const UncertaintyRealization real(rn.net, rn.w);
    const auto tr = simulate(rn.net, rn.rho0, ControlInput::greedy(), real, 30);
    const double oracle = test::oracle_uncontrolled_tts(rn.net, rn.rho0, real, 30);
    CHECK(tr.tts == doctest::Approx(oracle).epsilon(1e-9));
  }

  const auto sc = load_scenario("example1");
  for (const auto& v : sc.variants) {
    const auto net = uncontrolled_network(variant_network(sc, v));
    const UncertaintyRealization real(net, variant_demand(sc, net, v));
    const auto tr = simulate(net, sc.rho0, ControlInput::greedy(), real, sc.steps);
    CHECK(tr.tts == doctest::Approx(test::oracle_uncontrolled_tts(net, sc.rho0, real, sc.steps)).epsilon(1e-9));
  }
}

TEST_CASE("TTS counts every stored step") {
  Mat rho(2, 3);
  rho << 1, 2, 3, 4, 5, 6;
  Vec len(2);
  len << 0.5, 2.0;
  // dt * (0.5 * (1 + 2 + 3) + 2 * (4 + 5 + 6))
  CHECK(total_time_spent(rho, len, 0.1) == doctest::Approx(0.1 * (3.0 + 30.0)));
}

TEST_CASE("asymmetric assumption check") {
  SUBCASE("vacuous without onramp junctions") {
    const auto net = test::merge_toy();
    Mat w = Mat::Zero(3, 5);
    w.topRows(2).setConstant(500.0);
    const UncertaintyRealization real(net, w);
    const auto tr = simulate(net, Vec::Zero(3), ControlInput::greedy(), real, 5);
    const auto check = verify_asymmetric_assumption(tr, net, real);
    CHECK(check.pass);
    CHECK(check.checks == 0);
  }
  SUBCASE("light onramp demand against ample supply") {
    const auto net = test::onramp_toy();
    Mat w = Mat::Zero(3, 20);
    w.row(1).setConstant(500.0);
    w.row(0).setConstant(1000.0);
    const UncertaintyRealization real(net, w);
    const auto tr = simulate(net, Vec::Zero(3), ControlInput::greedy(), real, 20);
    const auto check = verify_asymmetric_assumption(tr, net, real);
    CHECK(check.pass);
    CHECK(check.checks > 0);
  }
  SUBCASE("onramp demand above a jammed downstream supply fails") {
    const auto net = test::onramp_toy();
    const UncertaintyRealization real(net, Mat::Zero(3, 1));
    Vec rho(3);
    rho << 0.0, 100.0, 235.0;
    const auto tr = simulate(net, rho, ControlInput::greedy(), real, 1);
    const auto check = verify_asymmetric_assumption(tr, net, real);
    CHECK_FALSE(check.pass);
    REQUIRE_FALSE(check.failures.empty());
    CHECK(check.failures.front().onramp == 1);
  }
}

TEST_CASE("realization overrides and windows") {
  const auto net = test::merge_toy();
  Mat w(3, 4);
  w << 1, 2, 3, 4, 5, 6, 7, 8, 0, 0, 0, 0;
  UncertaintyRealization real(net, w);
  CHECK(real.w(0, 2) == 3.0);
  CHECK(real.w(0, 9) == 0.0);
  real.set_demand_sequence(2, {FlowFunction(ConcavePwa({{50.0, 0.0}})), FlowFunction(ConcavePwa({{10.0, 0.0}}))});
  CHECK(real.demand(net, 2, 0, 2.0) == doctest::Approx(100.0));
  CHECK(real.demand(net, 2, 7, 2.0) == doctest::Approx(20.0));
  const auto win = real.window(1, 2);
  CHECK(win.steps() == 2);
  CHECK(win.w(1, 0) == 6.0);
  CHECK(win.demand(net, 2, 0, 2.0) == doctest::Approx(20.0));
}
