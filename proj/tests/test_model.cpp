#include <doctest.h>

#include <cmath>

#include "fnc/errors.hpp"
#include "fnc/network.hpp"
#include "fnc/scenario.hpp"
#include "fnc/validation.hpp"
#include "support.hpp"

using namespace fnc;
using fnc::test::link;
using fnc::test::source_cell;
using fnc::test::triangular_cell;

TEST_CASE("concave pwa evaluates as the minimum of its pieces") {
  const ConcavePwa f({{100.0, 0.0}, {0.0, 2000.0}});
  CHECK(f(10.0) == doctest::Approx(1000.0));
  CHECK(f(50.0) == doctest::Approx(2000.0));
  CHECK(f.max_abs_slope() == doctest::Approx(100.0));
  CHECK(f.supremum().value() == doctest::Approx(2000.0));
  CHECK_FALSE(f.zero_crossing().has_value());

  const auto s = ConcavePwa::triangular_supply(2000.0, 120.0, 20.0);
  CHECK(s.zero_crossing().value() == doctest::Approx(120.0));
  CHECK(std::isinf(ConcavePwa::unbounded()(5.0)));
  CHECK_THROWS_AS(ConcavePwa({{NAN, 0.0}}), std::invalid_argument);
}

TEST_CASE("eval_demand on a triangular diagram") {
  const auto fd = FundamentalDiagram::triangular(100.0, 25.0, 2000.0, 120.0, 1);
  CHECK(eval_demand(fd, 10.0) == doctest::Approx(1000.0));
  CHECK(eval_demand(fd, 50.0) == doctest::Approx(2000.0));
}

TEST_CASE("eval_demand with a capacity drop above the critical density") {
  auto fd = FundamentalDiagram::triangular(100.0, 25.0, 2000.0, 120.0, 1);
  fd.capacity_drop = CapacityDrop{20.0, 0.15};
  CHECK(eval_demand(fd, 25.0) == doctest::Approx(0.85 * 2000.0));
  CHECK(eval_demand(fd, 15.0) == doctest::Approx(1500.0));
  CHECK(eval_demand(fd, 20.0) == doctest::Approx(2000.0));
}

TEST_CASE("eval_supply") {
  const auto two_lane = FundamentalDiagram::triangular(100.0, 20.0, 2000.0, 120.0, 2);
  CHECK(eval_supply(two_lane, 240.0) == doctest::Approx(0.0));
  CHECK(eval_supply(two_lane, 260.0) == 0.0);

  // (240 - 100) * 25 = 3500 < 4000
  const auto fd = FundamentalDiagram::triangular(100.0, 25.0, 2000.0, 120.0, 2);
  CHECK(eval_supply(fd, 100.0) == doctest::Approx(3500.0));

  const auto src = FundamentalDiagram::source(100.0, 2000.0, 1);
  CHECK(std::isinf(eval_supply(src, 0.0)));
  CHECK(std::isinf(eval_supply(src, 1e6)));
}

TEST_CASE("spectral radius check") {
  CHECK(spectral_radius_below_one(Mat::Zero(3, 3)));

  Mat cycle = Mat::Zero(2, 2);
  cycle(0, 1) = 1.0;
  cycle(1, 0) = 1.0;
  CHECK_FALSE(spectral_radius_below_one(cycle));

  Mat leaky = cycle * 0.9;
  CHECK(spectral_radius_below_one(leaky));

  const auto sc = load_scenario("example1");
  CHECK(spectral_radius_below_one(sc.net.routing()));
}

TEST_CASE("validate a 4-cell line with dt = l / v") {
  std::vector<Cell> cells{source_cell("e1", 0.5, 1)};
  for (int i = 2; i <= 4; ++i) cells.push_back(triangular_cell("e" + std::to_string(i), 0.5, 1));
  const NetworkModel net(cells, {link(0, 1), link(1, 2), link(2, 3)}, 0.5 / 100.0);
  const auto report = validate(net);
  CHECK(report.valid());
  CHECK(report.lp_eligible());

  const NetworkModel too_coarse(cells, {link(0, 1), link(1, 2), link(2, 3)}, 0.6 / 100.0);
  const auto bad = validate(too_coarse);
  REQUIRE_FALSE(bad.valid());
  CHECK(bad.violations.front().kind == IssueKind::SamplingTime);
}

TEST_CASE("capacity drop is valid for simulation but not LP-eligible") {
  const auto sc = load_scenario("example2");
  const auto report = validate(sc.net);
  CHECK(report.valid());
  CHECK_FALSE(report.lp_eligible());
  REQUIRE(report.lp_blockers.size() == 1);
  CHECK(report.lp_blockers.front().kind == IssueKind::CapacityDrop);
  CHECK_THROWS_WITH_AS(require_lp_eligible(sc.net), doctest::Contains("e4"), DomainError);
  CHECK_THROWS_AS(StudyContext(sc, HighsBackend{}), DomainError);
  CHECK_NOTHROW(require_lp_eligible(load_scenario("example1").net));
}

TEST_CASE("a merge whose input also diverges is rejected") {
  std::vector<Cell> cells{source_cell("a", 0.5, 1), source_cell("b", 0.5, 1), triangular_cell("c", 0.5, 1),
                          triangular_cell("d", 0.5, 1)};
  const NetworkModel net(cells, {link(0, 2), link(1, 2, 0.5), link(1, 3, 0.5)}, 0.004);
  const auto report = validate(net);
  REQUIRE_FALSE(report.valid());
  CHECK(std::any_of(report.violations.begin(), report.violations.end(),
                    [](const Issue& i) { return i.kind == IssueKind::MergeAlsoDiverges; }));
}

TEST_CASE("other structural violations") {
  std::vector<Cell> cells{source_cell("a", 0.5, 1), triangular_cell("b", 0.5, 1), triangular_cell("c", 0.5, 1)};
  SUBCASE("column sum above one") {
    const NetworkModel net(cells, {link(0, 1), link(1, 2, 0.7), link(1, 0, 0.6)}, 0.004);
    const auto report = validate(net);
    CHECK(std::any_of(report.violations.begin(), report.violations.end(),
                      [](const Issue& i) { return i.kind == IssueKind::ColumnSum; }));
  }
  SUBCASE("closed loop without exit") {
    const NetworkModel net(cells, {link(0, 1), link(1, 2), link(2, 1)}, 0.004);
    const auto report = validate(net);
    CHECK_FALSE(report.valid());
  }
  SUBCASE("bounded supply on a source") {
    cells[0] = triangular_cell("a", 0.5, 1);
    const NetworkModel net(cells, {link(0, 1), link(1, 2)}, 0.004);
    const auto report = validate(net);
    CHECK(std::any_of(report.violations.begin(), report.violations.end(),
                      [](const Issue& i) { return i.kind == IssueKind::SourceCapacity; }));
  }
}

TEST_CASE("network construction rejects malformed input") {
  std::vector<Cell> cells{source_cell("a", 0.5, 1), triangular_cell("b", 0.5, 1)};
  CHECK_THROWS_AS(NetworkModel(cells, {link(0, 5)}, 0.004), std::invalid_argument);
  CHECK_THROWS_AS(NetworkModel(cells, {link(0, 1), link(0, 1)}, 0.004), std::invalid_argument);
  CHECK_THROWS_AS(NetworkModel(cells, {link(0, 1)}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(NetworkModel({}, {}, 0.004), std::invalid_argument);
}

TEST_CASE("controlled set and actuation") {
  const auto merge = test::merge_toy();
  CHECK(merge.is_controlled(0));
  CHECK(merge.is_controlled(1));
  CHECK_FALSE(merge.is_controlled(2));
  CHECK(is_actuated(merge, 0));

  const auto open = test::merge_toy(MergeRule::ProportionalPriority);
  CHECK_FALSE(is_actuated(open, 0));

  const auto ramp = test::onramp_toy();
  CHECK(is_actuated(ramp, 1));
  CHECK_FALSE(is_actuated(ramp, 0));
}

TEST_CASE("routing matrix and exit fractions of Example 1") {
  const auto sc = load_scenario("example1");
  const auto& net = sc.net;
  REQUIRE(net.size() == 9);
  CHECK(net.beta(1, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(net.beta(4, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(net.beta(6, 5) == doctest::Approx(3.0 / 4.0));
  CHECK(net.beta(7, 5) == doctest::Approx(1.0 / 4.0));
  for (std::size_t e = 0; e < net.size(); ++e) {
    CHECK(net.exit_fraction(e) >= -1e-12);
    CHECK(net.exit_fraction(e) <= 1.0 + 1e-12);
  }
}
