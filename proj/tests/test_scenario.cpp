#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fnc/scenario.hpp"
#include "support.hpp"

using namespace fnc;
using io::json;

namespace {

const HighsBackend highs;

json minimal_scenario() {
  return json::parse(R"({
    "name": "tiny",
    "network": "networks/example2.json",
    "horizon_minutes": 2,
    "demand": {"e1": {"kind": "steps", "points": [[0, 1000]]}},
    "experiment": "speed_limit",
    "variants": [{"name": "base"}]
  })");
}

// Example 2 written out directly: 4-cell line, the last cell discharging at
// min{a rho, 3900} below the critical density and 85% of 3900 above it.
struct Ex2Oracle {
  double tts_per_lane = 0.0;
  double peak_e4 = 0.0;
};

Ex2Oracle example2_oracle(double v13) {
  const double dt = 12.0 / 3600.0;
  const double l = 0.5;
  const double F = 4000.0;
  const double jam = 240.0;
  const double w = 25.0;
  const int T = 150;
  double rho[4] = {0.0, 0.0, 0.0, 0.0};
  Ex2Oracle out;
  double total = 0.0;
  for (int k = 0; k < T; ++k) {
    const double minute = k * 12.0 / 60.0;
    const double w1 = minute >= 15.0 ? 0.0 : (minute >= 2.0 && minute < 4.0 ? 3950.0 : 3800.0);
    double d[4];
    double s[4];
    for (int i = 0; i < 3; ++i) d[i] = std::min(v13 * rho[i], F);
    d[3] = rho[3] <= 40.0 ? std::min(102.0 * rho[3], 3900.0) : 0.85 * 3900.0;
    for (int i = 0; i < 4; ++i) s[i] = std::min(F, (jam - rho[i]) * w);
    double phi[4];
    for (int i = 0; i < 3; ++i) phi[i] = std::min(d[i], s[i + 1]);
    phi[3] = d[3];
    const double in[4] = {w1, phi[0], phi[1], phi[2]};
    for (int i = 0; i < 4; ++i) rho[i] += dt / l * (in[i] - phi[i]);
    out.peak_e4 = std::max(out.peak_e4, rho[3]);
    for (int i = 0; i < 4; ++i) total += dt * l * rho[i];
  }
  out.tts_per_lane = total / 2.0;
  return out;
}

}  // namespace

TEST_CASE("profiles") {
  Profile steps{Profile::Kind::Steps, {{0.0, 100.0}, {10.0, 50.0}, {20.0, 0.0}}};
  CHECK(steps.at(0.0) == 100.0);
  CHECK(steps.at(9.99) == 100.0);
  CHECK(steps.at(10.0) == 50.0);
  CHECK(steps.at(100.0) == 0.0);
  Profile lin{Profile::Kind::Linear, {{0.0, 0.0}, {10.0, 100.0}}};
  CHECK(lin.at(5.0) == doctest::Approx(50.0));
  CHECK(lin.at(-1.0) == 0.0);
  CHECK(lin.at(30.0) == 100.0);
}

TEST_CASE("registered scenarios load") {
  const auto names = list_scenarios();
  for (const char* expected : {"example1", "example2", "study44"}) {
    CHECK(std::find(names.begin(), names.end(), expected) != names.end());
  }
  CHECK_THROWS_AS(load_scenario("no_such_scenario"), io::FormatError);

  const auto ex1 = load_scenario("example1");
  CHECK(ex1.net.size() == 9);
  CHECK(ex1.steps == 200);
  CHECK(ex1.experiment == Experiment::DemandIncrease);

  const auto ex2 = load_scenario("example2");
  CHECK(ex2.net.size() == 4);
  CHECK(ex2.steps == 150);
  CHECK(ex2.basis == TtsBasis::PerLane);
  REQUIRE(ex2.monitor.has_value());
  CHECK(ex2.monitor->cell == 3);

  const auto s44 = load_scenario("study44");
  CHECK(s44.net.size() == 44);
  CHECK(s44.steps == 480);
  CHECK(s44.net.dt() == doctest::Approx(15.0 / 3600.0));
  CHECK(s44.net.asymmetric_junctions().size() == 7);
  CHECK(validate(s44.net).lp_eligible());
}

TEST_CASE("ladders are ordered as data") {
  const auto sc = load_scenario("study44");
  REQUIRE(sc.demand_ladder.has_value());
  const auto& scales = sc.demand_ladder->scales;
  REQUIRE(scales.size() == 7);
  CHECK(scales.front() == 1.0);
  const Mat w = demand_matrix(sc.net, sc.demand, sc.steps);
  for (std::size_t k = 1; k < scales.size(); ++k) {
    const Mat a = ladder_demand(w, *sc.demand_ladder, k - 1);
    const Mat b = ladder_demand(w, *sc.demand_ladder, k);
    CHECK((b.array() <= a.array()).all());
  }
  REQUIRE(sc.kappa_ladder.has_value());
  CHECK(std::is_sorted(sc.kappa_ladder->values.begin(), sc.kappa_ladder->values.end()));
  CHECK(sc.kappa_ladder->values.front() >= 1.0);

  auto doc = minimal_scenario();
  const auto dir = scenario_directory();
  doc["demand_ladder"] = {{"scales", {1.0, 0.8, 0.9}}};
  CHECK_THROWS_AS(parse_scenario(doc, dir), io::FormatError);
  doc["demand_ladder"] = {{"scales", {0.9, 0.8}}};
  CHECK_THROWS_AS(parse_scenario(doc, dir), io::FormatError);
  doc.erase("demand_ladder");
  doc["kappa_ladder"] = {{"values", {0.5}}, {"cells", {"e1"}}};
  CHECK_THROWS_AS(parse_scenario(doc, dir), io::FormatError);
}

TEST_CASE("scenario documents are checked") {
  const auto dir = scenario_directory();
  CHECK_NOTHROW(parse_scenario(minimal_scenario(), dir));
  auto doc = minimal_scenario();
  SUBCASE("horizon not a whole number of steps") {
    doc["horizon_minutes"] = 0.1;
    CHECK_THROWS_AS(parse_scenario(doc, dir), io::FormatError);
  }
  SUBCASE("unknown key") {
    doc["horizon"] = 3;
    CHECK_THROWS_AS(parse_scenario(doc, dir), io::FormatError);
  }
  SUBCASE("demand on an unknown cell") {
    doc["demand"]["e9"] = {{"kind", "steps"}, {"points", {{0, 1}}}};
    CHECK_THROWS_AS(parse_scenario(doc, dir), io::FormatError);
  }
  SUBCASE("unknown experiment") {
    doc["experiment"] = "everything";
    CHECK_THROWS_AS(parse_scenario(doc, dir), io::FormatError);
  }
}

TEST_CASE("kappa scaling") {
  const auto fd = FundamentalDiagram::triangular(120.0, 30.0, 2000.0, 120.0, 2);
  const auto same = kappa_scaled(fd, 1.0);
  for (double rho : {0.0, 10.0, 40.0, 120.0, 200.0, 240.0}) {
    CHECK(eval_demand(same, rho) == doctest::Approx(eval_demand(fd, rho)));
    CHECK(eval_supply(same, rho) == doctest::Approx(eval_supply(fd, rho)));
  }
  const auto wider = kappa_scaled(fd, 1.5);
  CHECK(eval_demand(wider, 100.0) == doctest::Approx(std::min(120.0 * 100.0, 1.5 * 4000.0)));
  CHECK(eval_supply(wider, 300.0) == doctest::Approx(std::min(6000.0, (360.0 - 300.0) * 30.0)));

  const auto src = FundamentalDiagram::source(120.0, 2000.0, 1);
  const auto src_scaled = kappa_scaled(src, 2.0);
  CHECK(src_scaled.supply.is_unbounded());
  CHECK(eval_demand(src_scaled, 100.0) == doctest::Approx(4000.0));
}

TEST_CASE("Example 2 against a direct implementation") {
  const auto sc = load_scenario("example2");
  const auto report = run_scenario(sc, highs);
  const auto unlimited = example2_oracle(100.0);
  const auto limited = example2_oracle(70.0);
  CHECK(report.values.at("uncontrolled:unlimited") == doctest::Approx(unlimited.tts_per_lane).epsilon(1e-9));
  CHECK(report.values.at("uncontrolled:limited") == doctest::Approx(limited.tts_per_lane).epsilon(1e-9));
  CHECK(report.values.at("peak_density:limited") == doctest::Approx(limited.peak_e4).epsilon(1e-9));
  // Frozen from the direct implementation.
  CHECK(unlimited.tts_per_lane == doctest::Approx(15.1466).epsilon(1e-4));
  CHECK(limited.tts_per_lane == doctest::Approx(12.5793).epsilon(1e-4));
  CHECK(report.checks_pass());
}

TEST_CASE("Example 1 qualitative behaviour") {
  const auto sc = load_scenario("example1");
  const auto report = run_scenario(sc, highs);
  CHECK(report.checks_pass());
  CHECK(report.values.at("uncontrolled:high") < report.values.at("uncontrolled:low"));
  CHECK(report.values.at("optimal:high") >= report.values.at("optimal:low"));
  // Frozen from the direct CTM of the test support code.
  CHECK(report.values.at("uncontrolled:low") == doctest::Approx(678.015).epsilon(1e-5));
  CHECK(report.values.at("uncontrolled:high") == doctest::Approx(617.428).epsilon(1e-5));
  for (const auto& t : report.targets) CHECK(t.status != TargetStatus::Fail);
}

TEST_CASE("target grading") {
  ScenarioReport rep;
  rep.values = {{"a", 100.0}, {"b", 120.0}, {"c", 0.4}};
  rep.checks.push_back({"ordering", true, ""});
  const std::vector<Target> targets{{"a", "", 102.0, 0.05, false, false, false},
                                    {"b", "", 100.0, 0.05, false, true, false},
                                    {"b", "", 100.0, 0.05, false, false, false},
                                    {"c", "", 1.0, 0.0, false, false, true},
                                    {"missing", "", 1.0, 0.05, false, false, false}};
  grade_targets(rep, targets);
  REQUIRE(rep.targets.size() == 5);
  CHECK(rep.targets[0].status == TargetStatus::Pass);
  CHECK(rep.targets[1].status == TargetStatus::SoftPass);
  CHECK(rep.targets[2].status == TargetStatus::Fail);
  CHECK(rep.targets[3].status == TargetStatus::Pass);
  CHECK(rep.targets[4].status == TargetStatus::Fail);

  ScenarioReport failing;
  failing.values = {{"b", 120.0}};
  failing.checks.push_back({"ordering", false, ""});
  grade_targets(failing, {targets[1]});
  CHECK(failing.targets[0].status == TargetStatus::Fail);
  CHECK(to_string(TargetStatus::SoftPass) == "soft-pass");
}

TEST_CASE("reports are written as JSON and CSV and are reproducible") {
  const auto sc = load_scenario("example2");
  const auto a = run_scenario(sc, highs);
  const auto b = run_scenario(sc, highs);
  CHECK(a.to_json().dump() == b.to_json().dump());

  const auto dir = std::filesystem::temp_directory_path() / "fnc_test_report";
  std::filesystem::remove_all(dir);
  a.write(dir);
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "tts_by_variant.csv"));
  const auto doc = io::read_json(dir / "report.json");
  CHECK(doc["scenario"] == "example2");
  std::filesystem::remove_all(dir);
}
