#include <doctest.h>

#include <sstream>

#include "fnc/io.hpp"
#include "fnc/scenario.hpp"
#include "support.hpp"

using namespace fnc;
using io::json;

namespace {

json line_doc() {
  return json::parse(R"({
    "name": "line",
    "dt_seconds": 18,
    "defaults": {"free_speed": 100, "wave_speed": 20, "lane_capacity": 2000, "lane_jam_density": 120},
    "cells": [
      {"name": "up", "length_km": 0.5},
      {"name": "mid", "length_km": 0.5, "lanes": 2},
      {"name": "off", "length_km": 0.5},
      {"name": "down", "length_km": 0.5}
    ],
    "links": [
      {"from": "up", "to": "mid"},
      {"from": "mid", "to": "off", "beta": "1/4"},
      {"from": "mid", "to": "down", "beta": 0.75}
    ]
  })");
}

}  // namespace

TEST_CASE("network document parsing") {
  const auto net = io::parse_network(line_doc());
  REQUIRE(net.size() == 4);
  CHECK(net.dt() == doctest::Approx(18.0 / 3600.0));
  CHECK(net.cell(1).lanes == 2);
  CHECK(net.beta(2, 1) == doctest::Approx(0.25));
  CHECK(net.beta(3, 1) == doctest::Approx(0.75));
  CHECK(net.cell(0).fd.supply.is_unbounded());
  CHECK(eval_supply(net.cell(1).fd, 140.0) == doctest::Approx(2000.0));
  CHECK(eval_demand(net.cell(1).fd, 50.0) == doctest::Approx(4000.0));
  CHECK(io::cell_index(net, "down") == 3);
  CHECK_THROWS_AS(io::cell_index(net, "nowhere"), io::FormatError);
}

TEST_CASE("network document errors name the offending entry") {
  auto doc = line_doc();
  SUBCASE("unknown key") {
    doc["cells"][0]["colour"] = "red";
    CHECK_THROWS_WITH_AS(io::parse_network(doc), doctest::Contains("colour"), io::FormatError);
  }
  SUBCASE("unknown cell in a link") {
    doc["links"][0]["to"] = "nowhere";
    CHECK_THROWS_WITH_AS(io::parse_network(doc), doctest::Contains("nowhere"), io::FormatError);
  }
  SUBCASE("bad ratio") {
    doc["links"][1]["beta"] = "1/0";
    CHECK_THROWS_AS(io::parse_network(doc), io::FormatError);
  }
  SUBCASE("unknown merge rule") {
    doc["merge_rule"] = "zipper";
    CHECK_THROWS_AS(io::parse_network(doc), io::FormatError);
  }
}

TEST_CASE("turning ratios") {
  CHECK(io::parse_ratio(json("2/3"), "x") == doctest::Approx(2.0 / 3.0));
  CHECK(io::parse_ratio(json(0.4), "x") == doctest::Approx(0.4));
  CHECK_THROWS_AS(io::parse_ratio(json("two thirds"), "x"), io::FormatError);
  CHECK_THROWS_AS(io::parse_ratio(json::array(), "x"), io::FormatError);
}

TEST_CASE("durations convert to whole steps") {
  const double dt = 15.0 / 3600.0;
  CHECK(io::duration_to_steps("10min", dt) == 40);
  CHECK(io::duration_to_steps("2m", dt) == 8);
  CHECK(io::duration_to_steps("600s", dt) == 40);
  CHECK(io::duration_to_steps("2h", dt) == 480);
  CHECK(io::duration_to_steps("12", dt) == 12);
  CHECK(io::duration_to_steps("0min", dt) == 0);
  CHECK_THROWS_AS(io::duration_to_steps("10s", dt), std::invalid_argument);
  CHECK_THROWS_AS(io::duration_to_steps("1.5", dt), std::invalid_argument);
  CHECK_THROWS_AS(io::duration_to_steps("ten min", dt), std::invalid_argument);
  CHECK_THROWS_AS(io::duration_to_steps("5 fortnights", dt), std::invalid_argument);
  CHECK_THROWS_AS(io::duration_to_steps("-5min", dt), std::invalid_argument);
}

TEST_CASE("trajectory CSV and summary") {
  const auto net = io::parse_network(line_doc());
  Mat w = Mat::Zero(4, 3);
  w.row(0).setConstant(1000.0);
  const UncertaintyRealization real(net, w);
  const auto tr = simulate(net, Vec::Zero(4), ControlInput::greedy(), real, 3);
  std::ostringstream os;
  io::write_trajectory_csv(os, net, tr);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "t,cell,rho,phi");
  std::size_t rows = 0;
  std::string last;
  while (std::getline(is, line)) {
    ++rows;
    last = line;
  }
  CHECK(rows == 4 * 4);
  CHECK(last.back() == ',');  // no flow after the final step

  const auto summary = io::trajectory_summary(tr);
  CHECK(summary["tts_hours"].get<double>() == doctest::Approx(tr.tts));
  CHECK(summary["steps"].get<std::size_t>() == 3);
  CHECK(summary["dt_seconds"].get<double>() == doctest::Approx(18.0));
  CHECK(summary["violations"]["demand_clamps"].get<std::size_t>() == 0);
}

TEST_CASE("contour data") {
  SUBCASE("empty trajectory gives a header-only file") {
    std::ostringstream os;
    io::write_contour_csv(os, Trajectory{});
    CHECK(os.str() == "t,cell_position_km,density\n");
    std::istringstream is(os.str());
    CHECK(io::read_contour_csv(is).size() == 0);
  }
  SUBCASE("round trip is exact") {
    std::mt19937_64 rng(1);
    const auto rn = test::random_network(rng, 6, 25);
    const auto tr = simulate(rn.net, rn.rho0, ControlInput::greedy(), UncertaintyRealization(rn.net, rn.w), 25);
    std::ostringstream os;
    io::write_contour_csv(os, tr);
    std::istringstream is(os.str());
    const Mat back = io::read_contour_csv(is);
    REQUIRE(back.rows() == tr.rho.rows());
    REQUIRE(back.cols() == tr.rho.cols());
    CHECK(back == tr.rho);
  }
  SUBCASE("study44 uncontrolled run covers 480 steps of 44 cells") {
    const auto sc = load_scenario("study44");
    const auto open = uncontrolled_network(sc.net);
    const auto tr = simulate(open, sc.rho0, ControlInput::greedy(),
                             UncertaintyRealization(open, demand_matrix(open, sc.demand, sc.steps)), sc.steps);
    std::ostringstream os;
    io::write_contour_csv(os, tr);
    const auto text = os.str();
    CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == 1 + 481 * 44);
    std::istringstream is(text);
    const Mat back = io::read_contour_csv(is);
    CHECK(back.rows() == 44);
    CHECK(back.cols() == 481);
  }
  SUBCASE("malformed files") {
    std::istringstream bad_header("time,x,y\n");
    CHECK_THROWS_AS(io::read_contour_csv(bad_header), io::FormatError);
    std::istringstream bad_row("t,cell_position_km,density\n0,abc,1\n");
    CHECK_THROWS_AS(io::read_contour_csv(bad_row), io::FormatError);
  }
}

TEST_CASE("FNV-1a hashes") {
  CHECK(io::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(io::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(io::fnv1a("foobar") == 0x85944171f73967e8ULL);
  CHECK(io::hex64(0xaf63dc4c8601ec8cULL) == "af63dc4c8601ec8c");
  CHECK(io::hex64(1) == "0000000000000001");
  // Chaining equals hashing the concatenation.
  CHECK(io::fnv1a("bar", io::fnv1a("foo")) == io::fnv1a("foobar"));
}
