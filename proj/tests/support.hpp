#pragma once

// Shared fixtures for the unit and acceptance tests: small hand-built
// networks, a random network generator and a plain CTM written without the
// library's flow code, used as an oracle.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "fnc/ctm.hpp"
#include "fnc/network.hpp"
#include "fnc/realization.hpp"
#include "fnc/validation.hpp"

namespace fnc::test {

inline Cell triangular_cell(std::string name, double length, int lanes, double v = 100.0, double w = 25.0,
                            double F = 2000.0, double jam = 120.0) {
  return Cell{std::move(name), length, lanes, FundamentalDiagram::triangular(v, w, F, jam, lanes)};
}

inline Cell source_cell(std::string name, double length, int lanes, double v = 100.0, double F = 2000.0) {
  return Cell{std::move(name), length, lanes, FundamentalDiagram::source(v, F, lanes)};
}

inline Link link(std::size_t from, std::size_t to, double beta = 1.0) {
  return Link{cell_id(from), cell_id(to), beta};
}

/// Two sources merging into a downstream cell that leaves the network.
inline NetworkModel merge_toy(MergeRule rule = MergeRule::Controlled, double dt = 18.0 / 3600.0) {
  std::vector<Cell> cells{source_cell("a", 0.5, 1), source_cell("b", 0.5, 1), triangular_cell("c", 0.5, 1)};
  return NetworkModel(std::move(cells), {link(0, 2), link(1, 2)}, dt, {}, MergeModel{rule, {}});
}

/// Onramp junction: mainline source, onramp source, downstream cell. Only the
/// onramp flow is actuated.
inline NetworkModel onramp_toy(double dt = 18.0 / 3600.0) {
  std::vector<Cell> cells{source_cell("main", 0.5, 2), source_cell("ramp", 0.5, 1), triangular_cell("down", 0.5, 2)};
  std::vector<AsymmetricJunction> asym{{cell_id(1), cell_id(0), cell_id(2)}};
  return NetworkModel(std::move(cells), {link(0, 2), link(1, 2)}, dt, asym, MergeModel{});
}

struct RandomNetwork {
  NetworkModel net;
  Vec rho0;
  Mat w;
};

/// Random valid network with `cells` cells and controlled merges (or the given
/// rule), with initial densities and external demands for `steps` steps.
/// Diverges send part of the flow out of the network; merge inputs have a
/// single successor.
inline RandomNetwork random_network(std::mt19937_64& rng, std::size_t cells, std::size_t steps,
                                    MergeRule rule = MergeRule::Controlled) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (;;) {
    const std::size_t sources = cells >= 5 && U(rng) < 0.5 ? 2 : 1;
    std::vector<Cell> cs;
    std::vector<Link> links;
    std::vector<std::size_t> open;  // cells without successors yet
    for (std::size_t i = 0; i < cells; ++i) {
      const int lanes = 1 + static_cast<int>(U(rng) * 2.0);
      const double length = 0.4 + 0.6 * U(rng);
      const std::string name = "e" + std::to_string(i + 1);
      if (i < sources) {
        cs.push_back(source_cell(name, length, lanes));
        open.push_back(i);
        continue;
      }
      cs.push_back(triangular_cell(name, length, lanes));
      if (open.size() >= 2 && U(rng) < 0.45) {
        // merge of two open cells
        std::shuffle(open.begin(), open.end(), rng);
        const auto a = open.back();
        open.pop_back();
        const auto b = open.back();
        open.pop_back();
        links.push_back(link(a, i));
        links.push_back(link(b, i));
      } else if (!open.empty() && U(rng) < 0.7) {
        std::shuffle(open.begin(), open.end(), rng);
        const auto p = open.back();
        open.pop_back();
        links.push_back(link(p, i, U(rng) < 0.3 ? 0.7 + 0.3 * U(rng) : 1.0));
      } else {
        // diverge from the last cell fed by a single link, if it has room
        std::size_t p = i - 1;
        double used = 0.0;
        for (const auto& l : links) {
          if (idx(l.from) == p) used += l.beta;
        }
        if (used > 0.8 || p < sources) {
          if (open.empty()) break;
          p = open.back();
          used = 0.0;
        }
        std::erase(open, p);
        links.push_back(link(p, i, std::min(1.0 - used, 0.2 + 0.5 * U(rng))));
      }
      open.push_back(i);
    }
    if (cs.size() != cells) continue;
    double min_len = std::numeric_limits<double>::infinity();
    for (const auto& c : cs) min_len = std::min(min_len, c.length_km);
    const double dt = 0.9 * min_len / 100.0;
    NetworkModel net(std::move(cs), std::move(links), dt, {}, MergeModel{rule, {}});
    if (!validate(net).valid()) continue;

    Vec rho0(static_cast<Eigen::Index>(cells));
    Mat w = Mat::Zero(static_cast<Eigen::Index>(cells), static_cast<Eigen::Index>(steps));
    for (std::size_t e = 0; e < cells; ++e) {
      const auto ee = static_cast<Eigen::Index>(e);
      const double lanes = net.cell(e).lanes;
      rho0[ee] = U(rng) * (net.is_source(e) ? 30.0 : 80.0) * lanes;
      if (net.is_source(e)) {
        const double level = (0.6 + 0.8 * U(rng)) * 2000.0 * lanes;
        const std::size_t on = std::max<std::size_t>(1, static_cast<std::size_t>(steps * (0.4 + 0.5 * U(rng))));
        for (std::size_t t = 0; t < std::min(on, steps); ++t) w(ee, static_cast<Eigen::Index>(t)) = level;
      }
    }
    return {std::move(net), std::move(rho0), std::move(w)};
  }
}

/// Uncontrolled CTM flows written from the junction rules alone: every cell
/// sends min over its successors of the proportional share of their supply
/// among the turning-ratio weighted demands.
inline Vec oracle_uncontrolled_flows(const NetworkModel& net, const Vec& rho, const UncertaintyRealization& real,
                                     std::size_t t) {
  const std::size_t n = net.size();
  std::vector<double> d(n);
  std::vector<double> s(n);
  for (std::size_t e = 0; e < n; ++e) {
    d[e] = real.demand(net, e, t, rho[static_cast<Eigen::Index>(e)]);
    s[e] = real.supply(net, e, t, rho[static_cast<Eigen::Index>(e)]);
  }
  Vec phi(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double share = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double b = net.beta(j, i);
      if (b <= 0.0 || std::isinf(s[j])) continue;
      double inflow = 0.0;
      for (std::size_t k = 0; k < n; ++k) inflow += net.beta(j, k) * d[k];
      if (inflow > 0.0) share = std::min(share, s[j] / inflow);
    }
    phi[static_cast<Eigen::Index>(i)] = d[i] * share;
  }
  return phi;
}

inline Vec oracle_update(const NetworkModel& net, const Vec& rho, const Vec& phi, const Vec& w) {
  Vec next = rho;
  for (std::size_t e = 0; e < net.size(); ++e) {
    double in = w[static_cast<Eigen::Index>(e)];
    for (std::size_t i = 0; i < net.size(); ++i) in += net.beta(e, i) * phi[static_cast<Eigen::Index>(i)];
    const auto ee = static_cast<Eigen::Index>(e);
    next[ee] += net.dt() / net.cell(e).length_km * (in - phi[ee]);
  }
  return next;
}

/// TTS of the uncontrolled system by the oracle, counting rho(0)..rho(T).
inline double oracle_uncontrolled_tts(const NetworkModel& net, const Vec& rho0, const UncertaintyRealization& real,
                                      std::size_t steps) {
  Vec rho = rho0;
  double total = 0.0;
  for (std::size_t t = 0;; ++t) {
    for (std::size_t e = 0; e < net.size(); ++e) total += net.cell(e).length_km * rho[static_cast<Eigen::Index>(e)];
    if (t == steps) break;
    const Vec phi = oracle_uncontrolled_flows(net, rho, real, t);
    rho = oracle_update(net, rho, phi, real.w_at(t));
  }
  return net.dt() * total;
}

}  // namespace fnc::test
