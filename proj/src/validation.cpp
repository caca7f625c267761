#include "fnc/validation.hpp"

#include "fnc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>

namespace fnc {

namespace {

constexpr double kTol = 1e-9;

void add(std::vector<Issue>& out, IssueKind kind, std::optional<std::size_t> cell, std::string msg) {
  out.push_back({kind, cell, std::move(msg)});
}

std::string cell_label(const NetworkModel& net, std::size_t i) {
  const auto& name = net.cell(i).name;
  return name.empty() ? "cell " + std::to_string(i) : "cell " + std::to_string(i) + " (" + name + ")";
}

void check_diagram(const NetworkModel& net, std::size_t i, double gamma, ValidationReport& report) {
  const auto& c = net.cell(i);
  const auto& fd = c.fd;
  auto& v = report.violations;
  const auto label = cell_label(net, i);

  if (fd.demand.is_unbounded()) {
    add(v, IssueKind::DemandShape, i, label + ": demand function must be bounded");
    return;
  }
  for (const auto& p : fd.demand.pieces()) {
    if (p.slope < 0.0) {
      add(v, IssueKind::DemandShape, i, label + ": demand has a decreasing piece");
      break;
    }
  }
  if (std::abs(fd.demand(0.0)) > kTol) {
    add(v, IssueKind::DemandShape, i, label + ": demand at zero density is not zero");
  }

  const bool source = net.is_source(i);
  if (source && !fd.supply.is_unbounded()) {
    add(v, IssueKind::SourceCapacity, i, label + ": source cells must have unbounded supply");
  }
  if (!fd.supply.is_unbounded()) {
    for (const auto& p : fd.supply.pieces()) {
      if (p.slope > 0.0) {
        add(v, IssueKind::SupplyShape, i, label + ": supply has an increasing piece");
        break;
      }
    }
    const auto jam = fd.jam_density();
    if (!jam || *jam <= 0.0) {
      add(v, IssueKind::SupplyShape, i, label + ": supply never reaches zero at a positive density");
    } else if (fd.supply(0.0) < -kTol) {
      add(v, IssueKind::SupplyShape, i, label + ": supply is negative at zero density");
    }
  }

  // d(rho) <= gamma rho on a grid; exact for concave d with d(0) = 0 but cheap to confirm.
  const double top = fd.jam_density().value_or(fd.demand.supremum().value_or(1000.0) / std::max(gamma, 1e-12) * 4.0);
  for (int k = 1; k <= 64; ++k) {
    const double rho = top * k / 64.0;
    if (eval_demand(fd, rho) > gamma * rho * (1.0 + 1e-12) + kTol) {
      add(v, IssueKind::DemandShape, i, label + ": demand exceeds gamma * rho");
      break;
    }
  }

  if (gamma > 0.0 && net.dt() > c.length_km / gamma * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << label << ": sampling time " << net.dt() << " h exceeds l/gamma = " << c.length_km / gamma << " h";
    add(v, IssueKind::SamplingTime, i, os.str());
  }

  if (fd.capacity_drop) {
    const auto& drop = *fd.capacity_drop;
    if (drop.drop_fraction < 0.0 || drop.drop_fraction >= 1.0 || drop.critical_density < 0.0) {
      add(v, IssueKind::CapacityDrop, i, label + ": capacity drop parameters out of range");
    }
    add(report.lp_blockers, IssueKind::CapacityDrop, i,
        label + ": demand has a capacity drop (not concave), simulation only");
  }
}

}  // namespace

std::string to_string(IssueKind kind) {
  switch (kind) {
    case IssueKind::SelfLoop: return "self-loop";
    case IssueKind::TurningRatioRange: return "turning-ratio-range";
    case IssueKind::ColumnSum: return "column-sum";
    case IssueKind::MergeAlsoDiverges: return "merge-also-diverges";
    case IssueKind::NoExitPath: return "no-exit-path";
    case IssueKind::SpectralRadius: return "spectral-radius";
    case IssueKind::SamplingTime: return "sampling-time";
    case IssueKind::DemandShape: return "demand-shape";
    case IssueKind::SupplyShape: return "supply-shape";
    case IssueKind::SourceCapacity: return "source-capacity";
    case IssueKind::AsymmetricShape: return "asymmetric-shape";
    case IssueKind::MergePriorities: return "merge-priorities";
    case IssueKind::RampCap: return "ramp-cap";
    case IssueKind::CapacityDrop: return "capacity-drop";
  }
  return "unknown";
}

std::string ValidationReport::to_text() const {
  std::ostringstream os;
  os << (valid() ? "valid" : "INVALID") << ", lp_eligible=" << (lp_eligible() ? "true" : "false") << '\n';
  for (const auto& i : violations) os << "  violation [" << to_string(i.kind) << "] " << i.message << '\n';
  for (const auto& i : lp_blockers) os << "  lp-blocker [" << to_string(i.kind) << "] " << i.message << '\n';
  return os.str();
}

ValidationReport validate(const NetworkModel& net) {
  ValidationReport report;
  auto& v = report.violations;
  const std::size_t n = net.size();

  for (const auto& l : net.links()) {
    if (l.from == l.to) add(v, IssueKind::SelfLoop, idx(l.from), cell_label(net, idx(l.from)) + ": self-loop");
    if (!(l.beta > 0.0 && l.beta <= 1.0)) {
      add(v, IssueKind::TurningRatioRange, idx(l.from),
          cell_label(net, idx(l.from)) + ": turning ratio outside (0, 1]");
    }
  }

  for (std::size_t e = 0; e < n; ++e) {
    if (net.exit_fraction(e) < -1e-12) {
      add(v, IssueKind::ColumnSum, e, cell_label(net, e) + ": outgoing turning ratios sum above one");
    }
  }

  // Merging junctions have out-degree one: every inflow to a merge feeds only it.
  for (auto j : net.merge_cells()) {
    for (auto i : net.predecessors(j)) {
      if (net.successors(i).size() != 1) {
        add(v, IssueKind::MergeAlsoDiverges, j,
            "junction upstream of " + cell_label(net, j) + " is both merging and diverging");
        break;
      }
    }
  }

  // Every cell must reach a cell from which traffic leaves the network.
  {
    std::vector<bool> reaches(n, false);
    std::deque<std::size_t> queue;
    for (std::size_t e = 0; e < n; ++e) {
      if (net.exit_fraction(e) > 1e-12) {
        reaches[e] = true;
        queue.push_back(e);
      }
    }
    while (!queue.empty()) {
      const auto e = queue.front();
      queue.pop_front();
      for (auto i : net.predecessors(e)) {
        if (!reaches[i]) {
          reaches[i] = true;
          queue.push_back(i);
        }
      }
    }
    for (std::size_t e = 0; e < n; ++e) {
      if (!reaches[e]) add(v, IssueKind::NoExitPath, e, cell_label(net, e) + ": no directed path to an exit");
    }
  }

  const auto spectral = spectral_radius_check(net.routing());
  if (spectral.verdict != SpectralVerdict::BelowOne) {
    add(v, IssueKind::SpectralRadius, std::nullopt,
        spectral.verdict == SpectralVerdict::Inconclusive
            ? "spectral radius of the routing matrix could not be certified below one"
            : "spectral radius of the routing matrix is not below one");
  }

  const double gamma = net.gamma();
  for (std::size_t i = 0; i < n; ++i) check_diagram(net, i, gamma, report);

  for (const auto& a : net.asymmetric_junctions()) {
    const auto j = idx(a.downstream);
    const auto& preds = net.predecessors(j);
    const bool shape_ok = preds.size() == 2 && a.onramp != a.mainline &&
                          std::find(preds.begin(), preds.end(), idx(a.onramp)) != preds.end() &&
                          std::find(preds.begin(), preds.end(), idx(a.mainline)) != preds.end();
    if (!shape_ok) {
      add(v, IssueKind::AsymmetricShape, j,
          "asymmetric junction into " + cell_label(net, j) + " must have exactly the onramp and mainline upstream");
    }
  }

  if (net.merge_model().rule == MergeRule::DaganzoPriority) {
    for (const auto& [j, prio] : net.merge_model().priorities) {
      if (j >= n || !net.is_merge_cell(j) || prio.size() != net.predecessors(j).size()) {
        add(v, IssueKind::MergePriorities, j < n ? std::optional(j) : std::nullopt,
            "merge priorities do not match the merge into cell " + std::to_string(j));
        continue;
      }
      const double sum = std::accumulate(prio.begin(), prio.end(), 0.0);
      const bool nonneg = std::all_of(prio.begin(), prio.end(), [](double p) { return p >= 0.0; });
      if (!nonneg || std::abs(sum - 1.0) > 1e-9) {
        add(v, IssueKind::MergePriorities, j, "merge priorities into " + cell_label(net, j) + " must be >= 0 and sum to 1");
      }
    }
  }

  for (const auto& [c, cap] : net.ramp_caps()) {
    if (!net.is_source(c) || cap < 0.0) {
      add(v, IssueKind::RampCap, c, cell_label(net, c) + ": ramp caps apply to source cells and must be >= 0");
    }
  }

  return report;
}

SpectralCheck spectral_radius_check(const Mat& routing, double eps, int max_squarings) {
  SpectralCheck out;
  if (routing.rows() != routing.cols()) {
    out.verdict = SpectralVerdict::Inconclusive;
    return out;
  }
  if (routing.size() == 0) {
    out.verdict = SpectralVerdict::BelowOne;
    return out;
  }
  Mat m = routing;
  double power = 1.0;
  for (int s = 0; s <= max_squarings; ++s) {
    out.squarings = s;
    const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();
    if (norm == 0.0) {
      out.upper_bound = 0.0;
      out.verdict = SpectralVerdict::BelowOne;
      return out;
    }
    out.upper_bound = std::pow(norm, 1.0 / power);
    if (out.upper_bound < 1.0 - eps) {
      out.verdict = SpectralVerdict::BelowOne;
      return out;
    }
    // rho(R^k) >= max diagonal entry for nonnegative matrices.
    if (m.diagonal().maxCoeff() >= 1.0 - 1e-12 || !std::isfinite(norm) || norm > 1e300) {
      out.verdict = SpectralVerdict::NotBelowOne;
      return out;
    }
    m = m * m;
    power *= 2.0;
  }
  out.verdict = SpectralVerdict::Inconclusive;
  return out;
}

void require_lp_eligible(const NetworkModel& net) {
  const auto report = validate(net);
  if (report.lp_eligible()) return;
  std::string msg = "network is not LP-eligible:";
  for (const auto& i : report.violations) msg += " " + i.message + ";";
  for (const auto& i : report.lp_blockers) msg += " " + i.message + ";";
  msg.pop_back();
  throw DomainError(msg);
}

}  // namespace fnc
