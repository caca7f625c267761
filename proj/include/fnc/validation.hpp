#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fnc/network.hpp"

namespace fnc {

enum class IssueKind {
  SelfLoop,
  TurningRatioRange,
  ColumnSum,
  MergeAlsoDiverges,
  NoExitPath,
  SpectralRadius,
  SamplingTime,
  DemandShape,
  SupplyShape,
  SourceCapacity,
  AsymmetricShape,
  MergePriorities,
  RampCap,
  CapacityDrop,
};

std::string to_string(IssueKind kind);

struct Issue {
  IssueKind kind;
  std::optional<std::size_t> cell;
  std::string message;
};

/// All assumption violations of a network, collected rather than thrown.
/// `lp_blockers` holds features that are fine for simulation but exclude the
/// network from the linear-programming path (capacity drops).
struct ValidationReport {
  std::vector<Issue> violations;
  std::vector<Issue> lp_blockers;

  bool valid() const { return violations.empty(); }
  bool lp_eligible() const { return valid() && lp_blockers.empty(); }
  std::string to_text() const;
};

ValidationReport validate(const NetworkModel& network);

/// Throws DomainError listing every violation and LP blocker unless the
/// network is LP-eligible.
void require_lp_eligible(const NetworkModel& network);

enum class SpectralVerdict { BelowOne, NotBelowOne, Inconclusive };

struct SpectralCheck {
  SpectralVerdict verdict = SpectralVerdict::Inconclusive;
  /// Upper bound ||R^k||_inf^(1/k) at the last iterate.
  double upper_bound = 0.0;
  int squarings = 0;
};

/// Certifies rho(R) < 1 - eps for a nonnegative square matrix by repeated
/// squaring: ||R^k||^(1/k) bounds the spectral radius from above, and the
/// largest diagonal entry of R^k bounds rho(R)^k from below.
SpectralCheck spectral_radius_check(const Mat& routing, double eps = 1e-9, int max_squarings = 64);

inline bool spectral_radius_below_one(const Mat& routing) {
  return spectral_radius_check(routing).verdict == SpectralVerdict::BelowOne;
}

}  // namespace fnc
