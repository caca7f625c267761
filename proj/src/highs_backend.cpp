#include <cmath>
#include <stdexcept>

#include "Highs.h"
#include "fnc/lp.hpp"

namespace fnc {

namespace {

HighsLp to_highs(const LpProblem& p) {
  HighsLp lp;
  lp.num_col_ = static_cast<HighsInt>(p.num_cols());
  lp.num_row_ = static_cast<HighsInt>(p.num_rows());
  lp.sense_ = ObjSense::kMinimize;
  lp.offset_ = p.offset;
  lp.col_cost_ = p.cost;
  lp.col_lower_ = p.col_lower;
  lp.col_upper_ = p.col_upper;
  lp.row_lower_ = p.row_lower;
  lp.row_upper_ = p.row_upper;
  lp.col_names_ = p.col_names;
  lp.row_names_ = p.row_names;
  for (auto* v : {&lp.col_lower_, &lp.col_upper_, &lp.row_lower_, &lp.row_upper_}) {
    for (auto& x : *v) {
      if (x == kLpInf) x = kHighsInf;
      if (x == -kLpInf) x = -kHighsInf;
    }
  }

  // Column-wise compressed storage.
  std::vector<HighsInt> count(p.num_cols() + 1, 0);
  for (const auto& e : p.entries) ++count[e.col + 1];
  for (std::size_t c = 0; c < p.num_cols(); ++c) count[c + 1] += count[c];
  auto& a = lp.a_matrix_;
  a.format_ = MatrixFormat::kColwise;
  a.num_col_ = lp.num_col_;
  a.num_row_ = lp.num_row_;
  a.start_ = count;
  a.index_.assign(p.entries.size(), 0);
  a.value_.assign(p.entries.size(), 0.0);
  std::vector<HighsInt> next(count.begin(), count.end() - 1);
  for (const auto& e : p.entries) {
    const auto k = next[e.col]++;
    a.index_[static_cast<std::size_t>(k)] = static_cast<HighsInt>(e.row);
    a.value_[static_cast<std::size_t>(k)] = e.value;
  }
  return lp;
}

}  // namespace

std::string HighsBackend::version() const { return highsVersion(); }

LpSolution HighsBackend::solve(const LpProblem& problem, const SolverOptions& options) const {
  Highs highs;
  highs.setOptionValue("output_flag", false);
  highs.setOptionValue("threads", 1);
  highs.setOptionValue("random_seed", static_cast<HighsInt>(options.seed % 2147483647ULL));
  highs.setOptionValue("primal_feasibility_tolerance", options.feasibility_tolerance);
  highs.setOptionValue("dual_feasibility_tolerance", options.optimality_tolerance);
  if (std::isfinite(options.time_limit_seconds)) highs.setOptionValue("time_limit", options.time_limit_seconds);

  LpSolution sol;
  if (highs.passModel(to_highs(problem)) == HighsStatus::kError) {
    sol.status = LpStatus::Error;
    sol.message = "model rejected by HiGHS";
    return sol;
  }
  const auto run = highs.run();
  const auto ms = highs.getModelStatus();
  sol.message = highs.modelStatusToString(ms);
  switch (ms) {
    case HighsModelStatus::kOptimal:
      sol.status = LpStatus::Optimal;
      break;
    case HighsModelStatus::kInfeasible:
      sol.status = LpStatus::Infeasible;
      break;
    case HighsModelStatus::kUnbounded:
    case HighsModelStatus::kUnboundedOrInfeasible:
      sol.status = LpStatus::Unbounded;
      break;
    case HighsModelStatus::kTimeLimit:
    case HighsModelStatus::kIterationLimit:
    case HighsModelStatus::kSolutionLimit:
    case HighsModelStatus::kInterrupt:
      sol.status = LpStatus::Limit;
      break;
    default:
      sol.status = LpStatus::Error;
  }
  if (run == HighsStatus::kError && sol.status == LpStatus::Optimal) sol.status = LpStatus::Error;
  if (sol.status == LpStatus::Optimal) {
    sol.objective = highs.getInfo().objective_function_value;
    sol.x = highs.getSolution().col_value;
  }
  return sol;
}

void HighsBackend::write_lp(const LpProblem& problem, const std::string& path) const {
  Highs highs;
  highs.setOptionValue("output_flag", false);
  if (highs.passModel(to_highs(problem)) == HighsStatus::kError || highs.writeModel(path) == HighsStatus::kError) {
    throw std::runtime_error("could not write LP file " + path);
  }
}

}  // namespace fnc
