// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "casgd/problem.hpp"
#include "casgd/sampling.hpp"

namespace casgd {

/// eta = scale / sqrt(T) for kConstantOverSqrtT, eta_t = scale / (mu t) for
/// kInverseMuT.
struct StepSchedule {
  enum class Kind { kConstantOverSqrtT, kInverseMuT };

  Kind kind = Kind::kConstantOverSqrtT;
  double scale = 1.0;
  std::optional<std::size_t> horizon;
  std::optional<double> mu;

  static StepSchedule constant_over_sqrt_t(double scale, std::size_t horizon);
  static StepSchedule inverse_mu_t(double mu, double scale = 1.0);

  void validate() const;
  /// Step size used for update t (1-based).
  double step(std::size_t t) const;
};

/// Constant schedule with scale multiplier * D / sqrt(S(p)), so that
/// eta = multiplier * D / (sqrt(S(p)) sqrt(T)).
StepSchedule default_constant_schedule(const FiniteSumProblem& problem, const SamplingDistribution& p,
                                       std::size_t horizon, double multiplier = 1.0);

struct IterateMode {
  enum class Kind { kAverage, kSuffixAverage, kLast };

  Kind kind = Kind::kAverage;
  /// Only meaningful for kSuffixAverage.
  double suffix_fraction = 0.5;

  static IterateMode average() { return {Kind::kAverage, 0.5}; }
  static IterateMode suffix(double fraction = 0.5) { return {Kind::kSuffixAverage, fraction}; }
  static IterateMode last() { return {Kind::kLast, 0.5}; }
};

/// kCostBudget stops after the first step whose cumulative cost reaches the
/// budget, so the last step may overshoot by less than its own cost.
struct StoppingRule {
  enum class Kind { kFixedT, kCostBudget, kErrorTarget };

  Kind kind = Kind::kFixedT;
  std::size_t iterations = 1000;
  double cost_budget = 0.0;
  double error_target = 1e-2;

  static StoppingRule fixed(std::size_t t) { return {Kind::kFixedT, t, 0.0, 0.0}; }
  static StoppingRule budget(double cost) { return {Kind::kCostBudget, 0, cost, 0.0}; }
  static StoppingRule target(double error) { return {Kind::kErrorTarget, 0, 0.0, error}; }
};

/// Refreshes the sampling distribution from instantaneous gradient norms.
struct DynamicRefresh {
  /// Weight by 1/sqrt(c_i) in addition to the norm.
  bool cost_aware = false;
  std::size_t refresh_every = 50;
  /// Mass kept on the static counterpart, (1 - mix) p_dyn + mix p_static.
  double mix = 0.3;
};

struct RunOptions {
  StepSchedule schedule;
  IterateMode mode;
  StoppingRule stop;
  std::uint64_t seed = 0;
  /// Unmetered evaluation cadence; 0 disables intermediate evaluations.
  std::size_t eval_every = 100;
  std::size_t max_iterations = 10'000'000;
  std::optional<DynamicRefresh> dynamic;
  /// Adds sum_i c_i to sweep_cost for each dynamic refresh.
  bool charge_dynamic_sweeps = false;
  /// Permits components with G_i > 0 outside the support. The estimator is
  /// then unbiased for (1/n) sum over the support only.
  bool allow_partial_support = false;
  /// Asserts domain membership after every update.
  bool check_domain_each_step = false;
  bool record_steps = true;
  /// f(x*) used for suboptimality; computed from true_minimizer when absent.
  std::optional<double> optimal_value;
  std::string strategy_name;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t index = 0;
  double cost = 0.0;
  double cumulative_cost = 0.0;
  std::optional<double> suboptimality;
};

struct RunTrace {
  std::vector<StepRecord> steps;
  Vector final_point;
  double total_cost = 0.0;
  std::uint64_t seed = 0;
  std::string strategy_name;
  std::size_t iterations = 0;
  /// Set when the error target was met.
  bool reached = false;
  /// Set when max_iterations ended the run before the stopping rule.
  bool budget_exhausted = false;
  std::optional<double> final_suboptimality;
  /// Cost charged for dynamic norm sweeps, kept apart from per-step costs.
  double sweep_cost = 0.0;
  std::size_t degenerate_refreshes = 0;
  std::size_t eval_every = 0;
};

/// Projected, importance-weighted SGD with cost metering.
RunTrace run(const FiniteSumProblem& problem, const SamplingDistribution& p, const RunOptions& options);

/// Euclidean projection onto the ball of the given diameter.
Vector project(const Vector& x, const Vector& center, double diameter);

/// CSV with header step,index,cost,cum_cost,error.
std::string trace_to_csv(const RunTrace& trace);

struct CompareOptions {
  std::vector<Strategy> strategies;
  std::vector<std::uint64_t> seeds;
  double error_target = 1e-2;
  std::size_t eval_every = 5;
  /// Nominal horizon of the constant schedule,
  /// eta = multiplier * D / (sqrt(S(p)) sqrt(horizon)).
  std::size_t horizon = 1;
  double step_multiplier = 1.5;
  IterateMode mode = IterateMode::last();
  /// Dynamic strategies reuse the step size of their static counterpart.
  std::size_t refresh_every = 10;
  double dynamic_mix = 0.3;
  std::size_t max_iterations = 10'000'000;
  std::size_t jobs = 1;
  bool keep_traces = false;
};

struct CompareRow {
  std::string strategy;
  std::uint64_t seed = 0;
  std::size_t iters_to_target = 0;
  double cost_to_target = 0.0;
  bool reached = false;
  std::string failure;
};

struct StrategySummary {
  std::string strategy;
  double mean_iters = 0.0;
  double stderr_iters = 0.0;
  double mean_cost = 0.0;
  double stderr_cost = 0.0;
  std::size_t reached = 0;
  std::size_t runs = 0;
};

struct ComparisonTable {
  std::vector<CompareRow> rows;
  std::vector<StrategySummary> summary;
  /// Traces in row order when CompareOptions::keep_traces is set.
  std::vector<RunTrace> traces;
};

/// Runs every (strategy, seed) cell to the error target or the iteration cap.
/// Rows are ordered by strategy then seed regardless of job count.
ComparisonTable compare_strategies(const FiniteSumProblem& problem, const CompareOptions& options);

/// CSV with header strategy,seed,iters_to_target,cost_to_target,reached.
std::string comparison_to_csv(const ComparisonTable& table);

/// Strategy names ordered by ascending mean cost-to-target.
std::vector<std::string> order_by_cost(const ComparisonTable& table);

}  // namespace casgd
