// SPDX-License-Identifier: Apache-2.0
#include "casgd/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <exception>
#include <sstream>
#include <utility>

#include "casgd/analysis.hpp"
#include "casgd/error.hpp"
#include "format.hpp"
#include "parallel.hpp"

namespace casgd {

StepSchedule StepSchedule::constant_over_sqrt_t(double scale, std::size_t horizon) {
  StepSchedule s;
  s.kind = Kind::kConstantOverSqrtT;
  s.scale = scale;
  s.horizon = horizon;
  s.validate();
  return s;
}

StepSchedule StepSchedule::inverse_mu_t(double mu, double scale) {
  StepSchedule s;
  s.kind = Kind::kInverseMuT;
  s.scale = scale;
  s.mu = mu;
  s.validate();
  return s;
}

void StepSchedule::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) fail(ErrorCode::kInvalidRange, "step schedule: scale must be positive");
  if (kind == Kind::kConstantOverSqrtT) {
    if (!horizon || *horizon == 0) fail(ErrorCode::kInvalidArgument, "constant schedule requires a positive horizon");
  } else {
    if (!mu || !(*mu > 0.0)) fail(ErrorCode::kInvalidArgument, "inverse-mu-t schedule requires mu > 0");
  }
}

double StepSchedule::step(std::size_t t) const {
  if (kind == Kind::kConstantOverSqrtT) return scale / std::sqrt(static_cast<double>(*horizon));
  return scale / (*mu * static_cast<double>(t));
}

StepSchedule default_constant_schedule(const FiniteSumProblem& problem, const SamplingDistribution& p,
                                       std::size_t horizon, double multiplier) {
  if (!(multiplier > 0.0)) fail(ErrorCode::kInvalidRange, "step multiplier must be positive");
  const auto g = problem.lipschitz_bounds();
  const double s = second_moment_bound(g, p, problem.size());
  if (!(s > 0.0)) fail(ErrorCode::kDegenerate, "default schedule: S(p) is zero");
  return StepSchedule::constant_over_sqrt_t(multiplier * problem.domain().diameter / std::sqrt(s), horizon);
}

Vector project(const Vector& x, const Vector& center, double diameter) {
  if (x.size() != center.size()) fail(ErrorCode::kInvalidSize, "project: dimension mismatch");
  if (!(diameter > 0.0)) fail(ErrorCode::kInvalidRange, "project: diameter must be positive");
  if (!x.allFinite() || !center.allFinite()) fail(ErrorCode::kNumeric, "project: non-finite input");
  const double radius = 0.5 * diameter;
  const Vector offset = x - center;
  const double norm = offset.norm();
  if (norm <= radius) return x;
  return center + offset * (radius / norm);
}

namespace {

/// Tracks the output point for the configured iterate mode over the
/// post-update iterates x_2, ..., x_{t+1}.
class IterateTracker {
 public:
  IterateTracker(IterateMode mode, Eigen::Index d) : mode_(mode), sum_(Vector::Zero(d)) {
    if (mode_.kind == IterateMode::Kind::kSuffixAverage &&
        !(mode_.suffix_fraction > 0.0 && mode_.suffix_fraction <= 1.0)) {
      fail(ErrorCode::kInvalidRange, "suffix fraction must lie in (0, 1]");
    }
    if (mode_.kind == IterateMode::Kind::kSuffixAverage) prefix_.emplace_back(0, sum_);
  }

  void push(const Vector& x) {
    ++count_;
    last_ = x;
    if (mode_.kind == IterateMode::Kind::kLast) return;
    sum_ += x;
    if (mode_.kind == IterateMode::Kind::kSuffixAverage) {
      prefix_.emplace_back(count_, sum_);
      const std::size_t start = window_start(count_);
      while (prefix_.size() > 1 && prefix_[1].first <= start) prefix_.pop_front();
    }
  }

  Vector output() const {
    switch (mode_.kind) {
      case IterateMode::Kind::kLast: return last_;
      case IterateMode::Kind::kAverage: return sum_ / static_cast<double>(count_);
      case IterateMode::Kind::kSuffixAverage: {
        const std::size_t start = window_start(count_);
        // Front entry is the prefix sum at index `start`.
        return (sum_ - prefix_.front().second) / static_cast<double>(count_ - start);
      }
    }
    return last_;
  }

 private:
  /// Number of leading iterates excluded from the suffix window.
  std::size_t window_start(std::size_t t) const {
    const auto keep = static_cast<std::size_t>(std::ceil(mode_.suffix_fraction * static_cast<double>(t)));
    return t - std::clamp<std::size_t>(keep, 1, t);
  }

  IterateMode mode_;
  std::size_t count_ = 0;
  Vector sum_;
  Vector last_;
  std::deque<std::pair<std::size_t, Vector>> prefix_;
};

SamplingDistribution refreshed_distribution(const FiniteSumProblem& problem, const Vector& x,
                                            const SamplingDistribution& anchor, const DynamicRefresh& dyn,
                                            const std::vector<double>& costs, bool& degenerate) {
  std::vector<double> w = dynamic_gradient_norms(problem, x);
  if (dyn.cost_aware) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] /= std::sqrt(costs[i]);
  }
  double total = 0.0;
  for (double v : w) total += v;
  degenerate = !(total > 0.0);
  const SamplingDistribution fresh =
      degenerate ? uniform_distribution(w.size()) : SamplingDistribution::from_weights(w);
  return mix(fresh, anchor, dyn.mix);
}

}  // namespace

RunTrace run(const FiniteSumProblem& problem, const SamplingDistribution& p, const RunOptions& options) {
  const std::size_t n = problem.size();
  if (p.size() != n) fail(ErrorCode::kInvalidSize, "run: distribution size does not match the problem");
  options.schedule.validate();
  const auto lipschitz = problem.lipschitz_bounds();
  for (std::size_t i = 0; i < n; ++i) {
    if (!options.allow_partial_support && lipschitz[i] > 0.0 && !p.in_support(i)) {
      fail(ErrorCode::kUnboundedMoment, "run: component with G_i > 0 lies outside the support");
    }
  }
  if (options.dynamic) {
    if (options.dynamic->refresh_every == 0) fail(ErrorCode::kInvalidArgument, "dynamic refresh interval must be positive");
    if (!(options.dynamic->mix >= 0.0 && options.dynamic->mix <= 1.0)) {
      fail(ErrorCode::kInvalidRange, "dynamic mix must lie in [0, 1]");
    }
  }
  const auto& stop = options.stop;
  if (stop.kind == StoppingRule::Kind::kErrorTarget && !(stop.error_target > 0.0)) {
    fail(ErrorCode::kInvalidRange, "error target must be positive");
  }
  if (stop.kind == StoppingRule::Kind::kCostBudget && !(stop.cost_budget >= 0.0)) {
    fail(ErrorCode::kInvalidRange, "cost budget must be nonnegative");
  }

  const auto costs = problem.costs();
  const BallDomain& domain = problem.domain();
  const double f_star = options.optimal_value ? *options.optimal_value : true_minimizer(problem).value;

  RunTrace trace;
  trace.seed = options.seed;
  trace.strategy_name = options.strategy_name;
  trace.eval_every = options.eval_every;

  Engine engine = make_engine(options.seed, Stream::kSampling);
  Vector x = domain.center;
  IterateTracker tracker(options.mode, problem.dimension());
  SamplingDistribution current = p;
  const double sweep_charge = [&] {
    double s = 0.0;
    for (double c : costs) s += c;
    return s;
  }();

  std::size_t limit = options.max_iterations;
  if (stop.kind == StoppingRule::Kind::kFixedT) limit = std::min(limit, stop.iterations);
  if (stop.kind == StoppingRule::Kind::kCostBudget && stop.cost_budget == 0.0) limit = 0;

  double cumulative = 0.0;
  bool stopped = false;
  std::size_t t = 0;
  while (t < limit) {
    ++t;
    if (options.dynamic && (t - 1) % options.dynamic->refresh_every == 0) {
      bool degenerate = false;
      current = refreshed_distribution(problem, x, p, *options.dynamic, costs, degenerate);
      if (degenerate) ++trace.degenerate_refreshes;
      if (options.charge_dynamic_sweeps) trace.sweep_cost += sweep_charge;
    }
    const std::size_t i = current.draw(engine);
    if (!current.in_support(i)) fail(ErrorCode::kInternal, "run: sampled an index with zero probability");
    const EvaluationResult eval = component_gradient(problem, i, x);
    const double weight = 1.0 / (static_cast<double>(n) * current[i]);
    x = project(x - (options.schedule.step(t) * weight) * eval.gradient, domain.center, domain.diameter);
    if (options.check_domain_each_step) problem.check_in_domain(x);
    tracker.push(x);
    cumulative += eval.incurred_cost;

    StepRecord record{t, i, eval.incurred_cost, cumulative, std::nullopt};
    if (options.eval_every > 0 && t % options.eval_every == 0) {
      record.suboptimality = objective(problem, tracker.output()) - f_star;
      if (stop.kind == StoppingRule::Kind::kErrorTarget && *record.suboptimality <= stop.error_target) {
        trace.reached = true;
        stopped = true;
      }
    }
    if (stop.kind == StoppingRule::Kind::kCostBudget && cumulative >= stop.cost_budget) stopped = true;
    if (stop.kind == StoppingRule::Kind::kFixedT && t == stop.iterations) stopped = true;
    if (options.record_steps) trace.steps.push_back(record);
    if (stopped) break;
  }
  if (!stopped && !(stop.kind == StoppingRule::Kind::kCostBudget && stop.cost_budget == 0.0)) {
    trace.budget_exhausted = true;
  }
  trace.iterations = t;
  trace.total_cost = cumulative;
  trace.final_point = t > 0 ? tracker.output() : x;
  trace.final_suboptimality = objective(problem, trace.final_point) - f_star;
  return trace;
}

std::string trace_to_csv(const RunTrace& trace) {
  std::ostringstream out;
  out << "step,index,cost,cum_cost,error\n";
  for (const auto& s : trace.steps) {
    out << s.step << ',' << s.index << ',' << detail::format_double(s.cost) << ','
        << detail::format_double(s.cumulative_cost) << ',';
    if (s.suboptimality) out << detail::format_double(*s.suboptimality);
    out << '\n';
  }
  return out.str();
}

namespace {

struct Cell {
  std::size_t strategy = 0;
  std::size_t seed = 0;
};

std::pair<double, double> mean_and_stderr(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {m, sd / std::sqrt(static_cast<double>(v.size()))};
}

}  // namespace

ComparisonTable compare_strategies(const FiniteSumProblem& problem, const CompareOptions& options) {
  if (options.strategies.empty()) fail(ErrorCode::kInvalidArgument, "compare: strategy list is empty");
  if (options.seeds.empty()) fail(ErrorCode::kInvalidArgument, "compare: seed list is empty");
  if (!(options.error_target > 0.0)) fail(ErrorCode::kInvalidRange, "compare: error target must be positive");
  if (options.horizon == 0) fail(ErrorCode::kInvalidArgument, "compare: horizon must be positive");

  const auto lipschitz = problem.lipschitz_bounds();
  const auto costs = problem.costs();
  const double f_star = true_minimizer(problem).value;

  std::vector<Cell> cells;
  for (std::size_t s = 0; s < options.strategies.size(); ++s) {
    for (std::size_t k = 0; k < options.seeds.size(); ++k) cells.push_back({s, k});
  }
  std::vector<CompareRow> rows(cells.size());
  std::vector<RunTrace> traces(options.keep_traces ? cells.size() : 0);

  auto run_cell = [&](std::size_t c) {
    const Strategy& strategy = options.strategies[cells[c].strategy];
    const std::uint64_t seed = options.seeds[cells[c].seed];
    CompareRow& row = rows[c];
    row.strategy = strategy.name();
    row.seed = seed;
    try {
      const auto p = strategy_distribution(strategy, lipschitz, costs);
      RunOptions ro;
      ro.schedule = default_constant_schedule(problem, p, options.horizon, options.step_multiplier);
      ro.mode = options.mode;
      ro.stop = StoppingRule::target(options.error_target);
      ro.seed = seed;
      ro.eval_every = options.eval_every;
      ro.max_iterations = options.max_iterations;
      ro.optimal_value = f_star;
      ro.record_steps = options.keep_traces;
      ro.strategy_name = row.strategy;
      if (strategy.dynamic()) {
        ro.dynamic = DynamicRefresh{strategy.kind == Strategy::Kind::kDynamicOptimal, options.refresh_every,
                                    options.dynamic_mix};
      }
      RunTrace trace = run(problem, p, ro);
      row.iters_to_target = trace.iterations;
      row.cost_to_target = trace.total_cost;
      row.reached = trace.reached;
      if (options.keep_traces) traces[c] = std::move(trace);
    } catch (const Error& e) {
      row.failure = std::string(error_code_name(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
      row.failure = std::string("internal: ") + e.what();
    }
  };

  detail::parallel_for(cells.size(), options.jobs, run_cell);

  ComparisonTable table;
  table.rows = std::move(rows);
  table.traces = std::move(traces);
  for (std::size_t s = 0; s < options.strategies.size(); ++s) {
    StrategySummary summary;
    summary.strategy = options.strategies[s].name();
    std::vector<double> iters, cost;
    for (const auto& row : table.rows) {
      if (row.strategy != summary.strategy || !row.failure.empty()) continue;
      iters.push_back(static_cast<double>(row.iters_to_target));
      cost.push_back(row.cost_to_target);
      if (row.reached) ++summary.reached;
    }
    // Duplicate strategy names share rows; count each name once.
    if (std::any_of(table.summary.begin(), table.summary.end(),
                    [&](const StrategySummary& x) { return x.strategy == summary.strategy; })) {
      continue;
    }
    summary.runs = iters.size();
    std::tie(summary.mean_iters, summary.stderr_iters) = mean_and_stderr(iters);
    std::tie(summary.mean_cost, summary.stderr_cost) = mean_and_stderr(cost);
    table.summary.push_back(summary);
  }
  return table;
}

std::string comparison_to_csv(const ComparisonTable& table) {
  std::ostringstream out;
  out << "strategy,seed,iters_to_target,cost_to_target,reached\n";
  for (const auto& row : table.rows) {
    out << row.strategy << ',' << row.seed << ',';
    if (row.failure.empty()) {
      out << row.iters_to_target << ',' << detail::format_double(row.cost_to_target) << ','
          << (row.reached ? "true" : "false");
    } else {
      out << ",,failed";
    }
    out << '\n';
  }
  return out.str();
}

std::vector<std::string> order_by_cost(const ComparisonTable& table) {
  std::vector<StrategySummary> sorted = table.summary;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const StrategySummary& a, const StrategySummary& b) { return a.mean_cost < b.mean_cost; });
  std::vector<std::string> names;
  for (const auto& s : sorted) names.push_back(s.strategy);
  return names;
}

}  // namespace casgd
