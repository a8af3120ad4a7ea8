// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "casgd/optimizer.hpp"

#include <cmath>

#include "casgd/analysis.hpp"
#include "test_support.hpp"

using namespace casgd;
using doctest::Approx;

namespace {

/// f(x) = 0.5 (x - 1)^2 on [-2, 2], started at 0.
FiniteSumProblem scalar_problem() {
  RowMatrix a(1, 1);
  a << 1;
  Vector y(1);
  y << 1;
  return make_least_squares(a, y, {3.0}, BallDomain{Vector::Zero(1), 4.0});
}

RunOptions fixed_run(std::size_t t, IterateMode mode) {
  RunOptions ro;
  ro.schedule = StepSchedule::constant_over_sqrt_t(0.5, 4);
  ro.mode = mode;
  ro.stop = StoppingRule::fixed(t);
  ro.eval_every = 1;
  return ro;
}

FiniteSumProblem small_instance() {
  LeastSquaresSpec spec;
  spec.n = 40;
  spec.d = 4;
  spec.norm_bound = 2.0;
  spec.cost_low = 1.0;
  spec.cost_high = 20.0;
  spec.seed = 17;
  spec.target_noise = 0.1;
  return generate_least_squares(spec);
}

}  // namespace

TEST_CASE("projection") {
  Vector x(2), c = Vector::Zero(2);
  x << 0.3, -0.4;
  CHECK(project(x, c, 2.0) == x);
  x << 3, 0;
  const Vector p = project(x, c, 2.0);
  CHECK(p[0] == Approx(1.0));
  CHECK(p[1] == 0.0);
  x << std::nan(""), 0;
  CHECK_ERROR_CODE(project(x, c, 2.0), ErrorCode::kNumeric);
}

TEST_CASE("step schedules") {
  const auto s = StepSchedule::constant_over_sqrt_t(3.0, 9);
  CHECK(s.step(1) == Approx(1.0));
  CHECK(s.step(100) == Approx(1.0));
  const auto m = StepSchedule::inverse_mu_t(0.5);
  CHECK(m.step(4) == Approx(0.5));
  StepSchedule bad = StepSchedule::constant_over_sqrt_t(1.0, 1);
  bad.horizon.reset();
  CHECK_ERROR_CODE(bad.validate(), ErrorCode::kInvalidArgument);
}

TEST_CASE("output iterate modes on deterministic descent") {
  // x_t = x_{t-1} - 0.25 (x_{t-1} - 1): 0.25, 0.4375, 0.578125, 0.68359375.
  const auto problem = scalar_problem();
  const auto p = uniform_distribution(1);
  CHECK(run(problem, p, fixed_run(4, IterateMode::last())).final_point[0] == 0.68359375);
  CHECK(run(problem, p, fixed_run(4, IterateMode::average())).final_point[0] == 0.4873046875);
  CHECK(run(problem, p, fixed_run(4, IterateMode::suffix(0.5))).final_point[0] == 0.630859375);
}

TEST_CASE("suboptimality decreases on a single quadratic") {
  const auto problem = scalar_problem();
  auto ro = fixed_run(200, IterateMode::average());
  ro.schedule = StepSchedule::constant_over_sqrt_t(1.0, 200);
  const auto trace = run(problem, uniform_distribution(1), ro);
  double previous = std::numeric_limits<double>::infinity();
  for (const auto& s : trace.steps) {
    REQUIRE(s.suboptimality.has_value());
    CHECK(*s.suboptimality <= previous);
    previous = *s.suboptimality;
  }
}

TEST_CASE("cost metering") {
  const auto problem = small_instance();
  const auto costs = problem.costs();
  const auto p = optimal_distribution(problem.lipschitz_bounds(), costs);
  const std::size_t t = 100;
  RunOptions ro;
  ro.schedule = default_constant_schedule(problem, p, t);
  ro.stop = StoppingRule::fixed(t);
  ro.eval_every = 0;
  double total = 0.0, total_sq = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    ro.seed = seed;
    const auto trace = run(problem, p, ro);
    double replay = 0.0;
    for (const auto& s : trace.steps) replay += costs[s.index];
    CHECK(trace.total_cost == replay);
    CHECK(trace.iterations == t);
    total += trace.total_cost;
    total_sq += trace.total_cost * trace.total_cost;
  }
  const double c = step_cost(p, costs);
  double second = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) second += p[i] * costs[i] * costs[i];
  const double sigma = std::sqrt(t * (second - c * c) / 200.0);
  CHECK(std::abs(total / 200.0 - t * c) <= 3 * sigma);
}

TEST_CASE("stopping rules") {
  const auto problem = small_instance();
  const auto p = uniform_distribution(problem.size());
  RunOptions ro;
  ro.schedule = default_constant_schedule(problem, p, 1000);
  ro.stop = StoppingRule::budget(500.0);
  ro.eval_every = 0;
  const auto budget = run(problem, p, ro);
  REQUIRE_FALSE(budget.steps.empty());
  CHECK(budget.total_cost >= 500.0);
  CHECK(budget.total_cost - budget.steps.back().cost < 500.0);
  CHECK_FALSE(budget.budget_exhausted);

  ro.stop = StoppingRule::target(1e-30);
  ro.eval_every = 10;
  ro.max_iterations = 50;
  const auto capped = run(problem, p, ro);
  CHECK_FALSE(capped.reached);
  CHECK(capped.budget_exhausted);
  CHECK(capped.iterations == 50);

  ro.stop = StoppingRule::target(0.0);
  CHECK_ERROR_CODE(run(problem, p, ro), ErrorCode::kInvalidRange);
}

TEST_CASE("iterates stay in the domain") {
  const auto problem = small_instance();
  const auto p = variance_distribution(problem.lipschitz_bounds());
  RunOptions ro;
  ro.schedule = StepSchedule::constant_over_sqrt_t(100.0, 1);
  ro.stop = StoppingRule::fixed(500);
  ro.check_domain_each_step = true;
  ro.eval_every = 0;
  CHECK_NOTHROW(run(problem, p, ro));
}

TEST_CASE("partial support needs opt-in") {
  const auto problem = small_instance();
  std::vector<double> w(problem.size(), 1.0);
  w[0] = 0.0;
  const auto p = SamplingDistribution::from_weights(w);
  RunOptions ro;
  ro.schedule = default_constant_schedule(problem, uniform_distribution(problem.size()), 10);
  ro.stop = StoppingRule::fixed(10);
  CHECK_ERROR_CODE(run(problem, p, ro), ErrorCode::kUnboundedMoment);
  ro.allow_partial_support = true;
  CHECK_NOTHROW(run(problem, p, ro));
}

TEST_CASE("dynamic refresh accounting") {
  const auto problem = small_instance();
  const auto p = optimal_distribution(problem.lipschitz_bounds(), problem.costs());
  RunOptions ro;
  ro.schedule = default_constant_schedule(problem, p, 100);
  ro.stop = StoppingRule::fixed(100);
  ro.dynamic = DynamicRefresh{true, 10, 0.3};
  ro.charge_dynamic_sweeps = true;
  const auto trace = run(problem, p, ro);
  double sum_c = 0.0;
  for (double c : problem.costs()) sum_c += c;
  CHECK(trace.sweep_cost == Approx(10 * sum_c));
  ro.charge_dynamic_sweeps = false;
  CHECK(run(problem, p, ro).sweep_cost == 0.0);
}

TEST_CASE("comparison rows are deterministic and job-count independent") {
  const auto problem = small_instance();
  CompareOptions opts;
  opts.strategies = parse_strategy_list("optimal,optimal,uniform,dynamic-variance");
  opts.seeds = {0, 1, 2};
  opts.error_target = 5e-2;
  const auto one = compare_strategies(problem, opts);
  opts.jobs = 3;
  const auto three = compare_strategies(problem, opts);
  CHECK(comparison_to_csv(one) == comparison_to_csv(three));
  REQUIRE(one.rows.size() == 12);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(one.rows[k].iters_to_target == one.rows[k + 3].iters_to_target);
    CHECK(one.rows[k].cost_to_target == one.rows[k + 3].cost_to_target);
  }
  const std::string csv = comparison_to_csv(one);
  CHECK(csv.rfind("strategy,seed,iters_to_target,cost_to_target,reached\n", 0) == 0);
}

TEST_CASE("single cell comparison") {
  const auto problem = small_instance();
  CompareOptions opts;
  opts.strategies = parse_strategy_list("variance");
  opts.seeds = {4};
  opts.error_target = 5e-2;
  const auto table = compare_strategies(problem, opts);
  CHECK(table.rows.size() == 1);
  CHECK(table.summary.size() == 1);
  CHECK(order_by_cost(table) == std::vector<std::string>{"variance"});
}
