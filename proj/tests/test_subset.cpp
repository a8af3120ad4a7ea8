// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "casgd/subset.hpp"

#include <cmath>

#include "casgd/analysis.hpp"
#include "test_support.hpp"

using namespace casgd;
using doctest::Approx;

using Index = std::vector<std::size_t>;

TEST_CASE("bias floor") {
  const std::vector<double> g{1, 2, 3};
  CHECK(bias_floor(g, Index{0, 1, 2}, 3) == 0.0);
  CHECK(bias_floor(g, Index{}, 3) == Approx(2.0));
  CHECK(bias_floor(g, Index{2}, 3) == Approx(1.0));
  CHECK_ERROR_CODE(bias_floor(g, Index{3}, 3), ErrorCode::kIndex);
}

TEST_CASE("required coverage") {
  const std::vector<double> g{1, 2, 3};
  CHECK(required_coverage(g, 1.0 * 6.0 / 3.0, 1.0, 3) == Approx(0.0).scale(1.0));
  CHECK(required_coverage(g, 1.0, 1.0, 3) == Approx(3.0));
  CHECK(required_coverage(g, 0.25, 1.0, 3, 2.0) == Approx(3.0));
}

TEST_CASE("greedy selection examples") {
  const std::vector<double> g{5, 1, 1}, c{100, 1, 1};
  const auto a = greedy_select(g, c, 2.0);
  CHECK(a.chosen == Index{1, 2});
  CHECK(a.feasible);

  const std::vector<double> ones{1, 1, 1}, c2{3, 1, 2};
  CHECK(greedy_select(ones, c2, 2.0).chosen == Index{1, 2});

  const auto empty = greedy_select(ones, c2, 0.0);
  CHECK(empty.chosen.empty());
  CHECK(empty.feasible);

  const auto over = greedy_select(ones, c2, 4.0);
  CHECK_FALSE(over.feasible);
  CHECK(over.chosen.size() == 3);
}

TEST_CASE("greedy closes with the cheapest completing item") {
  // Items 0 and 1 leave coverage at 0.2, item 2 would reach 5 and becomes the
  // closing candidate, and item 3 is kept after it without closing anything.
  const std::vector<double> g{0.1, 0.1, 10, 0.1}, c{1, 2, 4, 5};
  const auto s = greedy_select(g, c, 5.0);
  CHECK(s.chosen == Index{0, 1, 2});
  CHECK(s.feasible);
  CHECK(s.coverage_achieved >= 5.0);
  const auto exact = exact_select(g, c, 5.0);
  CHECK(s.item_cost_total <= 2.0 * exact.item_cost_total);
}

TEST_CASE("visitation order depends on costs only") {
  const std::vector<double> c{4, 1, 3, 1, 2};
  CHECK(cheapest_first_order(c) == Index{1, 3, 4, 2, 0});
  const std::vector<double> g1{1, 2, 3, 4, 5}, g2{5, 4, 3, 2, 1};
  CHECK(greedy_select(g1, c, 15.0).chosen == greedy_select(g2, c, 15.0).chosen);
}

TEST_CASE("exact selection") {
  const std::vector<double> ones{1, 1, 1}, c{3, 1, 2};
  const auto e = exact_select(ones, c, 2.0);
  CHECK(e.chosen == Index{1, 2});
  CHECK(e.item_cost_total == Approx(greedy_select(ones, c, 2.0).item_cost_total));

  // Equal-cost tie: {0, 1} and {0, 2} and {1, 2} all cost 2; the smallest list wins.
  const std::vector<double> flat{1, 1, 1};
  CHECK(exact_select(ones, flat, 2.0).chosen == Index{0, 1});

  CHECK_FALSE(exact_select(ones, c, 4.0).feasible);
  const std::vector<double> big(23, 1.0);
  CHECK_ERROR_CODE(exact_select(big, big, 1.0), ErrorCode::kSizeLimit);
}

TEST_CASE("biased cost to epsilon") {
  const std::vector<double> g{3, 1}, c{1, 4};
  CHECK(*biased_cost_to_epsilon(g, c, Index{0}, 1.0, 1.0, 2) == Approx(9.0));
  CHECK(*biased_cost_to_epsilon(g, c, Index{0, 1}, 1.0, 1.0, 2) ==
        Approx(baseline_costs(g, c, 1.0, 1.0, 2).optimal).epsilon(1e-12));
  CHECK_FALSE(biased_cost_to_epsilon(g, c, Index{0}, 1.0, 0.5, 2).has_value());
  CHECK_FALSE(biased_cost_to_epsilon(g, c, Index{0}, 1.0, 0.4, 2).has_value());
}

TEST_CASE("analytic gamma sweep") {
  const std::vector<double> g{1, 2, 3, 4, 5, 6}, c{6, 1, 4, 2, 5, 3};
  GammaSweepOptions opts;
  opts.epsilon = 10.0;
  opts.gammas = {1e-9, 0.5, 1.0, 2.0, 3.0};
  const auto rows = gamma_sweep(g, c, 1.0, std::nullopt, opts);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].subset_size == 6);
  REQUIRE(rows[0].predicted_cost.has_value());
  CHECK(*rows[0].predicted_cost == Approx(baseline_costs(g, c, 1.0, 10.0, 6).optimal).epsilon(1e-6));
  for (std::size_t k = 1; k < rows.size(); ++k) CHECK(rows[k].subset_size <= rows[k - 1].subset_size);
  CHECK_FALSE(rows[0].empirical_error.has_value());

  opts.epsilon = 1e-9;
  opts.gammas = {1.0};
  const auto infeasible = gamma_sweep(g, c, 1.0, std::nullopt, opts);
  CHECK_FALSE(infeasible[0].feasible);
  CHECK_FALSE(infeasible[0].predicted_cost.has_value());
}

TEST_CASE("empirical sweep on a small instance") {
  LeastSquaresSpec spec;
  spec.n = 60;
  spec.d = 4;
  spec.norm_bound = 2.0;
  spec.cost_high = 50.0;
  spec.target_noise = 0.2;
  spec.seed = 5;
  const auto problem = generate_least_squares(spec);
  GammaSweepOptions opts;
  opts.epsilon = 1e-2;
  opts.gammas = {1e-6, 1.0};
  EmpiricalSweepOptions emp;
  emp.iterations = 2000;
  emp.seeds = {0, 1};
  opts.empirical = emp;
  const auto rows = gamma_sweep(problem, opts);
  REQUIRE(rows.size() == 2);
  REQUIRE(rows[0].empirical_error.has_value());
  REQUIRE(rows[0].exact_bias.has_value());
  CHECK(*rows[0].exact_bias == Approx(0.0).scale(1.0));
  const std::string csv = sweep_to_csv(rows);
  CHECK(csv.rfind("gamma,subset_size,bias_floor,v_req,predicted_cost,feasible,empirical_error,empirical_cost,exact_bias\n",
                  0) == 0);
  opts.jobs = 2;
  CHECK(sweep_to_csv(gamma_sweep(problem, opts)) == csv);
}
