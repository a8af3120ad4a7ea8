// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "casgd/analysis.hpp"

#include <cmath>
#include <limits>

#include "test_support.hpp"

using namespace casgd;
using casgd::testing::dist;
using doctest::Approx;

namespace {
const std::vector<double> kG{3, 1};
const std::vector<double> kC{1, 4};
// A four-component instance; reference values below come from a 40-digit
// evaluation of S, C and J.
const std::vector<double> kG4{0.5, 2, 1.5, 4};
const std::vector<double> kC4{3, 7, 1, 20};
}  // namespace

TEST_CASE("second moment bound") {
  const std::vector<double> ones{1, 1};
  CHECK(second_moment_bound(ones, uniform_distribution(2), 2) == Approx(1.0).epsilon(1e-15));
  CHECK(second_moment_bound(kG, uniform_distribution(2), 2) == Approx(5.0).epsilon(1e-15));
  const auto p = optimal_distribution(kG, kC);
  CHECK(second_moment_bound(kG, p, 2) * step_cost(p, kC) == Approx(6.25).epsilon(1e-14));
  CHECK_ERROR_CODE(second_moment_bound(kG, dist({0, 1}), 2), ErrorCode::kUnboundedMoment);
}

TEST_CASE("step cost") {
  CHECK(step_cost(uniform_distribution(2), kC) == Approx(2.5).epsilon(1e-15));
  CHECK(step_cost(dist({6, 1}), kC) == Approx(10.0 / 7).epsilon(1e-15));
  CHECK(step_cost(dist({0, 1}), kC) == 4.0);
}

TEST_CASE("cost to epsilon") {
  const auto u = cost_to_epsilon(kG, kC, uniform_distribution(2), 1.0, 1.0, std::nullopt, 2);
  CHECK(u.cost_to_epsilon_convex == Approx(12.5).epsilon(1e-14));
  CHECK_FALSE(u.cost_to_epsilon_strongly_convex.has_value());
  const auto o = cost_to_epsilon(kG, kC, optimal_distribution(kG, kC), 1.0, 1.0, 2.0, 2);
  CHECK(o.cost_to_epsilon_convex == Approx(6.25).epsilon(1e-14));
  REQUIRE(o.cost_to_epsilon_strongly_convex.has_value());
  CHECK(*o.cost_to_epsilon_strongly_convex == Approx(4.0 * 6.25 / 2.0).epsilon(1e-14));
  CHECK_ERROR_CODE(cost_to_epsilon(kG, kC, uniform_distribution(2), 1.0, 0.0, std::nullopt, 2),
                   ErrorCode::kInvalidRange);
}

TEST_CASE("baseline costs") {
  const auto b = baseline_costs(kG, kC, 1.0, 1.0, 2);
  CHECK(b.uniform == Approx(12.5).epsilon(1e-14));
  CHECK(b.variance == Approx(7.0).epsilon(1e-14));
  CHECK(b.optimal == Approx(6.25).epsilon(1e-14));

  const std::vector<double> unit{1, 1};
  const auto flat = baseline_costs(kG, unit, 1.0, 1.0, 2);
  CHECK(flat.optimal == Approx(flat.variance).epsilon(1e-12));

  const auto r = baseline_costs(kG4, kC4, 1.0, 1.0, 4);
  CHECK(r.uniform == Approx(43.59375).epsilon(1e-14));
  CHECK(r.variance == Approx(48.5).epsilon(1e-14));
  CHECK(r.optimal == Approx(40.787611672280908791).epsilon(1e-14));
}

TEST_CASE("chi-square divergence") {
  const auto p = dist({0.6, 0.4});
  CHECK(chi2_divergence(p, p) == Approx(0.0).epsilon(1e-15));
  CHECK(chi2_divergence(p, dist({0.2, 0.8})) == Approx(1.0).epsilon(1e-14));
  CHECK(chi2_divergence(dist({1, 0}), dist({0.5, 0.5})) == Approx(1.0).epsilon(1e-15));
  CHECK(std::isinf(chi2_divergence(dist({0.5, 0.5}), dist({1, 0}))));
}

TEST_CASE("suboptimality ratio") {
  const auto at_opt = suboptimality_ratio(kG, kC, optimal_distribution(kG, kC), 2);
  CHECK(at_opt.ratio == Approx(1.0).epsilon(1e-14));
  CHECK(at_opt.chi2_of_cost_biased == Approx(0.0).epsilon(1e-14));
  const auto u = suboptimality_ratio(kG, kC, uniform_distribution(2), 2);
  CHECK(u.ratio == Approx(2.0).epsilon(1e-14));
  CHECK(u.chi2_of_cost_biased == Approx(1.0).epsilon(1e-14));

  const auto r = suboptimality_ratio(kG4, kC4, dist({0.1, 0.2, 0.3, 0.4}), 4);
  CHECK(r.ratio == Approx(1.0726296099786670763).epsilon(1e-13));
  CHECK(r.chi2_of_cost_biased == Approx(0.072629609978667076322).epsilon(1e-12));
}

TEST_CASE("proxy gap approximation") {
  CHECK(proxy_gap_approx(kG, kC, 1.0, 3.0) == 1.0);
  CHECK(proxy_gap_approx(kG, kC, 0.5, 0.0) == 1.0);
  CHECK(proxy_gap_approx(kG, kC, 0.95, 1.0) == Approx(1.0504155124653739612).epsilon(1e-14));
  CHECK_ERROR_CODE(proxy_gap_approx(kG, kC, 0.0, 1.0), ErrorCode::kInvalidRange);
  const std::vector<double> with_zero{0, 1};
  CHECK_ERROR_CODE(proxy_gap_approx(with_zero, kC, 0.5, 1.0), ErrorCode::kDegenerate);
}

TEST_CASE("Monte Carlo proxy gap") {
  Engine e = make_engine(3, Stream::kMonteCarlo);
  const auto exact = monte_carlo_proxy_gap(kG4, kC4, 0.0, 100, e);
  CHECK(exact.empirical_ratio == 1.0);
  CHECK(exact.rho_hat == 1.0);

  double previous = 1.0;
  for (double scale : {0.05, 0.1}) {
    Engine mc = make_engine(3, Stream::kMonteCarlo, 1);
    const auto est = monte_carlo_proxy_gap(kG4, kC4, scale * 0.5, 100000, mc);
    CHECK(est.empirical_ratio >= previous);
    const double approx = proxy_gap_approx(kG4, kC4, est.rho_hat, population_variance(kG4));
    CHECK(std::abs(est.empirical_ratio - approx) / approx <= 0.1);
    previous = est.empirical_ratio;
  }
}

TEST_CASE("pearson correlation") {
  const std::vector<double> x{1, 2, 3};
  const std::vector<double> affine{5, 7, 9}, neg{-1, -2, -3}, mixed{1, 3, 2}, flat{2, 2, 2};
  CHECK(pearson(x, affine) == Approx(1.0).epsilon(1e-15));
  CHECK(pearson(x, neg) == Approx(-1.0).epsilon(1e-15));
  CHECK(pearson(x, mixed) == Approx(0.5).epsilon(1e-15));
  CHECK_ERROR_CODE(pearson(x, flat), ErrorCode::kDegenerate);
}

TEST_CASE("variance versus uniform predicate") {
  const std::vector<double> g{1, 2, 5}, flat{4, 4, 4};
  CHECK(variance_vs_uniform_predicate(g, flat).variance_better);
  const std::vector<double> g2{1, 2}, c2{2, 1};
  CHECK(variance_vs_uniform_predicate(g2, c2).variance_better);
  // Costs rising steeply with G make variance sampling worse than uniform.
  CHECK_FALSE(variance_vs_uniform_predicate(kG4, kC4).variance_better);
}
