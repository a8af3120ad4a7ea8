// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "casgd/rng.hpp"
#include "casgd/sampling.hpp"

namespace casgd {

/// Cost-complexity summary of one sampling distribution.
///
/// objective is J(p) = S(p) C(p). Both cost-to-epsilon fields are
/// proportional to it: D^2 J / eps^2 for convex problems, 4 J / (mu eps)
/// under mu-strong convexity.
struct CostComplexityReport {
  double second_moment_bound = 0.0;
  double step_cost = 0.0;
  double objective = 0.0;
  double cost_to_epsilon_convex = 0.0;
  std::optional<double> cost_to_epsilon_strongly_convex;
};

/// (1/n^2) sum_{i in support} G_i^2 / p_i. Throws kUnboundedMoment when some
/// G_i > 0 has p_i = 0.
double second_moment_bound(std::span<const double> lipschitz, const SamplingDistribution& p, std::size_t n);

/// C(p) = sum_i p_i c_i.
double step_cost(const SamplingDistribution& p, std::span<const double> costs);

/// J(p) = S(p) C(p).
double cost_objective(std::span<const double> lipschitz, std::span<const double> costs,
                      const SamplingDistribution& p, std::size_t n);

CostComplexityReport cost_to_epsilon(std::span<const double> lipschitz, std::span<const double> costs,
                                     const SamplingDistribution& p, double diameter, double epsilon,
                                     std::optional<double> mu, std::size_t n);

struct BaselineCosts {
  double uniform = 0.0;
  double variance = 0.0;
  double optimal = 0.0;
};

/// Closed-form expected cost to reach epsilon (convex case) under uniform,
/// variance (p ~ G) and cost-aware optimal (p ~ G / sqrt(c)) sampling.
BaselineCosts baseline_costs(std::span<const double> lipschitz, std::span<const double> costs, double diameter,
                             double epsilon, std::size_t n);

/// sum_{i in support(P)} P_i^2 / Q_i - 1, or +infinity when P puts mass
/// where Q has none.
double chi2_divergence(const SamplingDistribution& p, const SamplingDistribution& q);

struct SuboptimalityRatio {
  /// J(p') / J(p*).
  double ratio = 0.0;
  /// chi^2(cost_biased(p*) || cost_biased(p')).
  double chi2_of_cost_biased = 0.0;
};

/// Evaluates both sides of J(p')/J(p*) = 1 + chi^2(p~* || p~') independently.
SuboptimalityRatio suboptimality_ratio(std::span<const double> lipschitz, std::span<const double> costs,
                                       const SamplingDistribution& p_prime, std::size_t n);

/// Second-order approximation of E[J(p')] / J(p*) for a noisy proxy G' with
/// correlation rho against G:
///   1 + ((1 - rho^2) / rho^2) sigma_G^2 (sum sqrt(c_i)/G_i) / (sum G_i sqrt(c_i)).
double proxy_gap_approx(std::span<const double> lipschitz, std::span<const double> costs, double rho,
                        double sigma_g_sq);

struct ProxyGapEstimate {
  double empirical_ratio = 1.0;
  /// Pearson correlation between G and G' pooled over all trials.
  double rho_hat = 1.0;
  /// Fraction of noise draws rejected because G'_i would be <= 0.
  double rejection_rate = 0.0;
};

/// Monte Carlo estimate of E[J(p')] / J(p*) with G'_i = G_i + N(0, sigma^2).
ProxyGapEstimate monte_carlo_proxy_gap(std::span<const double> lipschitz, std::span<const double> costs,
                                       double noise_sigma, std::size_t trials, Engine& engine);

/// Sample Pearson correlation. Throws kDegenerate on constant input.
double pearson(std::span<const double> x, std::span<const double> y);

/// Population variance.
double population_variance(std::span<const double> x);

struct AdaptiveVsUniform {
  /// True when K_var <= K_unif.
  bool variance_better = false;
  /// E[c] Var(G) - E[G] Cov(G, c) under the uniform-index expectation.
  double margin = 0.0;
};

AdaptiveVsUniform variance_vs_uniform_predicate(std::span<const double> lipschitz, std::span<const double> costs);

}  // namespace casgd
