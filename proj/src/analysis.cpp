// SPDX-License-Identifier: Apache-2.0
#include "casgd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "casgd/error.hpp"

namespace casgd {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) fail(ErrorCode::kInvalidSize, std::string(what) + ": length mismatch");
}

void require_positive_costs(std::span<const double> costs) {
  for (double c : costs) {
    if (!(c > 0.0)) fail(ErrorCode::kInvalidCost, "costs must be positive");
  }
}

double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

}  // namespace

double second_moment_bound(std::span<const double> lipschitz, const SamplingDistribution& p, std::size_t n) {
  require_same_length(lipschitz.size(), p.size(), "second moment");
  if (n == 0) fail(ErrorCode::kInvalidSize, "second moment: n must be positive");
  double sum = 0.0;
  for (std::size_t i = 0; i < lipschitz.size(); ++i) {
    const double g = lipschitz[i];
    if (g == 0.0) continue;
    if (!(p[i] > 0.0)) fail(ErrorCode::kUnboundedMoment, "second moment: G_i > 0 outside the support");
    sum += g * g / p[i];
  }
  const double nn = static_cast<double>(n);
  return sum / (nn * nn);
}

double step_cost(const SamplingDistribution& p, std::span<const double> costs) {
  require_same_length(p.size(), costs.size(), "step cost");
  double sum = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) sum += p[i] * costs[i];
  return sum;
}

double cost_objective(std::span<const double> lipschitz, std::span<const double> costs,
                      const SamplingDistribution& p, std::size_t n) {
  return second_moment_bound(lipschitz, p, n) * step_cost(p, costs);
}

CostComplexityReport cost_to_epsilon(std::span<const double> lipschitz, std::span<const double> costs,
                                     const SamplingDistribution& p, double diameter, double epsilon,
                                     std::optional<double> mu, std::size_t n) {
  if (!(epsilon > 0.0)) fail(ErrorCode::kInvalidRange, "cost to epsilon: epsilon must be positive");
  if (!(diameter > 0.0)) fail(ErrorCode::kInvalidRange, "cost to epsilon: diameter must be positive");
  if (mu && !(*mu > 0.0)) fail(ErrorCode::kInvalidRange, "cost to epsilon: mu must be positive");
  CostComplexityReport r;
  r.second_moment_bound = second_moment_bound(lipschitz, p, n);
  r.step_cost = step_cost(p, costs);
  r.objective = r.second_moment_bound * r.step_cost;
  r.cost_to_epsilon_convex = diameter * diameter * r.objective / (epsilon * epsilon);
  if (mu) r.cost_to_epsilon_strongly_convex = 4.0 * r.objective / (*mu * epsilon);
  return r;
}

BaselineCosts baseline_costs(std::span<const double> lipschitz, std::span<const double> costs, double diameter,
                             double epsilon, std::size_t n) {
  require_same_length(lipschitz.size(), costs.size(), "baseline costs");
  require_positive_costs(costs);
  if (!(epsilon > 0.0)) fail(ErrorCode::kInvalidRange, "baseline costs: epsilon must be positive");
  if (n == 0) fail(ErrorCode::kInvalidSize, "baseline costs: n must be positive");
  double sum_g = 0.0, sum_g2 = 0.0, sum_c = 0.0, sum_gc = 0.0, sum_g_sqrt_c = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    const double g = lipschitz[i];
    const double c = costs[i];
    sum_g += g;
    sum_g2 += g * g;
    sum_c += c;
    sum_gc += g * c;
    sum_g_sqrt_c += g * std::sqrt(c);
  }
  const double nn = static_cast<double>(n);
  const double scale = diameter * diameter / (epsilon * epsilon * nn * nn);
  BaselineCosts out;
  out.uniform = scale * sum_g2 * sum_c;
  out.variance = scale * sum_g * sum_gc;
  out.optimal = scale * sum_g_sqrt_c * sum_g_sqrt_c;
  return out;
}

double chi2_divergence(const SamplingDistribution& p, const SamplingDistribution& q) {
  require_same_length(p.size(), q.size(), "chi2");
  double sum = 0.0;
  for (std::size_t i : p.support()) {
    if (!(q[i] > 0.0)) return std::numeric_limits<double>::infinity();
    sum += p[i] * p[i] / q[i];
  }
  return sum - 1.0;
}

SuboptimalityRatio suboptimality_ratio(std::span<const double> lipschitz, std::span<const double> costs,
                                       const SamplingDistribution& p_prime, std::size_t n) {
  const auto p_star = optimal_distribution(lipschitz, costs);
  SuboptimalityRatio out;
  out.ratio = cost_objective(lipschitz, costs, p_prime, n) / cost_objective(lipschitz, costs, p_star, n);
  out.chi2_of_cost_biased = chi2_divergence(cost_biased(p_star, costs), cost_biased(p_prime, costs));
  return out;
}

double proxy_gap_approx(std::span<const double> lipschitz, std::span<const double> costs, double rho,
                        double sigma_g_sq) {
  require_same_length(lipschitz.size(), costs.size(), "proxy gap");
  require_positive_costs(costs);
  if (!(rho > 0.0 && rho <= 1.0)) fail(ErrorCode::kInvalidRange, "proxy gap: rho must lie in (0, 1]");
  if (!(sigma_g_sq >= 0.0)) fail(ErrorCode::kInvalidRange, "proxy gap: sigma_G^2 must be nonnegative");
  double inv_sum = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    const double g = lipschitz[i];
    if (!(g > 0.0)) fail(ErrorCode::kDegenerate, "proxy gap: every G_i must be positive");
    const double root = std::sqrt(costs[i]);
    inv_sum += root / g;
    dot += g * root;
  }
  return 1.0 + ((1.0 - rho * rho) / (rho * rho)) * sigma_g_sq * inv_sum / dot;
}

ProxyGapEstimate monte_carlo_proxy_gap(std::span<const double> lipschitz, std::span<const double> costs,
                                       double noise_sigma, std::size_t trials, Engine& engine) {
  require_same_length(lipschitz.size(), costs.size(), "monte carlo proxy gap");
  require_positive_costs(costs);
  if (trials == 0) fail(ErrorCode::kInvalidSize, "monte carlo proxy gap: trials must be positive");
  if (!(noise_sigma >= 0.0)) fail(ErrorCode::kInvalidRange, "monte carlo proxy gap: negative noise");
  const std::size_t n = lipschitz.size();
  for (double g : lipschitz) {
    if (!(g > 0.0)) fail(ErrorCode::kDegenerate, "monte carlo proxy gap: every G_i must be positive");
  }
  if (noise_sigma == 0.0) return {};

  std::vector<double> root(n);
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    root[i] = std::sqrt(costs[i]);
    dot += lipschitz[i] * root[i];
  }
  const double j_star = dot * dot;

  std::normal_distribution<double> normal(0.0, noise_sigma);
  std::vector<double> proxy(n);
  double ratio_sum = 0.0;
  std::size_t rejected = 0;
  // Pooled moments for the correlation between G and G'.
  double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      double v;
      do {
        v = lipschitz[i] + normal(engine);
        if (v <= 0.0) ++rejected;
      } while (v <= 0.0);
      proxy[i] = v;
      sx += lipschitz[i];
      sy += v;
      sxx += lipschitz[i] * lipschitz[i];
      syy += v * v;
      sxy += lipschitz[i] * v;
    }
    // J(p') with p'_i ~ G'_i / sqrt(c_i), up to the common 1/n^2 factor.
    double moment = 0.0, cost_num = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = proxy[i] / root[i];
      norm += w;
      moment += lipschitz[i] * lipschitz[i] / w;
      cost_num += w * costs[i];
    }
    ratio_sum += (moment * norm) * (cost_num / norm) / j_star;
  }
  const double m = static_cast<double>(n * trials);
  const double cov = sxy / m - (sx / m) * (sy / m);
  const double vx = sxx / m - (sx / m) * (sx / m);
  const double vy = syy / m - (sy / m) * (sy / m);

  ProxyGapEstimate out;
  out.empirical_ratio = ratio_sum / static_cast<double>(trials);
  out.rho_hat = cov / std::sqrt(vx * vy);
  out.rejection_rate = static_cast<double>(rejected) / static_cast<double>(rejected + n * trials);
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require_same_length(x.size(), y.size(), "pearson");
  if (x.size() < 2) fail(ErrorCode::kInvalidSize, "pearson: need at least two points");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) fail(ErrorCode::kDegenerate, "pearson: constant input");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

double population_variance(std::span<const double> x) {
  if (x.empty()) fail(ErrorCode::kInvalidSize, "variance of empty vector");
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

AdaptiveVsUniform variance_vs_uniform_predicate(std::span<const double> lipschitz, std::span<const double> costs) {
  require_same_length(lipschitz.size(), costs.size(), "variance vs uniform");
  if (lipschitz.size() < 2) fail(ErrorCode::kInvalidSize, "variance vs uniform: need n >= 2");
  const double mg = mean(lipschitz);
  const double mc = mean(costs);
  double var_g = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    const double dg = lipschitz[i] - mg;
    var_g += dg * dg;
    cov += dg * (costs[i] - mc);
  }
  const double n = static_cast<double>(costs.size());
  var_g /= n;
  cov /= n;
  AdaptiveVsUniform out;
  out.margin = mc * var_g - mg * cov;
  out.variance_better = out.margin >= 0.0;
  return out;
}

}  // namespace casgd
