// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "casgd/optimizer.hpp"
#include "casgd/problem.hpp"

namespace casgd {

/// A training subset pi chosen under a bias budget.
struct SubsetSelection {
  /// Greedy selections list kept indices in visitation order followed by the
  /// closing item;
  /// exact selections list them in ascending index order.
  std::vector<std::size_t> chosen;
  double bias_floor = 0.0;
  /// sum of G_i over pi.
  double coverage_achieved = 0.0;
  double required_coverage = 0.0;
  /// sum of G_i sqrt(c_i) over pi.
  double item_cost_total = 0.0;
  bool feasible = false;
};

/// Largest exhaustive-search size accepted by exact_select.
inline constexpr std::size_t kExactSelectLimit = 22;

/// beta_pi = (1/n) sum_{j not in pi} G_j.
double bias_floor(std::span<const double> lipschitz, std::span<const std::size_t> pi, std::size_t n);

/// V_req = sum G - n Gamma / D, or sum G - n sqrt(2 mu Gamma) when mu is given.
/// Nonpositive values mean every subset is feasible.
double required_coverage(std::span<const double> lipschitz, double gamma, double diameter, std::size_t n,
                         std::optional<double> mu = std::nullopt);

/// Indices by ascending cost, ties by ascending index. Depends only on c.
std::vector<std::size_t> cheapest_first_order(std::span<const double> costs);

/// Visits items cheapest first. Items that leave the coverage short of V_req
/// are kept; each item that would reach V_req is a closing candidate, and the
/// result is the items kept before the cheapest candidate plus that
/// candidate. Returns every item marked infeasible when sum G < V_req.
SubsetSelection greedy_select(std::span<const double> lipschitz, std::span<const double> costs, double v_req);

/// Minimum sum G_i sqrt(c_i) feasible subset by exhaustive search (n <= 22).
/// Ties go to the lexicographically smallest ascending index list.
SubsetSelection exact_select(std::span<const double> lipschitz, std::span<const double> costs, double v_req);

/// D^2 (sum_{pi} G_i sqrt(c_i))^2 / (n^2 (eps - D beta_pi)^2), or nullopt when
/// eps <= D beta_pi.
std::optional<double> biased_cost_to_epsilon(std::span<const double> lipschitz, std::span<const double> costs,
                                             std::span<const std::size_t> pi, double diameter, double epsilon,
                                             std::size_t n);

enum class Selector { kGreedy, kExact };

/// Empirical SGD on the subset, sampling q_i proportional to G_i / sqrt(c_i)
/// over pi, with error measured against the full objective.
struct EmpiricalSweepOptions {
  std::size_t iterations = 20'000;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  /// eta = multiplier * D / (sqrt(S_pi(q)) sqrt(horizon)).
  double step_multiplier = 1.0;
  std::size_t horizon = 1;
  IterateMode mode = IterateMode::suffix(0.5);
  std::size_t eval_every = 50;
};

struct GammaSweepOptions {
  double epsilon = 1e-2;
  std::vector<double> gammas;
  Selector selector = Selector::kGreedy;
  std::optional<EmpiricalSweepOptions> empirical;
  /// Uses the strongly convex V_req with the problem's mu when available.
  bool strongly_convex = false;
  std::size_t jobs = 1;
};

struct SweepRow {
  double gamma = 0.0;
  std::size_t subset_size = 0;
  double bias_floor = 0.0;
  double v_req = 0.0;
  /// Predicted cost of reaching eps with the bias floor, empty when infeasible.
  std::optional<double> predicted_cost;
  /// Coverage reached and eps > D beta_pi.
  bool feasible = false;
  /// Mean final suboptimality f(x_out) - f(x*) over the empirical seeds.
  std::optional<double> empirical_error;
  /// Mean cumulative cost at the first evaluation with error <= eps, over
  /// seeds that reached it.
  std::optional<double> empirical_cost;
  /// Seeds whose run reached eps.
  std::size_t empirical_reached = 0;
  /// ||(1/n) sum_{j not in pi} grad f_j(x*_pi)|| at the restricted minimizer.
  std::optional<double> exact_bias;
};

/// Rows follow the order of the Gamma grid.
std::vector<SweepRow> gamma_sweep(const FiniteSumProblem& problem, const GammaSweepOptions& options);

/// Analytic sweep without a least-squares payload (no empirical columns).
std::vector<SweepRow> gamma_sweep(std::span<const double> lipschitz, std::span<const double> costs, double diameter,
                                  std::optional<double> mu, const GammaSweepOptions& options);

/// CSV with header
/// gamma,subset_size,bias_floor,v_req,predicted_cost,feasible,empirical_error,empirical_cost,exact_bias.
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace casgd
