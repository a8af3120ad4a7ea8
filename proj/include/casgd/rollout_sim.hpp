// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "casgd/problem.hpp"
#include "casgd/rng.hpp"
#include "casgd/sampling.hpp"

namespace casgd {

struct Rollout {
  std::uint64_t prompt_id = 0;
  std::uint64_t rollout_id = 0;
  double reward = 0.0;
  double advantage = 0.0;
  /// Prompt plus response length in tokens, at least 1.
  std::uint64_t token_cost = 1;
};

/// n prompts times M rollouts, grouped by prompt in pool order.
struct RolloutPool {
  std::vector<Rollout> rollouts;
  std::size_t n_prompts = 0;
  std::size_t group_size = 0;
  /// One flag per prompt; set when the group's rewards are constant.
  std::vector<bool> degenerate_groups;

  std::size_t size() const { return rollouts.size(); }
  std::vector<double> token_costs() const;
  std::vector<double> abs_advantages() const;
};

struct GroupAdvantages {
  std::vector<double> advantages;
  bool degenerate = false;
};

/// (r - mean) / std with population moments. Constant rewards give all-zero
/// advantages flagged degenerate. Throws kGroupSize when M < 2.
GroupAdvantages normalize_advantages(std::span<const double> rewards);

/// Builds a pool from per-prompt rewards and token costs, normalizing each group.
RolloutPool build_pool(const std::vector<std::vector<double>>& rewards,
                       const std::vector<std::vector<std::uint64_t>>& token_costs);

/// Checks group structure and the normalization invariant; throws on violation.
void validate_pool(const RolloutPool& pool);

struct PoolStrategy {
  enum class Kind { kPStar, kSmoothed, kUniform, kLengthOnly };

  Kind kind = Kind::kPStar;
  double alpha = 0.0;

  std::string name() const;
};

/// Parses one of: p_star, smoothed:<alpha>, uniform, length_only.
PoolStrategy parse_pool_strategy(std::string_view text);
std::vector<PoolStrategy> parse_pool_strategy_list(std::string_view comma_separated);

/// Distribution over pool positions. p_star weighs |A_u| / sqrt(c_u) and
/// throws kDegenerate when every advantage is zero; a smoothed strategy on
/// such a pool returns uniform and sets *degraded.
SamplingDistribution pool_distribution(const RolloutPool& pool, const PoolStrategy& strategy,
                                       bool* degraded = nullptr);

struct BatchEntry {
  std::size_t position = 0;
  /// 1 / (N p_u).
  double importance_weight = 1.0;
  /// importance_weight * B / sum over the batch, so the batch mean is 1.
  double recentered_weight = 1.0;
};

struct MiniBatch {
  std::vector<BatchEntry> entries;
  /// FNV-1a over the bytes of the probability vector used for the draw.
  std::uint64_t distribution_digest = 0;
};

std::uint64_t distribution_digest(const SamplingDistribution& p);

/// B i.i.d. draws with replacement from p.
MiniBatch sample_minibatch(const RolloutPool& pool, const SamplingDistribution& p, std::size_t batch_size,
                           Engine& engine);

/// Synthetic per-rollout objective standing in for the policy loss.
class RolloutOracle {
 public:
  virtual ~RolloutOracle() = default;

  virtual std::size_t dimension() const = 0;
  virtual void gradient(std::size_t position, const Vector& theta, Vector& out) const = 0;
  /// Scalar tracked in token curves.
  virtual double loss(const Vector& theta) const = 0;
  virtual double gradient_norm(std::size_t position, const Vector& theta) const;
};

/// loss_u = 0.5 |A_u| ||theta - b_u||^2 with b_u = theta_star + xi_u,
/// xi_u ~ N(0, spread^2 I). Reports 0.5 ||theta - theta_star||^2 as loss.
class QuadraticRolloutOracle final : public RolloutOracle {
 public:
  QuadraticRolloutOracle(const RolloutPool& pool, Vector theta_star, double spread, Engine& engine);

  std::size_t dimension() const override { return static_cast<std::size_t>(theta_star_.size()); }
  void gradient(std::size_t position, const Vector& theta, Vector& out) const override;
  double loss(const Vector& theta) const override;
  double gradient_norm(std::size_t position, const Vector& theta) const override;

  const Vector& theta_star() const { return theta_star_; }

 private:
  std::vector<double> scale_;
  std::vector<Vector> targets_;
  Vector theta_star_;
};

/// Gradient k |A_u| e_1 regardless of theta, so norms are exactly
/// proportional to the advantage magnitudes.
class ProportionalRolloutOracle final : public RolloutOracle {
 public:
  ProportionalRolloutOracle(const RolloutPool& pool, std::size_t dimension, double k);

  std::size_t dimension() const override { return dimension_; }
  void gradient(std::size_t position, const Vector& theta, Vector& out) const override;
  double loss(const Vector& theta) const override;

 private:
  std::vector<double> abs_advantage_;
  std::size_t dimension_;
  double k_;
};

struct RoundOptions {
  std::size_t batch_size = 32;
  /// Defaults to ceil(N / B).
  std::optional<std::size_t> updates;
  double learning_rate = 0.1;
  /// Uniform strategy traverses a shuffled epoch unless this is set, in
  /// which case it draws with replacement like the other strategies.
  bool uniform_with_replacement = false;
};

struct RoundReport {
  std::size_t updates = 0;
  std::uint64_t tokens_consumed = 0;
  Vector parameters;
  double loss = 0.0;
  /// Set when a smoothed strategy fell back to uniform on an all-zero pool.
  bool degraded_to_uniform = false;
};

/// T mini-batch updates theta -= lr * (1/B) sum recentered_w * grad_u.
RoundReport simulate_training_round(const RolloutPool& pool, const PoolStrategy& strategy,
                                    const RoundOptions& options, Engine& engine, const RolloutOracle& oracle,
                                    const Vector& theta);

struct CurvePoint {
  std::size_t round = 0;
  std::uint64_t cumulative_tokens = 0;
  double loss = 0.0;
};

/// Prefix sums of tokens_consumed, rounds numbered from 1.
std::vector<CurvePoint> token_accounting(std::span<const RoundReport> reports);

struct ProxyFidelity {
  double pearson = 0.0;
  double cost_biased_chi2 = 0.0;
};

/// pearson(G, |A|) and chi2(cost_biased(p*_true) || cost_biased(p*_proxy)).
ProxyFidelity proxy_fidelity_report(const RolloutPool& pool, const RolloutOracle& oracle, const Vector& theta);

struct PoolSpec {
  std::size_t n_prompts = 64;
  std::size_t group_size = 8;
  /// Per-prompt success probability drawn uniformly in [low, high].
  double reward_prob_low = 0.0;
  double reward_prob_high = 1.0;
  double token_low = 16.0;
  double token_high = 4096.0;
};

/// Bernoulli rewards and log-uniform token costs, rounded to integers.
RolloutPool generate_pool(const PoolSpec& spec, Engine& engine);

/// One JSON object per line: {prompt_id, rollout_id, reward, advantage, token_cost}.
std::string pool_to_jsonl(const RolloutPool& pool);
RolloutPool pool_from_jsonl(const std::string& text);

struct GrpoSimOptions {
  PoolSpec pool;
  std::vector<PoolStrategy> strategies;
  std::vector<std::uint64_t> seeds;
  std::size_t rounds = 20;
  RoundOptions round;
  std::size_t dimension = 8;
  /// Spread of per-rollout targets around theta_star.
  double target_spread = 0.5;
  /// Norm of theta_star; theta starts at the origin.
  double initial_distance = 3.0;
  double loss_threshold = 0.05;
  std::size_t jobs = 1;
};

struct GrpoCurveRow {
  std::size_t round = 0;
  std::uint64_t cumulative_tokens = 0;
  double loss = 0.0;
  std::string strategy;
  std::uint64_t seed = 0;
};

struct GrpoRunSummary {
  std::string strategy;
  std::uint64_t seed = 0;
  /// Cumulative tokens at the first round ending at or below the threshold.
  std::optional<std::uint64_t> tokens_to_threshold;
  std::size_t degraded_rounds = 0;
  /// Rounds where p_star had no nonzero advantage and no update ran.
  std::size_t skipped_rounds = 0;
  /// Fidelity of |A| against the oracle's true norms at the start of each round.
  std::vector<ProxyFidelity> fidelity;
};

struct GrpoSimResult {
  /// Ordered by strategy, then seed, then round.
  std::vector<GrpoCurveRow> curves;
  std::vector<GrpoRunSummary> runs;
};

/// Every (strategy, seed) cell sees the same pools and oracle targets per
/// round, so strategies differ only in how batches are filled.
GrpoSimResult run_grpo_campaign(const GrpoSimOptions& options);

/// CSV with header round,cumulative_tokens,loss,strategy,seed.
std::string curves_to_csv(const std::vector<GrpoCurveRow>& rows);

}  // namespace casgd
