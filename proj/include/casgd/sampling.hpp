// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "casgd/rng.hpp"

namespace casgd {

/// Probability vector over component indices.
///
/// Immutable once built. The cumulative table used by draw_index is computed
/// at construction, so drawing is O(log n) and safe to call concurrently
/// with per-caller engines.
class SamplingDistribution {
 public:
  /// Normalizes nonnegative weights. Entries with zero weight are outside
  /// the support. Throws kDegenerate when every weight is zero.
  static SamplingDistribution from_weights(std::span<const double> weights);

  std::size_t size() const { return probabilities_.size(); }
  double operator[](std::size_t i) const { return probabilities_[i]; }
  const std::vector<double>& probabilities() const { return probabilities_; }
  const std::vector<std::size_t>& support() const { return support_; }
  bool in_support(std::size_t i) const { return i < size() && probabilities_[i] > 0.0; }

  /// Inverse CDF over half-open intervals [lo, hi).
  std::size_t draw(Engine& engine) const;

 private:
  explicit SamplingDistribution(std::vector<double> probabilities);

  std::vector<double> probabilities_;
  std::vector<std::size_t> support_;
  std::vector<double> cdf_;
};

SamplingDistribution uniform_distribution(std::size_t n);

/// p_i = G_i / sum_j G_j.
SamplingDistribution variance_distribution(std::span<const double> lipschitz);

/// p_i proportional to G_i / sqrt(c_i).
SamplingDistribution optimal_distribution(std::span<const double> lipschitz, std::span<const double> costs);

/// p_i proportional to 1 / sqrt(c_i); ignores gradient information.
SamplingDistribution length_only_distribution(std::span<const double> costs);

/// (1 - alpha) p + alpha q.
SamplingDistribution mix(const SamplingDistribution& p, const SamplingDistribution& q, double alpha);

/// (1 - alpha) p + alpha * uniform.
SamplingDistribution smooth(const SamplingDistribution& p, double alpha);

/// Normalizes w_i + floor * mean(w). A zero floor is plain normalization.
SamplingDistribution floored_distribution(std::span<const double> weights, double floor);

/// 1 / (n p_i). Throws kZeroProbability outside the support.
double importance_weight(const SamplingDistribution& p, std::size_t i, std::size_t n);

std::size_t draw_index(const SamplingDistribution& p, Engine& engine);

/// p_i c_i / sum_j p_j c_j.
SamplingDistribution cost_biased(const SamplingDistribution& p, std::span<const double> costs);

std::string distribution_to_json(const SamplingDistribution& p);
SamplingDistribution distribution_from_json(const std::string& text);

/// Named sampling strategies accepted on the command line.
struct Strategy {
  enum class Kind {
    kUniform,
    kVariance,
    kOptimal,
    kSmoothed,
    kDynamicVariance,
    kDynamicOptimal,
    kLengthOnly,
  };

  Kind kind = Kind::kUniform;
  double alpha = 0.0;

  bool dynamic() const { return kind == Kind::kDynamicVariance || kind == Kind::kDynamicOptimal; }
  std::string name() const;
};

/// Parses one of: uniform, variance, optimal, smoothed:<alpha>,
/// dynamic-variance, dynamic-optimal, length-only.
Strategy parse_strategy(std::string_view text);
std::vector<Strategy> parse_strategy_list(std::string_view comma_separated);

/// Static distribution for a strategy. Dynamic strategies return their
/// static counterpart (variance or optimal).
SamplingDistribution strategy_distribution(const Strategy& strategy, std::span<const double> lipschitz,
                                           std::span<const double> costs);

}  // namespace casgd
