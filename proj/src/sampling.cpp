// SPDX-License-Identifier: Apache-2.0
#include "casgd/sampling.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "casgd/error.hpp"

namespace casgd {

SamplingDistribution::SamplingDistribution(std::vector<double> probabilities)
    : probabilities_(std::move(probabilities)) {
  cdf_.resize(probabilities_.size());
  double running = 0.0;
  for (std::size_t i = 0; i < probabilities_.size(); ++i) {
    if (probabilities_[i] > 0.0) support_.push_back(i);
    running += probabilities_[i];
    cdf_[i] = running;
  }
  if (support_.empty()) fail(ErrorCode::kDegenerate, "distribution: empty support");
}

SamplingDistribution SamplingDistribution::from_weights(std::span<const double> weights) {
  if (weights.empty()) fail(ErrorCode::kInvalidSize, "distribution: no entries");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      fail(ErrorCode::kInvalidArgument, "distribution: weights must be finite and nonnegative");
    }
    total += w;
  }
  if (!(total > 0.0)) fail(ErrorCode::kDegenerate, "distribution: all weights are zero");
  std::vector<double> p(weights.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = weights[i] / total;
  return SamplingDistribution(std::move(p));
}

std::size_t SamplingDistribution::draw(Engine& engine) const {
  const double target = uniform01(engine) * cdf_.back();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
  if (it == cdf_.end()) return support_.back();
  return static_cast<std::size_t>(it - cdf_.begin());
}

SamplingDistribution uniform_distribution(std::size_t n) {
  if (n == 0) fail(ErrorCode::kInvalidSize, "uniform distribution over zero components");
  const std::vector<double> w(n, 1.0);
  return SamplingDistribution::from_weights(w);
}

SamplingDistribution variance_distribution(std::span<const double> lipschitz) {
  return SamplingDistribution::from_weights(lipschitz);
}

SamplingDistribution optimal_distribution(std::span<const double> lipschitz, std::span<const double> costs) {
  if (lipschitz.size() != costs.size()) fail(ErrorCode::kInvalidSize, "optimal distribution: length mismatch");
  std::vector<double> w(lipschitz.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(costs[i] > 0.0)) fail(ErrorCode::kInvalidCost, "optimal distribution: costs must be positive");
    w[i] = lipschitz[i] / std::sqrt(costs[i]);
  }
  return SamplingDistribution::from_weights(w);
}

SamplingDistribution length_only_distribution(std::span<const double> costs) {
  std::vector<double> w(costs.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(costs[i] > 0.0)) fail(ErrorCode::kInvalidCost, "length-only distribution: costs must be positive");
    w[i] = 1.0 / std::sqrt(costs[i]);
  }
  return SamplingDistribution::from_weights(w);
}

SamplingDistribution mix(const SamplingDistribution& p, const SamplingDistribution& q, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorCode::kInvalidRange, "mix: alpha must lie in [0, 1]");
  if (p.size() != q.size()) fail(ErrorCode::kInvalidSize, "mix: length mismatch");
  if (alpha == 0.0) return p;
  if (alpha == 1.0) return q;
  std::vector<double> w(p.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = (1.0 - alpha) * p[i] + alpha * q[i];
  return SamplingDistribution::from_weights(w);
}

SamplingDistribution smooth(const SamplingDistribution& p, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorCode::kInvalidRange, "smooth: alpha must lie in [0, 1]");
  return mix(p, uniform_distribution(p.size()), alpha);
}

SamplingDistribution floored_distribution(std::span<const double> weights, double floor) {
  if (!(floor >= 0.0)) fail(ErrorCode::kInvalidRange, "floor must be nonnegative");
  if (floor == 0.0) return SamplingDistribution::from_weights(weights);
  const double mean = std::accumulate(weights.begin(), weights.end(), 0.0) / static_cast<double>(weights.size());
  std::vector<double> w(weights.begin(), weights.end());
  for (double& v : w) v += floor * mean;
  return SamplingDistribution::from_weights(w);
}

double importance_weight(const SamplingDistribution& p, std::size_t i, std::size_t n) {
  if (!p.in_support(i)) fail(ErrorCode::kZeroProbability, "importance weight requested outside the support");
  return 1.0 / (static_cast<double>(n) * p[i]);
}

std::size_t draw_index(const SamplingDistribution& p, Engine& engine) { return p.draw(engine); }

SamplingDistribution cost_biased(const SamplingDistribution& p, std::span<const double> costs) {
  if (p.size() != costs.size()) fail(ErrorCode::kInvalidSize, "cost-biased: length mismatch");
  std::vector<double> w(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = p[i] * costs[i];
    total += w[i];
  }
  if (!(total > 0.0)) fail(ErrorCode::kDegenerate, "cost-biased: zero expected cost");
  return SamplingDistribution::from_weights(w);
}

std::string distribution_to_json(const SamplingDistribution& p) {
  return nlohmann::json(p.probabilities()).dump();
}

SamplingDistribution distribution_from_json(const std::string& text) {
  std::vector<double> w;
  try {
    w = nlohmann::json::parse(text).get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("distribution: ") + e.what());
  }
  return SamplingDistribution::from_weights(w);
}

std::string Strategy::name() const {
  switch (kind) {
    case Kind::kUniform: return "uniform";
    case Kind::kVariance: return "variance";
    case Kind::kOptimal: return "optimal";
    case Kind::kSmoothed: {
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof(buf), alpha);
      return "smoothed:" + std::string(buf, res.ptr);
    }
    case Kind::kDynamicVariance: return "dynamic-variance";
    case Kind::kDynamicOptimal: return "dynamic-optimal";
    case Kind::kLengthOnly: return "length-only";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view text) {
  using Kind = Strategy::Kind;
  if (text == "uniform") return {Kind::kUniform, 0.0};
  if (text == "variance") return {Kind::kVariance, 0.0};
  if (text == "optimal") return {Kind::kOptimal, 0.0};
  if (text == "dynamic-variance") return {Kind::kDynamicVariance, 0.0};
  if (text == "dynamic-optimal") return {Kind::kDynamicOptimal, 0.0};
  if (text == "length-only") return {Kind::kLengthOnly, 0.0};
  constexpr std::string_view prefix = "smoothed:";
  if (text.substr(0, prefix.size()) == prefix) {
    const auto digits = text.substr(prefix.size());
    double alpha = 0.0;
    const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), alpha);
    if (res.ec != std::errc() || res.ptr != digits.data() + digits.size() || alpha < 0.0 || alpha > 1.0) {
      fail(ErrorCode::kInvalidRange, "strategy: smoothed alpha must be a number in [0, 1]");
    }
    return {Kind::kSmoothed, alpha};
  }
  fail(ErrorCode::kInvalidArgument, "unknown strategy '" + std::string(text) + "'");
}

std::vector<Strategy> parse_strategy_list(std::string_view comma_separated) {
  std::vector<Strategy> out;
  std::size_t start = 0;
  while (start <= comma_separated.size()) {
    const auto end = std::min(comma_separated.find(',', start), comma_separated.size());
    const auto item = comma_separated.substr(start, end - start);
    if (!item.empty()) out.push_back(parse_strategy(item));
    start = end + 1;
  }
  if (out.empty()) fail(ErrorCode::kInvalidArgument, "strategy list is empty");
  return out;
}

SamplingDistribution strategy_distribution(const Strategy& strategy, std::span<const double> lipschitz,
                                           std::span<const double> costs) {
  using Kind = Strategy::Kind;
  switch (strategy.kind) {
    case Kind::kUniform: return uniform_distribution(lipschitz.size());
    case Kind::kVariance:
    case Kind::kDynamicVariance: return variance_distribution(lipschitz);
    case Kind::kOptimal:
    case Kind::kDynamicOptimal: return optimal_distribution(lipschitz, costs);
    case Kind::kSmoothed: return smooth(optimal_distribution(lipschitz, costs), strategy.alpha);
    case Kind::kLengthOnly: return length_only_distribution(costs);
  }
  fail(ErrorCode::kInternal, "unhandled strategy");
}

}  // namespace casgd
