// SPDX-License-Identifier: Apache-2.0
#include "casgd/rollout_sim.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "casgd/analysis.hpp"
#include "casgd/error.hpp"
#include "format.hpp"
#include "parallel.hpp"

namespace casgd {

std::vector<double> RolloutPool::token_costs() const {
  std::vector<double> out(rollouts.size());
  for (std::size_t u = 0; u < out.size(); ++u) out[u] = static_cast<double>(rollouts[u].token_cost);
  return out;
}

std::vector<double> RolloutPool::abs_advantages() const {
  std::vector<double> out(rollouts.size());
  for (std::size_t u = 0; u < out.size(); ++u) out[u] = std::abs(rollouts[u].advantage);
  return out;
}

GroupAdvantages normalize_advantages(std::span<const double> rewards) {
  const std::size_t m = rewards.size();
  if (m < 2) fail(ErrorCode::kGroupSize, "advantages: a group needs at least two rollouts");
  double mean = 0.0;
  for (double r : rewards) {
    if (!std::isfinite(r)) fail(ErrorCode::kInvalidArgument, "advantages: non-finite reward");
    mean += r;
  }
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(m);

  GroupAdvantages out;
  out.advantages.assign(m, 0.0);
  if (var == 0.0) {
    out.degenerate = true;
    return out;
  }
  const double sd = std::sqrt(var);
  for (std::size_t k = 0; k < m; ++k) out.advantages[k] = (rewards[k] - mean) / sd;
  return out;
}

RolloutPool build_pool(const std::vector<std::vector<double>>& rewards,
                       const std::vector<std::vector<std::uint64_t>>& token_costs) {
  if (rewards.empty()) fail(ErrorCode::kInvalidSize, "pool: no prompts");
  if (rewards.size() != token_costs.size()) fail(ErrorCode::kInvalidSize, "pool: rewards and tokens disagree");
  RolloutPool pool;
  pool.n_prompts = rewards.size();
  pool.group_size = rewards.front().size();
  for (std::size_t g = 0; g < rewards.size(); ++g) {
    if (rewards[g].size() != pool.group_size || token_costs[g].size() != pool.group_size) {
      fail(ErrorCode::kGroupSize, "pool: every prompt needs the same number of rollouts");
    }
    const GroupAdvantages adv = normalize_advantages(rewards[g]);
    pool.degenerate_groups.push_back(adv.degenerate);
    for (std::size_t k = 0; k < pool.group_size; ++k) {
      if (token_costs[g][k] < 1) fail(ErrorCode::kInvalidCost, "pool: token cost must be at least 1");
      pool.rollouts.push_back({g, k, rewards[g][k], adv.advantages[k], token_costs[g][k]});
    }
  }
  return pool;
}

void validate_pool(const RolloutPool& pool) {
  if (pool.group_size < 2) fail(ErrorCode::kGroupSize, "pool: group size must be at least 2");
  if (pool.rollouts.size() != pool.n_prompts * pool.group_size) {
    fail(ErrorCode::kInvalidSize, "pool: size is not n_prompts * group_size");
  }
  if (pool.degenerate_groups.size() != pool.n_prompts) fail(ErrorCode::kInvalidSize, "pool: missing group flags");
  const double m = static_cast<double>(pool.group_size);
  for (std::size_t g = 0; g < pool.n_prompts; ++g) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t k = 0; k < pool.group_size; ++k) {
      const Rollout& r = pool.rollouts[g * pool.group_size + k];
      if (r.prompt_id != pool.rollouts[g * pool.group_size].prompt_id) {
        fail(ErrorCode::kGroupSize, "pool: prompt groups are not contiguous");
      }
      if (r.token_cost < 1) fail(ErrorCode::kInvalidCost, "pool: token cost must be at least 1");
      mean += r.advantage;
    }
    mean /= m;
    for (std::size_t k = 0; k < pool.group_size; ++k) {
      const double a = pool.rollouts[g * pool.group_size + k].advantage - mean;
      sq += a * a;
    }
    const double sd = std::sqrt(sq / m);
    if (pool.degenerate_groups[g]) {
      if (mean != 0.0 || sq != 0.0) fail(ErrorCode::kInvalidArgument, "pool: degenerate group with nonzero advantages");
    } else if (std::abs(mean) > 1e-9 || std::abs(sd - 1.0) > 1e-9) {
      fail(ErrorCode::kInvalidArgument, "pool: group advantages are not normalized");
    }
  }
}

std::string PoolStrategy::name() const {
  switch (kind) {
    case Kind::kPStar: return "p_star";
    case Kind::kUniform: return "uniform";
    case Kind::kLengthOnly: return "length_only";
    case Kind::kSmoothed: return "smoothed:" + detail::format_double(alpha);
  }
  return "unknown";
}

PoolStrategy parse_pool_strategy(std::string_view text) {
  using Kind = PoolStrategy::Kind;
  if (text == "p_star") return {Kind::kPStar, 0.0};
  if (text == "uniform") return {Kind::kUniform, 0.0};
  if (text == "length_only") return {Kind::kLengthOnly, 0.0};
  constexpr std::string_view prefix = "smoothed:";
  if (text.substr(0, prefix.size()) == prefix) {
    const auto digits = text.substr(prefix.size());
    double alpha = 0.0;
    const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), alpha);
    if (res.ec != std::errc() || res.ptr != digits.data() + digits.size() || alpha < 0.0 || alpha > 1.0) {
      fail(ErrorCode::kInvalidRange, "pool strategy: smoothed alpha must be a number in [0, 1]");
    }
    return {Kind::kSmoothed, alpha};
  }
  fail(ErrorCode::kInvalidArgument, "unknown pool strategy '" + std::string(text) + "'");
}

std::vector<PoolStrategy> parse_pool_strategy_list(std::string_view comma_separated) {
  std::vector<PoolStrategy> out;
  std::size_t start = 0;
  while (start <= comma_separated.size()) {
    const auto end = std::min(comma_separated.find(',', start), comma_separated.size());
    const auto item = comma_separated.substr(start, end - start);
    if (!item.empty()) out.push_back(parse_pool_strategy(item));
    start = end + 1;
  }
  if (out.empty()) fail(ErrorCode::kInvalidArgument, "pool strategy list is empty");
  return out;
}

SamplingDistribution pool_distribution(const RolloutPool& pool, const PoolStrategy& strategy, bool* degraded) {
  if (pool.size() == 0) fail(ErrorCode::kInvalidSize, "pool distribution: empty pool");
  if (degraded) *degraded = false;
  using Kind = PoolStrategy::Kind;
  if (strategy.kind == Kind::kUniform) return uniform_distribution(pool.size());
  const auto tokens = pool.token_costs();
  if (strategy.kind == Kind::kLengthOnly) return length_only_distribution(tokens);

  std::vector<double> w(pool.size());
  double total = 0.0;
  for (std::size_t u = 0; u < w.size(); ++u) {
    w[u] = std::abs(pool.rollouts[u].advantage) / std::sqrt(tokens[u]);
    total += w[u];
  }
  if (!(total > 0.0)) {
    if (strategy.kind == Kind::kSmoothed) {
      if (degraded) *degraded = true;
      return uniform_distribution(pool.size());
    }
    fail(ErrorCode::kDegenerate, "pool distribution: every advantage is zero; use smoothed or uniform");
  }
  const auto p_star = SamplingDistribution::from_weights(w);
  if (strategy.kind == Kind::kSmoothed) return smooth(p_star, strategy.alpha);
  return p_star;
}

std::uint64_t distribution_digest(const SamplingDistribution& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : p.probabilities()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFFu;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

MiniBatch sample_minibatch(const RolloutPool& pool, const SamplingDistribution& p, std::size_t batch_size,
                           Engine& engine) {
  if (batch_size == 0) fail(ErrorCode::kInvalidSize, "minibatch: batch size must be positive");
  if (p.size() != pool.size()) fail(ErrorCode::kInvalidSize, "minibatch: distribution does not match the pool");
  const double n = static_cast<double>(pool.size());
  MiniBatch batch;
  batch.distribution_digest = distribution_digest(p);
  batch.entries.resize(batch_size);
  double total = 0.0;
  for (auto& e : batch.entries) {
    e.position = p.draw(engine);
    if (!p.in_support(e.position)) fail(ErrorCode::kInternal, "minibatch: drew a zero-probability position");
    e.importance_weight = 1.0 / (n * p[e.position]);
    total += e.importance_weight;
  }
  const double scale = static_cast<double>(batch_size) / total;
  for (auto& e : batch.entries) e.recentered_weight = e.importance_weight * scale;
  return batch;
}

double RolloutOracle::gradient_norm(std::size_t position, const Vector& theta) const {
  Vector g(static_cast<Eigen::Index>(dimension()));
  gradient(position, theta, g);
  return g.norm();
}

QuadraticRolloutOracle::QuadraticRolloutOracle(const RolloutPool& pool, Vector theta_star, double spread,
                                               Engine& engine)
    : theta_star_(std::move(theta_star)) {
  if (!(spread >= 0.0)) fail(ErrorCode::kInvalidRange, "quadratic oracle: spread must be nonnegative");
  std::normal_distribution<double> normal(0.0, 1.0);
  scale_.reserve(pool.size());
  targets_.reserve(pool.size());
  for (const Rollout& r : pool.rollouts) {
    scale_.push_back(std::abs(r.advantage));
    Vector b = theta_star_;
    for (Eigen::Index j = 0; j < b.size(); ++j) b[j] += spread * normal(engine);
    targets_.push_back(std::move(b));
  }
}

void QuadraticRolloutOracle::gradient(std::size_t position, const Vector& theta, Vector& out) const {
  if (position >= targets_.size()) fail(ErrorCode::kIndex, "quadratic oracle: position out of range");
  out = scale_[position] * (theta - targets_[position]);
}

double QuadraticRolloutOracle::loss(const Vector& theta) const {
  return 0.5 * (theta - theta_star_).squaredNorm();
}

double QuadraticRolloutOracle::gradient_norm(std::size_t position, const Vector& theta) const {
  if (position >= targets_.size()) fail(ErrorCode::kIndex, "quadratic oracle: position out of range");
  return scale_[position] * (theta - targets_[position]).norm();
}

ProportionalRolloutOracle::ProportionalRolloutOracle(const RolloutPool& pool, std::size_t dimension, double k)
    : abs_advantage_(pool.abs_advantages()), dimension_(dimension), k_(k) {
  if (dimension == 0) fail(ErrorCode::kInvalidSize, "proportional oracle: dimension must be positive");
  if (!(k > 0.0)) fail(ErrorCode::kInvalidRange, "proportional oracle: k must be positive");
}

void ProportionalRolloutOracle::gradient(std::size_t position, const Vector&, Vector& out) const {
  if (position >= abs_advantage_.size()) fail(ErrorCode::kIndex, "proportional oracle: position out of range");
  out = Vector::Zero(static_cast<Eigen::Index>(dimension_));
  out[0] = k_ * abs_advantage_[position];
}

double ProportionalRolloutOracle::loss(const Vector& theta) const { return 0.5 * theta.squaredNorm(); }

namespace {

void accumulate_gradient(const RolloutOracle& oracle, std::size_t position, const Vector& theta, double weight,
                         Vector& scratch, Vector& sum) {
  try {
    oracle.gradient(position, theta, scratch);
  } catch (const Error& e) {
    fail(e.code(), "oracle failed at pool position " + std::to_string(position) + ": " + e.what());
  } catch (const std::exception& e) {
    fail(ErrorCode::kInternal, "oracle failed at pool position " + std::to_string(position) + ": " + e.what());
  }
  sum += weight * scratch;
}

}  // namespace

RoundReport simulate_training_round(const RolloutPool& pool, const PoolStrategy& strategy,
                                    const RoundOptions& options, Engine& engine, const RolloutOracle& oracle,
                                    const Vector& theta) {
  const std::size_t n = pool.size();
  if (n == 0) fail(ErrorCode::kInvalidSize, "round: empty pool");
  if (options.batch_size == 0) fail(ErrorCode::kInvalidSize, "round: batch size must be positive");
  if (!(options.learning_rate > 0.0)) fail(ErrorCode::kInvalidRange, "round: learning rate must be positive");
  if (static_cast<std::size_t>(theta.size()) != oracle.dimension()) {
    fail(ErrorCode::kInvalidSize, "round: parameter dimension does not match the oracle");
  }
  const std::size_t b = options.batch_size;
  const std::size_t updates = options.updates ? *options.updates : (n + b - 1) / b;

  RoundReport report;
  report.parameters = theta;
  Vector scratch(theta.size());
  Vector step(theta.size());

  const bool epoch = strategy.kind == PoolStrategy::Kind::kUniform && !options.uniform_with_replacement;
  if (epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = n;
    for (std::size_t t = 0; t < updates; ++t) {
      if (cursor == n) {
        for (std::size_t k = n - 1; k > 0; --k) std::swap(order[k], order[uniform_below(engine, k + 1)]);
        cursor = 0;
      }
      const std::size_t take = std::min(b, n - cursor);
      step.setZero();
      for (std::size_t k = 0; k < take; ++k) {
        const std::size_t u = order[cursor + k];
        accumulate_gradient(oracle, u, report.parameters, 1.0, scratch, step);
        report.tokens_consumed += pool.rollouts[u].token_cost;
      }
      cursor += take;
      report.parameters -= (options.learning_rate / static_cast<double>(take)) * step;
      ++report.updates;
    }
  } else {
    const auto p = pool_distribution(pool, strategy, &report.degraded_to_uniform);
    for (std::size_t t = 0; t < updates; ++t) {
      const MiniBatch batch = sample_minibatch(pool, p, b, engine);
      step.setZero();
      for (const auto& e : batch.entries) {
        accumulate_gradient(oracle, e.position, report.parameters, e.recentered_weight, scratch, step);
        report.tokens_consumed += pool.rollouts[e.position].token_cost;
      }
      report.parameters -= (options.learning_rate / static_cast<double>(b)) * step;
      ++report.updates;
    }
  }
  report.loss = oracle.loss(report.parameters);
  return report;
}

std::vector<CurvePoint> token_accounting(std::span<const RoundReport> reports) {
  if (reports.empty()) fail(ErrorCode::kInvalidSize, "token accounting: no rounds");
  std::vector<CurvePoint> curve;
  std::uint64_t total = 0;
  for (std::size_t r = 0; r < reports.size(); ++r) {
    total += reports[r].tokens_consumed;
    curve.push_back({r + 1, total, reports[r].loss});
  }
  return curve;
}

ProxyFidelity proxy_fidelity_report(const RolloutPool& pool, const RolloutOracle& oracle, const Vector& theta) {
  const std::size_t n = pool.size();
  if (n < 2) fail(ErrorCode::kInvalidSize, "proxy fidelity: need at least two rollouts");
  const auto tokens = pool.token_costs();
  const auto proxy = pool.abs_advantages();
  std::vector<double> norms(n);
  double total = 0.0;
  for (std::size_t u = 0; u < n; ++u) {
    norms[u] = oracle.gradient_norm(u, theta);
    total += norms[u];
  }
  if (!(total > 0.0)) fail(ErrorCode::kDegenerate, "proxy fidelity: every gradient norm is zero");
  ProxyFidelity out;
  out.pearson = pearson(norms, proxy);
  const auto p_true = optimal_distribution(norms, tokens);
  const auto p_proxy = optimal_distribution(proxy, tokens);
  out.cost_biased_chi2 = chi2_divergence(cost_biased(p_true, tokens), cost_biased(p_proxy, tokens));
  return out;
}

RolloutPool generate_pool(const PoolSpec& spec, Engine& engine) {
  if (spec.n_prompts == 0) fail(ErrorCode::kInvalidSize, "pool spec: need at least one prompt");
  if (spec.group_size < 2) fail(ErrorCode::kGroupSize, "pool spec: group size must be at least 2");
  if (!(spec.reward_prob_low >= 0.0 && spec.reward_prob_low <= spec.reward_prob_high && spec.reward_prob_high <= 1.0)) {
    fail(ErrorCode::kInvalidRange, "pool spec: reward probabilities must satisfy 0 <= low <= high <= 1");
  }
  if (!(spec.token_low >= 1.0 && spec.token_low <= spec.token_high)) {
    fail(ErrorCode::kInvalidRange, "pool spec: token range must satisfy 1 <= low <= high");
  }
  const double log_lo = std::log(spec.token_low);
  const double log_hi = std::log(spec.token_high);
  std::vector<std::vector<double>> rewards(spec.n_prompts);
  std::vector<std::vector<std::uint64_t>> tokens(spec.n_prompts);
  for (std::size_t g = 0; g < spec.n_prompts; ++g) {
    const double q = spec.reward_prob_low + (spec.reward_prob_high - spec.reward_prob_low) * uniform01(engine);
    for (std::size_t k = 0; k < spec.group_size; ++k) {
      rewards[g].push_back(uniform01(engine) < q ? 1.0 : 0.0);
      const double len = std::round(std::exp(log_lo + (log_hi - log_lo) * uniform01(engine)));
      tokens[g].push_back(static_cast<std::uint64_t>(std::max(1.0, len)));
    }
  }
  return build_pool(rewards, tokens);
}

std::string pool_to_jsonl(const RolloutPool& pool) {
  std::string out;
  for (const Rollout& r : pool.rollouts) {
    nlohmann::ordered_json j;
    j["prompt_id"] = r.prompt_id;
    j["rollout_id"] = r.rollout_id;
    j["reward"] = r.reward;
    j["advantage"] = r.advantage;
    j["token_cost"] = r.token_cost;
    out += j.dump();
    out += '\n';
  }
  return out;
}

RolloutPool pool_from_jsonl(const std::string& text) {
  RolloutPool pool;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      Rollout r;
      r.prompt_id = j.at("prompt_id").get<std::uint64_t>();
      r.rollout_id = j.at("rollout_id").get<std::uint64_t>();
      r.reward = j.at("reward").get<double>();
      r.advantage = j.at("advantage").get<double>();
      r.token_cost = j.at("token_cost").get<std::uint64_t>();
      pool.rollouts.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, "pool line " + std::to_string(line_no) + ": " + e.what());
  }
  if (pool.rollouts.empty()) fail(ErrorCode::kParse, "pool: no rollouts");
  // Groups are contiguous runs of equal prompt_id.
  std::size_t run = 0;
  for (std::size_t u = 0; u < pool.rollouts.size(); ++u) {
    ++run;
    const bool last = u + 1 == pool.rollouts.size() || pool.rollouts[u + 1].prompt_id != pool.rollouts[u].prompt_id;
    if (!last) continue;
    if (pool.group_size == 0) pool.group_size = run;
    if (run != pool.group_size) fail(ErrorCode::kGroupSize, "pool: prompt groups differ in size");
    bool zero = true;
    for (std::size_t k = u + 1 - run; k <= u; ++k) zero = zero && pool.rollouts[k].advantage == 0.0;
    pool.degenerate_groups.push_back(zero);
    ++pool.n_prompts;
    run = 0;
  }
  validate_pool(pool);
  return pool;
}

GrpoSimResult run_grpo_campaign(const GrpoSimOptions& options) {
  if (options.strategies.empty()) fail(ErrorCode::kInvalidArgument, "grpo sim: strategy list is empty");
  if (options.seeds.empty()) fail(ErrorCode::kInvalidArgument, "grpo sim: seed list is empty");
  if (options.rounds == 0) fail(ErrorCode::kInvalidArgument, "grpo sim: rounds must be positive");
  if (options.dimension == 0) fail(ErrorCode::kInvalidSize, "grpo sim: dimension must be positive");

  const std::size_t cells = options.strategies.size() * options.seeds.size();
  std::vector<std::vector<GrpoCurveRow>> curves(cells);
  std::vector<GrpoRunSummary> runs(cells);
  std::vector<std::string> failures(cells);

  detail::parallel_for(cells, options.jobs, [&](std::size_t c) {
    const PoolStrategy& strategy = options.strategies[c / options.seeds.size()];
    const std::uint64_t seed = options.seeds[c % options.seeds.size()];
    GrpoRunSummary& summary = runs[c];
    summary.strategy = strategy.name();
    summary.seed = seed;
    try {
      Engine star_engine = make_engine(seed, Stream::kOracle);
      std::normal_distribution<double> normal(0.0, 1.0);
      Vector theta_star(static_cast<Eigen::Index>(options.dimension));
      for (Eigen::Index j = 0; j < theta_star.size(); ++j) theta_star[j] = normal(star_engine);
      theta_star *= options.initial_distance / theta_star.norm();

      Vector theta = Vector::Zero(theta_star.size());
      std::vector<RoundReport> reports;
      for (std::size_t round = 1; round <= options.rounds; ++round) {
        Engine pool_engine = make_engine(seed, Stream::kPool, round);
        const RolloutPool pool = generate_pool(options.pool, pool_engine);
        Engine oracle_engine = make_engine(seed, Stream::kOracle, round);
        const QuadraticRolloutOracle oracle(pool, theta_star, options.target_spread, oracle_engine);
        try {
          summary.fidelity.push_back(proxy_fidelity_report(pool, oracle, theta));
        } catch (const Error&) {
          const double nan = std::numeric_limits<double>::quiet_NaN();
          summary.fidelity.push_back({nan, nan});
        }
        Engine batch_engine = make_engine(seed, Stream::kMinibatch, round);
        RoundReport report;
        try {
          report = simulate_training_round(pool, strategy, options.round, batch_engine, oracle, theta);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kDegenerate) throw;
          // Nothing carries gradient signal this round; no tokens are spent.
          report.parameters = theta;
          report.loss = oracle.loss(theta);
          ++summary.skipped_rounds;
        }
        if (report.degraded_to_uniform) ++summary.degraded_rounds;
        theta = report.parameters;
        reports.push_back(std::move(report));
      }
      for (const CurvePoint& point : token_accounting(reports)) {
        curves[c].push_back({point.round, point.cumulative_tokens, point.loss, summary.strategy, seed});
        if (!summary.tokens_to_threshold && point.loss <= options.loss_threshold) {
          summary.tokens_to_threshold = point.cumulative_tokens;
        }
      }
    } catch (const Error& e) {
      failures[c] = std::string(error_code_name(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
      failures[c] = std::string("internal: ") + e.what();
    }
  });
  for (const auto& f : failures) {
    if (!f.empty()) fail(ErrorCode::kInternal, "grpo sim cell failed: " + f);
  }
  GrpoSimResult result;
  for (auto& rows : curves) {
    for (auto& row : rows) result.curves.push_back(std::move(row));
  }
  result.runs = std::move(runs);
  return result;
}

std::string curves_to_csv(const std::vector<GrpoCurveRow>& rows) {
  std::ostringstream out;
  out << "round,cumulative_tokens,loss,strategy,seed\n";
  for (const auto& r : rows) {
    out << r.round << ',' << r.cumulative_tokens << ',' << detail::format_double(r.loss) << ',' << r.strategy << ','
        << r.seed << '\n';
  }
  return out.str();
}

}  // namespace casgd
