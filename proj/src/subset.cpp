// SPDX-License-Identifier: Apache-2.0
#include "casgd/subset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <numeric>
#include <sstream>

#include "casgd/error.hpp"
#include "format.hpp"
#include "parallel.hpp"

namespace casgd {

namespace {

bool covers(double coverage, double v_req) {
  return coverage >= v_req - 1e-12 * std::max(1.0, std::abs(v_req));
}

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) fail(ErrorCode::kInvalidSize, "subset: length mismatch");
}

SubsetSelection finish(std::span<const double> lipschitz, std::span<const double> costs,
                       std::vector<std::size_t> chosen, double v_req) {
  SubsetSelection out;
  out.required_coverage = v_req;
  for (std::size_t i : chosen) {
    out.coverage_achieved += lipschitz[i];
    out.item_cost_total += lipschitz[i] * std::sqrt(costs[i]);
  }
  out.bias_floor = bias_floor(lipschitz, chosen, lipschitz.size());
  out.feasible = covers(out.coverage_achieved, v_req);
  out.chosen = std::move(chosen);
  return out;
}

}  // namespace

double bias_floor(std::span<const double> lipschitz, std::span<const std::size_t> pi, std::size_t n) {
  if (n == 0) fail(ErrorCode::kInvalidSize, "bias floor: n must be positive");
  std::vector<char> inside(lipschitz.size(), 0);
  for (std::size_t i : pi) {
    if (i >= lipschitz.size()) fail(ErrorCode::kIndex, "bias floor: index out of range");
    inside[i] = 1;
  }
  double excluded = 0.0;
  for (std::size_t j = 0; j < lipschitz.size(); ++j) {
    if (!inside[j]) excluded += lipschitz[j];
  }
  return excluded / static_cast<double>(n);
}

double required_coverage(std::span<const double> lipschitz, double gamma, double diameter, std::size_t n,
                         std::optional<double> mu) {
  if (!(gamma > 0.0)) fail(ErrorCode::kInvalidRange, "required coverage: Gamma must be positive");
  if (!(diameter > 0.0)) fail(ErrorCode::kInvalidRange, "required coverage: D must be positive");
  if (mu && !(*mu > 0.0)) fail(ErrorCode::kInvalidRange, "required coverage: mu must be positive");
  const double total = std::accumulate(lipschitz.begin(), lipschitz.end(), 0.0);
  const double nn = static_cast<double>(n);
  if (mu) return total - nn * std::sqrt(2.0 * *mu * gamma);
  return total - nn * gamma / diameter;
}

std::vector<std::size_t> cheapest_first_order(std::span<const double> costs) {
  std::vector<std::size_t> order(costs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return costs[a] < costs[b]; });
  return order;
}

SubsetSelection greedy_select(std::span<const double> lipschitz, std::span<const double> costs, double v_req) {
  require_same_length(lipschitz.size(), costs.size());
  if (covers(0.0, v_req)) return finish(lipschitz, costs, {}, v_req);
  // Items are visited cheapest first. An item that would complete the
  // coverage is recorded as a candidate closing item instead of being added;
  // the answer is the kept items plus the cheapest closing candidate.
  std::vector<std::size_t> kept;
  double coverage = 0.0;
  double kept_cost = 0.0;
  std::optional<std::size_t> closing_at;
  std::size_t closing_item = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t i : cheapest_first_order(costs)) {
    const double weight = lipschitz[i] * std::sqrt(costs[i]);
    if (covers(coverage + lipschitz[i], v_req)) {
      if (kept_cost + weight < best_cost) {
        best_cost = kept_cost + weight;
        closing_at = kept.size();
        closing_item = i;
      }
      continue;
    }
    kept.push_back(i);
    coverage += lipschitz[i];
    kept_cost += weight;
  }
  if (!closing_at) return finish(lipschitz, costs, std::move(kept), v_req);
  kept.resize(*closing_at);
  kept.push_back(closing_item);
  return finish(lipschitz, costs, std::move(kept), v_req);
}

SubsetSelection exact_select(std::span<const double> lipschitz, std::span<const double> costs, double v_req) {
  require_same_length(lipschitz.size(), costs.size());
  const std::size_t n = lipschitz.size();
  if (n > kExactSelectLimit) fail(ErrorCode::kSizeLimit, "exact select: exhaustive search is limited to n <= 22");
  std::vector<double> weight(n);
  for (std::size_t i = 0; i < n; ++i) weight[i] = lipschitz[i] * std::sqrt(costs[i]);

  // Lexicographic order on ascending index lists. Below the lowest index in
  // exactly one of the sets both lists agree. The list holding that index is
  // smaller unless the other list ends there.
  auto lex_less = [](std::uint32_t a, std::uint32_t b) {
    const std::uint32_t diff = a ^ b;
    if (diff == 0) return false;
    const std::uint32_t low = diff & (~diff + 1);
    const std::uint32_t above = ~((low << 1) - 1);
    if (a & low) return (b & above) != 0;
    return (a & above) == 0;
  };

  bool found = false;
  std::uint32_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  const std::uint32_t limit = n == 0 ? 1u : (1u << n);
  for (std::uint32_t mask = 0; mask < limit; ++mask) {
    double coverage = 0.0;
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        coverage += lipschitz[i];
        cost += weight[i];
      }
    }
    if (!covers(coverage, v_req)) continue;
    if (!found || cost < best_cost || (cost == best_cost && lex_less(mask, best))) {
      found = true;
      best = mask;
      best_cost = cost;
    }
  }
  std::vector<std::size_t> chosen;
  if (!found) {
    chosen.resize(n);
    std::iota(chosen.begin(), chosen.end(), 0);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (best & (1u << i)) chosen.push_back(i);
    }
  }
  return finish(lipschitz, costs, std::move(chosen), v_req);
}

std::optional<double> biased_cost_to_epsilon(std::span<const double> lipschitz, std::span<const double> costs,
                                             std::span<const std::size_t> pi, double diameter, double epsilon,
                                             std::size_t n) {
  require_same_length(lipschitz.size(), costs.size());
  if (!(epsilon > 0.0)) fail(ErrorCode::kInvalidRange, "biased cost: epsilon must be positive");
  if (!(diameter > 0.0)) fail(ErrorCode::kInvalidRange, "biased cost: D must be positive");
  const double beta = bias_floor(lipschitz, pi, n);
  const double margin = epsilon - diameter * beta;
  if (!(margin > 0.0)) return std::nullopt;
  double dot = 0.0;
  for (std::size_t i : pi) dot += lipschitz[i] * std::sqrt(costs[i]);
  const double nn = static_cast<double>(n);
  return diameter * diameter * dot * dot / (nn * nn * margin * margin);
}

namespace {

SweepRow analytic_row(std::span<const double> lipschitz, std::span<const double> costs, double diameter,
                      std::optional<double> mu, double gamma, const GammaSweepOptions& options,
                      std::vector<std::size_t>* chosen_out) {
  const std::size_t n = lipschitz.size();
  SweepRow row;
  row.gamma = gamma;
  row.v_req = required_coverage(lipschitz, gamma, diameter, n, mu);
  const SubsetSelection sel = options.selector == Selector::kGreedy ? greedy_select(lipschitz, costs, row.v_req)
                                                                    : exact_select(lipschitz, costs, row.v_req);
  row.subset_size = sel.chosen.size();
  row.bias_floor = sel.bias_floor;
  row.predicted_cost = biased_cost_to_epsilon(lipschitz, costs, sel.chosen, diameter, options.epsilon, n);
  row.feasible = sel.feasible && row.predicted_cost.has_value();
  if (chosen_out) *chosen_out = sel.chosen;
  return row;
}

void validate(const GammaSweepOptions& options) {
  if (options.gammas.empty()) fail(ErrorCode::kInvalidArgument, "gamma sweep: grid is empty");
  if (!(options.epsilon > 0.0)) fail(ErrorCode::kInvalidRange, "gamma sweep: epsilon must be positive");
  for (double g : options.gammas) {
    if (!(g > 0.0)) fail(ErrorCode::kInvalidRange, "gamma sweep: every Gamma must be positive");
  }
}

double exact_bias_at(const FiniteSumProblem& problem, const std::vector<std::size_t>& pi, const Vector& x) {
  std::vector<char> inside(problem.size(), 0);
  for (std::size_t i : pi) inside[i] = 1;
  Vector sum = Vector::Zero(problem.dimension());
  Vector g(problem.dimension());
  for (std::size_t j = 0; j < problem.size(); ++j) {
    if (inside[j]) continue;
    problem.oracle().gradient(j, x, g);
    sum += g;
  }
  return sum.norm() / static_cast<double>(problem.size());
}

void empirical_columns(const FiniteSumProblem& problem, const std::vector<std::size_t>& pi, double f_star,
                       double epsilon, const EmpiricalSweepOptions& emp, SweepRow& row) {
  const std::size_t n = problem.size();
  const auto lipschitz = problem.lipschitz_bounds();
  const auto costs = problem.costs();
  std::vector<double> weights(n, 0.0);
  double moment = 0.0;
  for (std::size_t i : pi) weights[i] = lipschitz[i] / std::sqrt(costs[i]);
  double total = 0.0;
  for (double w : weights) total += w;

  if (pi.empty() || !(total > 0.0)) {
    // Nothing to sample: the output stays at the starting point for free.
    const double err = objective(problem, problem.domain().center) - f_star;
    row.empirical_error = err;
    if (err <= epsilon) {
      row.empirical_cost = 0.0;
      row.empirical_reached = emp.seeds.size();
    }
    return;
  }
  const auto q = SamplingDistribution::from_weights(weights);
  for (std::size_t i : pi) {
    if (q[i] > 0.0) moment += lipschitz[i] * lipschitz[i] / q[i];
  }
  moment /= static_cast<double>(n) * static_cast<double>(n);

  RunOptions ro;
  ro.schedule = StepSchedule::constant_over_sqrt_t(
      emp.step_multiplier * problem.domain().diameter / std::sqrt(moment), emp.horizon);
  ro.mode = emp.mode;
  ro.stop = StoppingRule::fixed(emp.iterations);
  ro.eval_every = emp.eval_every;
  ro.optimal_value = f_star;
  ro.allow_partial_support = true;

  double err_sum = 0.0;
  double cost_sum = 0.0;
  for (std::uint64_t seed : emp.seeds) {
    ro.seed = seed;
    const RunTrace trace = run(problem, q, ro);
    err_sum += *trace.final_suboptimality;
    for (const auto& s : trace.steps) {
      if (s.suboptimality && *s.suboptimality <= epsilon) {
        cost_sum += s.cumulative_cost;
        ++row.empirical_reached;
        break;
      }
    }
  }
  row.empirical_error = err_sum / static_cast<double>(emp.seeds.size());
  if (row.empirical_reached > 0) row.empirical_cost = cost_sum / static_cast<double>(row.empirical_reached);
}

}  // namespace

std::vector<SweepRow> gamma_sweep(std::span<const double> lipschitz, std::span<const double> costs, double diameter,
                                  std::optional<double> mu, const GammaSweepOptions& options) {
  require_same_length(lipschitz.size(), costs.size());
  validate(options);
  std::vector<SweepRow> rows;
  for (double gamma : options.gammas) {
    rows.push_back(analytic_row(lipschitz, costs, diameter, mu, gamma, options, nullptr));
  }
  return rows;
}

std::vector<SweepRow> gamma_sweep(const FiniteSumProblem& problem, const GammaSweepOptions& options) {
  validate(options);
  if (options.empirical) {
    if (options.empirical->seeds.empty()) fail(ErrorCode::kInvalidArgument, "gamma sweep: no empirical seeds");
    if (options.empirical->iterations == 0) fail(ErrorCode::kInvalidArgument, "gamma sweep: zero iterations");
  }
  const auto lipschitz = problem.lipschitz_bounds();
  const auto costs = problem.costs();
  const double diameter = problem.domain().diameter;
  const std::optional<double> mu = options.strongly_convex ? problem.strong_convexity() : std::nullopt;
  const bool least_squares = problem.least_squares() != nullptr;
  const double f_star = least_squares ? true_minimizer(problem).value : 0.0;

  std::vector<SweepRow> rows(options.gammas.size());
  std::vector<std::string> failures(options.gammas.size());
  detail::parallel_for(rows.size(), options.jobs, [&](std::size_t k) {
    try {
      std::vector<std::size_t> chosen;
      rows[k] = analytic_row(lipschitz, costs, diameter, mu, options.gammas[k], options, &chosen);
      if (!least_squares) return;
      const Minimizer restricted = restricted_minimizer(problem, chosen);
      rows[k].exact_bias = exact_bias_at(problem, chosen, restricted.point);
      if (options.empirical) empirical_columns(problem, chosen, f_star, options.epsilon, *options.empirical, rows[k]);
    } catch (const Error& e) {
      failures[k] = std::string(error_code_name(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
      failures[k] = std::string("internal: ") + e.what();
    }
  });
  for (const auto& f : failures) {
    if (!f.empty()) fail(ErrorCode::kInternal, "gamma sweep row failed: " + f);
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  auto opt = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); };
  std::ostringstream out;
  out << "gamma,subset_size,bias_floor,v_req,predicted_cost,feasible,empirical_error,empirical_cost,exact_bias\n";
  for (const auto& r : rows) {
    out << detail::format_double(r.gamma) << ',' << r.subset_size << ',' << detail::format_double(r.bias_floor)
        << ',' << detail::format_double(r.v_req) << ',' << opt(r.predicted_cost) << ','
        << (r.feasible ? "true" : "false") << ',' << opt(r.empirical_error) << ',' << opt(r.empirical_cost) << ','
        << opt(r.exact_bias) << '\n';
  }
  return out.str();
}

}  // namespace casgd
