// SPDX-License-Identifier: Apache-2.0
#include "casgd/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "casgd/analysis.hpp"
#include "casgd/error.hpp"
#include "casgd/optimizer.hpp"
#include "casgd/problem.hpp"
#include "casgd/rollout_sim.hpp"
#include "casgd/sampling.hpp"
#include "casgd/subset.hpp"

namespace casgd {

namespace {

struct Context {
  std::uint64_t seed = 0;
  std::string fault;

  Engine engine(std::uint64_t sub) const { return make_engine(seed, Stream::kMonteCarlo, sub); }
  /// Returns v, or v nudged by a relative 1e-6 when the named check is faulted.
  double side(const std::string& check, double v) const { return check == fault ? v * (1.0 + 1e-6) + 1e-6 : v; }
};

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

struct Instance {
  std::vector<double> g, c;
};

Instance random_instance(Engine& e, std::size_t n_max) {
  const std::size_t n = 2 + uniform_below(e, n_max - 1);
  Instance in;
  for (std::size_t i = 0; i < n; ++i) {
    in.g.push_back(0.01 + 10.0 * uniform01(e));
    in.c.push_back(std::exp(std::log(0.1) + std::log(1000.0) * uniform01(e)));
  }
  return in;
}

VerifyCheck make(const std::string& name, double residual, double tol, std::string detail = {}) {
  return {name, residual, tol, residual <= tol, std::move(detail)};
}

VerifyCheck optimal_closed_form(const Context& ctx) {
  const std::string name = "optimal-closed-form";
  Engine e = ctx.engine(1);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Instance in = random_instance(e, 50);
    const std::size_t n = in.g.size();
    const auto p = optimal_distribution(in.g, in.c);
    const double j = ctx.side(name, cost_objective(in.g, in.c, p, n));
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += in.g[i] * std::sqrt(in.c[i]);
    worst = std::max(worst, rel(j, dot * dot / double(n * n)));
  }
  return make(name, worst, 1e-12, "1000 instances, relative");
}

VerifyCheck cost_dominance(const Context& ctx) {
  const std::string name = "cost-dominance";
  Engine e = ctx.engine(2);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Instance in = random_instance(e, 50);
    const auto b = baseline_costs(in.g, in.c, 1.0, 1.0, in.g.size());
    const double opt = ctx.side(name, b.optimal);
    worst = std::max({worst, (opt - b.uniform) / b.uniform, (opt - b.variance) / b.variance});
    const std::vector<double> unit(in.g.size(), 1.0);
    const auto u = baseline_costs(in.g, unit, 1.0, 1.0, in.g.size());
    worst = std::max(worst, rel(ctx.side(name, u.optimal), u.variance) - 1e-12);
  }
  return make(name, std::max(worst, 0.0), 1e-12, "K_opt <= K_unif, K_var; unit costs K_opt = K_var");
}

VerifyCheck chi2_identity(const Context& ctx) {
  const std::string name = "chi2-identity";
  Engine e = ctx.engine(3);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Instance in = random_instance(e, 20);
    std::vector<double> w(in.g.size());
    for (double& v : w) v = 0.05 + uniform01(e);
    const auto p = SamplingDistribution::from_weights(w);
    const auto r = suboptimality_ratio(in.g, in.c, p, in.g.size());
    worst = std::max(worst, rel(ctx.side(name, 1.0 + r.chi2_of_cost_biased), r.ratio));
  }
  return make(name, worst, 1e-10, "200 full-support p', relative");
}

VerifyCheck adaptive_vs_uniform(const Context& ctx) {
  const std::string name = "variance-vs-uniform-predicate";
  Engine e = ctx.engine(4);
  int disagreements = 0;
  for (int k = 0; k < 500; ++k) {
    const Instance in = random_instance(e, 30);
    const auto b = baseline_costs(in.g, in.c, 1.0, 1.0, in.g.size());
    const auto pred = variance_vs_uniform_predicate(in.g, in.c);
    // Near-ties are decided by rounding on both sides; skip them.
    if (std::abs(b.uniform - b.variance) <= 1e-12 * b.uniform) continue;
    if (pred.variance_better != (b.variance <= b.uniform)) ++disagreements;
  }
  return make(name, ctx.side(name, disagreements), 0.0, "500 instances, disagreement count");
}

FiniteSumProblem small_problem(std::uint64_t seed) {
  LeastSquaresSpec spec;
  spec.n = 40;
  spec.d = 5;
  spec.norm_bound = 3.0;
  spec.cost_low = 1.0;
  spec.cost_high = 10.0;
  spec.seed = seed;
  spec.target_noise = 0.1;
  return generate_least_squares(spec);
}

Vector random_point(const BallDomain& dom, Engine& e) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dom.center.size());
  for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = normal(e);
  const double r = dom.radius() * std::pow(uniform01(e), 1.0 / double(v.size()));
  return dom.center + v * (r / v.norm());
}

VerifyCheck gradient_bound(const Context& ctx) {
  const std::string name = "lipschitz-bound";
  const auto problem = small_problem(ctx.seed + 11);
  const auto g = problem.lipschitz_bounds();
  Engine e = ctx.engine(5);
  double worst = -1.0;
  for (int k = 0; k < 1000; ++k) {
    const Vector x = random_point(problem.domain(), e);
    const auto norms = dynamic_gradient_norms(problem, x);
    for (std::size_t i = 0; i < norms.size(); ++i) worst = std::max(worst, ctx.side(name, norms[i]) / g[i] - 1.0);
  }
  return make(name, std::max(worst, 0.0), 0.0, "max(||grad f_i|| / G_i - 1) over 1000 points");
}

VerifyCheck exact_unbiasedness(const Context& ctx) {
  const std::string name = "estimator-unbiasedness-exact";
  const auto problem = small_problem(ctx.seed + 12);
  const std::size_t n = problem.size();
  Engine e = ctx.engine(6);
  double worst = 0.0;
  Vector g(problem.dimension());
  for (int k = 0; k < 100; ++k) {
    std::vector<double> w(n);
    for (double& v : w) v = 0.05 + uniform01(e);
    const auto p = SamplingDistribution::from_weights(w);
    const Vector x = random_point(problem.domain(), e);
    Vector sum = Vector::Zero(problem.dimension());
    for (std::size_t i = 0; i < n; ++i) {
      problem.oracle().gradient(i, x, g);
      sum += p[i] * importance_weight(p, i, n) * g;
    }
    const Vector full = full_gradient(problem, x);
    for (Eigen::Index j = 0; j < sum.size(); ++j) worst = std::max(worst, std::abs(ctx.side(name, sum[j]) - full[j]));
  }
  return make(name, worst, 1e-12, "100 (p, x) pairs, per coordinate");
}

VerifyCheck planted_optimum(const Context& ctx) {
  const std::string name = "planted-optimum";
  const auto problem = generate_least_squares(60, 6, 4.0, 1.0, 10.0, ctx.seed + 13);
  const auto m = true_minimizer(problem);
  const double residual = std::max(std::abs(ctx.side(name, m.value)), full_gradient(problem, m.point).norm());
  return make(name, residual, 1e-8, "f(x0) and ||grad f(x0)||");
}

VerifyCheck instance_round_trip(const Context& ctx) {
  const std::string name = "instance-json-round-trip";
  const auto problem = small_problem(ctx.seed + 14);
  const auto back = problem_from_json(problem_to_json(problem));
  double diff = 0.0;
  const auto* a = problem.least_squares();
  const auto* b = back.least_squares();
  diff = std::max(diff, (a->data() - b->data()).cwiseAbs().maxCoeff());
  diff = std::max(diff, (a->targets() - b->targets()).cwiseAbs().maxCoeff());
  const auto ca = problem.costs(), cb = back.costs();
  const auto ga = problem.lipschitz_bounds(), gb = back.lipschitz_bounds();
  for (std::size_t i = 0; i < ca.size(); ++i) diff = std::max({diff, std::abs(ca[i] - cb[i]), std::abs(ga[i] - gb[i])});
  return make(name, ctx.side(name, diff), 0.0, "max absolute difference after serialize/parse");
}

VerifyCheck cost_accounting(const Context& ctx) {
  const std::string name = "cost-accounting-replay";
  const auto problem = small_problem(ctx.seed + 15);
  const auto costs = problem.costs();
  const auto p = optimal_distribution(problem.lipschitz_bounds(), costs);
  RunOptions ro;
  ro.schedule = default_constant_schedule(problem, p, 200);
  ro.stop = StoppingRule::fixed(200);
  ro.eval_every = 0;
  ro.check_domain_each_step = true;
  double worst = 0.0;
  double sum = 0.0;
  std::size_t steps = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    ro.seed = ctx.seed * 1000 + s;
    const RunTrace trace = run(problem, p, ro);
    double replay = 0.0;
    for (const auto& step : trace.steps) {
      replay += costs[step.index];
      sum += step.cost;
      ++steps;
      worst = std::max(worst, std::abs(ctx.side(name, step.cumulative_cost) - replay));
      if (step.cost != costs[step.index]) worst = std::max(worst, 1.0);
    }
    if (trace.total_cost != replay) worst = std::max(worst, std::abs(trace.total_cost - replay));
  }
  const double expected = step_cost(p, costs);
  double second = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) second += p[i] * costs[i] * costs[i];
  const double se = std::sqrt((second - expected * expected) / double(steps));
  const double z = std::abs(sum / double(steps) - expected) / se;
  // Replay mismatches are exact failures; the mean check is allowed 3 standard errors.
  const double residual = worst > 0.0 ? 1e300 : std::max(0.0, z - 3.0);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "50 runs bitwise replay; mean step cost %.2f sigma from C(p)", z);
  return make(name, residual, 0.0, buf);
}

VerifyCheck knapsack_two_approx(const Context& ctx) {
  const std::string name = "knapsack-greedy-2-approx";
  Engine e = ctx.engine(7);
  double worst = 0.0;
  int dominance = 0;
  for (int k = 0; k < 300; ++k) {
    const std::size_t n = 1 + uniform_below(e, 15);
    std::vector<double> g(n), c(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = 0.1 + 10.0 * uniform01(e);
      c[i] = 1.0 + 99.0 * uniform01(e);
      total += g[i];
    }
    const double v_req = total * uniform01(e);
    const auto greedy = greedy_select(g, c, v_req);
    const auto exact = exact_select(g, c, v_req);
    if (exact.item_cost_total > greedy.item_cost_total * (1.0 + 1e-12)) ++dominance;
    if (exact.item_cost_total > 0.0) {
      worst = std::max(worst, ctx.side(name, greedy.item_cost_total) / exact.item_cost_total);
    }
  }
  // An exact cost above the greedy one means the oracle itself is broken.
  const double residual = dominance > 0 ? 1e300 : std::max(worst, 1.0) - 1.0;
  return make(name, residual, 1.0, "greedy/exact - 1 over 300 instances");
}

VerifyCheck knapsack_full_set(const Context& ctx) {
  const std::string name = "biased-cost-full-set";
  Engine e = ctx.engine(8);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Instance in = random_instance(e, 40);
    std::vector<std::size_t> all(in.g.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const double eps = 0.01 + uniform01(e);
    const auto biased = biased_cost_to_epsilon(in.g, in.c, all, 1.5, eps, in.g.size());
    const auto base = baseline_costs(in.g, in.c, 1.5, eps, in.g.size());
    worst = std::max(worst, rel(ctx.side(name, *biased), base.optimal));
  }
  return make(name, worst, 1e-12, "pi = full set versus K_opt, relative");
}

VerifyCheck greedy_order(const Context& ctx) {
  const std::string name = "greedy-order-cost-only";
  Engine e = ctx.engine(9);
  int violations = 0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 2 + uniform_below(e, 30);
    std::vector<double> g(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = 0.1 + uniform01(e);
      c[i] = std::floor(1.0 + 10.0 * uniform01(e));
    }
    std::vector<double> total_g(g);
    double total = 0.0;
    for (double v : g) total += v;
    const auto full = greedy_select(g, c, total);
    std::vector<double> shuffled(g);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(shuffled[i], shuffled[uniform_below(e, i + 1)]);
    double total_s = 0.0;
    for (double v : shuffled) total_s += v;
    const auto perm = greedy_select(shuffled, c, total_s);
    const auto order = cheapest_first_order(c);
    if (full.chosen != order || perm.chosen != order) ++violations;
    for (std::size_t i = 1; i < order.size(); ++i) {
      if (c[order[i - 1]] > c[order[i]]) ++violations;
    }
  }
  return make(name, ctx.side(name, violations), 0.0, "visitation order violations");
}

VerifyCheck advantage_normalization(const Context& ctx) {
  const std::string name = "advantage-normalization";
  Engine e = ctx.engine(10);
  PoolSpec spec;
  spec.n_prompts = 200;
  const auto pool = generate_pool(spec, e);
  double worst = 0.0;
  for (std::size_t g = 0; g < pool.n_prompts; ++g) {
    if (pool.degenerate_groups[g]) continue;
    double mean = 0.0, sq = 0.0;
    for (std::size_t k = 0; k < pool.group_size; ++k) mean += pool.rollouts[g * pool.group_size + k].advantage;
    mean /= double(pool.group_size);
    for (std::size_t k = 0; k < pool.group_size; ++k) {
      const double a = pool.rollouts[g * pool.group_size + k].advantage - mean;
      sq += a * a;
    }
    worst = std::max({worst, std::abs(mean), std::abs(ctx.side(name, std::sqrt(sq / double(pool.group_size))) - 1.0)});
  }
  return make(name, worst, 1e-9, "group mean 0 and population std 1");
}

VerifyCheck recentered_weights(const Context& ctx) {
  const std::string name = "recentered-weights";
  Engine e = ctx.engine(11);
  const auto pool = generate_pool(PoolSpec{}, e);
  const auto p = pool_distribution(pool, {PoolStrategy::Kind::kPStar, 0.0});
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const auto batch = sample_minibatch(pool, p, 1 + uniform_below(e, 64), e);
    double sum = 0.0;
    for (const auto& entry : batch.entries) {
      sum += entry.recentered_weight;
      if (!(std::abs(pool.rollouts[entry.position].advantage) > 0.0)) worst = std::max(worst, 1.0);
    }
    worst = std::max(worst, std::abs(ctx.side(name, sum / double(batch.entries.size())) - 1.0));
  }
  return make(name, worst, 1e-12, "batch mean of recentered weights");
}

VerifyCheck proportional_fidelity(const Context& ctx) {
  const std::string name = "proxy-fidelity-proportional";
  Engine e = ctx.engine(12);
  const auto pool = generate_pool(PoolSpec{}, e);
  const ProportionalRolloutOracle oracle(pool, 4, 2.5);
  const auto r = proxy_fidelity_report(pool, oracle, Vector::Zero(4));
  const double residual = std::max(std::abs(ctx.side(name, r.pearson) - 1.0), std::abs(r.cost_biased_chi2));
  return make(name, residual, 1e-12, "pearson 1 and chi2 0");
}

VerifyCheck proxy_gap_monte_carlo(const Context& ctx) {
  const std::string name = "proxy-gap-monte-carlo";
  Engine e = ctx.engine(20);
  const int instances = 20;
  int within = 0;
  for (int k = 0; k < instances; ++k) {
    std::vector<double> g(20), c(20);
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = 1.0 + 9.0 * uniform01(e);
      c[i] = 1.0 + 999.0 * uniform01(e);
    }
    const double sigma = 0.1 * *std::min_element(g.begin(), g.end());
    Engine mc = ctx.engine(1000 + k);
    const auto est = monte_carlo_proxy_gap(g, c, sigma, 100000, mc);
    const double approx = proxy_gap_approx(g, c, est.rho_hat, sigma * sigma);
    if (rel(ctx.side(name, est.empirical_ratio), approx) <= 0.1) ++within;
  }
  const double miss = 1.0 - double(within) / instances;
  return make(name, miss, 0.1, "fraction of 20 instances outside 10% relative");
}

VerifyCheck unbiasedness_monte_carlo(const Context& ctx) {
  const std::string name = "estimator-unbiasedness-monte-carlo";
  const auto problem = small_problem(ctx.seed + 21);
  const std::size_t n = problem.size();
  const auto p = optimal_distribution(problem.lipschitz_bounds(), problem.costs());
  Engine e = ctx.engine(21);
  const Vector x = random_point(problem.domain(), e);
  const auto d = problem.dimension();
  Vector mean = Vector::Zero(d), sq = Vector::Zero(d), g(d);
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) {
    const std::size_t i = p.draw(e);
    problem.oracle().gradient(i, x, g);
    g *= importance_weight(p, i, n);
    mean += g;
    sq += g.cwiseProduct(g);
  }
  mean /= draws;
  const Vector var = sq / draws - mean.cwiseProduct(mean);
  const Vector full = full_gradient(problem, x);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double se = std::sqrt(std::max(var[j], 0.0) / draws);
    worst = std::max(worst, std::abs(ctx.side(name, mean[j]) - full[j]) / std::max(se, 1e-300));
  }
  return make(name, worst, 3.0, "max |mean - grad| in standard errors");
}

VerifyCheck draw_frequency(const Context& ctx) {
  const std::string name = "draw-frequency";
  Engine e = ctx.engine(22);
  const std::vector<double> w{0.25, 0.75};
  const auto p = SamplingDistribution::from_weights(w);
  const int draws = 100000;
  int ones = 0;
  for (int k = 0; k < draws; ++k) ones += p.draw(e) == 1 ? 1 : 0;
  const double freq = ctx.side(name, double(ones) / draws);
  const double se = std::sqrt(0.75 * 0.25 / draws);
  return make(name, std::abs(freq - 0.75) / se, 3.0, "index-1 frequency in standard errors");
}

VerifyCheck strongly_convex_rate(const Context& ctx) {
  const std::string name = "inverse-mu-t-rate";
  LeastSquaresSpec spec;
  spec.n = 200;
  spec.d = 5;
  spec.norm_bound = 2.0;
  spec.seed = ctx.seed + 23;
  spec.target_noise = 0.2;
  const auto problem = generate_least_squares(spec);
  const double mu = *problem.strong_convexity();
  const auto p = optimal_distribution(problem.lipschitz_bounds(), problem.costs());
  const double f_star = true_minimizer(problem).value;
  auto mean_error = [&](std::size_t t) {
    double sum = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
      RunOptions ro;
      ro.schedule = StepSchedule::inverse_mu_t(mu);
      ro.mode = IterateMode::suffix(0.5);
      ro.stop = StoppingRule::fixed(t);
      ro.eval_every = 0;
      ro.record_steps = false;
      ro.optimal_value = f_star;
      ro.seed = ctx.seed * 1000 + s;
      sum += *run(problem, p, ro).final_suboptimality;
    }
    return sum / 50.0;
  };
  const double early = mean_error(2000);
  const double late = ctx.side(name, mean_error(8000));
  const double ratio = early / late;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "error ratio T/4T = %.3g (needs >= 2)", ratio);
  return make(name, std::max(0.0, 2.0 - ratio), 0.0, buf);
}

using CheckFn = std::function<VerifyCheck(const Context&)>;

std::vector<std::pair<std::string, CheckFn>> registry(bool full) {
  std::vector<std::pair<std::string, CheckFn>> out{
      {"optimal-closed-form", optimal_closed_form},
      {"cost-dominance", cost_dominance},
      {"chi2-identity", chi2_identity},
      {"variance-vs-uniform-predicate", adaptive_vs_uniform},
      {"lipschitz-bound", gradient_bound},
      {"estimator-unbiasedness-exact", exact_unbiasedness},
      {"planted-optimum", planted_optimum},
      {"instance-json-round-trip", instance_round_trip},
      {"cost-accounting-replay", cost_accounting},
      {"knapsack-greedy-2-approx", knapsack_two_approx},
      {"biased-cost-full-set", knapsack_full_set},
      {"greedy-order-cost-only", greedy_order},
      {"advantage-normalization", advantage_normalization},
      {"recentered-weights", recentered_weights},
      {"proxy-fidelity-proportional", proportional_fidelity},
  };
  if (full) {
    out.emplace_back("proxy-gap-monte-carlo", proxy_gap_monte_carlo);
    out.emplace_back("estimator-unbiasedness-monte-carlo", unbiasedness_monte_carlo);
    out.emplace_back("draw-frequency", draw_frequency);
    out.emplace_back("inverse-mu-t-rate", strongly_convex_rate);
  }
  return out;
}

}  // namespace

std::vector<std::string> verify_check_names(bool full) {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry(full)) names.push_back(name);
  return names;
}

std::vector<VerifyCheck> run_verify(const VerifyOptions& options) {
  auto checks = registry(options.full || !options.only.empty());
  auto known = [&](const std::string& name) {
    return std::any_of(checks.begin(), checks.end(), [&](const auto& c) { return c.first == name; });
  };
  if (!options.inject_fault.empty() && !known(options.inject_fault)) {
    fail(ErrorCode::kInvalidArgument, "verify: unknown check '" + options.inject_fault + "' for fault injection");
  }
  if (!options.only.empty()) {
    std::vector<std::pair<std::string, CheckFn>> selected;
    for (const auto& name : options.only) {
      if (!known(name)) fail(ErrorCode::kInvalidArgument, "verify: unknown check '" + name + "'");
      selected.push_back(*std::find_if(checks.begin(), checks.end(), [&](const auto& c) { return c.first == name; }));
    }
    checks = std::move(selected);
  }
  const Context ctx{options.seed, options.inject_fault};
  std::vector<VerifyCheck> out;
  for (const auto& [name, fn] : checks) {
    try {
      out.push_back(fn(ctx));
    } catch (const Error& e) {
      out.push_back({name, 0.0, 0.0, false, std::string(error_code_name(e.code())) + ": " + e.what()});
    }
  }
  return out;
}

std::string verify_table(const std::vector<VerifyCheck>& checks) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-36s %-6s %-12s %-12s %s\n", "check", "status", "residual", "tolerance",
                "detail");
  out << line;
  for (const auto& c : checks) {
    std::snprintf(line, sizeof(line), "%-36s %-6s %-12.4g %-12.4g %s\n", c.name.c_str(), c.passed ? "PASS" : "FAIL",
                  c.residual, c.tolerance, c.detail.c_str());
    out << line;
  }
  return out.str();
}

}  // namespace casgd
