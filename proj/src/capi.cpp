// SPDX-License-Identifier: Apache-2.0
#include "casgd/casgd.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "casgd/analysis.hpp"
#include "casgd/error.hpp"
#include "casgd/optimizer.hpp"
#include "casgd/problem.hpp"
#include "casgd/rollout_sim.hpp"
#include "casgd/sampling.hpp"
#include "casgd/subset.hpp"
#include "casgd/verify.hpp"
#include "format.hpp"

struct casgd_problem {
  casgd::FiniteSumProblem problem;
};

struct casgd_comparison {
  casgd::ComparisonTable table;
};

struct casgd_sweep {
  std::vector<casgd::SweepRow> rows;
};

struct casgd_pool {
  casgd::RolloutPool pool;
};

struct casgd_grpo_result {
  casgd::GrpoSimResult result;
};

namespace {

using json = nlohmann::json;
using casgd::ErrorCode;
using casgd::fail;
using casgd::detail::format_double;

thread_local std::string last_error;

template <typename Fn>
casgd_status guarded(Fn&& fn) noexcept {
  try {
    fn();
    last_error.clear();
    return CASGD_OK;
  } catch (const casgd::Error& e) {
    last_error = e.what();
    return static_cast<casgd_status>(e.code());
  } catch (const json::exception& e) {
    last_error = std::string("options: ") + e.what();
    return CASGD_ERR_PARSE;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return CASGD_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return CASGD_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown exception";
    return CASGD_ERR_INTERNAL;
  }
}

void require(const void* pointer, const char* what) {
  if (pointer == nullptr) fail(ErrorCode::kInvalidArgument, std::string(what) + " must not be null");
}

char* dup_string(const std::string& text) {
  char* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

json parse_options(const char* text, const char* where) {
  if (text == nullptr || *text == '\0') return json::object();
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kParse, std::string(where) + ": " + e.what());
  }
  if (doc.is_null()) return json::object();
  if (!doc.is_object()) fail(ErrorCode::kParse, std::string(where) + ": options must be a JSON object");
  return doc;
}

/// Rejects keys outside the schema so that typos do not silently fall back to defaults.
void check_keys(const json& doc, std::initializer_list<const char*> allowed, const char* where) {
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& item : doc.items()) {
    if (!known.count(item.key())) fail(ErrorCode::kInvalidArgument, std::string(where) + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
void read(const json& doc, const char* key, T& into) {
  if (doc.contains(key) && !doc[key].is_null()) into = doc[key].get<T>();
}

std::vector<std::uint64_t> read_seeds(const json& doc, std::vector<std::uint64_t> fallback) {
  std::uint64_t base = 0;
  read(doc, "seed", base);
  if (!doc.contains("seeds")) {
    if (doc.contains("seed")) {
      for (auto& s : fallback) s += base;
    }
    return fallback;
  }
  const json& s = doc["seeds"];
  std::vector<std::uint64_t> out;
  if (s.is_array()) {
    out = s.get<std::vector<std::uint64_t>>();
  } else if (s.is_number_unsigned() || s.is_number_integer()) {
    const auto count = s.get<std::int64_t>();
    if (count <= 0) fail(ErrorCode::kInvalidSize, "seeds: count must be positive");
    for (std::int64_t k = 0; k < count; ++k) out.push_back(base + static_cast<std::uint64_t>(k));
  } else {
    fail(ErrorCode::kParse, "seeds: expected an array or a count");
  }
  if (out.empty()) fail(ErrorCode::kInvalidSize, "seeds: at least one seed is required");
  return out;
}

std::string read_list(const json& doc, const char* key, const std::string& fallback) {
  if (!doc.contains(key)) return fallback;
  const json& v = doc[key];
  if (v.is_string()) return v.get<std::string>();
  std::string joined;
  for (const auto& item : v) {
    if (!joined.empty()) joined += ',';
    joined += item.get<std::string>();
  }
  return joined;
}

casgd::IterateMode parse_mode(const std::string& text) {
  if (text == "last") return casgd::IterateMode::last();
  if (text == "average") return casgd::IterateMode::average();
  if (text == "suffix") return casgd::IterateMode::suffix();
  if (text.rfind("suffix:", 0) == 0) {
    const double f = std::stod(text.substr(7));
    if (!(f > 0.0 && f <= 1.0)) fail(ErrorCode::kInvalidRange, "mode: suffix fraction must lie in (0, 1]");
    return casgd::IterateMode::suffix(f);
  }
  fail(ErrorCode::kInvalidArgument, "mode: expected last, average or suffix:<fraction>, got '" + text + "'");
}

casgd::LeastSquaresSpec parse_instance_spec(const json& doc) {
  check_keys(doc,
             {"n", "d", "norm_bound", "cost_low", "cost_high", "seed", "diameter", "profile", "target_noise",
              "cost_correlation"},
             "instance");
  casgd::LeastSquaresSpec spec;
  read(doc, "n", spec.n);
  read(doc, "d", spec.d);
  read(doc, "norm_bound", spec.norm_bound);
  read(doc, "cost_low", spec.cost_low);
  read(doc, "cost_high", spec.cost_high);
  read(doc, "seed", spec.seed);
  read(doc, "diameter", spec.diameter);
  read(doc, "target_noise", spec.target_noise);
  read(doc, "cost_correlation", spec.cost_correlation);
  std::string profile = "uniform_radius";
  read(doc, "profile", profile);
  if (profile == "uniform_radius") {
    spec.profile = casgd::NormProfile::kUniformRadius;
  } else if (profile == "gaussian") {
    spec.profile = casgd::NormProfile::kGaussian;
  } else {
    fail(ErrorCode::kInvalidArgument, "instance: profile must be uniform_radius or gaussian");
  }
  return spec;
}

casgd::PoolSpec parse_pool_spec(const json& doc) {
  check_keys(doc, {"n_prompts", "group_size", "reward_prob_low", "reward_prob_high", "token_low", "token_high"},
             "pool");
  casgd::PoolSpec spec;
  read(doc, "n_prompts", spec.n_prompts);
  read(doc, "group_size", spec.group_size);
  read(doc, "reward_prob_low", spec.reward_prob_low);
  read(doc, "reward_prob_high", spec.reward_prob_high);
  read(doc, "token_low", spec.token_low);
  read(doc, "token_high", spec.token_high);
  return spec;
}

std::vector<double> span_copy(const double* data, std::size_t n, const char* what) {
  require(data, what);
  if (n == 0) fail(ErrorCode::kInvalidSize, std::string(what) + ": n must be positive");
  return std::vector<double>(data, data + n);
}

}  // namespace

extern "C" {

const char* casgd_version(void) { return CASGD_VERSION_STRING; }

const char* casgd_status_name(casgd_status status) {
  if (status == CASGD_OK) return "ok";
  return casgd::error_code_name(static_cast<ErrorCode>(status));
}

const char* casgd_last_error(void) { return last_error.c_str(); }

void casgd_string_free(char* text) { std::free(text); }

casgd_status casgd_problem_generate(const char* spec_json, casgd_problem** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    const auto spec = parse_instance_spec(parse_options(spec_json, "instance"));
    *out = new casgd_problem{casgd::generate_least_squares(spec)};
  });
}

casgd_status casgd_problem_from_json(const char* text, casgd_problem** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = nullptr;
    *out = new casgd_problem{casgd::problem_from_json(text)};
  });
}

casgd_status casgd_problem_to_json(const casgd_problem* problem, const char* meta_json, char** out) {
  return guarded([&] {
    require(problem, "problem");
    require(out, "out");
    *out = dup_string(casgd::problem_to_json(problem->problem, meta_json ? meta_json : ""));
  });
}

casgd_status casgd_problem_shape(const casgd_problem* problem, size_t* n, size_t* d, double* diameter) {
  return guarded([&] {
    require(problem, "problem");
    if (n) *n = problem->problem.size();
    if (d) *d = static_cast<size_t>(problem->problem.dimension());
    if (diameter) *diameter = problem->problem.domain().diameter;
  });
}

casgd_status casgd_problem_components(const casgd_problem* problem, double* costs, double* lipschitz) {
  return guarded([&] {
    require(problem, "problem");
    const auto& comps = problem->problem.components();
    for (std::size_t i = 0; i < comps.size(); ++i) {
      if (costs) costs[i] = comps[i].cost;
      if (lipschitz) lipschitz[i] = comps[i].lipschitz_bound;
    }
  });
}

void casgd_problem_free(casgd_problem* problem) { delete problem; }

casgd_status casgd_optimal_distribution(const double* lipschitz, const double* costs, size_t n, double* out) {
  return guarded([&] {
    require(out, "out");
    const auto g = span_copy(lipschitz, n, "lipschitz");
    const auto c = span_copy(costs, n, "costs");
    const auto p = casgd::optimal_distribution(g, c);
    std::copy(p.probabilities().begin(), p.probabilities().end(), out);
  });
}

casgd_status casgd_cost_objective(const double* lipschitz, const double* costs, const double* weights, size_t n,
                                  double* out) {
  return guarded([&] {
    require(out, "out");
    const auto g = span_copy(lipschitz, n, "lipschitz");
    const auto c = span_copy(costs, n, "costs");
    const auto w = span_copy(weights, n, "weights");
    *out = casgd::cost_objective(g, c, casgd::SamplingDistribution::from_weights(w), n);
  });
}

casgd_status casgd_baseline_costs(const double* lipschitz, const double* costs, size_t n, double diameter,
                                  double epsilon, double out[3]) {
  return guarded([&] {
    require(out, "out");
    const auto g = span_copy(lipschitz, n, "lipschitz");
    const auto c = span_copy(costs, n, "costs");
    const auto b = casgd::baseline_costs(g, c, diameter, epsilon, n);
    out[0] = b.uniform;
    out[1] = b.variance;
    out[2] = b.optimal;
  });
}

casgd_status casgd_compare(const casgd_problem* problem, const char* options_json, casgd_comparison** out) {
  return guarded([&] {
    require(problem, "problem");
    require(out, "out");
    *out = nullptr;
    const json doc = parse_options(options_json, "compare");
    check_keys(doc,
               {"strategies", "seeds", "seed", "error_target", "eval_every", "horizon", "step_multiplier", "mode",
                "refresh_every", "dynamic_mix", "max_iterations", "jobs", "keep_traces"},
               "compare");
    casgd::CompareOptions opts;
    opts.strategies = casgd::parse_strategy_list(read_list(doc, "strategies", "uniform,variance,optimal"));
    opts.seeds = read_seeds(doc, {0});
    read(doc, "error_target", opts.error_target);
    read(doc, "eval_every", opts.eval_every);
    read(doc, "horizon", opts.horizon);
    read(doc, "step_multiplier", opts.step_multiplier);
    if (doc.contains("mode")) opts.mode = parse_mode(doc["mode"].get<std::string>());
    read(doc, "refresh_every", opts.refresh_every);
    read(doc, "dynamic_mix", opts.dynamic_mix);
    read(doc, "max_iterations", opts.max_iterations);
    read(doc, "jobs", opts.jobs);
    read(doc, "keep_traces", opts.keep_traces);
    *out = new casgd_comparison{casgd::compare_strategies(problem->problem, opts)};
  });
}

casgd_status casgd_comparison_csv(const casgd_comparison* table, char** out) {
  return guarded([&] {
    require(table, "table");
    require(out, "out");
    *out = dup_string(casgd::comparison_to_csv(table->table));
  });
}

casgd_status casgd_comparison_summary_csv(const casgd_comparison* table, char** out) {
  return guarded([&] {
    require(table, "table");
    require(out, "out");
    std::ostringstream csv;
    csv << "strategy,mean_iters,stderr_iters,mean_cost,stderr_cost,reached,runs\n";
    for (const auto& s : table->table.summary) {
      csv << s.strategy << ',' << format_double(s.mean_iters) << ',' << format_double(s.stderr_iters) << ','
          << format_double(s.mean_cost) << ',' << format_double(s.stderr_cost) << ',' << s.reached << ',' << s.runs
          << '\n';
    }
    *out = dup_string(csv.str());
  });
}

casgd_status casgd_comparison_traces_csv(const casgd_comparison* table, char** out) {
  return guarded([&] {
    require(table, "table");
    require(out, "out");
    std::ostringstream csv;
    csv << "strategy,seed,step,index,cost,cum_cost,error\n";
    for (const auto& trace : table->table.traces) {
      for (const auto& s : trace.steps) {
        csv << trace.strategy_name << ',' << trace.seed << ',' << s.step << ',' << s.index << ','
            << format_double(s.cost) << ',' << format_double(s.cumulative_cost) << ',';
        if (s.suboptimality) csv << format_double(*s.suboptimality);
        csv << '\n';
      }
    }
    *out = dup_string(csv.str());
  });
}

casgd_status casgd_comparison_ordering(const casgd_comparison* table, char** out) {
  return guarded([&] {
    require(table, "table");
    require(out, "out");
    std::string joined;
    for (const auto& name : casgd::order_by_cost(table->table)) {
      if (!joined.empty()) joined += ',';
      joined += name;
    }
    *out = dup_string(joined);
  });
}

casgd_status casgd_comparison_failures(const casgd_comparison* table, size_t* count) {
  return guarded([&] {
    require(table, "table");
    require(count, "count");
    *count = 0;
    for (const auto& row : table->table.rows) {
      if (!row.failure.empty()) ++*count;
    }
  });
}

void casgd_comparison_free(casgd_comparison* table) { delete table; }

casgd_status casgd_subset_sweep(const casgd_problem* problem, const char* options_json, casgd_sweep** out) {
  return guarded([&] {
    require(problem, "problem");
    require(out, "out");
    *out = nullptr;
    const json doc = parse_options(options_json, "subset");
    check_keys(doc, {"epsilon", "gammas", "gamma_fractions", "selector", "strongly_convex", "jobs", "empirical"},
               "subset");
    casgd::GammaSweepOptions opts;
    read(doc, "epsilon", opts.epsilon);
    read(doc, "strongly_convex", opts.strongly_convex);
    read(doc, "jobs", opts.jobs);
    if (doc.contains("gammas") && doc.contains("gamma_fractions")) {
      fail(ErrorCode::kInvalidArgument, "subset: give either gammas or gamma_fractions");
    }
    if (doc.contains("gammas")) {
      opts.gammas = doc["gammas"].get<std::vector<double>>();
    } else {
      std::vector<double> fractions{1e-4, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9};
      read(doc, "gamma_fractions", fractions);
      const auto g = problem->problem.lipschitz_bounds();
      double mean = 0.0;
      for (double v : g) mean += v;
      mean /= static_cast<double>(g.size());
      for (double f : fractions) opts.gammas.push_back(f * 2.0 * mean);
    }
    std::string selector = "greedy";
    read(doc, "selector", selector);
    if (selector == "greedy") {
      opts.selector = casgd::Selector::kGreedy;
    } else if (selector == "exact") {
      opts.selector = casgd::Selector::kExact;
    } else {
      fail(ErrorCode::kInvalidArgument, "subset: selector must be greedy or exact");
    }
    if (doc.contains("empirical") && !doc["empirical"].is_null()) {
      const json& e = doc["empirical"];
      if (!e.is_object()) fail(ErrorCode::kParse, "subset.empirical: expected an object or null");
      check_keys(e, {"iterations", "seeds", "seed", "step_multiplier", "horizon", "mode", "eval_every"},
                 "subset.empirical");
      casgd::EmpiricalSweepOptions emp;
      read(e, "iterations", emp.iterations);
      emp.seeds = read_seeds(e, emp.seeds);
      read(e, "step_multiplier", emp.step_multiplier);
      read(e, "horizon", emp.horizon);
      if (e.contains("mode")) emp.mode = parse_mode(e["mode"].get<std::string>());
      read(e, "eval_every", emp.eval_every);
      opts.empirical = emp;
    }
    *out = new casgd_sweep{casgd::gamma_sweep(problem->problem, opts)};
  });
}

casgd_status casgd_sweep_csv(const casgd_sweep* sweep, char** out) {
  return guarded([&] {
    require(sweep, "sweep");
    require(out, "out");
    *out = dup_string(casgd::sweep_to_csv(sweep->rows));
  });
}

casgd_status casgd_sweep_rows(const casgd_sweep* sweep, size_t* count) {
  return guarded([&] {
    require(sweep, "sweep");
    require(count, "count");
    *count = sweep->rows.size();
  });
}

void casgd_sweep_free(casgd_sweep* sweep) { delete sweep; }

casgd_status casgd_pool_generate(const char* spec_json, uint64_t seed, casgd_pool** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    const auto spec = parse_pool_spec(parse_options(spec_json, "pool"));
    casgd::Engine engine = casgd::make_engine(seed, casgd::Stream::kPool);
    *out = new casgd_pool{casgd::generate_pool(spec, engine)};
  });
}

casgd_status casgd_pool_from_jsonl(const char* text, casgd_pool** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = nullptr;
    *out = new casgd_pool{casgd::pool_from_jsonl(text)};
  });
}

casgd_status casgd_pool_to_jsonl(const casgd_pool* pool, char** out) {
  return guarded([&] {
    require(pool, "pool");
    require(out, "out");
    *out = dup_string(casgd::pool_to_jsonl(pool->pool));
  });
}

casgd_status casgd_pool_size(const casgd_pool* pool, size_t* n_prompts, size_t* group_size) {
  return guarded([&] {
    require(pool, "pool");
    if (n_prompts) *n_prompts = pool->pool.n_prompts;
    if (group_size) *group_size = pool->pool.group_size;
  });
}

casgd_status casgd_pool_distribution(const casgd_pool* pool, const char* strategy, double* out) {
  return guarded([&] {
    require(pool, "pool");
    require(strategy, "strategy");
    require(out, "out");
    const auto p = casgd::pool_distribution(pool->pool, casgd::parse_pool_strategy(strategy));
    std::copy(p.probabilities().begin(), p.probabilities().end(), out);
  });
}

void casgd_pool_free(casgd_pool* pool) { delete pool; }

casgd_status casgd_grpo_run(const char* options_json, casgd_grpo_result** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    const json doc = parse_options(options_json, "grpo");
    check_keys(doc,
               {"pool", "strategies", "seeds", "seed", "rounds", "batch_size", "updates", "learning_rate",
                "uniform_with_replacement", "dimension", "target_spread", "initial_distance", "loss_threshold",
                "jobs"},
               "grpo");
    casgd::GrpoSimOptions opts;
    if (doc.contains("pool")) opts.pool = parse_pool_spec(doc["pool"]);
    opts.strategies = casgd::parse_pool_strategy_list(read_list(doc, "strategies", "uniform,p_star"));
    opts.seeds = read_seeds(doc, {0});
    read(doc, "rounds", opts.rounds);
    read(doc, "batch_size", opts.round.batch_size);
    if (doc.contains("updates") && !doc["updates"].is_null()) opts.round.updates = doc["updates"].get<std::size_t>();
    read(doc, "learning_rate", opts.round.learning_rate);
    read(doc, "uniform_with_replacement", opts.round.uniform_with_replacement);
    read(doc, "dimension", opts.dimension);
    read(doc, "target_spread", opts.target_spread);
    read(doc, "initial_distance", opts.initial_distance);
    read(doc, "loss_threshold", opts.loss_threshold);
    read(doc, "jobs", opts.jobs);
    *out = new casgd_grpo_result{casgd::run_grpo_campaign(opts)};
  });
}

casgd_status casgd_grpo_curves_csv(const casgd_grpo_result* result, char** out) {
  return guarded([&] {
    require(result, "result");
    require(out, "out");
    *out = dup_string(casgd::curves_to_csv(result->result.curves));
  });
}

casgd_status casgd_grpo_summary_csv(const casgd_grpo_result* result, char** out) {
  return guarded([&] {
    require(result, "result");
    require(out, "out");
    std::ostringstream csv;
    csv << "strategy,seed,tokens_to_threshold,degraded_rounds,skipped_rounds\n";
    for (const auto& run : result->result.runs) {
      csv << run.strategy << ',' << run.seed << ',';
      if (run.tokens_to_threshold) csv << *run.tokens_to_threshold;
      csv << ',' << run.degraded_rounds << ',' << run.skipped_rounds << '\n';
    }
    *out = dup_string(csv.str());
  });
}

casgd_status casgd_grpo_fidelity_csv(const casgd_grpo_result* result, char** out) {
  return guarded([&] {
    require(result, "result");
    require(out, "out");
    std::ostringstream csv;
    csv << "round,strategy,seed,pearson,chi2\n";
    for (const auto& run : result->result.runs) {
      for (std::size_t r = 0; r < run.fidelity.size(); ++r) {
        csv << r + 1 << ',' << run.strategy << ',' << run.seed << ',' << format_double(run.fidelity[r].pearson)
            << ',' << format_double(run.fidelity[r].cost_biased_chi2) << '\n';
      }
    }
    *out = dup_string(csv.str());
  });
}

void casgd_grpo_free(casgd_grpo_result* result) { delete result; }

casgd_status casgd_verify(int full, uint64_t seed, const char* inject_fault, char** table, char** csv,
                          size_t* failed) {
  return guarded([&] {
    require(table, "table");
    require(failed, "failed");
    casgd::VerifyOptions opts;
    opts.full = full != 0;
    opts.seed = seed;
    if (inject_fault) opts.inject_fault = inject_fault;
    const auto checks = casgd::run_verify(opts);
    *failed = 0;
    std::ostringstream rows;
    rows << "name,passed,residual,tolerance\n";
    for (const auto& c : checks) {
      if (!c.passed) ++*failed;
      rows << c.name << ',' << (c.passed ? 1 : 0) << ',' << format_double(c.residual) << ','
           << format_double(c.tolerance) << '\n';
    }
    *table = dup_string(casgd::verify_table(checks));
    if (csv) {
      try {
        *csv = dup_string(rows.str());
      } catch (...) {
        casgd_string_free(*table);
        *table = nullptr;
        throw;
      }
    }
  });
}

}  // extern "C"
