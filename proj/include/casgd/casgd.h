/* SPDX-License-Identifier: Apache-2.0 */
#ifndef CASGD_CASGD_H
#define CASGD_CASGD_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(CASGD_BUILDING_LIBRARY)
#define CASGD_API __declspec(dllexport)
#else
#define CASGD_API __declspec(dllimport)
#endif
#else
#define CASGD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Nonzero values match casgd::ErrorCode one-to-one. */
typedef enum casgd_status {
  CASGD_OK = 0,
  CASGD_ERR_INVALID_ARGUMENT = 1,
  CASGD_ERR_INVALID_SIZE = 2,
  CASGD_ERR_INVALID_RANGE = 3,
  CASGD_ERR_INDEX = 4,
  CASGD_ERR_DOMAIN = 5,
  CASGD_ERR_DEGENERATE = 6,
  CASGD_ERR_INVALID_COST = 7,
  CASGD_ERR_ZERO_PROBABILITY = 8,
  CASGD_ERR_UNBOUNDED_MOMENT = 9,
  CASGD_ERR_UNSUPPORTED = 10,
  CASGD_ERR_SIZE_LIMIT = 11,
  CASGD_ERR_IO = 12,
  CASGD_ERR_PARSE = 13,
  CASGD_ERR_NUMERIC = 14,
  CASGD_ERR_GROUP_SIZE = 15,
  CASGD_ERR_INTERNAL = 16
} casgd_status;

typedef struct casgd_problem casgd_problem;
typedef struct casgd_comparison casgd_comparison;
typedef struct casgd_sweep casgd_sweep;
typedef struct casgd_pool casgd_pool;
typedef struct casgd_grpo_result casgd_grpo_result;

/* Library version, for example "0.1.0". */
CASGD_API const char* casgd_version(void);

/* Short kebab-case name of a status, for example "invalid-argument". */
CASGD_API const char* casgd_status_name(casgd_status status);

/* Message of the last failed call on this thread, or "" after a success. */
CASGD_API const char* casgd_last_error(void);

/* Releases a string returned through a char** out-parameter. */
CASGD_API void casgd_string_free(char* text);

/* ---- problems ---------------------------------------------------------- */

/* Generates a least-squares instance. spec_json is an object with optional
 * keys n, d, norm_bound, cost_low, cost_high, seed, diameter,
 * profile ("uniform_radius" or "gaussian"), target_noise, cost_correlation.
 * NULL or "" selects every default. */
CASGD_API casgd_status casgd_problem_generate(const char* spec_json, casgd_problem** out);

/* Parses an instance document. */
CASGD_API casgd_status casgd_problem_from_json(const char* text, casgd_problem** out);

/* Serializes an instance; meta_json (may be NULL) is stored under "meta". */
CASGD_API casgd_status casgd_problem_to_json(const casgd_problem* problem, const char* meta_json, char** out);

CASGD_API casgd_status casgd_problem_shape(const casgd_problem* problem, size_t* n, size_t* d, double* diameter);

/* Copies costs and Lipschitz bounds into caller arrays of length n. Either
 * pointer may be NULL. */
CASGD_API casgd_status casgd_problem_components(const casgd_problem* problem, double* costs, double* lipschitz);

CASGD_API void casgd_problem_free(casgd_problem* problem);

/* ---- closed forms ------------------------------------------------------ */

/* p_i proportional to G_i / sqrt(c_i), written to out (length n). */
CASGD_API casgd_status casgd_optimal_distribution(const double* lipschitz, const double* costs, size_t n,
                                                  double* out);

/* J(p) = S(p) C(p) for the distribution given by nonnegative weights. */
CASGD_API casgd_status casgd_cost_objective(const double* lipschitz, const double* costs, const double* weights,
                                            size_t n, double* out);

/* Expected costs to epsilon: out[0] uniform, out[1] variance, out[2] optimal. */
CASGD_API casgd_status casgd_baseline_costs(const double* lipschitz, const double* costs, size_t n,
                                            double diameter, double epsilon, double out[3]);

/* ---- strategy comparison ----------------------------------------------- */

/* options_json keys: strategies (comma list or array), seeds (array, or a
 * count starting at seed), seed, error_target, eval_every, horizon,
 * step_multiplier, mode ("last", "average", "suffix:<f>"), refresh_every,
 * dynamic_mix, max_iterations, jobs, keep_traces. */
CASGD_API casgd_status casgd_compare(const casgd_problem* problem, const char* options_json,
                                     casgd_comparison** out);

/* strategy,seed,iters_to_target,cost_to_target,reached */
CASGD_API casgd_status casgd_comparison_csv(const casgd_comparison* table, char** out);

/* strategy,mean_iters,stderr_iters,mean_cost,stderr_cost,reached,runs */
CASGD_API casgd_status casgd_comparison_summary_csv(const casgd_comparison* table, char** out);

/* strategy,seed,step,index,cost,cum_cost,error; empty unless keep_traces. */
CASGD_API casgd_status casgd_comparison_traces_csv(const casgd_comparison* table, char** out);

/* Strategy names by ascending mean cost-to-target, comma separated. */
CASGD_API casgd_status casgd_comparison_ordering(const casgd_comparison* table, char** out);

/* Number of cells that ended in an error rather than a result. */
CASGD_API casgd_status casgd_comparison_failures(const casgd_comparison* table, size_t* count);

CASGD_API void casgd_comparison_free(casgd_comparison* table);

/* ---- subset sweep ------------------------------------------------------ */

/* options_json keys: epsilon, gammas (absolute) or gamma_fractions (times
 * 2 mean G), selector ("greedy" or "exact"), strongly_convex, jobs, and
 * empirical (null or an object with iterations, seeds, seed,
 * step_multiplier, horizon, mode, eval_every). */
CASGD_API casgd_status casgd_subset_sweep(const casgd_problem* problem, const char* options_json, casgd_sweep** out);

/* gamma,subset_size,bias_floor,v_req,predicted_cost,feasible,empirical_error,empirical_cost,exact_bias */
CASGD_API casgd_status casgd_sweep_csv(const casgd_sweep* sweep, char** out);

CASGD_API casgd_status casgd_sweep_rows(const casgd_sweep* sweep, size_t* count);

CASGD_API void casgd_sweep_free(casgd_sweep* sweep);

/* ---- rollout pools and GRPO simulation --------------------------------- */

/* spec_json keys: n_prompts, group_size, reward_prob_low, reward_prob_high,
 * token_low, token_high. */
CASGD_API casgd_status casgd_pool_generate(const char* spec_json, uint64_t seed, casgd_pool** out);

CASGD_API casgd_status casgd_pool_from_jsonl(const char* text, casgd_pool** out);

CASGD_API casgd_status casgd_pool_to_jsonl(const casgd_pool* pool, char** out);

CASGD_API casgd_status casgd_pool_size(const casgd_pool* pool, size_t* n_prompts, size_t* group_size);

/* Distribution over pool positions for a strategy name (p_star,
 * smoothed:<a>, uniform, length_only), written to out (length n M). */
CASGD_API casgd_status casgd_pool_distribution(const casgd_pool* pool, const char* strategy, double* out);

CASGD_API void casgd_pool_free(casgd_pool* pool);

/* options_json keys: pool (as in casgd_pool_generate), strategies, seeds,
 * seed, rounds, batch_size, updates, learning_rate,
 * uniform_with_replacement, dimension, target_spread, initial_distance,
 * loss_threshold, jobs. */
CASGD_API casgd_status casgd_grpo_run(const char* options_json, casgd_grpo_result** out);

/* round,cumulative_tokens,loss,strategy,seed */
CASGD_API casgd_status casgd_grpo_curves_csv(const casgd_grpo_result* result, char** out);

/* strategy,seed,tokens_to_threshold,degraded_rounds,skipped_rounds */
CASGD_API casgd_status casgd_grpo_summary_csv(const casgd_grpo_result* result, char** out);

/* round,strategy,seed,pearson,chi2 */
CASGD_API casgd_status casgd_grpo_fidelity_csv(const casgd_grpo_result* result, char** out);

CASGD_API void casgd_grpo_free(casgd_grpo_result* result);

/* ---- invariant suites -------------------------------------------------- */

/* Runs the fast suite, plus the Monte Carlo suite when full is nonzero.
 * inject_fault (may be NULL) names a check to perturb. table receives a
 * printable table, csv (may be NULL) name,passed,residual,tolerance rows.
 * Failed checks are counted in *failed and do not make the call fail. */
CASGD_API casgd_status casgd_verify(int full, uint64_t seed, const char* inject_fault, char** table, char** csv,
                                    size_t* failed);

#ifdef __cplusplus
}
#endif

#endif /* CASGD_CASGD_H */
