/* SPDX-License-Identifier: Apache-2.0 */
/* Exercises the shared library through its C header only. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "casgd/casgd.h"

static int failures = 0;

#define EXPECT(cond)                                                  \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: expectation failed: %s\n", __FILE__,   \
              __LINE__, #cond);                                       \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

static void test_version_and_errors(void) {
  casgd_problem* p = NULL;
  EXPECT(strcmp(casgd_version(), "0.1.0") == 0);
  EXPECT(strcmp(casgd_status_name(CASGD_OK), "ok") == 0);
  EXPECT(strcmp(casgd_status_name(CASGD_ERR_ZERO_PROBABILITY), "zero-probability") == 0);
  EXPECT(casgd_problem_generate("{\"n\": 0}", &p) == CASGD_ERR_INVALID_SIZE);
  EXPECT(p == NULL);
  EXPECT(strlen(casgd_last_error()) > 0);
  EXPECT(casgd_problem_generate("{\"bogus\": 1}", &p) == CASGD_ERR_INVALID_ARGUMENT);
  EXPECT(casgd_problem_generate("{oops", &p) == CASGD_ERR_PARSE);
  EXPECT(casgd_problem_generate(NULL, NULL) == CASGD_ERR_INVALID_ARGUMENT);
  EXPECT(casgd_problem_generate("{\"n\": 5, \"d\": 2}", &p) == CASGD_OK);
  EXPECT(strlen(casgd_last_error()) == 0);
  casgd_problem_free(p);
}

static void test_closed_forms(void) {
  const double g[2] = {3, 1};
  const double c[2] = {1, 4};
  const double w[2] = {1, 1};
  double p[2], j = 0, k[3];
  EXPECT(casgd_optimal_distribution(g, c, 2, p) == CASGD_OK);
  EXPECT(fabs(p[0] - 6.0 / 7) < 1e-15 && fabs(p[1] - 1.0 / 7) < 1e-15);
  EXPECT(casgd_cost_objective(g, c, w, 2, &j) == CASGD_OK);
  EXPECT(fabs(j - 12.5) < 1e-13);
  EXPECT(casgd_baseline_costs(g, c, 2, 1.0, 1.0, k) == CASGD_OK);
  EXPECT(fabs(k[0] - 12.5) < 1e-13 && fabs(k[1] - 7.0) < 1e-13 && fabs(k[2] - 6.25) < 1e-13);
  EXPECT(casgd_baseline_costs(g, c, 2, 1.0, 0.0, k) == CASGD_ERR_INVALID_RANGE);
}

static void test_problem_round_trip(void) {
  casgd_problem *p = NULL, *q = NULL;
  char *a = NULL, *b = NULL;
  size_t n = 0, d = 0;
  double diameter = 0, costs[30], lips[30];
  EXPECT(casgd_problem_generate("{\"n\": 30, \"d\": 3, \"seed\": 4}", &p) == CASGD_OK);
  EXPECT(casgd_problem_shape(p, &n, &d, &diameter) == CASGD_OK);
  EXPECT(n == 30 && d == 3 && diameter == 2.0);
  EXPECT(casgd_problem_components(p, costs, lips) == CASGD_OK);
  EXPECT(costs[0] >= 1.0 && lips[0] > 0.0);
  EXPECT(casgd_problem_to_json(p, NULL, &a) == CASGD_OK);
  EXPECT(casgd_problem_from_json(a, &q) == CASGD_OK);
  EXPECT(casgd_problem_to_json(q, NULL, &b) == CASGD_OK);
  EXPECT(strcmp(a, b) == 0);
  casgd_string_free(a);
  casgd_string_free(b);
  casgd_problem_free(p);
  casgd_problem_free(q);
}

static void test_compare_and_sweep(void) {
  casgd_problem* p = NULL;
  casgd_comparison *t = NULL, *bad = NULL;
  casgd_sweep* s = NULL;
  char *csv = NULL, *order = NULL, *sweep = NULL;
  size_t failed = 99, rows = 0;
  EXPECT(casgd_problem_generate("{\"n\": 40, \"d\": 4, \"norm_bound\": 2, \"cost_high\": 20, \"target_noise\": 0.1}",
                                &p) == CASGD_OK);
  EXPECT(casgd_compare(p, "{\"strategies\": \"uniform,optimal\", \"seeds\": 3, \"error_target\": 0.05}", &t) ==
         CASGD_OK);
  EXPECT(casgd_comparison_csv(t, &csv) == CASGD_OK);
  EXPECT(strncmp(csv, "strategy,seed,iters_to_target,cost_to_target,reached\n", 52) == 0);
  EXPECT(casgd_comparison_ordering(t, &order) == CASGD_OK);
  EXPECT(strstr(order, "optimal") != NULL);
  EXPECT(casgd_comparison_failures(t, &failed) == CASGD_OK && failed == 0);
  EXPECT(casgd_compare(p, "{\"mode\": \"sideways\"}", &bad) == CASGD_ERR_INVALID_ARGUMENT);
  EXPECT(bad == NULL);
  EXPECT(casgd_subset_sweep(p, "{\"gamma_fractions\": [0.0001, 0.5], \"epsilon\": 0.05}", &s) == CASGD_OK);
  EXPECT(casgd_sweep_rows(s, &rows) == CASGD_OK && rows == 2);
  EXPECT(casgd_sweep_csv(s, &sweep) == CASGD_OK);
  EXPECT(strncmp(sweep, "gamma,subset_size,", 18) == 0);
  casgd_string_free(csv);
  casgd_string_free(order);
  casgd_string_free(sweep);
  casgd_sweep_free(s);
  casgd_comparison_free(t);
  casgd_problem_free(p);
}

static void test_pools_and_grpo(void) {
  casgd_pool *pool = NULL, *back = NULL;
  casgd_grpo_result* r = NULL;
  char *jsonl = NULL, *curves = NULL, *summary = NULL, *fidelity = NULL;
  size_t prompts = 0, group = 0;
  double probs[16 * 4];
  double total = 0;
  int u;
  EXPECT(casgd_pool_generate("{\"n_prompts\": 16, \"group_size\": 4}", 3, &pool) == CASGD_OK);
  EXPECT(casgd_pool_size(pool, &prompts, &group) == CASGD_OK && prompts == 16 && group == 4);
  EXPECT(casgd_pool_distribution(pool, "smoothed:0.2", probs) == CASGD_OK);
  for (u = 0; u < 64; ++u) total += probs[u];
  EXPECT(fabs(total - 1.0) < 1e-12);
  EXPECT(casgd_pool_to_jsonl(pool, &jsonl) == CASGD_OK);
  EXPECT(casgd_pool_from_jsonl(jsonl, &back) == CASGD_OK);
  EXPECT(casgd_pool_distribution(back, "nonsense", probs) == CASGD_ERR_INVALID_ARGUMENT);
  EXPECT(casgd_grpo_run("{\"pool\": {\"n_prompts\": 8}, \"seeds\": 2, \"rounds\": 3}", &r) == CASGD_OK);
  EXPECT(casgd_grpo_curves_csv(r, &curves) == CASGD_OK);
  EXPECT(strncmp(curves, "round,cumulative_tokens,loss,strategy,seed\n", 43) == 0);
  EXPECT(casgd_grpo_summary_csv(r, &summary) == CASGD_OK);
  EXPECT(casgd_grpo_fidelity_csv(r, &fidelity) == CASGD_OK);
  casgd_string_free(jsonl);
  casgd_string_free(curves);
  casgd_string_free(summary);
  casgd_string_free(fidelity);
  casgd_grpo_free(r);
  casgd_pool_free(pool);
  casgd_pool_free(back);
}

static void test_verify(void) {
  char *table = NULL, *csv = NULL;
  size_t failed = 99;
  EXPECT(casgd_verify(0, 0, NULL, &table, &csv, &failed) == CASGD_OK);
  EXPECT(failed == 0);
  EXPECT(strstr(table, "chi2-identity") != NULL);
  casgd_string_free(table);
  casgd_string_free(csv);
  EXPECT(casgd_verify(0, 0, "chi2-identity", &table, NULL, &failed) == CASGD_OK);
  EXPECT(failed == 1);
  casgd_string_free(table);
  EXPECT(casgd_verify(0, 0, "no-such-check", &table, NULL, &failed) == CASGD_ERR_INVALID_ARGUMENT);
}

int main(void) {
  test_version_and_errors();
  test_closed_forms();
  test_problem_round_trip();
  test_compare_and_sweep();
  test_pools_and_grpo();
  test_verify();
  if (failures != 0) {
    fprintf(stderr, "%d expectation(s) failed\n", failures);
    return 1;
  }
  printf("C API: all expectations hold\n");
  return 0;
}
