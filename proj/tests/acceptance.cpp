// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "casgd/analysis.hpp"
#include "casgd/optimizer.hpp"
#include "casgd/problem.hpp"
#include "casgd/rollout_sim.hpp"
#include "casgd/subset.hpp"
#include "casgd/verify.hpp"

namespace fs = std::filesystem;
using namespace casgd;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

Outcome from_checks(const std::vector<std::string>& names) {
  VerifyOptions opts;
  opts.only = names;
  Outcome out{true, {}};
  for (const auto& c : run_verify(opts)) {
    out.passed = out.passed && c.passed;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s%s residual %.3g (tol %.3g)", out.detail.empty() ? "" : "; ", c.name.c_str(),
                  c.residual, c.tolerance);
    out.detail += buf;
  }
  return out;
}

std::string fmt(const char* pattern, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c, d);
  return buf;
}

Outcome criterion_strategy_comparison() {
  const auto problem = generate_least_squares(3000, 50, 10.0, 1.0, 1000.0, 7);
  CompareOptions opts;
  opts.strategies = parse_strategy_list("uniform,variance,optimal,dynamic-variance,dynamic-optimal");
  for (std::uint64_t s = 0; s < 20; ++s) opts.seeds.push_back(s);
  opts.error_target = 1e-2;
  const auto table = compare_strategies(problem, opts);

  std::map<std::string, StrategySummary> by_name;
  for (const auto& s : table.summary) by_name[s.strategy] = s;
  std::map<std::string, std::map<std::uint64_t, CompareRow>> rows;
  bool all_reached = true;
  for (const auto& r : table.rows) {
    rows[r.strategy][r.seed] = r;
    all_reached = all_reached && r.reached && r.failure.empty();
  }
  auto wins = [&](const std::string& dynamic, const std::string& fixed, bool strict) {
    std::size_t count = 0;
    for (const auto& [seed, row] : rows[dynamic]) {
      const auto other = rows[fixed][seed].iters_to_target;
      count += strict ? row.iters_to_target < other : row.iters_to_target <= other;
    }
    return double(count) / double(opts.seeds.size());
  };
  const auto& u = by_name["uniform"];
  const auto& v = by_name["variance"];
  const auto& o = by_name["optimal"];
  const bool cost_order = o.mean_cost < v.mean_cost && v.mean_cost < u.mean_cost;
  const bool iter_order = v.mean_iters <= o.mean_iters && o.mean_iters <= u.mean_iters;
  const double dv = wins("dynamic-variance", "variance", false);
  const double dopt = wins("dynamic-optimal", "optimal", false);
  Outcome out;
  out.passed = all_reached && cost_order && iter_order && dv >= 0.7 && dopt >= 0.7;
  out.detail = fmt("cost opt %.4g < var %.4g < unif %.4g", o.mean_cost, v.mean_cost, u.mean_cost) +
               fmt("; iters var %.4g <= opt %.4g <= unif %.4g", v.mean_iters, o.mean_iters, u.mean_iters) +
               fmt("; dynamic no slower var %.2f opt %.2f", dv, dopt) +
               fmt(" (strictly faster var %.2f opt %.2f)", wins("dynamic-variance", "variance", true),
                   wins("dynamic-optimal", "optimal", true));
  if (!all_reached) out.detail += "; some runs missed the target";
  return out;
}

Outcome criterion_gamma_sweep() {
  LeastSquaresSpec spec;
  spec.target_noise = 0.3;
  const auto problem = generate_least_squares(spec);
  double mean_g = 0.0;
  for (double g : problem.lipschitz_bounds()) mean_g += g;
  mean_g /= double(problem.size());
  GammaSweepOptions opts;
  opts.epsilon = 1e-2;
  for (double f : {1e-4, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9}) opts.gammas.push_back(f * 2.0 * mean_g);
  EmpiricalSweepOptions emp;
  emp.seeds.clear();
  for (std::uint64_t s = 0; s < 20; ++s) emp.seeds.push_back(s);
  opts.empirical = emp;
  const auto rows = gamma_sweep(problem, opts);

  bool monotone = true;
  for (std::size_t k = 1; k < rows.size(); ++k) monotone = monotone && rows[k].subset_size <= rows[k - 1].subset_size;
  const auto& first = rows.front();
  const auto& last = rows.back();
  const double base_error = *first.empirical_error;
  const double base_cost = first.empirical_cost.value_or(HUGE_VAL);
  std::size_t cheaper = 0;
  for (std::size_t k = 1; k + 1 < rows.size(); ++k) {
    const auto& r = rows[k];
    if (r.empirical_cost && *r.empirical_cost <= 0.8 * base_cost && *r.empirical_error <= 2.0 * base_error) {
      cheaper = k;
      break;
    }
  }
  const bool floor_rises = *last.empirical_error > 2.0 * base_error;
  Outcome out;
  out.passed = monotone && first.empirical_cost.has_value() && cheaper > 0 && floor_rises;
  out.detail = fmt("|pi| %.0f -> %.0f", double(first.subset_size), double(last.subset_size)) +
               (monotone ? " nonincreasing" : " NOT monotone");
  if (cheaper > 0) {
    out.detail += fmt("; row %.0f cost %.4g vs %.4g at error %.3g", double(cheaper), *rows[cheaper].empirical_cost,
                      base_cost, *rows[cheaper].empirical_error);
  } else {
    out.detail += "; no cheaper row within 2x error";
  }
  out.detail += fmt("; error %.3g -> %.3g", base_error, *last.empirical_error);
  return out;
}

Outcome criterion_grpo() {
  Outcome out = from_checks({"advantage-normalization", "recentered-weights", "proxy-fidelity-proportional"});
  GrpoSimOptions opts;
  opts.strategies = parse_pool_strategy_list("uniform,p_star");
  for (std::uint64_t s = 0; s < 50; ++s) opts.seeds.push_back(s);
  const auto result = run_grpo_campaign(opts);
  std::map<std::uint64_t, std::optional<std::uint64_t>> uniform, pstar;
  for (const auto& run : result.runs) (run.strategy == "uniform" ? uniform : pstar)[run.seed] = run.tokens_to_threshold;
  std::size_t wins = 0;
  for (const auto& [seed, tokens] : pstar) {
    const auto& base = uniform[seed];
    if (tokens && (!base || *tokens < *base)) ++wins;
  }
  const double share = double(wins) / double(opts.seeds.size());
  out.passed = out.passed && share >= 0.7;
  out.detail += fmt("; p_star fewer tokens on %.0f/50 seeds", double(wins));
  return out;
}

// Determinism of the command-line tool.

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Lines that do not start with '#'.
std::string data_rows(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    out += line;
    out += '\n';
  }
  return out;
}

std::string metadata_value(const std::string& text, const std::string& key) {
  const std::string tag = "# " + key + ": ";
  const auto at = text.find(tag);
  if (at == std::string::npos) return {};
  const auto end = text.find('\n', at);
  return text.substr(at + tag.size(), end - at - tag.size());
}

Outcome criterion_determinism(const fs::path& work) {
  const std::string cli = CASGD_CLI_PATH;
  fs::remove_all(work);
  fs::create_directories(work);
  {
    std::ofstream cfg(work / "config.json");
    cfg << R"({"schema_version": 1,
  "instance": {"n": 200, "d": 5, "norm_bound": 3, "cost_high": 100, "seed": 3, "target_noise": 0.1},
  "compare": {"strategies": "uniform,variance,optimal,dynamic-optimal", "seeds": 4, "error_target": 0.05},
  "subset": {"epsilon": 0.05, "gamma_fractions": [0.0001, 0.3], "empirical": {"iterations": 2000, "seeds": 2}},
  "grpo": {"pool": {"n_prompts": 16}, "strategies": "uniform,p_star,length_only", "seeds": 3, "rounds": 4}})";
  }
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"generate", {"instance.json"}},
      {"compare", {"compare.csv", "compare_summary.csv", "traces.csv"}},
      {"subset", {"subset.csv"}},
      {"grpo-sim", {"grpo_curves.csv", "grpo_summary.csv", "grpo_fidelity.csv"}},
      {"verify", {"verify.csv"}},
  };
  Outcome out{true, {}};
  std::size_t files = 0;
  for (const auto& [command, outputs] : commands) {
    for (const char* run : {"a", "b"}) {
      const fs::path dir = work / run / command;
      const std::string line = "\"" + cli + "\" " + command + " --config \"" + (work / "config.json").string() +
                               "\" --out \"" + dir.string() + "\" --jobs " + (run[0] == 'a' ? "1" : "2") +
                               " > \"" + (work / run).string() + "_" + command + ".log\" 2>&1";
      const int status = std::system(line.c_str());
      if (status != 0) {
        out.passed = false;
        out.detail += command + " exited with " + std::to_string(status) + "; ";
      }
    }
    for (const auto& name : outputs) {
      const std::string a = read_text(work / "a" / command / name);
      const std::string b = read_text(work / "b" / command / name);
      ++files;
      if (a.empty() || b.empty()) {
        out.passed = false;
        out.detail += name + " missing; ";
        continue;
      }
      if (name == "instance.json") {
        auto ja = nlohmann::json::parse(a), jb = nlohmann::json::parse(b);
        const bool stamped = ja["meta"].contains("timestamp_utc") && ja["meta"].contains("config_hash") &&
                             ja["meta"].contains("tool") && ja["meta"].contains("seeds");
        const bool same_hash = ja["meta"]["config_hash"] == jb["meta"]["config_hash"];
        ja["meta"].erase("timestamp_utc");
        jb["meta"].erase("timestamp_utc");
        if (!stamped || !same_hash || ja.dump() != jb.dump()) {
          out.passed = false;
          out.detail += name + " differs; ";
        }
        continue;
      }
      const bool stamped = !metadata_value(a, "tool").empty() && !metadata_value(a, "config_hash").empty() &&
                           !metadata_value(a, "seeds").empty() && !metadata_value(a, "timestamp_utc").empty();
      if (!stamped || metadata_value(a, "config_hash") != metadata_value(b, "config_hash") ||
          data_rows(a) != data_rows(b) || data_rows(a).empty()) {
        out.passed = false;
        out.detail += name + " differs; ";
      }
    }
  }
  out.detail += std::to_string(files) + " output files compared across two runs (jobs 1 vs 2)";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "casgd_acceptance";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"optimal-distribution closed form", [] { return from_checks({"optimal-closed-form"}); }},
      {"cost dominance", [] { return from_checks({"cost-dominance"}); }},
      {"chi-square identity", [] { return from_checks({"chi2-identity"}); }},
      {"proxy-gap approximation", [] { return from_checks({"proxy-gap-monte-carlo"}); }},
      {"strategy comparison on the reference instance", criterion_strategy_comparison},
      {"estimator unbiasedness",
       [] { return from_checks({"estimator-unbiasedness-exact", "estimator-unbiasedness-monte-carlo"}); }},
      {"cost accounting", [] { return from_checks({"cost-accounting-replay"}); }},
      {"knapsack suite",
       [] { return from_checks({"greedy-order-cost-only", "knapsack-greedy-2-approx", "biased-cost-full-set"}); }},
      {"bias-budget sweep", criterion_gamma_sweep},
      {"rollout simulator", criterion_grpo},
      {"command determinism", [&] { return criterion_determinism(work); }},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criteria[k].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %zu %s: %s [%.2f s]\n", outcome.passed ? "PASS" : "FAIL", k + 1,
                criteria[k].first.c_str(), outcome.detail.c_str(), seconds);
    std::fflush(stdout);
    failed += outcome.passed ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
