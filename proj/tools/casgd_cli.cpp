// SPDX-License-Identifier: Apache-2.0
//
// casgd: experiment runner over the libcasgd C API.
//
//   casgd generate  [--n N] [--d D] ...           writes instance.json
//   casgd compare   [--instance PATH] ...         writes compare.csv, compare_summary.csv, traces.csv
//   casgd subset    [--instance PATH] ...         writes subset.csv
//   casgd grpo-sim  [--strategies LIST] ...       writes grpo_curves.csv, grpo_summary.csv, grpo_fidelity.csv
//   casgd verify    [--level fast|full]           prints the invariant table
//
// Every command accepts --config, --out, --seed and --jobs. Output files start
// with '#' metadata lines (tool version, config hash, seeds, UTC timestamp,
// effective config); everything after them depends only on the config.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "casgd/casgd.h"

namespace {

using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvariant = 2;

/// Raised for any failure that maps to exit code 1.
struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(casgd_status status, const std::string& what) {
  if (status != CASGD_OK) {
    throw CliError(what + ": " + casgd_status_name(status) + ": " + casgd_last_error());
  }
}

/// Owns a string handed out by the library.
struct LibString {
  char* text = nullptr;
  ~LibString() { casgd_string_free(text); }
  std::string str() const { return text ? std::string(text) : std::string(); }
};

template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  ~Handle() { Free(ptr); }
};

using ProblemHandle = Handle<casgd_problem, casgd_problem_free>;
using ComparisonHandle = Handle<casgd_comparison, casgd_comparison_free>;
using SweepHandle = Handle<casgd_sweep, casgd_sweep_free>;
using GrpoHandle = Handle<casgd_grpo_result, casgd_grpo_free>;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CliError("cannot write " + path.string());
  out << text;
  if (!out) throw CliError("short write to " + path.string());
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// UTC time of the run; SOURCE_DATE_EPOCH pins it for reproducible builds.
std::string utc_timestamp() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      t = static_cast<std::time_t>(std::stoll(epoch));
    } catch (const std::exception&) {
      throw CliError("SOURCE_DATE_EPOCH is not an integer");
    }
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Common {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", common.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--seed", common.seed, "Base seed");
  cmd->add_option("--jobs", common.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

json load_config(const Common& common) {
  if (common.config_path.empty()) return json::object();
  json doc;
  try {
    doc = json::parse(read_file(common.config_path));
  } catch (const json::parse_error& e) {
    throw CliError("config " + common.config_path + ": " + e.what());
  }
  if (!doc.is_object()) throw CliError("config " + common.config_path + ": expected a JSON object");
  static const std::set<std::string> known{"schema_version", "jobs", "instance_path", "instance",
                                           "compare", "subset", "grpo"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw CliError("config: unknown key '" + key + "'");
  }
  const int version = doc.value("schema_version", 1);
  if (version != 1) throw CliError("config: unsupported schema_version " + std::to_string(version));
  return doc;
}

json section(const json& config, const char* key) {
  if (!config.contains(key)) return json::object();
  if (!config[key].is_object()) throw CliError(std::string("config: '") + key + "' must be an object");
  return config[key];
}

/// Rewrites a "seeds" count (or absence) into an explicit array so that the
/// metadata and the hash both name every seed used.
std::vector<std::uint64_t> expand_seeds(json& cfg, std::optional<std::uint64_t> seed_flag,
                                        std::optional<std::size_t> count_flag, std::size_t default_count) {
  std::uint64_t base = cfg.value("seed", std::uint64_t{0});
  if (seed_flag) base = *seed_flag;
  std::vector<std::uint64_t> seeds;
  if (count_flag) {
    for (std::size_t k = 0; k < *count_flag; ++k) seeds.push_back(base + k);
  } else if (cfg.contains("seeds") && cfg["seeds"].is_array()) {
    seeds = cfg["seeds"].get<std::vector<std::uint64_t>>();
    if (seed_flag) {
      for (auto& s : seeds) s += base;
    }
  } else {
    const std::size_t count = cfg.contains("seeds") ? cfg["seeds"].get<std::size_t>() : default_count;
    for (std::size_t k = 0; k < count; ++k) seeds.push_back(base + k);
  }
  if (seeds.empty()) throw CliError("at least one seed is required");
  cfg.erase("seed");
  cfg["seeds"] = seeds;
  return seeds;
}

std::string seed_list(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (auto s : seeds) {
    if (!out.empty()) out += ',';
    out += std::to_string(s);
  }
  return out;
}

struct Metadata {
  std::string command;
  json effective;
  std::string seeds;

  std::string hash() const { return "fnv1a64:" + hex64(fnv1a64(effective.dump())); }

  json as_json() const {
    return json{{"tool", std::string("casgd ") + casgd_version()},
                {"command", command},
                {"config_hash", hash()},
                {"seeds", seeds},
                {"timestamp_utc", utc_timestamp()},
                {"config", effective}};
  }

  std::string csv_header() const {
    std::ostringstream out;
    out << "# tool: casgd " << casgd_version() << '\n'
        << "# command: " << command << '\n'
        << "# config_hash: " << hash() << '\n'
        << "# seeds: " << seeds << '\n'
        << "# timestamp_utc: " << utc_timestamp() << '\n'
        << "# config: " << effective.dump() << '\n';
    return out.str();
  }
};

std::filesystem::path prepare_out(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw CliError("cannot create " + dir + ": " + ec.message());
  return p;
}

/// Loads instance_path when given, otherwise generates from the instance spec.
void obtain_problem(json& effective, const json& config, const std::string& instance_flag, ProblemHandle& problem) {
  std::string path = instance_flag;
  if (path.empty() && config.contains("instance_path")) path = config["instance_path"].get<std::string>();
  if (!path.empty()) {
    const std::string text = read_file(path);
    check(casgd_problem_from_json(text.c_str(), &problem.ptr), "load " + path);
    effective["instance_path"] = path;
    effective["instance_hash"] = "fnv1a64:" + hex64(fnv1a64(text));
    return;
  }
  const json spec = section(config, "instance");
  check(casgd_problem_generate(spec.dump().c_str(), &problem.ptr), "generate instance");
  effective["instance"] = spec;
}

struct GenerateArgs {
  std::optional<std::size_t> n, d;
  std::optional<double> norm_bound, cost_low, cost_high, target_noise, diameter;
};

int cmd_generate(const Common& common, const GenerateArgs& args) {
  const json config = load_config(common);
  json spec = section(config, "instance");
  if (args.n) spec["n"] = *args.n;
  if (args.d) spec["d"] = *args.d;
  if (args.norm_bound) spec["norm_bound"] = *args.norm_bound;
  if (args.cost_low) spec["cost_low"] = *args.cost_low;
  if (args.cost_high) spec["cost_high"] = *args.cost_high;
  if (args.target_noise) spec["target_noise"] = *args.target_noise;
  if (args.diameter) spec["diameter"] = *args.diameter;
  if (common.seed) spec["seed"] = *common.seed;
  if (!spec.contains("seed")) spec["seed"] = 7;

  Metadata meta{"generate", json{{"schema_version", 1}, {"instance", spec}}, std::to_string(spec["seed"].get<std::uint64_t>())};
  ProblemHandle problem;
  check(casgd_problem_generate(spec.dump().c_str(), &problem.ptr), "generate");
  LibString text;
  check(casgd_problem_to_json(problem.ptr, meta.as_json().dump().c_str(), &text.text), "serialize");
  const auto out = prepare_out(common.out_dir) / "instance.json";
  write_file(out, text.str() + "\n");
  std::size_t n = 0, d = 0;
  check(casgd_problem_shape(problem.ptr, &n, &d, nullptr), "shape");
  std::cout << "wrote " << out.string() << " (" << n << "x" << d << ", " << meta.hash() << ")\n";
  return kExitOk;
}

struct CompareArgs {
  std::string instance;
  std::optional<std::string> strategies;
  std::optional<std::size_t> seeds;
  std::optional<double> error_target;
};

int cmd_compare(const Common& common, const CompareArgs& args) {
  const json config = load_config(common);
  json opts = section(config, "compare");
  if (args.strategies) opts["strategies"] = *args.strategies;
  if (args.error_target) opts["error_target"] = *args.error_target;
  if (!opts.contains("strategies")) opts["strategies"] = "uniform,variance,optimal";
  const auto seeds = expand_seeds(opts, common.seed, args.seeds, 20);

  json effective{{"schema_version", 1}};
  ProblemHandle problem;
  obtain_problem(effective, config, args.instance, problem);
  effective["compare"] = opts;
  Metadata meta{"compare", effective, seed_list(seeds)};

  json run_opts = opts;
  run_opts["jobs"] = common.jobs.value_or(config.value("jobs", std::size_t{1}));
  run_opts["keep_traces"] = true;
  ComparisonHandle table;
  check(casgd_compare(problem.ptr, run_opts.dump().c_str(), &table.ptr), "compare");

  LibString rows, summary, traces, ordering;
  check(casgd_comparison_csv(table.ptr, &rows.text), "compare csv");
  check(casgd_comparison_summary_csv(table.ptr, &summary.text), "summary csv");
  check(casgd_comparison_traces_csv(table.ptr, &traces.text), "traces csv");
  check(casgd_comparison_ordering(table.ptr, &ordering.text), "ordering");
  const auto dir = prepare_out(common.out_dir);
  write_file(dir / "compare.csv", meta.csv_header() + rows.str());
  write_file(dir / "compare_summary.csv", meta.csv_header() + summary.str());
  write_file(dir / "traces.csv", meta.csv_header() + traces.str());
  std::cout << summary.str() << "ordering by mean cost-to-target: " << ordering.str() << '\n';

  std::size_t failures = 0;
  check(casgd_comparison_failures(table.ptr, &failures), "failures");
  if (failures > 0) {
    std::cerr << "casgd: " << failures << " run(s) failed; see the failed rows in compare.csv\n";
    return kExitFailure;
  }
  return kExitOk;
}

struct SubsetArgs {
  std::string instance;
  std::optional<double> epsilon;
  std::optional<std::string> selector;
  bool empirical = false;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> seeds;
};

int cmd_subset(const Common& common, const SubsetArgs& args) {
  const json config = load_config(common);
  json opts = section(config, "subset");
  if (args.epsilon) opts["epsilon"] = *args.epsilon;
  if (args.selector) opts["selector"] = *args.selector;
  if (args.empirical && !opts.contains("empirical")) opts["empirical"] = json::object();
  if (args.iterations) {
    if (!opts.contains("empirical") || opts["empirical"].is_null()) opts["empirical"] = json::object();
    opts["empirical"]["iterations"] = *args.iterations;
  }
  std::vector<std::uint64_t> seeds;
  if (opts.contains("empirical") && !opts["empirical"].is_null()) {
    seeds = expand_seeds(opts["empirical"], common.seed, args.seeds, 3);
  }

  json effective{{"schema_version", 1}};
  ProblemHandle problem;
  obtain_problem(effective, config, args.instance, problem);
  effective["subset"] = opts;
  Metadata meta{"subset", effective, seeds.empty() ? std::string("none") : seed_list(seeds)};

  json run_opts = opts;
  run_opts["jobs"] = common.jobs.value_or(config.value("jobs", std::size_t{1}));
  SweepHandle sweep;
  check(casgd_subset_sweep(problem.ptr, run_opts.dump().c_str(), &sweep.ptr), "subset sweep");
  LibString csv;
  check(casgd_sweep_csv(sweep.ptr, &csv.text), "sweep csv");
  const auto out = prepare_out(common.out_dir) / "subset.csv";
  write_file(out, meta.csv_header() + csv.str());
  std::cout << csv.str();
  return kExitOk;
}

struct GrpoArgs {
  std::optional<std::string> strategies;
  std::optional<std::size_t> seeds;
  std::optional<std::size_t> rounds;
};

int cmd_grpo(const Common& common, const GrpoArgs& args) {
  const json config = load_config(common);
  json opts = section(config, "grpo");
  if (args.strategies) opts["strategies"] = *args.strategies;
  if (args.rounds) opts["rounds"] = *args.rounds;
  if (!opts.contains("strategies")) opts["strategies"] = "uniform,p_star";
  const auto seeds = expand_seeds(opts, common.seed, args.seeds, 50);
  Metadata meta{"grpo-sim", json{{"schema_version", 1}, {"grpo", opts}}, seed_list(seeds)};

  json run_opts = opts;
  run_opts["jobs"] = common.jobs.value_or(config.value("jobs", std::size_t{1}));
  GrpoHandle result;
  check(casgd_grpo_run(run_opts.dump().c_str(), &result.ptr), "grpo-sim");
  LibString curves, summary, fidelity;
  check(casgd_grpo_curves_csv(result.ptr, &curves.text), "curves csv");
  check(casgd_grpo_summary_csv(result.ptr, &summary.text), "summary csv");
  check(casgd_grpo_fidelity_csv(result.ptr, &fidelity.text), "fidelity csv");
  const auto dir = prepare_out(common.out_dir);
  write_file(dir / "grpo_curves.csv", meta.csv_header() + curves.str());
  write_file(dir / "grpo_summary.csv", meta.csv_header() + summary.str());
  write_file(dir / "grpo_fidelity.csv", meta.csv_header() + fidelity.str());
  std::cout << "wrote " << (dir / "grpo_curves.csv").string() << ", grpo_summary.csv, grpo_fidelity.csv\n";
  return kExitOk;
}

struct VerifyArgs {
  std::string level = "fast";
  std::string inject_fault;
};

int cmd_verify(const Common& common, const VerifyArgs& args) {
  const json config = load_config(common);
  const std::uint64_t seed = common.seed.value_or(config.value("seed", std::uint64_t{0}));
  json effective{{"schema_version", 1}, {"verify", {{"level", args.level}, {"seed", seed}}}};
  if (!args.inject_fault.empty()) effective["verify"]["inject_fault"] = args.inject_fault;
  Metadata meta{"verify", effective, std::to_string(seed)};

  LibString table, csv;
  std::size_t failed = 0;
  const char* fault = args.inject_fault.empty() ? nullptr : args.inject_fault.c_str();
  check(casgd_verify(args.level == "full", seed, fault, &table.text, &csv.text, &failed), "verify");
  std::cout << table.str();
  if (common.out_dir != ".") write_file(prepare_out(common.out_dir) / "verify.csv", meta.csv_header() + csv.str());
  if (failed > 0) {
    std::cerr << "casgd: " << failed << " invariant(s) failed\n";
    return kExitInvariant;
  }
  std::cout << "all invariants hold\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cost-aware importance sampling experiments"};
  app.set_version_flag("--version", std::string("casgd ") + casgd_version());
  app.require_subcommand(1);

  Common common;

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic least-squares instance");
  add_common(generate, common);
  generate->add_option("--n", gen.n, "Number of components");
  generate->add_option("--d", gen.d, "Dimension");
  generate->add_option("--norm-bound", gen.norm_bound, "Largest row norm L");
  generate->add_option("--cost-low", gen.cost_low, "Smallest cost");
  generate->add_option("--cost-high", gen.cost_high, "Largest cost");
  generate->add_option("--target-noise", gen.target_noise, "Std of additive target noise");
  generate->add_option("--diameter", gen.diameter, "Domain diameter D");

  CompareArgs cmp;
  auto* compare = app.add_subcommand("compare", "Compare sampling strategies to an error target");
  add_common(compare, common);
  compare->add_option("--instance", cmp.instance, "Instance file from 'generate'");
  compare->add_option("--strategies", cmp.strategies, "Comma-separated strategy names");
  compare->add_option("--seeds", cmp.seeds, "Number of seeds")->check(CLI::PositiveNumber);
  compare->add_option("--error-target", cmp.error_target, "Suboptimality target");

  SubsetArgs sub;
  auto* subset = app.add_subcommand("subset", "Sweep the bias budget of subset selection");
  add_common(subset, common);
  subset->add_option("--instance", sub.instance, "Instance file from 'generate'");
  subset->add_option("--epsilon", sub.epsilon, "Target accuracy");
  subset->add_option("--selector", sub.selector, "greedy or exact");
  subset->add_flag("--empirical", sub.empirical, "Also run SGD on each subset");
  subset->add_option("--iterations", sub.iterations, "Iterations per empirical run");
  subset->add_option("--seeds", sub.seeds, "Number of empirical seeds")->check(CLI::PositiveNumber);

  GrpoArgs grpo_args;
  auto* grpo = app.add_subcommand("grpo-sim", "Simulate rollout sampling over synthetic pools");
  add_common(grpo, common);
  grpo->add_option("--strategies,--strategy", grpo_args.strategies, "Comma-separated pool strategies");
  grpo->add_option("--seeds", grpo_args.seeds, "Number of seeds")->check(CLI::PositiveNumber);
  grpo->add_option("--rounds", grpo_args.rounds, "Rounds per run")->check(CLI::PositiveNumber);

  VerifyArgs ver;
  auto* verify = app.add_subcommand("verify", "Check identities and invariants");
  add_common(verify, common);
  verify->add_option("--level", ver.level, "fast or full")->check(CLI::IsMember({"fast", "full"}));
  verify->add_option("--inject-fault", ver.inject_fault, "Perturb the named check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitFailure;
  }

  try {
    if (*generate) return cmd_generate(common, gen);
    if (*compare) return cmd_compare(common, cmp);
    if (*subset) return cmd_subset(common, sub);
    if (*grpo) return cmd_grpo(common, grpo_args);
    if (*verify) return cmd_verify(common, ver);
  } catch (const CliError& e) {
    std::cerr << "casgd: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "casgd: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
