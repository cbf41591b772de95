// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner: JSON configs with dotted-path overrides, seeded training
// runs, aggregation with confidence intervals, and CSV/SVG/checkpoint output.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2pg/algorithms/agent.hpp"
#include "s2pg/envs/envs.hpp"
#include "s2pg/policies/networks.hpp"
#include "s2pg/variance_lab/variance_lab.hpp"

namespace s2pg::harness {

enum class ExperimentKind { train, variance, gradcheck, oracle };
ExperimentKind kind_from_string(const std::string& name);
std::string to_string(ExperimentKind kind);

struct PolicyConfig {
  policies::Architecture architecture;  // obs/action dims of 0 are taken from the env
  double action_std = 0.5;
  double state_std = 0.3;
  bool learn_action_std = true;
  bool learn_state_std = true;
  double state_bound = 1.0;  // TD3: z' is clipped to [-b, b]

  static PolicyConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct EvalConfig {
  std::size_t every = 10'000;
  std::size_t episodes = 10;
  std::uint64_t seed = 12345;
  bool record_wallclock = true;
};

/// Estimator means against a finite-difference oracle of J on the chain.
struct OracleConfig {
  std::string estimator = "s2pg";  // s2pg | bptt
  std::size_t truncation = 0;
  std::size_t samples = 20'000;
  std::size_t oracle_rollouts = 20'000;
  double fd_step = 1e-2;
  double gamma = 0.9;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::train;
  envs::EnvConfig env;
  std::string algorithm = "ppo_rs";  // ppo_rs ppo ppo_bptt sac_rs sac td3_rs td3
  algorithms::AlgoConfig algo;
  PolicyConfig policy;
  std::vector<std::uint64_t> seeds{0};
  EvalConfig eval;
  std::filesystem::path output_dir = "runs/default";
  std::size_t workers = 1;                  // seeds run concurrently in this many threads
  std::optional<double> reference_high;     // normaliser; defaults described in the manifest
  std::optional<double> reference_low;
  variance::RegimeConfig variance;
  OracleConfig oracle;

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

/// Applies "a.b.c=value" to `doc`. The value is parsed as JSON when it parses, else kept as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads a config file and applies overrides in order.
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// ---- aggregation -----------------------------------------------------------------

/// (x - low) / (high - low), clipped to [-0.1, 1.1].
std::vector<double> normalize_returns(const std::vector<double>& curve, double reference_high, double reference_low);

struct AggregatePoint {
  std::size_t step = 0;
  double mean_return = 0.0;
  std::optional<double> ci_low, ci_high;  // 95% Student-t interval, needs >= 2 seeds
  double mean_success = 0.0;
  std::optional<double> normalized;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<algorithms::MetricsRow> curve;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
  bool ok = true;
  std::string error;
};

struct RunSummary {
  std::vector<SeedRun> seeds;
  std::vector<AggregatePoint> aggregate;
  std::map<std::string, double> wallclock;  // phase -> seconds
  std::optional<double> reference_high, reference_low;
  std::vector<std::filesystem::path> files;  // every artifact written
  bool ok = true;
  std::string message;
};

/// Mean and 95% interval at each evaluation step shared by all seeds.
std::vector<AggregatePoint> aggregate_curves(const std::vector<SeedRun>& runs);

// ---- runners ---------------------------------------------------------------------

/// Builds the configured agent for `seed` against `env`.
std::unique_ptr<algorithms::Agent> make_agent(const ExperimentConfig& config, const envs::Env& env, std::uint64_t seed);

/// One training run; metrics are appended to `metrics_csv` after every evaluation and the
/// final policy is saved next to it as checkpoint_seed<N>.ckpt.
SeedRun train_seed(const ExperimentConfig& config, std::uint64_t seed, const std::filesystem::path& metrics_csv,
                   bool verbose = false);

/// Mean undiscounted return of uniformly random actions.
double random_policy_return(envs::Env& env, std::size_t episodes, std::uint64_t seed);

struct GradcheckCase {
  std::string name;
  double max_relative_error = 0.0;
};

/// Finite differences against reverse mode: every diffcore op, policy
/// log-densities, critics and a 3-step BPTT unroll.
std::vector<GradcheckCase> gradcheck_suite(std::uint64_t seed = 0);

struct OracleRow {
  std::string name;
  double estimate = 0.0, estimate_se = 0.0;
  double oracle = 0.0, oracle_se = 0.0;
  double z = 0.0;
};

/// Per-coordinate estimator means against a common-random-number central
/// difference of J, on the configured env and policy.
std::vector<OracleRow> oracle_report(const ExperimentConfig& config, std::uint64_t seed);

/// Dispatches on the experiment kind and writes artifacts plus manifest.json under the output directory.
RunSummary run(const ExperimentConfig& config, bool verbose = false);

}  // namespace s2pg::harness
