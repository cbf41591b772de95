// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "s2pg/algorithms/config.hpp"
#include "s2pg/algorithms/rollout.hpp"

namespace s2pg::algorithms {

struct UpdateStats {
  double actor_loss = std::numeric_limits<double>::quiet_NaN();
  double critic_loss = std::numeric_limits<double>::quiet_NaN();
  double grad_variance = std::numeric_limits<double>::quiet_NaN();
  std::size_t skipped = 0;  // samples dropped for a non-finite ratio
  bool policy_updated = false;
};

/// Learner owning a policy and its critics.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  virtual std::size_t state_dim() const = 0;
  /// Behaviour policy for rollouts; valid while the agent lives.
  virtual Actor actor() const = 0;
  /// Interacts with `env` for at most `max_steps` steps, updating as it goes. Returns steps used.
  virtual std::size_t advance(envs::Env& env, std::size_t max_steps, Rng& rng) = 0;
  virtual const ad::ParameterStore& policy_parameters() const = 0;
  virtual ad::ParameterStore& policy_parameters() = 0;
  const UpdateStats& last_update() const { return last_; }

 protected:
  UpdateStats last_;
};

struct EvalStats {
  double mean_return = 0.0;
  double std_return = 0.0;
  double success_rate = 0.0;
};

/// Deterministic (means only) episodes; returns are undiscounted sums.
EvalStats evaluate(envs::Env& env, const Actor& actor, std::size_t state_dim, std::size_t episodes,
                   std::uint64_t seed);

struct MetricsRow {
  std::size_t step = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double success_rate = 0.0;
  double wallclock_s = 0.0;
  double grad_variance_probe = std::numeric_limits<double>::quiet_NaN();
};

struct TrainingOptions {
  std::size_t total_steps = 100'000;
  std::size_t eval_every = 10'000;
  std::size_t eval_episodes = 10;
  std::uint64_t eval_seed = 12345;
  std::optional<std::filesystem::path> metrics_csv;  // appended after every evaluation
  bool record_wallclock = true;                      // false writes 0 so reruns compare bitwise
  bool verbose = false;
};

struct TrainingResult {
  std::vector<MetricsRow> curve;
  std::size_t steps = 0;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
};

/// Alternates `advance` and evaluation until `total_steps` env steps are used.
TrainingResult train(Agent& agent, envs::Env& env, envs::Env& eval_env, const TrainingOptions& options, Rng& rng);

void write_metrics_header(const std::filesystem::path& path);
void append_metrics_row(const std::filesystem::path& path, const MetricsRow& row);

/// Rows of `critic_input` for a step: privileged state or observation.
const std::vector<double>& critic_features(const Transition& s, CriticInput mode, bool next);

}  // namespace s2pg::algorithms
