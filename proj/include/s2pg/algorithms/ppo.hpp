// SPDX-License-Identifier: Apache-2.0
//
// PPO with a stateful Gaussian policy (ratio over the joint action/next-state
// density) and a recurrent PPO baseline trained by truncated BPTT.
#pragma once

#include "s2pg/algorithms/agent.hpp"
#include "s2pg/algorithms/critics.hpp"
#include "s2pg/algorithms/optim.hpp"
#include "s2pg/policies/policies.hpp"

namespace s2pg::algorithms {

/// Flattened on-policy samples.
struct PpoBatch {
  ad::Tensor obs, z, action, next_state;  // [B x d]
  std::vector<double> old_log_prob;
  std::vector<double> advantages;
  std::size_t size() const { return old_log_prob.size(); }
};

struct SurrogateResult {
  double value = 0.0;              // mean of min(r A, clip(r) A) over kept rows
  std::vector<double> gradient;    // d value / d theta (ascent direction)
  std::vector<double> ratios;      // per row
  std::size_t skipped = 0;         // rows with an out-of-range ratio
};

/// Clipped surrogate for a StatefulGaussianPolicy over the joint density.
SurrogateResult ppo_surrogate(const policies::StatefulGaussianPolicy& policy, const PpoBatch& batch, double clip_eps);

class PpoAgent : public Agent {
 public:
  /// `critic_input_dim` is the width of the privileged state or the observation, per config.critic_input.
  PpoAgent(policies::StatefulGaussianPolicy policy, std::size_t critic_input_dim, AlgoConfig config);

  std::string name() const override { return policy_.state_dim() == 0 ? "ppo" : "ppo_rs"; }
  std::size_t state_dim() const override { return policy_.state_dim(); }
  Actor actor() const override { return make_actor(policy_); }
  std::size_t advance(envs::Env& env, std::size_t max_steps, Rng& rng) override;
  const ad::ParameterStore& policy_parameters() const override { return policy_.parameters(); }
  ad::ParameterStore& policy_parameters() override { return policy_.parameters(); }

  /// Fit V on GAE targets, then epochs x minibatches of clipped-surrogate ascent.
  UpdateStats update(const std::vector<ExtendedTrajectory>& data, Rng& rng);

  const policies::StatefulGaussianPolicy& policy() const { return policy_; }
  const ValueCritic& value() const { return value_; }
  const AlgoConfig& config() const { return config_; }
  /// max |ratio - 1| on the first minibatch of the last update, before any step.
  double initial_ratio_deviation() const { return initial_ratio_deviation_; }

 private:
  policies::StatefulGaussianPolicy policy_;
  ValueCritic value_;
  AlgoConfig config_;
  Adam actor_opt_, critic_opt_;
  double initial_ratio_deviation_ = 0.0;
};

class PpoBpttAgent : public Agent {
 public:
  PpoBpttAgent(policies::RecurrentDeterministicPolicy policy, std::size_t critic_input_dim, AlgoConfig config);

  std::string name() const override { return "ppo_bptt"; }
  std::size_t state_dim() const override { return policy_.state_dim(); }
  Actor actor() const override { return make_actor(policy_); }
  std::size_t advance(envs::Env& env, std::size_t max_steps, Rng& rng) override;
  const ad::ParameterStore& policy_parameters() const override { return policy_.parameters(); }
  ad::ParameterStore& policy_parameters() override { return policy_.parameters(); }

  /// As PpoAgent::update, but log-densities come from unrolling the recurrence
  /// over chunks of `config.truncation` steps starting from the stored z.
  UpdateStats update(const std::vector<ExtendedTrajectory>& data, Rng& rng);

  const policies::RecurrentDeterministicPolicy& policy() const { return policy_; }
  double initial_ratio_deviation() const { return initial_ratio_deviation_; }

 private:
  policies::RecurrentDeterministicPolicy policy_;
  ValueCritic value_;
  AlgoConfig config_;
  Adam actor_opt_, critic_opt_;
  double initial_ratio_deviation_ = 0.0;
};

/// GAE over a batch of trajectories with a batched value critic. `use_state` appends z.
std::vector<estimators::GaeResult> batched_gae(const std::vector<ExtendedTrajectory>& data, const ValueCritic& value,
                                               CriticInput mode, bool use_state, double gamma, double lambda);

/// One pass of minibatch MSE regression of V onto `targets` (rows in data order).
double fit_value(ValueCritic& value, Adam& opt, const std::vector<ExtendedTrajectory>& data,
                 const std::vector<double>& targets, CriticInput mode, bool use_state, std::size_t epochs,
                 std::size_t minibatches, double max_grad_norm, Rng& rng);

}  // namespace s2pg::algorithms
