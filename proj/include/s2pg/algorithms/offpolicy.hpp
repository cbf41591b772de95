// SPDX-License-Identifier: Apache-2.0
//
// Off-policy actor-critics over (a, z'): TD3-RS with a deterministic stateful
// policy and SAC-RS with a stochastic stateful policy. Critics always see the
// privileged state; policies only ever see observations.
#pragma once

#include <optional>

#include "s2pg/algorithms/agent.hpp"
#include "s2pg/algorithms/critics.hpp"
#include "s2pg/algorithms/optim.hpp"
#include "s2pg/algorithms/replay_buffer.hpp"
#include "s2pg/policies/policies.hpp"

namespace s2pg::algorithms {

/// Minibatch drawn from the replay buffer, as tensors.
struct ReplayBatch {
  Tensor obs, x, z, action, next_state, next_obs, next_x;  // x: critic input
  std::vector<double> reward;
  std::vector<double> not_absorbing;  // 0 on absorbing transitions
  std::size_t size() const { return reward.size(); }
};

/// `z_override` (one row per index) replaces the stored z, e.g. refreshed states.
ReplayBatch make_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& indices, CriticInput mode,
                       const std::vector<std::vector<double>>* z_override = nullptr);

/// Shared env stepping, buffer bookkeeping and evaluation hooks.
class OffPolicyAgent : public Agent {
 public:
  std::size_t advance(envs::Env& env, std::size_t max_steps, Rng& rng) override;

  /// One iteration on a sampled minibatch; a no-op while the buffer holds <= S_min transitions.
  virtual UpdateStats update(Rng& rng) = 0;

  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const AlgoConfig& config() const { return config_; }
  std::size_t iterations() const { return iterations_; }

 protected:
  OffPolicyAgent(AlgoConfig config, std::size_t critic_input_dim);
  virtual StateRecurrence recurrence() const = 0;
  ReplayBatch sample_batch(Rng& rng) const;

  AlgoConfig config_;
  ReplayBuffer buffer_;
  std::size_t critic_input_dim_ = 0;
  std::size_t iterations_ = 0;

 private:
  std::optional<envs::EnvStep> current_;
  std::vector<double> z_;
  std::uint64_t episode_ = 0;
  std::size_t step_ = 0;
};

// ---- TD3-RS ----------------------------------------------------------------------

enum class Td3Channel { both, action_only, state_only };

/// r + gamma * min_i Qbar_i(x', z', clip(mubar_a + eps_a), clip(mubar_z + eps_z)), 0 bootstrap on absorbing.
std::vector<double> td3_target(const ReplayBatch& batch, const policies::DeterministicStatefulPolicy& target_policy,
                               const TwinQCritic& target_critic, const AlgoConfig& config, Rng& rng);

/// d/dtheta of -mean Q_0(x, z, mu_a, mu_z). `action_only` / `state_only` cut the other channel.
std::vector<double> td3_actor_gradient(const policies::DeterministicStatefulPolicy& policy, const TwinQCritic& critic,
                                       const ReplayBatch& batch, Td3Channel channel = Td3Channel::both);

class Td3RsAgent : public OffPolicyAgent {
 public:
  Td3RsAgent(policies::DeterministicStatefulPolicy policy, std::size_t critic_input_dim, AlgoConfig config);

  std::string name() const override { return policy_.state_dim() == 0 ? "td3" : "td3_rs"; }
  std::size_t state_dim() const override { return policy_.state_dim(); }
  Actor actor() const override { return make_actor(policy_, config_.action_noise, config_.state_noise); }
  const ad::ParameterStore& policy_parameters() const override { return policy_.parameters(); }
  ad::ParameterStore& policy_parameters() override { return policy_.parameters(); }

  UpdateStats update(Rng& rng) override;

  const policies::DeterministicStatefulPolicy& policy() const { return policy_; }
  const policies::DeterministicStatefulPolicy& target_policy() const { return target_policy_; }
  const TwinQCritic& critic() const { return critic_; }
  const TwinQCritic& target_critic() const { return target_critic_; }

 protected:
  StateRecurrence recurrence() const override;

 private:
  policies::DeterministicStatefulPolicy policy_, target_policy_;
  TwinQCritic critic_, target_critic_;
  Adam actor_opt_, critic_opt_;
};

// ---- SAC-RS ----------------------------------------------------------------------

struct SoftTargetOptions {
  double alpha_a = 0.0, alpha_z = 0.0;
};

/// r + gamma * (min_i Qbar_i(x', z', a', z'') - alpha_a log pi_a - alpha_z log pi_z) with (a', z'') ~ pi(.|o', z').
std::vector<double> sac_soft_target(const ReplayBatch& batch, const policies::StatefulGaussianPolicy& policy,
                                    const TwinQCritic& target_critic, double gamma, SoftTargetOptions alpha, Rng& rng);

/// d/d log(alpha) of -alpha * (mean log pi + target_entropy).
double temperature_gradient(double alpha, double mean_log_prob, double target_entropy);

class SacRsAgent : public OffPolicyAgent {
 public:
  SacRsAgent(policies::StatefulGaussianPolicy policy, std::size_t critic_input_dim, AlgoConfig config);

  std::string name() const override { return policy_.state_dim() == 0 ? "sac" : "sac_rs"; }
  std::size_t state_dim() const override { return policy_.state_dim(); }
  Actor actor() const override { return make_actor(policy_); }
  const ad::ParameterStore& policy_parameters() const override { return policy_.parameters(); }
  ad::ParameterStore& policy_parameters() override { return policy_.parameters(); }

  UpdateStats update(Rng& rng) override;

  const policies::StatefulGaussianPolicy& policy() const { return policy_; }
  const TwinQCritic& critic() const { return critic_; }
  const TwinQCritic& target_critic() const { return target_critic_; }
  double alpha_a() const;
  double alpha_z() const;
  double target_entropy_a() const { return target_entropy_a_; }
  double target_entropy_z() const { return target_entropy_z_; }

 protected:
  StateRecurrence recurrence() const override;

 private:
  policies::StatefulGaussianPolicy policy_;
  TwinQCritic critic_, target_critic_;
  ParameterStore temps_;  // log alpha_a, log alpha_z
  Adam actor_opt_, critic_opt_, alpha_opt_;
  double target_entropy_a_ = 0.0, target_entropy_z_ = 0.0;
};

}  // namespace s2pg::algorithms
