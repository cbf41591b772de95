// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "s2pg/envs/envs.hpp"
#include "s2pg/estimators/estimators.hpp"

namespace s2pg::algorithms {

using estimators::ExtendedTrajectory;
using estimators::Transition;

enum class RolloutMode { stochastic, deterministic_eval };

struct ActorOutput {
  std::vector<double> action;
  std::vector<double> next_state;
  double log_prob = 0.0;
};

/// (obs, z, mode, rng) -> (a, z', log-density). The state starts at zero each episode.
using Actor = std::function<ActorOutput(const std::vector<double>& obs, const std::vector<double>& z,
                                        RolloutMode mode, Rng& rng)>;

Actor make_actor(const policies::StatefulGaussianPolicy& policy);
Actor make_actor(const policies::RecurrentDeterministicPolicy& policy);
/// Deterministic stateful policy with Gaussian exploration on the action (and
/// optionally the state) in stochastic mode; outputs are clipped to the bounds.
Actor make_actor(const policies::DeterministicStatefulPolicy& policy, double action_noise, double state_noise = 0.0);

/// Exactly `steps` environment steps; the final episode may be cut (last = true,
/// absorbing = false).
std::vector<ExtendedTrajectory> rollout(envs::Env& env, const Actor& actor, std::size_t state_dim,
                                        std::size_t steps, RolloutMode mode, Rng& rng, double gamma);

/// `episodes` complete episodes.
std::vector<ExtendedTrajectory> rollout_episodes(envs::Env& env, const Actor& actor, std::size_t state_dim,
                                                 std::size_t episodes, RolloutMode mode, Rng& rng, double gamma);

template <class Policy>
std::vector<ExtendedTrajectory> rollout(envs::Env& env, const Policy& policy, std::size_t steps, RolloutMode mode,
                                        Rng& rng, double gamma) {
  return rollout(env, make_actor(policy), policy.state_dim(), steps, mode, rng, gamma);
}

template <class Policy>
std::vector<ExtendedTrajectory> rollout_episodes(envs::Env& env, const Policy& policy, std::size_t episodes,
                                                 RolloutMode mode, Rng& rng, double gamma) {
  return rollout_episodes(env, make_actor(policy), policy.state_dim(), episodes, mode, rng, gamma);
}

}  // namespace s2pg::algorithms
