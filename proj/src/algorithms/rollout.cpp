// SPDX-License-Identifier: Apache-2.0
#include "s2pg/algorithms/rollout.hpp"

#include <algorithm>
#include <cmath>

namespace s2pg::algorithms {

using namespace s2pg::ad;
using policies::row;

Actor make_actor(const policies::StatefulGaussianPolicy& policy) {
  return [&policy](const std::vector<double>& obs, const std::vector<double>& z, RolloutMode mode, Rng& rng) {
    const auto s = mode == RolloutMode::stochastic ? policies::sample(policy, obs, z, rng)
                                                   : policies::mean_action(policy, obs, z);
    return ActorOutput{s.action, s.next_state, s.log_prob};
  };
}

Actor make_actor(const policies::RecurrentDeterministicPolicy& policy) {
  return [&policy](const std::vector<double>& obs, const std::vector<double>& z, RolloutMode mode, Rng& rng) {
    if (mode == RolloutMode::stochastic) {
      const auto s = policies::sample(policy, obs, z, rng);
      return ActorOutput{s.action, s.next_state, s.log_prob};
    }
    const auto p = policy.parameters().constants();
    const Tensor o = row(obs), zz = row(z);
    return ActorOutput{policy.networks().action_mean(p, o, zz).to_vector(),
                       policy.networks().state_mean(p, o, zz).to_vector(), 0.0};
  };
}

Actor make_actor(const policies::DeterministicStatefulPolicy& policy, double action_noise, double state_noise) {
  return [&policy, action_noise, state_noise](const std::vector<double>& obs, const std::vector<double>& z,
                                              RolloutMode mode, Rng& rng) {
    const auto p = policy.parameters().constants();
    const Tensor o = row(obs), zz = row(z);
    auto a = policy.action_mean(p, o, zz).to_vector();
    auto z2 = policy.state_mean(p, o, zz).to_vector();
    const auto ab = policy.action_bounds();
    const auto sb = policy.state_bounds();
    for (auto& v : a) {
      if (mode == RolloutMode::stochastic && action_noise > 0.0) v += action_noise * rng.normal();
      v = std::clamp(v, ab.lo, ab.hi);
    }
    for (auto& v : z2) {
      if (mode == RolloutMode::stochastic && state_noise > 0.0) v += state_noise * rng.normal();
      v = std::clamp(v, sb.lo, sb.hi);
    }
    return ActorOutput{std::move(a), std::move(z2), 0.0};
  };
}

namespace {

// Runs one episode (or until `budget` steps are used up).
ExtendedTrajectory run_episode(envs::Env& env, const Actor& actor, std::size_t state_dim, std::size_t budget,
                               RolloutMode mode, Rng& rng, double gamma) {
  ExtendedTrajectory tr;
  tr.gamma = gamma;
  auto current = env.reset(rng.next());
  std::vector<double> z(state_dim, 0.0);
  while (tr.size() < budget) {
    auto out = actor(current.obs, z, mode, rng);
    auto next = env.step(out.action);
    Transition s;
    s.obs = std::move(current.obs);
    s.privileged_state = std::move(current.privileged_state);
    s.z = z;
    s.action = std::move(out.action);
    s.next_state = out.next_state;
    s.reward = next.reward;
    s.absorbing = next.absorbing;
    s.success = next.success;
    s.last = next.last || tr.size() + 1 == budget;
    s.next_obs = next.obs;
    s.next_privileged_state = next.privileged_state;
    s.log_prob = out.log_prob;
    tr.steps.push_back(std::move(s));
    if (next.last) break;
    current = std::move(next);
    z = std::move(out.next_state);
  }
  return tr;
}

}  // namespace

std::vector<ExtendedTrajectory> rollout(envs::Env& env, const Actor& actor, std::size_t state_dim,
                                        std::size_t steps, RolloutMode mode, Rng& rng, double gamma) {
  std::vector<ExtendedTrajectory> out;
  std::size_t used = 0;
  while (used < steps) {
    out.push_back(run_episode(env, actor, state_dim, steps - used, mode, rng, gamma));
    used += out.back().size();
  }
  return out;
}

std::vector<ExtendedTrajectory> rollout_episodes(envs::Env& env, const Actor& actor, std::size_t state_dim,
                                                 std::size_t episodes, RolloutMode mode, Rng& rng, double gamma) {
  std::vector<ExtendedTrajectory> out;
  out.reserve(episodes);
  for (std::size_t i = 0; i < episodes; ++i)
    out.push_back(run_episode(env, actor, state_dim, env.horizon(), mode, rng, gamma));
  return out;
}

}  // namespace s2pg::algorithms
