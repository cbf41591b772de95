// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2pg/algorithms/critics.hpp"

namespace s2pg::algorithms {

enum class RefreshMode { off, on_sample };

struct AlgoConfig {
  double gamma = 0.99;
  double tau = 5e-3;
  std::size_t batch_size = 256;
  std::size_t s_min = 1000;
  std::size_t s_warm = 1000;
  std::size_t policy_delay = 2;
  double target_noise = 0.2;
  double target_noise_clip = 0.5;
  double action_noise = 0.1;  // TD3 exploration, in units of the action bound
  double state_noise = 0.1;   // TD3 exploration on z'

  double init_alpha_a = 0.1;
  double init_alpha_z = 0.1;
  // NaN selects -d_a and -d_z.
  double target_entropy_a = std::numeric_limits<double>::quiet_NaN();
  double target_entropy_z = std::numeric_limits<double>::quiet_NaN();

  double clip_eps = 0.2;
  std::size_t epochs = 10;
  std::size_t minibatches = 4;
  double lambda = 0.95;
  std::size_t rollout_steps = 2048;
  std::size_t value_epochs = 10;
  bool normalize_advantages = true;
  double max_grad_norm = 0.5;
  std::size_t truncation = 32;  // PPO-BPTT chunk length

  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  double lr_alpha = 3e-4;

  std::size_t replay_capacity = 1'000'000;
  RefreshMode refresh = RefreshMode::off;
  std::size_t refresh_horizon = 64;

  CriticInput critic_input = CriticInput::privileged;
  std::vector<std::size_t> critic_hidden = {64, 64};

  std::size_t total_steps = 100'000;
  std::uint64_t seed = 0;

  void validate() const;
  static AlgoConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

}  // namespace s2pg::algorithms
