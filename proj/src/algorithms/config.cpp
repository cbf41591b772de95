// SPDX-License-Identifier: Apache-2.0
#include "s2pg/algorithms/config.hpp"

#include <cmath>

namespace s2pg::algorithms {

void AlgoConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("algo.gamma must lie in (0, 1)");
  if (!(clip_eps > 0.0)) throw InputError("algo.clip_eps must be positive");
  if (policy_delay < 1) throw InputError("algo.policy_delay must be at least 1");
  if (tau < 0.0 || tau > 1.0) throw InputError("algo.tau must lie in [0, 1]");
  if (lambda < 0.0 || lambda > 1.0) throw InputError("algo.lambda must lie in [0, 1]");
  if (batch_size < 1) throw InputError("algo.batch_size must be positive");
  if (minibatches < 1) throw InputError("algo.minibatches must be positive");
  if (rollout_steps < minibatches) throw InputError("algo.rollout_steps must be at least algo.minibatches");
  if (replay_capacity < 1) throw InputError("algo.replay_capacity must be positive");
  if (truncation < 1) throw InputError("algo.truncation must be at least 1");
  if (init_alpha_a <= 0.0 || init_alpha_z <= 0.0) throw InputError("algo.init_alpha_* must be positive");
  for (double lr : {lr_actor, lr_critic, lr_alpha})
    if (!(lr > 0.0)) throw InputError("algo learning rates must be positive");
}

namespace {

template <class T>
void read(const nlohmann::json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(field);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("algo.") + key + ": " + e.what());
  }
}

const char* kKnown[] = {"gamma", "tau", "batch_size", "s_min", "s_warm", "policy_delay", "target_noise",
                        "target_noise_clip", "action_noise", "state_noise", "init_alpha_a", "init_alpha_z",
                        "target_entropy_a", "target_entropy_z", "clip_eps", "epochs", "minibatches", "lambda",
                        "rollout_steps", "value_epochs", "normalize_advantages", "max_grad_norm", "truncation",
                        "lr_actor", "lr_critic", "lr_alpha", "replay_capacity", "refresh", "refresh_horizon",
                        "critic_input", "critic_hidden", "total_steps", "seed"};

}  // namespace

AlgoConfig AlgoConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("algo: expected an object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* k : kKnown) known = known || key == k;
    if (!known) throw InputError("algo." + key + ": unknown field");
  }
  AlgoConfig c;
  read(j, "gamma", c.gamma);
  read(j, "tau", c.tau);
  read(j, "batch_size", c.batch_size);
  read(j, "s_min", c.s_min);
  read(j, "s_warm", c.s_warm);
  read(j, "policy_delay", c.policy_delay);
  read(j, "target_noise", c.target_noise);
  read(j, "target_noise_clip", c.target_noise_clip);
  read(j, "action_noise", c.action_noise);
  read(j, "state_noise", c.state_noise);
  read(j, "init_alpha_a", c.init_alpha_a);
  read(j, "init_alpha_z", c.init_alpha_z);
  if (j.contains("target_entropy_a") && !j.at("target_entropy_a").is_null()) read(j, "target_entropy_a", c.target_entropy_a);
  if (j.contains("target_entropy_z") && !j.at("target_entropy_z").is_null()) read(j, "target_entropy_z", c.target_entropy_z);
  read(j, "clip_eps", c.clip_eps);
  read(j, "epochs", c.epochs);
  read(j, "minibatches", c.minibatches);
  read(j, "lambda", c.lambda);
  read(j, "rollout_steps", c.rollout_steps);
  read(j, "value_epochs", c.value_epochs);
  read(j, "normalize_advantages", c.normalize_advantages);
  read(j, "max_grad_norm", c.max_grad_norm);
  read(j, "truncation", c.truncation);
  read(j, "lr_actor", c.lr_actor);
  read(j, "lr_critic", c.lr_critic);
  read(j, "lr_alpha", c.lr_alpha);
  read(j, "replay_capacity", c.replay_capacity);
  if (j.contains("refresh")) {
    const auto r = j.at("refresh").get<std::string>();
    if (r == "off") c.refresh = RefreshMode::off;
    else if (r == "on_sample") c.refresh = RefreshMode::on_sample;
    else throw InputError("algo.refresh: expected off or on_sample, got '" + r + "'");
  }
  read(j, "refresh_horizon", c.refresh_horizon);
  if (j.contains("critic_input")) c.critic_input = critic_input_from_string(j.at("critic_input").get<std::string>());
  read(j, "critic_hidden", c.critic_hidden);
  read(j, "total_steps", c.total_steps);
  read(j, "seed", c.seed);
  c.validate();
  return c;
}

nlohmann::json AlgoConfig::to_json() const {
  nlohmann::json j = {{"gamma", gamma},
                      {"tau", tau},
                      {"batch_size", batch_size},
                      {"s_min", s_min},
                      {"s_warm", s_warm},
                      {"policy_delay", policy_delay},
                      {"target_noise", target_noise},
                      {"target_noise_clip", target_noise_clip},
                      {"action_noise", action_noise},
                      {"state_noise", state_noise},
                      {"init_alpha_a", init_alpha_a},
                      {"init_alpha_z", init_alpha_z},
                      {"clip_eps", clip_eps},
                      {"epochs", epochs},
                      {"minibatches", minibatches},
                      {"lambda", lambda},
                      {"rollout_steps", rollout_steps},
                      {"value_epochs", value_epochs},
                      {"normalize_advantages", normalize_advantages},
                      {"max_grad_norm", max_grad_norm},
                      {"truncation", truncation},
                      {"lr_actor", lr_actor},
                      {"lr_critic", lr_critic},
                      {"lr_alpha", lr_alpha},
                      {"replay_capacity", replay_capacity},
                      {"refresh", refresh == RefreshMode::off ? "off" : "on_sample"},
                      {"refresh_horizon", refresh_horizon},
                      {"critic_input", to_string(critic_input)},
                      {"critic_hidden", critic_hidden},
                      {"total_steps", total_steps},
                      {"seed", seed}};
  j["target_entropy_a"] = std::isnan(target_entropy_a) ? nlohmann::json(nullptr) : nlohmann::json(target_entropy_a);
  j["target_entropy_z"] = std::isnan(target_entropy_z) ? nlohmann::json(nullptr) : nlohmann::json(target_entropy_z);
  return j;
}

}  // namespace s2pg::algorithms
