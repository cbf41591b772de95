// SPDX-License-Identifier: Apache-2.0
#include "s2pg/algorithms/offpolicy.hpp"

#include <algorithm>
#include <cmath>

namespace s2pg::algorithms {

using namespace s2pg::ad;

namespace {

template <class Get>
Tensor stack(const ReplayBuffer& buffer, const std::vector<std::size_t>& idx, Get get) {
  const std::size_t dim = get(buffer.at(idx.front()).data).size();
  std::vector<double> out;
  out.reserve(idx.size() * dim);
  for (std::size_t i : idx) {
    const auto& v = get(buffer.at(i).data);
    if (v.size() != dim) throw DimensionError("replay batch: inconsistent row width");
    out.insert(out.end(), v.begin(), v.end());
  }
  return Tensor::matrix(idx.size(), dim, std::move(out));
}

Tensor noise(std::size_t rows, std::size_t cols, double sigma, double clip, Rng& rng) {
  auto v = rng.normal_vector(rows * cols);
  for (auto& x : v) x = std::clamp(sigma * x, -clip, clip);
  return Tensor::matrix(rows, cols, std::move(v));
}

Tensor clip_to(const Tensor& t, policies::Bounds b) { return clamp(t, b.lo, b.hi); }

// Sum of the per-head squared errors against fixed targets.
double fit_twin(TwinQCritic& critic, Adam& opt, const ReplayBatch& b, const std::vector<double>& y) {
  Tape tape;
  const auto view = critic.parameters().bind(tape);
  const Tensor target = Tensor::vector(y);
  Tensor loss = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < 2; ++i)
    loss = add(loss, mean(square(sub(critic.q(i, view, b.x, b.z, b.action, b.next_state), target))));
  const double value = loss.item();
  opt.step(critic.parameters(), gradient(loss, view));
  return value;
}

// Reparameterised draw: mean + exp(log_std) * eps, differentiable in both.
Tensor reparameterise(const Tensor& mean, const Tensor& log_std, Rng& rng) {
  const std::size_t B = mean.dim(0), d = mean.dim(1);
  if (d == 0) return mean;
  const Tensor eps = Tensor::matrix(B, d, rng.normal_vector(B * d));
  return add(mean, mul_row(eps, exp(log_std)));
}

}  // namespace

ReplayBatch make_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& indices, CriticInput mode,
                       const std::vector<std::vector<double>>* z_override) {
  if (indices.empty()) throw InputError("make_batch: no indices");
  ReplayBatch b;
  b.obs = stack(buffer, indices, [](const Transition& s) -> const auto& { return s.obs; });
  b.x = stack(buffer, indices, [&](const Transition& s) -> const auto& { return critic_features(s, mode, false); });
  b.action = stack(buffer, indices, [](const Transition& s) -> const auto& { return s.action; });
  b.next_state = stack(buffer, indices, [](const Transition& s) -> const auto& { return s.next_state; });
  b.next_obs = stack(buffer, indices, [](const Transition& s) -> const auto& { return s.next_obs; });
  b.next_x = stack(buffer, indices, [&](const Transition& s) -> const auto& { return critic_features(s, mode, true); });
  if (z_override && !z_override->empty() && !z_override->front().empty()) {
    if (z_override->size() != indices.size()) throw DimensionError("make_batch: one refreshed state per index");
    const std::size_t d_z = z_override->front().size();
    std::vector<double> z;
    for (const auto& r : *z_override) z.insert(z.end(), r.begin(), r.end());
    b.z = Tensor::matrix(indices.size(), d_z, std::move(z));
  } else {
    b.z = stack(buffer, indices, [](const Transition& s) -> const auto& { return s.z; });
  }
  for (std::size_t i : indices) {
    const auto& s = buffer.at(i).data;
    b.reward.push_back(s.reward);
    b.not_absorbing.push_back(s.absorbing ? 0.0 : 1.0);
  }
  return b;
}

// ---- shared loop -------------------------------------------------------------------

OffPolicyAgent::OffPolicyAgent(AlgoConfig config, std::size_t critic_input_dim)
    : config_(std::move(config)), buffer_(1), critic_input_dim_(critic_input_dim) {
  config_.validate();
  if (config_.critic_input != CriticInput::privileged)
    throw InputError("off-policy critics take the privileged state; observation input is PPO only");
  buffer_ = ReplayBuffer(config_.replay_capacity);
}

std::size_t OffPolicyAgent::advance(envs::Env& env, std::size_t max_steps, Rng& rng) {
  const Actor act = actor();
  for (std::size_t n = 0; n < max_steps; ++n) {
    if (!current_ || env.done()) {
      current_ = env.reset(rng.next());
      z_.assign(state_dim(), 0.0);
      ++episode_;
      step_ = 0;
    }
    auto out = act(current_->obs, z_, RolloutMode::stochastic, rng);
    auto next = env.step(out.action);
    Transition s;
    s.obs = current_->obs;
    s.privileged_state = current_->privileged_state;
    s.z = z_;
    s.action = std::move(out.action);
    s.next_state = out.next_state;
    s.reward = next.reward;
    s.absorbing = next.absorbing;
    s.success = next.success;
    s.last = next.last;
    s.next_obs = next.obs;
    s.next_privileged_state = next.privileged_state;
    s.log_prob = out.log_prob;
    buffer_.add(std::move(s), episode_, step_++);
    if (next.last) {
      current_.reset();
    } else {
      current_ = std::move(next);
      z_ = std::move(out.next_state);
    }
    const auto stats = update(rng);
    if (stats.policy_updated || !std::isnan(stats.critic_loss)) last_ = stats;
  }
  return max_steps;
}

ReplayBatch OffPolicyAgent::sample_batch(Rng& rng) const {
  const auto idx = buffer_.sample_indices(config_.batch_size, rng);
  if (config_.refresh == RefreshMode::on_sample && state_dim() > 0) {
    const auto z = buffer_.refreshed_states(idx, recurrence(), config_.refresh_horizon);
    return make_batch(buffer_, idx, config_.critic_input, &z);
  }
  return make_batch(buffer_, idx, config_.critic_input);
}

// ---- TD3-RS ------------------------------------------------------------------------

std::vector<double> td3_target(const ReplayBatch& b, const policies::DeterministicStatefulPolicy& target_policy,
                               const TwinQCritic& target_critic, const AlgoConfig& config, Rng& rng) {
  const std::size_t B = b.size();
  const auto pp = target_policy.parameters().constants();
  const auto cp = target_critic.parameters().constants();
  Tensor a = target_policy.action_mean(pp, b.next_obs, b.next_state);
  Tensor z = target_policy.state_mean(pp, b.next_obs, b.next_state);
  if (config.target_noise > 0.0) {
    a = add(a, noise(B, a.dim(1), config.target_noise, config.target_noise_clip, rng));
    if (z.dim(1) > 0) z = add(z, noise(B, z.dim(1), config.target_noise, config.target_noise_clip, rng));
  }
  a = clip_to(a, target_policy.action_bounds());
  z = clip_to(z, target_policy.state_bounds());
  const Tensor v = target_critic.min_q(cp, b.next_x, b.next_state, a, z);
  std::vector<double> y(B);
  for (std::size_t i = 0; i < B; ++i) y[i] = b.reward[i] + config.gamma * b.not_absorbing[i] * v[i];
  return y;
}

std::vector<double> td3_actor_gradient(const policies::DeterministicStatefulPolicy& policy, const TwinQCritic& critic,
                                       const ReplayBatch& b, Td3Channel channel) {
  Tape tape;
  const auto view = policy.parameters().bind(tape);
  auto out = policies::act_deterministic(policy, view, b.obs, b.z);
  if (channel == Td3Channel::action_only) out.next_state = detach(out.next_state);
  if (channel == Td3Channel::state_only) out.action = detach(out.action);
  const Tensor q = critic.q(0, critic.parameters().constants(), b.x, b.z, out.action, out.next_state);
  return gradient(neg(mean(q)), view);
}

Td3RsAgent::Td3RsAgent(policies::DeterministicStatefulPolicy policy, std::size_t critic_input_dim, AlgoConfig config)
    : OffPolicyAgent(std::move(config), critic_input_dim), policy_(std::move(policy)), target_policy_(policy_) {
  Rng rng(config_.seed ^ 0x7d3ull);
  critic_ = TwinQCritic(critic_input_dim, policy_.state_dim(), policy_.action_dim(), config_.critic_hidden, rng);
  target_critic_ = critic_;
  actor_opt_ = Adam(config_.lr_actor);
  critic_opt_ = Adam(config_.lr_critic);
}

StateRecurrence Td3RsAgent::recurrence() const {
  return [this](const Tensor& obs, const Tensor& z) {
    return clip_to(policy_.state_mean(policy_.parameters().constants(), obs, z), policy_.state_bounds());
  };
}

UpdateStats Td3RsAgent::update(Rng& rng) {
  UpdateStats stats;
  if (buffer_.size() <= config_.s_min) return stats;
  const auto b = sample_batch(rng);
  stats.critic_loss = fit_twin(critic_, critic_opt_, b, td3_target(b, target_policy_, target_critic_, config_, rng));
  if (iterations_ % config_.policy_delay == 0) {
    const auto g = td3_actor_gradient(policy_, critic_, b);
    actor_opt_.step(policy_.parameters(), g);
    const auto out = policies::act_deterministic(policy_, policy_.parameters().constants(), b.obs, b.z);
    stats.actor_loss =
        -mean(critic_.q(0, critic_.parameters().constants(), b.x, b.z, out.action, out.next_state)).item();
    stats.policy_updated = true;
  }
  polyak_update(target_policy_.parameters(), policy_.parameters(), config_.tau);
  polyak_update(target_critic_.parameters(), critic_.parameters(), config_.tau);
  ++iterations_;
  return stats;
}

// ---- SAC-RS ------------------------------------------------------------------------

std::vector<double> sac_soft_target(const ReplayBatch& b, const policies::StatefulGaussianPolicy& policy,
                                    const TwinQCritic& target_critic, double gamma, SoftTargetOptions alpha,
                                    Rng& rng) {
  const std::size_t B = b.size();
  const auto p = policy.parameters().constants();
  const auto h = policy.heads(p, b.next_obs, b.next_state);
  const Tensor a = reparameterise(h.action_mean, h.action_log_std, rng);
  const Tensor z = reparameterise(h.state_mean, h.state_log_std, rng);
  const Tensor v = target_critic.min_q(target_critic.parameters().constants(), b.next_x, b.next_state, a, z);
  const Tensor lpa = gaussian_logpdf_rows(a, h.action_mean, h.action_log_std);
  std::vector<double> y(B);
  for (std::size_t i = 0; i < B; ++i) y[i] = v[i] - alpha.alpha_a * lpa[i];
  if (z.dim(1) > 0) {
    const Tensor lpz = gaussian_logpdf_rows(z, h.state_mean, h.state_log_std);
    for (std::size_t i = 0; i < B; ++i) y[i] -= alpha.alpha_z * lpz[i];
  }
  for (std::size_t i = 0; i < B; ++i) y[i] = b.reward[i] + gamma * b.not_absorbing[i] * y[i];
  return y;
}

double temperature_gradient(double alpha, double mean_log_prob, double target_entropy) {
  return -alpha * (mean_log_prob + target_entropy);
}

SacRsAgent::SacRsAgent(policies::StatefulGaussianPolicy policy, std::size_t critic_input_dim, AlgoConfig config)
    : OffPolicyAgent(std::move(config), critic_input_dim), policy_(std::move(policy)) {
  if (config_.init_alpha_a <= 0.0 || config_.init_alpha_z <= 0.0)
    throw InputError("SAC-RS: initial temperatures must be positive");
  Rng rng(config_.seed ^ 0x5acull);
  critic_ = TwinQCritic(critic_input_dim, policy_.state_dim(), policy_.action_dim(), config_.critic_hidden, rng);
  target_critic_ = critic_;
  temps_.add("log_alpha_a", {1}, {std::log(config_.init_alpha_a)});
  temps_.add("log_alpha_z", {1}, {std::log(config_.init_alpha_z)});
  target_entropy_a_ = std::isnan(config_.target_entropy_a) ? -static_cast<double>(policy_.action_dim())
                                                           : config_.target_entropy_a;
  target_entropy_z_ = std::isnan(config_.target_entropy_z) ? -static_cast<double>(policy_.state_dim())
                                                           : config_.target_entropy_z;
  actor_opt_ = Adam(config_.lr_actor);
  critic_opt_ = Adam(config_.lr_critic);
  alpha_opt_ = Adam(config_.lr_alpha);
}

double SacRsAgent::alpha_a() const { return std::exp(temps_.flatten()[0]); }
double SacRsAgent::alpha_z() const { return std::exp(temps_.flatten()[1]); }

StateRecurrence SacRsAgent::recurrence() const {
  // Noise-free: the state mean.
  return [this](const Tensor& obs, const Tensor& z) {
    return policy_.networks().state_mean(policy_.parameters().constants(), obs, z);
  };
}

UpdateStats SacRsAgent::update(Rng& rng) {
  UpdateStats stats;
  if (buffer_.size() <= config_.s_min) return stats;
  const auto b = sample_batch(rng);
  const bool stateful = policy_.state_dim() > 0;

  if (buffer_.size() > config_.s_warm) {
    const double aa = alpha_a(), az = alpha_z();
    Tape tape;
    const auto view = policy_.parameters().bind(tape);
    const auto h = policy_.heads(view, b.obs, b.z);
    const Tensor a = reparameterise(h.action_mean, h.action_log_std, rng);
    const Tensor z = reparameterise(h.state_mean, h.state_log_std, rng);
    const Tensor lpa = gaussian_logpdf_rows(a, h.action_mean, h.action_log_std);
    const Tensor q = critic_.min_q(critic_.parameters().constants(), b.x, b.z, a, z);
    Tensor loss = sub(scale(mean(lpa), aa), mean(q));
    double mean_lpz = 0.0;
    if (stateful) {
      const Tensor lpz = gaussian_logpdf_rows(z, h.state_mean, h.state_log_std);
      loss = add(loss, scale(mean(lpz), az));
      mean_lpz = mean(lpz).item();
    }
    const double mean_lpa = mean(lpa).item();
    stats.actor_loss = loss.item();
    actor_opt_.step(policy_.parameters(), gradient(loss, view));

    std::vector<double> g{temperature_gradient(aa, mean_lpa, target_entropy_a_),
                          stateful ? temperature_gradient(az, mean_lpz, target_entropy_z_) : 0.0};
    alpha_opt_.step(temps_, g);
    stats.policy_updated = true;
  }

  const auto y = sac_soft_target(b, policy_, target_critic_, config_.gamma, {alpha_a(), stateful ? alpha_z() : 0.0}, rng);
  stats.critic_loss = fit_twin(critic_, critic_opt_, b, y);
  polyak_update(target_critic_.parameters(), critic_.parameters(), config_.tau);
  ++iterations_;
  return stats;
}

}  // namespace s2pg::algorithms
