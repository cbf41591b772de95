// SPDX-License-Identifier: Apache-2.0
#include "s2pg/algorithms/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace s2pg::algorithms {

using namespace s2pg::ad;

namespace {

// |log ratio| beyond this counts as non-finite and the row is skipped.
constexpr double kMaxLogRatio = 50.0;

std::vector<const Transition*> flatten(const std::vector<ExtendedTrajectory>& data) {
  std::vector<const Transition*> rows;
  for (const auto& tr : data)
    for (const auto& s : tr.steps) rows.push_back(&s);
  return rows;
}

template <class Get>
Tensor gather(const std::vector<const Transition*>& rows, const std::vector<std::size_t>& idx, std::size_t dim,
              Get get) {
  std::vector<double> out;
  out.reserve(idx.size() * dim);
  for (std::size_t i : idx) {
    const auto& v = get(*rows[i]);
    if (v.size() != dim) throw DimensionError("PPO batch: inconsistent row width");
    out.insert(out.end(), v.begin(), v.end());
  }
  return Tensor::matrix(idx.size(), dim, std::move(out));
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

// Per-row surrogate coefficient: A where the unclipped branch is active or the
// clip is not binding, 0 otherwise. Returns min(r A, clip(r) A).
double surrogate_term(double r, double A, double eps, double& coeff) {
  const double clipped = std::clamp(r, 1.0 - eps, 1.0 + eps);
  const double unclipped_value = r * A, clipped_value = clipped * A;
  const bool inside = r > 1.0 - eps && r < 1.0 + eps;
  coeff = (unclipped_value < clipped_value || inside) ? A : 0.0;
  return std::min(unclipped_value, clipped_value);
}

double trace_variance(const std::vector<std::vector<double>>& g) {
  if (g.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t d = g.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& x : g)
    for (std::size_t i = 0; i < d; ++i) mean[i] += x[i] / static_cast<double>(g.size());
  double total = 0.0;
  for (const auto& x : g)
    for (std::size_t i = 0; i < d; ++i) total += (x[i] - mean[i]) * (x[i] - mean[i]);
  return total / static_cast<double>(g.size() - 1);
}

void normalize(std::vector<double>& x) {
  if (x.size() < 2) return;
  double m = 0.0, v = 0.0;
  for (double a : x) m += a;
  m /= static_cast<double>(x.size());
  for (double a : x) v += (a - m) * (a - m);
  const double sd = std::sqrt(v / static_cast<double>(x.size()));
  for (double& a : x) a = (a - m) / (sd + 1e-8);
}

std::vector<double> ascend(std::vector<double> g) {
  for (double& x : g) x = -x;
  return g;
}

}  // namespace

std::vector<estimators::GaeResult> batched_gae(const std::vector<ExtendedTrajectory>& data, const ValueCritic& value,
                                               CriticInput mode, bool use_state, double gamma, double lambda) {
  const auto rows = flatten(data);
  const auto all = iota(rows.size());
  const std::size_t d_in = value.input_dim(), d_z = use_state ? value.state_dim() : 0;
  const auto p = value.parameters().constants();
  auto empty = [](const Transition&) -> const std::vector<double>& {
    static const std::vector<double> none;
    return none;
  };
  const Tensor v = value.forward(
      p, gather(rows, all, d_in, [&](const Transition& s) -> const auto& { return critic_features(s, mode, false); }),
      use_state ? gather(rows, all, d_z, [](const Transition& s) -> const auto& { return s.z; })
                : gather(rows, all, 0, empty));
  const Tensor vn = value.forward(
      p, gather(rows, all, d_in, [&](const Transition& s) -> const auto& { return critic_features(s, mode, true); }),
      use_state ? gather(rows, all, d_z, [](const Transition& s) -> const auto& { return s.next_state; })
                : gather(rows, all, 0, empty));

  std::vector<estimators::GaeResult> out;
  std::size_t k = 0;
  for (const auto& tr : data) {
    const std::size_t n = tr.size();
    std::vector<double> r(n), vv(n), vnext(n);
    std::vector<bool> ab(n), la(n);
    for (std::size_t t = 0; t < n; ++t, ++k) {
      const auto& s = tr.steps[t];
      r[t] = s.reward;
      vv[t] = v[k];
      vnext[t] = s.absorbing ? 0.0 : vn[k];
      ab[t] = s.absorbing;
      la[t] = s.last || s.absorbing || t + 1 == n;
    }
    out.push_back(estimators::compute_gae(r, vv, vnext, ab, la, gamma, lambda));
  }
  return out;
}

double fit_value(ValueCritic& value, Adam& opt, const std::vector<ExtendedTrajectory>& data,
                 const std::vector<double>& targets, CriticInput mode, bool use_state, std::size_t epochs,
                 std::size_t minibatches, double max_grad_norm, Rng& rng) {
  const auto rows = flatten(data);
  if (targets.size() != rows.size()) throw DimensionError("fit_value: one target per row");
  const std::size_t d_in = value.input_dim(), d_z = use_state ? value.state_dim() : 0;
  auto order = iota(rows.size());
  const std::size_t K = std::max<std::size_t>(1, std::min(minibatches, rows.size()));
  double last_loss = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t e = 0; e < epochs; ++e) {
    shuffle(order, rng);
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<long>(k * rows.size() / K),
                                         order.begin() + static_cast<long>((k + 1) * rows.size() / K));
      std::vector<double> y;
      for (std::size_t i : idx) y.push_back(targets[i]);
      Tape tape;
      const auto view = value.parameters().bind(tape);
      const Tensor in = gather(rows, idx, d_in, [&](const Transition& s) -> const auto& {
        return critic_features(s, mode, false);
      });
      const Tensor z = use_state ? gather(rows, idx, d_z, [](const Transition& s) -> const auto& { return s.z; })
                                 : Tensor::matrix(idx.size(), 0, {});
      const Tensor loss = mean(square(sub(value.forward(view, in, z), Tensor::vector(std::move(y)))));
      total += loss.item() * static_cast<double>(idx.size());
      auto g = gradient(loss, view);
      clip_grad_norm(g, max_grad_norm);
      opt.step(value.parameters(), g);
    }
    last_loss = total / static_cast<double>(rows.size());
  }
  return last_loss;
}

SurrogateResult ppo_surrogate(const policies::StatefulGaussianPolicy& policy, const PpoBatch& batch, double clip_eps) {
  const std::size_t B = batch.size();
  if (batch.advantages.size() != B) throw DimensionError("ppo_surrogate: one advantage per row");
  Tape tape;
  const auto view = policy.parameters().bind(tape);
  const Tensor logp = policy.log_prob(view, batch.obs, batch.z, batch.action, batch.next_state);
  const Tensor log_ratio = sub(logp, Tensor::vector(batch.old_log_prob));

  SurrogateResult out;
  out.ratios.resize(B);
  std::vector<double> coeff(B, 0.0), mask(B, 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const double lr = log_ratio[i];
    if (!std::isfinite(lr) || std::abs(lr) > kMaxLogRatio) {
      mask[i] = 0.0;
      ++out.skipped;
      out.ratios[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    out.ratios[i] = std::exp(lr);
    total += surrogate_term(out.ratios[i], batch.advantages[i], clip_eps, coeff[i]);
  }
  const std::size_t kept = B - out.skipped;
  if (kept == 0) {
    out.gradient.assign(policy.parameters().flat_size(), 0.0);
    return out;
  }
  out.value = total / static_cast<double>(kept);
  for (auto& c : coeff) c /= static_cast<double>(kept);
  // d/dtheta sum_i c_i r_i, with r_i = exp(log ratio) on kept rows only.
  const Tensor r = exp(clamp(log_ratio, -kMaxLogRatio, kMaxLogRatio));
  const Tensor objective = sum(mul(r, Tensor::vector(std::move(coeff))));
  out.gradient = gradient(objective, view);
  return out;
}

PpoAgent::PpoAgent(policies::StatefulGaussianPolicy policy, std::size_t critic_input_dim, AlgoConfig config)
    : policy_(std::move(policy)), config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed ^ 0x5eedull);
  value_ = ValueCritic(critic_input_dim, policy_.state_dim(), config_.critic_hidden, rng);
  actor_opt_ = Adam(config_.lr_actor);
  critic_opt_ = Adam(config_.lr_critic);
}

std::size_t PpoAgent::advance(envs::Env& env, std::size_t max_steps, Rng& rng) {
  const std::size_t steps = std::min(max_steps, config_.rollout_steps);
  const auto data = rollout(env, actor(), policy_.state_dim(), steps, RolloutMode::stochastic, rng, config_.gamma);
  last_ = update(data, rng);
  return steps;
}

UpdateStats PpoAgent::update(const std::vector<ExtendedTrajectory>& data, Rng& rng) {
  const auto rows = flatten(data);
  if (rows.empty()) throw InputError("PPO update: empty dataset");
  UpdateStats stats;
  const auto gae = batched_gae(data, value_, config_.critic_input, true, config_.gamma, config_.lambda);
  std::vector<double> adv, targets;
  for (const auto& g : gae) {
    adv.insert(adv.end(), g.advantages.begin(), g.advantages.end());
    targets.insert(targets.end(), g.targets.begin(), g.targets.end());
  }
  stats.critic_loss = fit_value(value_, critic_opt_, data, targets, config_.critic_input, true, config_.value_epochs,
                                config_.minibatches, config_.max_grad_norm, rng);
  if (config_.normalize_advantages) normalize(adv);

  const std::size_t d_o = policy_.obs_dim(), d_z = policy_.state_dim(), d_a = policy_.action_dim();
  const std::size_t K = std::max<std::size_t>(1, std::min(config_.minibatches, rows.size()));
  auto order = iota(rows.size());
  std::vector<std::vector<double>> first_epoch_grads;
  double actor_total = 0.0;
  for (std::size_t e = 0; e < config_.epochs; ++e) {
    shuffle(order, rng);
    actor_total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<long>(k * rows.size() / K),
                                         order.begin() + static_cast<long>((k + 1) * rows.size() / K));
      PpoBatch b;
      b.obs = gather(rows, idx, d_o, [](const Transition& s) -> const auto& { return s.obs; });
      b.z = gather(rows, idx, d_z, [](const Transition& s) -> const auto& { return s.z; });
      b.action = gather(rows, idx, d_a, [](const Transition& s) -> const auto& { return s.action; });
      b.next_state = gather(rows, idx, d_z, [](const Transition& s) -> const auto& { return s.next_state; });
      for (std::size_t i : idx) {
        b.old_log_prob.push_back(rows[i]->log_prob);
        b.advantages.push_back(adv[i]);
      }
      auto res = ppo_surrogate(policy_, b, config_.clip_eps);
      if (e == 0 && k == 0) {
        initial_ratio_deviation_ = 0.0;
        for (double r : res.ratios)
          initial_ratio_deviation_ = std::max(initial_ratio_deviation_, std::isfinite(r) ? std::abs(r - 1.0) : INFINITY);
      }
      stats.skipped += res.skipped;
      actor_total += res.value * static_cast<double>(idx.size());
      if (e == 0) first_epoch_grads.push_back(res.gradient);
      auto g = ascend(std::move(res.gradient));
      clip_grad_norm(g, config_.max_grad_norm);
      actor_opt_.step(policy_.parameters(), g);
    }
  }
  stats.actor_loss = -actor_total / static_cast<double>(rows.size());
  stats.grad_variance = trace_variance(first_epoch_grads);
  stats.policy_updated = true;
  return stats;
}

// ---- PPO-BPTT --------------------------------------------------------------------

namespace {

struct Chunk {
  std::size_t traj = 0, start = 0, length = 0, row = 0;  // row: flat index of the first step
};

std::vector<Chunk> make_chunks(const std::vector<ExtendedTrajectory>& data, std::size_t L) {
  std::vector<Chunk> out;
  std::size_t row = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t s = 0; s < data[i].size(); s += L) {
      const std::size_t len = std::min(L, data[i].size() - s);
      out.push_back({i, s, len, row + s});
    }
    row += data[i].size();
  }
  return out;
}

// log nu(a_t | h_t) per step of each chunk, z starting from the stored value at
// the chunk start. Result[j] is [C]; rows past a chunk's end are padding.
std::vector<Tensor> chunk_log_probs(const policies::RecurrentDeterministicPolicy& policy, const ParameterView& p,
                                    const std::vector<ExtendedTrajectory>& data, const std::vector<Chunk>& chunks,
                                    const std::vector<std::size_t>& sel) {
  const std::size_t C = sel.size(), d_o = policy.obs_dim(), d_a = policy.action_dim(), d_z = policy.state_dim();
  std::size_t longest = 0;
  std::vector<double> z0;
  for (std::size_t c : sel) {
    longest = std::max(longest, chunks[c].length);
    const auto& z = data[chunks[c].traj].steps[chunks[c].start].z;
    z0.insert(z0.end(), z.begin(), z.end());
  }
  Tensor z = Tensor::matrix(C, d_z, std::move(z0));
  std::vector<Tensor> out;
  for (std::size_t j = 0; j < longest; ++j) {
    std::vector<double> o(C * d_o, 0.0), a(C * d_a, 0.0);
    for (std::size_t r = 0; r < C; ++r) {
      const auto& ch = chunks[sel[r]];
      if (j >= ch.length) continue;
      const auto& s = data[ch.traj].steps[ch.start + j];
      std::copy(s.obs.begin(), s.obs.end(), o.begin() + static_cast<long>(r * d_o));
      std::copy(s.action.begin(), s.action.end(), a.begin() + static_cast<long>(r * d_a));
    }
    const Tensor obs = Tensor::matrix(C, d_o, std::move(o));
    out.push_back(policy.action_log_prob(p, obs, z, Tensor::matrix(C, d_a, std::move(a))));
    if (j + 1 < longest) z = policy.networks().state_mean(p, obs, z);
  }
  return out;
}

}  // namespace

PpoBpttAgent::PpoBpttAgent(policies::RecurrentDeterministicPolicy policy, std::size_t critic_input_dim,
                           AlgoConfig config)
    : policy_(std::move(policy)), config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed ^ 0x5eedull);
  value_ = ValueCritic(critic_input_dim, 0, config_.critic_hidden, rng);
  actor_opt_ = Adam(config_.lr_actor);
  critic_opt_ = Adam(config_.lr_critic);
}

std::size_t PpoBpttAgent::advance(envs::Env& env, std::size_t max_steps, Rng& rng) {
  const std::size_t steps = std::min(max_steps, config_.rollout_steps);
  const auto data = rollout(env, actor(), policy_.state_dim(), steps, RolloutMode::stochastic, rng, config_.gamma);
  last_ = update(data, rng);
  return steps;
}

UpdateStats PpoBpttAgent::update(const std::vector<ExtendedTrajectory>& data, Rng& rng) {
  const auto rows = flatten(data);
  if (rows.empty()) throw InputError("PPO-BPTT update: empty dataset");
  UpdateStats stats;
  const auto gae = batched_gae(data, value_, config_.critic_input, false, config_.gamma, config_.lambda);
  std::vector<double> adv, targets;
  for (const auto& g : gae) {
    adv.insert(adv.end(), g.advantages.begin(), g.advantages.end());
    targets.insert(targets.end(), g.targets.begin(), g.targets.end());
  }
  stats.critic_loss = fit_value(value_, critic_opt_, data, targets, config_.critic_input, false, config_.value_epochs,
                                config_.minibatches, config_.max_grad_norm, rng);
  if (config_.normalize_advantages) normalize(adv);

  const auto chunks = make_chunks(data, config_.truncation);
  // Snapshot densities under the behaviour parameters.
  std::vector<std::vector<double>> old(chunks.size());
  {
    const auto all = iota(chunks.size());
    const auto lp = chunk_log_probs(policy_, policy_.parameters().constants(), data, chunks, all);
    for (std::size_t c = 0; c < chunks.size(); ++c)
      for (std::size_t j = 0; j < chunks[c].length; ++j) old[c].push_back(lp[j][c]);
  }

  const std::size_t K = std::max<std::size_t>(1, std::min(config_.minibatches, chunks.size()));
  auto order = iota(chunks.size());
  std::vector<std::vector<double>> first_epoch_grads;
  double actor_total = 0.0;
  for (std::size_t e = 0; e < config_.epochs; ++e) {
    shuffle(order, rng);
    actor_total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const std::vector<std::size_t> sel(order.begin() + static_cast<long>(k * chunks.size() / K),
                                         order.begin() + static_cast<long>((k + 1) * chunks.size() / K));
      Tape tape;
      const auto view = policy_.parameters().bind(tape);
      const auto lp = chunk_log_probs(policy_, view, data, chunks, sel);
      std::size_t kept = 0;
      double total = 0.0, max_dev = 0.0;
      std::vector<std::vector<double>> coeff(lp.size(), std::vector<double>(sel.size(), 0.0));
      for (std::size_t j = 0; j < lp.size(); ++j) {
        for (std::size_t r = 0; r < sel.size(); ++r) {
          const auto& ch = chunks[sel[r]];
          if (j >= ch.length) continue;
          const double lr = lp[j][r] - old[sel[r]][j];
          if (!std::isfinite(lr) || std::abs(lr) > kMaxLogRatio) {
            ++stats.skipped;
            max_dev = INFINITY;
            continue;
          }
          const double ratio = std::exp(lr);
          max_dev = std::max(max_dev, std::abs(ratio - 1.0));
          total += surrogate_term(ratio, adv[ch.row + j], config_.clip_eps, coeff[j][r]);
          ++kept;
        }
      }
      if (e == 0 && k == 0) initial_ratio_deviation_ = max_dev;
      if (kept == 0) continue;
      Tensor objective = Tensor::scalar(0.0);
      for (std::size_t j = 0; j < lp.size(); ++j) {
        std::vector<double> c = coeff[j];
        for (auto& x : c) x /= static_cast<double>(kept);
        std::vector<double> o;
        for (std::size_t r = 0; r < sel.size(); ++r) o.push_back(old[sel[r]].size() > j ? old[sel[r]][j] : 0.0);
        const Tensor ratio = exp(clamp(sub(lp[j], Tensor::vector(std::move(o))), -kMaxLogRatio, kMaxLogRatio));
        objective = add(objective, sum(mul(ratio, Tensor::vector(std::move(c)))));
      }
      actor_total += total;
      auto g = gradient(objective, view);
      if (e == 0) first_epoch_grads.push_back(g);
      g = ascend(std::move(g));
      clip_grad_norm(g, config_.max_grad_norm);
      actor_opt_.step(policy_.parameters(), g);
    }
  }
  stats.actor_loss = -actor_total / static_cast<double>(rows.size());
  stats.grad_variance = trace_variance(first_epoch_grads);
  stats.policy_updated = true;
  return stats;
}

}  // namespace s2pg::algorithms
