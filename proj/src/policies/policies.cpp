// SPDX-License-Identifier: Apache-2.0
#include "s2pg/policies/policies.hpp"

#include <algorithm>
#include <cmath>

#include "s2pg/diffcore/jacobian.hpp"

namespace s2pg::policies {

using namespace s2pg::ad;

namespace {

void require_len(const char* what, std::span<const double> v, std::size_t n) {
  if (v.size() != n) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                         std::to_string(v.size()));
  }
}

}  // namespace

// ---- StatefulGaussianPolicy --------------------------------------------------------

StatefulGaussianPolicy::StatefulGaussianPolicy(const Architecture& arch, std::uint64_t seed,
                                               GaussianPolicyOptions options) {
  Rng rng(seed);
  nets_ = MeanNetworks(arch, params_, rng);
  log_std_a_ = params_.add("log_std_a", {arch.action_dim},
                           std::vector<double>(arch.action_dim, options.action_log_std),
                           options.learn_action_std);
  log_std_z_ = params_.add("log_std_z", {arch.state_dim},
                           std::vector<double>(arch.state_dim, options.state_log_std),
                           options.learn_state_std);
}

GaussianHeads StatefulGaussianPolicy::heads(const ParameterView& p, const Tensor& obs,
                                            const Tensor& z) const {
  return {nets_.action_mean(p, obs, z), nets_.state_mean(p, obs, z), p[log_std_a_], p[log_std_z_]};
}

Tensor StatefulGaussianPolicy::action_log_prob(const ParameterView& p, const Tensor& obs,
                                               const Tensor& z, const Tensor& action) const {
  return gaussian_logpdf_rows(action, nets_.action_mean(p, obs, z), p[log_std_a_]);
}

Tensor StatefulGaussianPolicy::state_log_prob(const ParameterView& p, const Tensor& obs,
                                              const Tensor& z, const Tensor& next_state) const {
  return gaussian_logpdf_rows(next_state, nets_.state_mean(p, obs, z), p[log_std_z_]);
}

Tensor StatefulGaussianPolicy::log_prob(const ParameterView& p, const Tensor& obs, const Tensor& z,
                                        const Tensor& action, const Tensor& next_state) const {
  return add(action_log_prob(p, obs, z, action), state_log_prob(p, obs, z, next_state));
}

StatefulSample sample(const StatefulGaussianPolicy& policy, std::span<const double> obs,
                      std::span<const double> z, Rng& rng) {
  require_len("sample obs", obs, policy.obs_dim());
  require_len("sample z", z, policy.state_dim());
  const auto p = policy.parameters().constants();
  const auto h = policy.heads(p, row(obs), row(z));
  StatefulSample s;
  s.action.resize(policy.action_dim());
  s.next_state.resize(policy.state_dim());
  for (std::size_t i = 0; i < s.action.size(); ++i)
    s.action[i] = h.action_mean[i] + std::exp(h.action_log_std[i]) * rng.normal();
  for (std::size_t i = 0; i < s.next_state.size(); ++i)
    s.next_state[i] = h.state_mean[i] + std::exp(h.state_log_std[i]) * rng.normal();
  s.log_prob = log_prob(policy, p, obs, z, s.action, s.next_state).item();
  return s;
}

StatefulSample mean_action(const StatefulGaussianPolicy& policy, std::span<const double> obs,
                           std::span<const double> z) {
  require_len("mean_action obs", obs, policy.obs_dim());
  require_len("mean_action z", z, policy.state_dim());
  const auto p = policy.parameters().constants();
  const auto h = policy.heads(p, row(obs), row(z));
  StatefulSample s;
  s.action = h.action_mean.to_vector();
  s.next_state = h.state_mean.to_vector();
  s.log_prob = log_prob(policy, p, obs, z, s.action, s.next_state).item();
  return s;
}

Tensor log_prob(const StatefulGaussianPolicy& policy, const ParameterView& p,
                std::span<const double> obs, std::span<const double> z,
                std::span<const double> action, std::span<const double> next_state) {
  require_len("log_prob action", action, policy.action_dim());
  require_len("log_prob next_state", next_state, policy.state_dim());
  return reshape(policy.log_prob(p, row(obs), row(z), row(action), row(next_state)), {});
}

// ---- RecurrentDeterministicPolicy ---------------------------------------------------

RecurrentDeterministicPolicy::RecurrentDeterministicPolicy(const Architecture& arch,
                                                           std::uint64_t seed,
                                                           double action_log_std,
                                                           bool learn_action_std) {
  Rng rng(seed);
  nets_ = MeanNetworks(arch, params_, rng);
  log_std_a_ = params_.add("log_std_a", {arch.action_dim},
                           std::vector<double>(arch.action_dim, action_log_std), learn_action_std);
}

RecurrentDeterministicPolicy RecurrentDeterministicPolicy::from_stateful(
    const StatefulGaussianPolicy& policy) {
  RecurrentDeterministicPolicy out;
  out.nets_ = policy.networks();
  out.params_ = policy.parameters();
  out.log_std_a_ = policy.action_log_std_index();
  return out;
}

Tensor RecurrentDeterministicPolicy::action_log_prob(const ParameterView& p, const Tensor& obs,
                                                     const Tensor& z, const Tensor& action) const {
  return gaussian_logpdf_rows(action, nets_.action_mean(p, obs, z), p[log_std_a_]);
}

std::vector<double> RecurrentDeterministicPolicy::next_state(std::span<const double> obs,
                                                             std::span<const double> z) const {
  require_len("next_state obs", obs, obs_dim());
  require_len("next_state z", z, state_dim());
  return nets_.state_mean(params_.constants(), row(obs), row(z)).to_vector();
}

RecurrentSample sample(const RecurrentDeterministicPolicy& policy, std::span<const double> obs,
                       std::span<const double> z, Rng& rng) {
  require_len("sample obs", obs, policy.obs_dim());
  require_len("sample z", z, policy.state_dim());
  const auto p = policy.parameters().constants();
  const Tensor o = row(obs), zz = row(z);
  const Tensor mean = policy.networks().action_mean(p, o, zz);
  const auto log_std = p[policy.action_log_std_index()];
  RecurrentSample s;
  s.action.resize(policy.action_dim());
  for (std::size_t i = 0; i < s.action.size(); ++i)
    s.action[i] = mean[i] + std::exp(log_std[i]) * rng.normal();
  s.next_state = policy.networks().state_mean(p, o, zz).to_vector();
  s.log_prob = policy.action_log_prob(p, o, zz, row(s.action)).item();
  return s;
}

Tensor unroll_bptt(const RecurrentDeterministicPolicy& policy, const ParameterView& p,
                   const Tensor& observations, const Tensor& actions, std::size_t truncation) {
  if (observations.rank() != 2 || observations.dim(0) == 0) {
    throw InputError("unroll_bptt: empty episode");
  }
  const std::size_t T = observations.dim(0);
  if (actions.rank() != 2 || actions.dim(0) != T || actions.dim(1) != policy.action_dim()) {
    throw DimensionError("unroll_bptt: actions must be [T x action_dim]");
  }
  const auto& nets = policy.networks();
  const std::size_t d_z = policy.state_dim();
  const std::size_t window = truncation == 0 ? T : truncation;  // steps

  auto obs_at = [&](std::size_t t) { return slice(observations, 0, t, t + 1); };
  auto act_at = [&](std::size_t t) { return slice(actions, 0, t, t + 1); };

  std::vector<Tensor> logps;
  logps.reserve(T);
  if (window >= T) {
    Tensor z = Tensor::zeros({1, d_z});
    for (std::size_t t = 0; t < T; ++t) {
      logps.push_back(policy.action_log_prob(p, obs_at(t), z, act_at(t)));
      if (t + 1 < T) z = nets.state_mean(p, obs_at(t), z);
    }
    return concat(logps, 0);
  }

  // Constant state trajectory, then a fresh differentiable replay of the
  // last window-1 transitions for every step.
  const ParameterView frozen = p.detached();
  std::vector<Tensor> z_const;
  z_const.reserve(T);
  z_const.push_back(Tensor::zeros({1, d_z}));
  for (std::size_t t = 0; t + 1 < T; ++t) z_const.push_back(nets.state_mean(frozen, obs_at(t), z_const[t]));

  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t start = t + 1 >= window ? t + 1 - window : 0;
    Tensor z = z_const[start];
    for (std::size_t j = start; j < t; ++j) z = nets.state_mean(p, obs_at(j), z);
    logps.push_back(policy.action_log_prob(p, obs_at(t), z, act_at(t)));
  }
  return concat(logps, 0);
}

// ---- DeterministicStatefulPolicy --------------------------------------------------------

DeterministicStatefulPolicy::DeterministicStatefulPolicy(const Architecture& arch,
                                                         std::uint64_t seed, Bounds action_bounds,
                                                         Bounds state_bounds)
    : action_bounds_(action_bounds), state_bounds_(state_bounds) {
  if (action_bounds.lo > action_bounds.hi || state_bounds.lo > state_bounds.hi) {
    throw InputError("policy bounds must satisfy lo <= hi");
  }
  Rng rng(seed);
  nets_ = MeanNetworks(arch, params_, rng);
}

Tensor DeterministicStatefulPolicy::action_mean(const ParameterView& p, const Tensor& obs,
                                                const Tensor& z) const {
  return nets_.action_mean(p, obs, z);
}

Tensor DeterministicStatefulPolicy::state_mean(const ParameterView& p, const Tensor& obs,
                                               const Tensor& z) const {
  return nets_.state_mean(p, obs, z);
}

DeterministicAction act_deterministic(const DeterministicStatefulPolicy& policy,
                                      const ParameterView& p, const Tensor& obs, const Tensor& z) {
  const auto ab = policy.action_bounds();
  const auto sb = policy.state_bounds();
  return {clamp(policy.action_mean(p, obs, z), ab.lo, ab.hi),
          clamp(policy.state_mean(p, obs, z), sb.lo, sb.hi)};
}

// ---- constants ----------------------------------------------------------------------------------

namespace {

struct NormPair {
  double frobenius = 0.0;
  double max_row = 0.0;
};

NormPair masked_norms(const std::vector<std::vector<double>>& rows, const std::vector<bool>& mask) {
  NormPair out;
  double total = 0.0;
  for (const auto& r : rows) {
    double acc = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j)
      if (mask.empty() || mask[j]) acc += r[j] * r[j];
    total += acc;
    out.max_row = std::max(out.max_row, std::sqrt(acc));
  }
  out.frobenius = std::sqrt(total);
  return out;
}

}  // namespace

JacobianConstants estimate_constants(const MeanNetworks& nets, const ParameterStore& params,
                                     const std::vector<StateSample>& samples) {
  const auto& arch = nets.architecture();
  std::vector<bool> trainable(params.flat_size(), false);
  for (std::size_t i = 0; i < params.count(); ++i) {
    if (!params.trainable(i)) continue;
    const std::size_t n = numel(params.shape(i));
    std::fill_n(trainable.begin() + static_cast<long>(params.offset(i)), n, true);
  }
  const Tensor theta = Tensor::vector(params.flatten());
  const ParameterView fixed = params.constants();

  JacobianConstants c;
  for (const auto& s : samples) {
    require_len("estimate_constants obs", s.obs, arch.obs_dim);
    require_len("estimate_constants z", s.z, arch.state_dim);
    const Tensor obs = row(s.obs);
    const Tensor z = row(s.z);

    const auto f_theta = masked_norms(
        jacobian([&](const Tensor& th) { return nets.action_mean(params.view_of(th), obs, z); }, theta),
        trainable);
    c.F = std::max(c.F, f_theta.frobenius);
    c.F_d = std::max(c.F_d, f_theta.max_row);
    if (arch.state_dim == 0) continue;

    const auto eta_theta = masked_norms(
        jacobian([&](const Tensor& th) { return nets.state_mean(params.view_of(th), obs, z); }, theta),
        trainable);
    c.H = std::max(c.H, eta_theta.frobenius);
    c.H_d = std::max(c.H_d, eta_theta.max_row);

    const Tensor zv = Tensor::vector(s.z);
    const std::size_t d_z = arch.state_dim;
    c.K = std::max(c.K, jacobian_frobenius(
                            [&](const Tensor& zz) {
                              return nets.action_mean(fixed, obs, reshape(zz, {1, d_z}));
                            },
                            zv));
    c.Z = std::max(c.Z, jacobian_frobenius(
                            [&](const Tensor& zz) {
                              return nets.state_mean(fixed, obs, reshape(zz, {1, d_z}));
                            },
                            zv));
  }
  return c;
}

}  // namespace s2pg::policies
