// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <functional>

#include "s2pg/algorithms/critics.hpp"
#include "s2pg/algorithms/rollout.hpp"
#include "s2pg/harness/harness.hpp"
#include "s2pg/policies/policies.hpp"

namespace s2pg::harness {

using namespace s2pg::ad;

namespace {

using Flat = std::vector<double>;

Flat central_difference(const std::function<double(const Flat&)>& fn, Flat x, double h = 1e-5) {
  Flat g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = fn(x);
    x[i] = keep - h;
    const double down = fn(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// |a - b| / max(|a|, |b|, 1e-2) over the coordinates with mask[i] set.
double relative_error(const Flat& a, const Flat& b, const std::vector<bool>& mask) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), 1e-2}));
  }
  return worst;
}

double op_case(const std::function<Tensor(const Tensor&)>& build, const Flat& x) {
  Tape tape;
  const Tensor v = tape.watch(Tensor::vector(x));
  const Tensor loss = build(v);
  backward(loss);
  const auto numeric = central_difference([&](const Flat& y) { return build(Tensor::vector(y)).item(); }, x);
  return relative_error(v.grad(), numeric, {});
}

std::vector<bool> trainable_mask(const ParameterStore& st) {
  std::vector<bool> m(st.flat_size(), false);
  for (std::size_t i = 0; i < st.count(); ++i)
    if (st.trainable(i))
      for (std::size_t k = 0; k < numel(st.shape(i)); ++k) m[st.offset(i) + k] = true;
  return m;
}

// Reverse mode against central differences of `loss(store view)` over the store's entries.
template <class Owner>
double param_case(const Owner& owner, const std::function<ParameterStore&(Owner&)>& store_of,
                  const std::function<Tensor(const Owner&, const ParameterView&)>& loss) {
  Owner copy = owner;
  const auto& st = store_of(copy);
  Tape tape;
  const auto view = st.bind(tape);
  const auto analytic = gradient(loss(copy, view), view);
  const auto numeric = central_difference(
      [&](const Flat& theta) {
        Owner probe = owner;
        store_of(probe).unflatten(theta);
        return loss(probe, store_of(probe).constants()).item();
      },
      st.flatten());
  return relative_error(analytic, numeric, trainable_mask(st));
}

Tensor mat(Rng& rng, std::size_t r, std::size_t c, double s = 1.0) {
  auto v = rng.normal_vector(r * c);
  for (auto& x : v) x *= s;
  return Tensor::matrix(r, c, std::move(v));
}

}  // namespace

std::vector<GradcheckCase> gradcheck_suite(std::uint64_t seed) {
  std::vector<GradcheckCase> out;
  Rng rng(seed);

  // ---- diffcore ops
  auto x = rng.normal_vector(6);
  for (auto& v : x) v = 0.5 + std::abs(v);  // away from the poles of log/div and the relu kink
  auto m23 = [](const Tensor& v) { return reshape(v, {2, 3}); };
  const std::vector<std::pair<std::string, std::function<Tensor(const Tensor&)>>> ops = {
      {"op.add_sub_mul", [](const Tensor& v) { return sum(mul(add(v, scale(v, 0.5)), sub(v, add_scalar(v, 0.3)))); }},
      {"op.sigmoid", [](const Tensor& v) { return sum(mul(v, ad::sigmoid(v))); }},
      {"op.softplus", [](const Tensor& v) { return sum(softplus(scale(v, -1.3))); }},
      {"op.exp", [](const Tensor& v) { return sum(ad::exp(scale(v, 0.3))); }},
      {"op.log", [](const Tensor& v) { return sum(ad::log(v)); }},
      {"op.div", [](const Tensor& v) { return sum(div(Tensor::scalar(1.0), v)); }},
      {"op.relu_mean", [](const Tensor& v) { return mean(ad::relu(add_scalar(v, -0.2))); }},
      {"op.sum_cols", [&](const Tensor& v) { return sum(square(sum_cols(m23(v)))); }},
      {"op.mul_row", [&](const Tensor& v) { return sum(mul_row(m23(v), Tensor::vector({1.0, -2.0, 0.5}))); }},
      {"op.add_row", [&](const Tensor& v) { return sum(square(add_row(m23(v), slice(v, 0, 0, 3)))); }},
      {"op.matmul_tanh", [&](const Tensor& v) { return sum(ad::tanh(matmul(m23(v), reshape(v, {3, 2})))); }},
      {"op.minimum", [](const Tensor& v) { return sum(minimum(v, scale(v, 0.9))); }},
      {"op.concat_slice", [](const Tensor& v) { return sum(square(concat({slice(v, 0, 3, 6), neg(slice(v, 0, 0, 3))}, 0))); }},
      {"op.clamp", [](const Tensor& v) { return sum(square(clamp(v, 0.2, 10.0))); }},
      {"op.gaussian_logpdf",
       [](const Tensor& v) {
         return sum(gaussian_logpdf(Tensor::vector({0.1, 0.2, 0.3, -0.1, 0.4, 0.0}), v, add_scalar(square(v), 0.1)));
       }},
      {"op.gaussian_logpdf_rows",
       [&](const Tensor& v) {
         return sum(gaussian_logpdf_rows(Tensor::matrix(2, 3, {0.1, 0.2, 0.3, -0.1, 0.4, 0.0}), m23(v),
                                         scale(slice(v, 0, 0, 3), 0.1)));
       }},
  };
  for (const auto& [name, fn] : ops) out.push_back({name, op_case(fn, x)});

  // ---- policies
  policies::Architecture gated;
  gated.obs_dim = 3;
  gated.action_dim = 2;
  gated.state_dim = 3;
  gated.hidden = {6};
  policies::Architecture linear = gated;
  linear.head = policies::HeadKind::linear;
  linear.cell = policies::CellKind::linear;
  linear.state_gain = 0.7;
  linear.state_gain_trainable = true;

  const Tensor obs = mat(rng, 4, 3, 0.7), z = mat(rng, 4, 3, 0.5), a = mat(rng, 4, 2, 0.5), z2 = mat(rng, 4, 3, 0.5);
  using SG = policies::StatefulGaussianPolicy;
  auto sg_store = [](SG& p) -> ParameterStore& { return p.parameters(); };
  for (const auto& [tag, arch] : {std::pair{"gated", gated}, std::pair{"linear", linear}}) {
    const SG pol(arch, seed + 1);
    out.push_back({std::string("policy.stateful_log_prob.") + tag,
                   param_case<SG>(pol, sg_store, [&](const SG& p, const ParameterView& v) {
                     return sum(p.log_prob(v, obs, z, a, z2));
                   })});
  }

  using RD = policies::RecurrentDeterministicPolicy;
  auto rd_store = [](RD& p) -> ParameterStore& { return p.parameters(); };
  const RD rec(gated, seed + 2);
  out.push_back({"policy.recurrent_action_log_prob", param_case<RD>(rec, rd_store, [&](const RD& p, const ParameterView& v) {
                   return sum(p.action_log_prob(v, obs, z, a));
                 })});
  const Tensor seq_obs = mat(rng, 3, 3, 0.7), seq_a = mat(rng, 3, 2, 0.5);
  // Full history only: a finite window is a deliberately different derivative.
  const RD lin(linear, seed + 3);
  out.push_back({"policy.bptt_unroll_3step.linear", param_case<RD>(lin, rd_store, [&](const RD& p, const ParameterView& v) {
                   return sum(policies::unroll_bptt(p, v, seq_obs, seq_a, 0));
                 })});
  out.push_back({"policy.bptt_unroll_3step.gated", param_case<RD>(rec, rd_store, [&](const RD& p, const ParameterView& v) {
                   return sum(policies::unroll_bptt(p, v, seq_obs, seq_a, 0));
                 })});

  using DS = policies::DeterministicStatefulPolicy;
  const DS det(gated, seed + 4, {-10, 10}, {-10, 10});
  out.push_back({"policy.deterministic_means", param_case<DS>(det, [](DS& p) -> ParameterStore& { return p.parameters(); },
                                                              [&](const DS& p, const ParameterView& v) {
                                                                const auto o = policies::act_deterministic(p, v, obs, z);
                                                                return add(sum(square(o.action)), sum(o.next_state));
                                                              })});

  // ---- critics
  using VC = algorithms::ValueCritic;
  Rng crng(seed + 5);
  const VC vc(5, 3, {6}, crng);
  const Tensor xin = mat(rng, 4, 5, 0.7);
  out.push_back({"critic.value", param_case<VC>(vc, [](VC& c) -> ParameterStore& { return c.parameters(); },
                                                [&](const VC& c, const ParameterView& v) {
                                                  return sum(square(c.forward(v, xin, z)));
                                                })});
  using TQ = algorithms::TwinQCritic;
  const TQ tq(5, 3, 2, {6}, crng);
  out.push_back({"critic.twin_q", param_case<TQ>(tq, [](TQ& c) -> ParameterStore& { return c.parameters(); },
                                                 [&](const TQ& c, const ParameterView& v) {
                                                   return add(sum(c.q(0, v, xin, z, a, z2)), sum(square(c.q(1, v, xin, z, a, z2))));
                                                 })});
  return out;
}

// ---- finite-difference oracle of J ---------------------------------------------------

namespace {

struct Moments {
  std::vector<double> mean, m2;
  std::size_t n = 0;
  void add(const std::vector<double>& x) {
    if (mean.empty()) mean.assign(x.size(), 0.0), m2.assign(x.size(), 0.0);
    ++n;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / static_cast<double>(n);
      m2[i] += d * (x[i] - mean[i]);
    }
  }
  double se(std::size_t i) const { return std::sqrt(m2[i] / static_cast<double>(n - 1) / static_cast<double>(n)); }
};

template <class Policy, class Estimate>
std::vector<OracleRow> compare_with_fd(const Policy& policy, envs::Env& env, const OracleConfig& oc, std::uint64_t seed,
                                       Estimate estimate) {
  using algorithms::RolloutMode;
  Rng rng(seed);
  Moments est;
  for (std::size_t i = 0; i < oc.samples; ++i)
    est.add(estimate(algorithms::rollout_episodes(env, policy, 1, RolloutMode::stochastic, rng, oc.gamma)).values);

  // Common random numbers: rollout k replays the same noise stream under every perturbation.
  const auto& st = policy.parameters();
  const auto theta = st.flatten();
  const auto mask = trainable_mask(st);
  Moments fd;
  Rng seeds(seed ^ 0xfdull);
  std::vector<double> d(theta.size(), 0.0);
  auto J = [&](const std::vector<double>& th, std::uint64_t s) {
    Policy p = policy;
    p.parameters().unflatten(th);
    Rng r(s);
    return estimators::discounted_return(
        algorithms::rollout_episodes(env, p, 1, RolloutMode::stochastic, r, oc.gamma).front());
  };
  for (std::size_t k = 0; k < oc.oracle_rollouts; ++k) {
    const std::uint64_t s = seeds.next();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (!mask[i]) continue;
      auto up = theta, down = theta;
      up[i] += oc.fd_step;
      down[i] -= oc.fd_step;
      d[i] = (J(up, s) - J(down, s)) / (2.0 * oc.fd_step);
    }
    fd.add(d);
  }

  std::vector<OracleRow> rows;
  for (std::size_t e = 0; e < st.count(); ++e) {
    if (!st.trainable(e)) continue;
    for (std::size_t k = 0; k < numel(st.shape(e)); ++k) {
      const std::size_t i = st.offset(e) + k;
      OracleRow r;
      r.name = numel(st.shape(e)) == 1 ? st.name(e) : st.name(e) + "[" + std::to_string(k) + "]";
      r.estimate = est.mean[i];
      r.estimate_se = est.se(i);
      r.oracle = fd.mean[i];
      r.oracle_se = fd.se(i);
      const double se = std::sqrt(r.estimate_se * r.estimate_se + r.oracle_se * r.oracle_se);
      r.z = se > 0.0 ? std::abs(r.estimate - r.oracle) / se : (r.estimate == r.oracle ? 0.0 : INFINITY);
      rows.push_back(r);
    }
  }
  return rows;
}

}  // namespace

std::vector<OracleRow> oracle_report(const ExperimentConfig& config, std::uint64_t seed) {
  auto env = envs::make_env(config.env);
  auto arch = config.policy.architecture;
  if (arch.obs_dim == 0) arch.obs_dim = env->obs_dim();
  if (arch.action_dim == 0) arch.action_dim = env->action_dim();
  const auto& oc = config.oracle;
  if (oc.estimator == "s2pg") {
    policies::GaussianPolicyOptions po;
    po.action_log_std = std::log(config.policy.action_std);
    po.state_log_std = std::log(config.policy.state_std);
    po.learn_action_std = config.policy.learn_action_std;
    po.learn_state_std = config.policy.learn_state_std;
    const policies::StatefulGaussianPolicy pol(arch, seed, po);
    return compare_with_fd(pol, *env, oc, seed, [&](const auto& trs) { return estimators::reinforce_s2pg(trs, pol); });
  }
  const policies::RecurrentDeterministicPolicy pol(arch, seed, std::log(config.policy.action_std),
                                                   config.policy.learn_action_std);
  return compare_with_fd(pol, *env, oc, seed,
                         [&](const auto& trs) { return estimators::reinforce_bptt(trs, pol, oc.truncation); });
}

}  // namespace s2pg::harness
