// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "finite_difference.hpp"
#include "s2pg/algorithms/offpolicy.hpp"
#include "s2pg/algorithms/ppo.hpp"

using namespace s2pg;
using namespace s2pg::algorithms;
using namespace s2pg::testing;

namespace {

policies::Architecture small_arch(std::size_t d_o, std::size_t d_a, std::size_t d_z) {
  policies::Architecture a;
  a.obs_dim = d_o;
  a.action_dim = d_a;
  a.state_dim = d_z;
  a.hidden = {8};
  return a;
}

AlgoConfig fast_config() {
  AlgoConfig c;
  c.batch_size = 16;
  c.s_min = 40;
  c.s_warm = 40;
  c.critic_hidden = {16};
  c.rollout_steps = 64;
  c.minibatches = 2;
  c.epochs = 2;
  c.value_epochs = 1;
  c.seed = 3;
  return c;
}

Transition make_transition(Rng& rng, std::size_t d_o, std::size_t d_x, std::size_t d_a, std::size_t d_z, bool absorbing) {
  Transition s;
  s.obs = rng.normal_vector(d_o);
  s.privileged_state = rng.normal_vector(d_x);
  s.z = rng.normal_vector(d_z);
  s.action = rng.normal_vector(d_a);
  s.next_state = rng.normal_vector(d_z);
  s.next_obs = rng.normal_vector(d_o);
  s.next_privileged_state = rng.normal_vector(d_x);
  s.reward = rng.normal();
  s.absorbing = absorbing;
  s.last = absorbing;
  return s;
}

ReplayBatch random_batch(std::size_t n, bool absorbing, std::size_t d_o, std::size_t d_x, std::size_t d_a,
                         std::size_t d_z, std::uint64_t seed) {
  ReplayBuffer buf(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) buf.add(make_transition(rng, d_o, d_x, d_a, d_z, absorbing), i, 0);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return make_batch(buf, idx, CriticInput::privileged);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("polyak update is exact") {
  Rng rng(1);
  ParameterStore src, dst;
  src.add("w", {3, 4}, rng.normal_vector(12));
  src.add("b", {4}, rng.normal_vector(4), false);
  dst.add("w", {3, 4}, rng.normal_vector(12));
  dst.add("b", {4}, rng.normal_vector(4), false);
  const auto before = dst.flatten();
  const double tau = 0.005;
  polyak_update(dst, src, tau);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(dst.flatten()[i] == tau * src.flatten()[i] + (1.0 - tau) * before[i]);
  polyak_update(dst, src, 1.0);
  CHECK(dst.flatten() == src.flatten());

  ParameterStore other;
  other.add("w", {12}, std::vector<double>(12, 0.0));
  CHECK_THROWS(polyak_update(other, src, 0.5));
}

TEST_CASE("adam and gradient clipping") {
  ParameterStore st;
  st.add("x", {2}, {1.0, -1.0});
  st.add("frozen", {1}, {5.0}, false);
  Adam opt(0.1);
  opt.step(st, {1.0, -2.0, 3.0});
  // First Adam step moves each trainable coordinate by lr * sign(g).
  CHECK(st.flatten()[0] == doctest::Approx(0.9));
  CHECK(st.flatten()[1] == doctest::Approx(-0.9));
  CHECK(st.flatten()[2] == 5.0);
  CHECK_THROWS_AS(opt.step(st, {1.0}), DimensionError);
  CHECK_THROWS_AS(opt.step(st, {NAN, 0.0, 0.0}), NumericError);

  std::vector<double> g{3.0, 4.0};
  CHECK(clip_grad_norm(g, 1.0) == 5.0);
  CHECK(g[0] == doctest::Approx(0.6));
  CHECK(g[1] == doctest::Approx(0.8));
}

TEST_CASE("replay buffer is a FIFO ring") {
  ReplayBuffer buf(3);
  Rng rng(2);
  for (int i = 0; i < 5; ++i) {
    auto t = make_transition(rng, 1, 1, 1, 1, false);
    t.reward = i;
    buf.add(t, 0, i);
  }
  CHECK(buf.size() == 3);
  CHECK(buf.capacity() == 3);
  CHECK(buf.at(0).data.reward == 2.0);
  CHECK(buf.at(2).data.reward == 4.0);
  CHECK_THROWS_AS(buf.at(3), InputError);
  for (auto i : buf.sample_indices(100, rng)) CHECK(i < 3);
  CHECK_THROWS_AS(ReplayBuffer(0), InputError);
}

TEST_CASE("refreshed states equal stored states under an unchanged policy") {
  policies::StatefulGaussianPolicy pol(small_arch(1, 1, 3), 4);
  envs::ChainDiagnostic env(30);
  Rng rng(5);
  // Means only, so the stored z chain is exactly the noise-free recurrence.
  const auto trs = rollout_episodes(env, pol, 3, RolloutMode::deterministic_eval, rng, 0.9);
  ReplayBuffer buf(1000);
  std::uint64_t ep = 0;
  for (const auto& tr : trs) {
    for (std::size_t t = 0; t < tr.size(); ++t) buf.add(tr.steps[t], ep, t);
    ++ep;
  }
  std::vector<std::size_t> idx(buf.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const StateRecurrence eta = [&](const ad::Tensor& o, const ad::Tensor& z) {
    return pol.networks().state_mean(pol.parameters().constants(), o, z);
  };
  for (std::size_t horizon : {std::size_t(1), std::size_t(5), std::size_t(64)}) {
    const auto z = buf.refreshed_states(idx, eta, horizon);
    double worst = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) worst = std::max(worst, max_abs_diff(z[i], buf.at(i).data.z));
    CAPTURE(horizon);
    CHECK(worst == 0.0);
  }

  // A different recurrence changes every state past the first step of an episode.
  const StateRecurrence zero = [](const ad::Tensor&, const ad::Tensor& z) { return ad::scale(z, 0.0); };
  const auto z0 = buf.refreshed_states(idx, zero, 64);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (double v : z0[i]) CHECK(v == 0.0);
}

TEST_CASE("rollout invariants") {
  policies::StatefulGaussianPolicy pol(small_arch(1, 1, 2), 6);
  SUBCASE("horizon-1 env gives one step from z0 = 0") {
    envs::ChainDiagnostic env(1);
    Rng rng(1);
    const auto trs = rollout_episodes(env, pol, 4, RolloutMode::stochastic, rng, 0.9);
    for (const auto& tr : trs) {
      REQUIRE(tr.size() == 1);
      CHECK(tr.steps[0].z == std::vector<double>{0.0, 0.0});
      CHECK(tr.steps[0].last);
    }
  }
  SUBCASE("z chain and reproducibility") {
    envs::ChainDiagnostic env(7);
    Rng a(9), b(9);
    const auto t1 = rollout(env, pol, 50, RolloutMode::stochastic, a, 0.9);
    const auto t2 = rollout(env, pol, 50, RolloutMode::stochastic, b, 0.9);
    std::size_t total = 0;
    for (std::size_t e = 0; e < t1.size(); ++e) {
      total += t1[e].size();
      CHECK(t1[e].steps[0].z == std::vector<double>{0.0, 0.0});
      for (std::size_t t = 0; t + 1 < t1[e].size(); ++t) {
        CHECK(t1[e].steps[t].next_state == t1[e].steps[t + 1].z);
        CHECK(t1[e].steps[t].next_obs == t1[e].steps[t + 1].obs);
      }
      REQUIRE(e < t2.size());
      for (std::size_t t = 0; t < t1[e].size(); ++t) CHECK(t1[e].steps[t].action == t2[e].steps[t].action);
    }
    CHECK(total == 50);
    CHECK(t1.back().steps.back().last);
  }
}

TEST_CASE("AlgoConfig JSON round trip and validation") {
  AlgoConfig c;
  c.gamma = 0.97;
  c.policy_delay = 3;
  c.refresh = RefreshMode::on_sample;
  c.critic_input = CriticInput::observation;
  c.critic_hidden = {32, 16};
  const auto back = AlgoConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.policy_delay == 3);
  CHECK(back.refresh == RefreshMode::on_sample);

  CHECK_THROWS_AS(AlgoConfig::from_json({{"gamma", 1.0}}), InputError);
  CHECK_THROWS_AS(AlgoConfig::from_json({{"clip_eps", 0.0}}), InputError);
  CHECK_THROWS_AS(AlgoConfig::from_json({{"policy_delay", 0}}), InputError);
  CHECK_THROWS_AS(AlgoConfig::from_json({{"gama", 0.9}}), InputError);
}

TEST_CASE("off-policy agents reject an observation critic") {
  auto c = fast_config();
  c.critic_input = CriticInput::observation;
  CHECK_THROWS_AS(Td3RsAgent(policies::DeterministicStatefulPolicy(small_arch(1, 1, 1), 1, {-1, 1}), 1, c), InputError);
  CHECK_THROWS_AS(SacRsAgent(policies::StatefulGaussianPolicy(small_arch(1, 1, 1), 1), 1, c), InputError);
}

// ---- TD3-RS ----------------------------------------------------------------------

TEST_CASE("TD3-RS: absorbing transitions bootstrap nothing") {
  policies::DeterministicStatefulPolicy pol(small_arch(2, 1, 2), 1, {-1, 1});
  Rng rng(1);
  TwinQCritic q(3, 2, 1, {16}, rng);
  const auto b = random_batch(32, true, 2, 3, 1, 2, 11);
  AlgoConfig c;
  const auto y = td3_target(b, pol, q, c, rng);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(y[i] == b.reward[i]);
}

TEST_CASE("TD3-RS: noise-free target with identical twins") {
  policies::DeterministicStatefulPolicy pol(small_arch(2, 1, 2), 1, {-0.3, 0.3}, {-0.2, 0.2});
  Rng rng(2);
  TwinQCritic q(3, 2, 1, {16}, rng);
  // Copy head 0 into head 1.
  auto& st = q.parameters();
  for (std::size_t i = 0; i < st.count(); ++i) {
    const auto& name = st.name(i);
    if (name.rfind("q1", 0) != 0) continue;
    const auto src = st.values(st.index("q0" + name.substr(2)));
    std::copy(src.begin(), src.end(), st.values(i).begin());
  }
  const auto b = random_batch(32, false, 2, 3, 1, 2, 12);
  AlgoConfig c;
  c.target_noise = 0.0;
  c.gamma = 0.9;
  const auto y = td3_target(b, pol, q, c, rng);

  // Row by row, clipping by hand.
  const auto p = pol.parameters().constants();
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto o = ad::slice(b.next_obs, 0, i, i + 1), z = ad::slice(b.next_state, 0, i, i + 1);
    auto a = pol.action_mean(p, o, z).to_vector();
    auto z2 = pol.state_mean(p, o, z).to_vector();
    for (auto& v : a) v = std::min(0.3, std::max(-0.3, v));
    for (auto& v : z2) v = std::min(0.2, std::max(-0.2, v));
    const double qv = q.q(0, q.parameters().constants(), ad::slice(b.next_x, 0, i, i + 1), z,
                          ad::Tensor::matrix(1, 1, a), ad::Tensor::matrix(1, 2, z2)).item();
    CHECK(y[i] == doctest::Approx(b.reward[i] + 0.9 * qv).epsilon(1e-12));
  }
}

TEST_CASE("TD3-RS: actor gradient splits over the action and state channels") {
  policies::DeterministicStatefulPolicy pol(small_arch(2, 2, 3), 4, {-5, 5}, {-5, 5});
  Rng rng(3);
  TwinQCritic q(4, 3, 2, {16}, rng);
  const auto b = random_batch(24, false, 2, 4, 2, 3, 13);
  const auto both = td3_actor_gradient(pol, q, b, Td3Channel::both);
  const auto ga = td3_actor_gradient(pol, q, b, Td3Channel::action_only);
  const auto gz = td3_actor_gradient(pol, q, b, Td3Channel::state_only);
  std::vector<double> sum(both.size());
  double na = 0.0, nz = 0.0;
  for (std::size_t i = 0; i < both.size(); ++i) {
    sum[i] = ga[i] + gz[i];
    na += ga[i] * ga[i];
    nz += gz[i] * gz[i];
  }
  CHECK(max_abs_diff(sum, both) < 1e-12);
  CHECK(na > 0.0);
  CHECK(nz > 0.0);

  // The full gradient matches central differences of -mean Q0 at the means.
  const auto fd = central_difference(
      [&](const std::vector<double>& x) {
        auto copy = pol;
        copy.parameters().unflatten(x);
        const auto p = copy.parameters().constants();
        const auto out = policies::act_deterministic(copy, p, b.obs, b.z);
        return -ad::mean(q.q(0, q.parameters().constants(), b.x, b.z, out.action, out.next_state)).item();
      },
      pol.parameters().flatten(), 1e-6);
  CHECK(max_relative_error(both, fd) < 1e-5);
}

TEST_CASE("TD3-RS: delayed policy updates and per-iteration Polyak") {
  auto c = fast_config();
  c.policy_delay = 3;
  c.tau = 0.05;
  Td3RsAgent agent(policies::DeterministicStatefulPolicy(small_arch(1, 1, 2), 1, {-1, 1}), 1, c);
  envs::ChainDiagnostic env(10);
  Rng rng(4);
  CHECK(agent.advance(env, c.s_min, rng) == c.s_min);
  CHECK(agent.iterations() == 0);  // buffer at S_min: still a no-op
  agent.advance(env, 1, rng);
  REQUIRE(agent.iterations() == 1);

  for (int k = 0; k < 9; ++k) {
    const std::size_t it = agent.iterations();
    const auto theta = agent.policy().parameters().flatten();
    const auto theta_bar = agent.target_policy().parameters().flatten();
    const auto psi_bar = agent.target_critic().parameters().flatten();
    const auto stats = agent.update(rng);
    const auto& theta_new = agent.policy().parameters().flatten();
    CAPTURE(it);
    CHECK(stats.policy_updated == (it % 3 == 0));
    if (it % 3 != 0) CHECK(theta_new == theta);
    else CHECK(theta_new != theta);

    std::vector<double> expect(theta_bar.size());
    for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = c.tau * theta_new[i] + (1.0 - c.tau) * theta_bar[i];
    CHECK(max_abs_diff(agent.target_policy().parameters().flatten(), expect) == 0.0);
    const auto& psi = agent.critic().parameters().flatten();
    std::vector<double> expect_q(psi.size());
    for (std::size_t i = 0; i < psi.size(); ++i) expect_q[i] = c.tau * psi[i] + (1.0 - c.tau) * psi_bar[i];
    CHECK(max_abs_diff(agent.target_critic().parameters().flatten(), expect_q) == 0.0);
  }
}

// ---- SAC-RS ----------------------------------------------------------------------

TEST_CASE("SAC-RS: temperature loss is stationary at the target entropy") {
  CHECK(temperature_gradient(0.3, 2.0, -2.0) == 0.0);
  // Entropy below target (log pi too high) raises alpha under descent.
  CHECK(temperature_gradient(0.3, -1.0, 2.0) < 0.0);
  CHECK(temperature_gradient(0.3, -3.0, 2.0) > 0.0);
}

TEST_CASE("SAC-RS: soft targets") {
  policies::GaussianPolicyOptions tiny;
  tiny.action_log_std = std::log(1e-12);
  tiny.state_log_std = std::log(1e-12);
  policies::StatefulGaussianPolicy pol(small_arch(2, 1, 2), 5, tiny);
  Rng rng(5);
  TwinQCritic q(3, 2, 1, {16}, rng);

  SUBCASE("absorbing") {
    const auto b = random_batch(16, true, 2, 3, 1, 2, 14);
    const auto y = sac_soft_target(b, pol, q, 0.99, {0.5, 0.5}, rng);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(y[i] == b.reward[i]);
  }
  SUBCASE("zero temperatures reduce to the noise-free TD target") {
    const auto b = random_batch(16, false, 2, 3, 1, 2, 15);
    const auto y = sac_soft_target(b, pol, q, 0.9, {0.0, 0.0}, rng);
    const auto p = pol.parameters().constants();
    const auto h = pol.heads(p, b.next_obs, b.next_state);
    const auto v = q.min_q(q.parameters().constants(), b.next_x, b.next_state, h.action_mean, h.state_mean);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(y[i] == doctest::Approx(b.reward[i] + 0.9 * v[i]).epsilon(1e-9));
  }
}

TEST_CASE("SAC-RS: updates run, critics track by Polyak only") {
  auto c = fast_config();
  c.tau = 0.1;
  SacRsAgent agent(policies::StatefulGaussianPolicy(small_arch(1, 1, 2), 2), 1, c);
  CHECK(agent.target_entropy_a() == -1.0);
  CHECK(agent.target_entropy_z() == -2.0);
  CHECK(agent.alpha_a() == doctest::Approx(0.1));
  envs::ChainDiagnostic env(10);
  Rng rng(6);
  agent.advance(env, c.s_min + 20, rng);
  CHECK(agent.iterations() == 20);
  CHECK(agent.last_update().policy_updated);
  CHECK(std::isfinite(agent.last_update().critic_loss));
  CHECK(agent.alpha_a() != doctest::Approx(0.1).epsilon(1e-9));

  const auto psi_bar = agent.target_critic().parameters().flatten();
  agent.update(rng);
  const auto& psi = agent.critic().parameters().flatten();
  std::vector<double> expect(psi.size());
  for (std::size_t i = 0; i < psi.size(); ++i) expect[i] = c.tau * psi[i] + (1.0 - c.tau) * psi_bar[i];
  CHECK(max_abs_diff(agent.target_critic().parameters().flatten(), expect) == 0.0);
}

// ---- PPO ------------------------------------------------------------------------

namespace {

PpoBatch batch_from(const std::vector<ExtendedTrajectory>& trs, std::size_t d_o, std::size_t d_a, std::size_t d_z,
                    double advantage) {
  std::vector<double> o, z, a, z2;
  PpoBatch b;
  std::size_t n = 0;
  for (const auto& tr : trs)
    for (const auto& s : tr.steps) {
      o.insert(o.end(), s.obs.begin(), s.obs.end());
      z.insert(z.end(), s.z.begin(), s.z.end());
      a.insert(a.end(), s.action.begin(), s.action.end());
      z2.insert(z2.end(), s.next_state.begin(), s.next_state.end());
      b.old_log_prob.push_back(s.log_prob);
      b.advantages.push_back(advantage);
      ++n;
    }
  b.obs = ad::Tensor::matrix(n, d_o, o);
  b.z = ad::Tensor::matrix(n, d_z, z);
  b.action = ad::Tensor::matrix(n, d_a, a);
  b.next_state = ad::Tensor::matrix(n, d_z, z2);
  return b;
}

}  // namespace

TEST_CASE("PPO-RS surrogate at the snapshot") {
  policies::StatefulGaussianPolicy pol(small_arch(1, 1, 2), 7);
  envs::ChainDiagnostic env(5);
  Rng rng(7);
  const auto trs = rollout_episodes(env, pol, 4, RolloutMode::stochastic, rng, 0.9);
  auto b = batch_from(trs, 1, 1, 2, 0.0);
  for (std::size_t i = 0; i < b.size(); ++i) b.advantages[i] = rng.normal();

  SUBCASE("ratio is one and the surrogate is the mean advantage") {
    const auto r = ppo_surrogate(pol, b, 0.2);
    double m = 0.0;
    for (double a : b.advantages) m += a / static_cast<double>(b.size());
    for (double x : r.ratios) CHECK(std::abs(x - 1.0) < 1e-12);
    CHECK(r.value == doctest::Approx(m).epsilon(1e-12));
    CHECK(r.skipped == 0);
  }
  SUBCASE("epsilon = 0 clips everything") {
    const auto r = ppo_surrogate(pol, b, 0.0);
    for (double g : r.gradient) CHECK(g == 0.0);
  }
  SUBCASE("single transition with A = 1 gives grad log pi") {
    const auto one = batch_from({ExtendedTrajectory{{trs[0].steps[1]}, 0.9}}, 1, 1, 2, 1.0);
    const auto r = ppo_surrogate(pol, one, 0.2);
    const auto fd = central_difference(
        [&](const std::vector<double>& x) {
          auto copy = pol;
          copy.parameters().unflatten(x);
          return copy.log_prob(copy.parameters().constants(), one.obs, one.z, one.action, one.next_state)[0];
        },
        pol.parameters().flatten(), 1e-6);
    CHECK(max_relative_error(r.gradient, fd) < 1e-5);
  }
  SUBCASE("non-finite ratios are skipped") {
    b.old_log_prob[0] = -1e6;
    const auto r = ppo_surrogate(pol, b, 0.2);
    CHECK(r.skipped == 1);
    CHECK(std::isnan(r.ratios[0]));
  }
}

TEST_CASE("PPO agents: ratio at the snapshot before the first step") {
  auto c = fast_config();
  envs::ChainDiagnostic env(8);
  Rng rng(8);
  PpoAgent rs(policies::StatefulGaussianPolicy(small_arch(1, 1, 2), 8), 1, c);
  const auto before = rs.policy().parameters().flatten();
  rs.advance(env, 1000, rng);
  CHECK(rs.initial_ratio_deviation() < 1e-6);
  CHECK(rs.last_update().policy_updated);
  CHECK(rs.policy().parameters().flatten() != before);
  CHECK(std::isfinite(rs.last_update().grad_variance));

  c.truncation = 3;
  PpoBpttAgent bptt(policies::RecurrentDeterministicPolicy(small_arch(1, 1, 2), 8), 1, c);
  bptt.advance(env, 1000, rng);
  CHECK(bptt.initial_ratio_deviation() < 1e-6);

  c.critic_input = CriticInput::observation;
  PpoAgent obs_critic(policies::StatefulGaussianPolicy(small_arch(1, 1, 2), 8), 1, c);
  obs_critic.advance(env, 1000, rng);
  CHECK(obs_critic.initial_ratio_deviation() < 1e-6);
}
