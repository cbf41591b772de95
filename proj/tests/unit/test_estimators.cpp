// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "chain_setup.hpp"

using namespace s2pg;
using namespace s2pg::estimators;
using namespace s2pg::algorithms;
using namespace s2pg::testing;

namespace {

ExtendedTrajectory rewards_only(const std::vector<double>& r, double gamma, int absorbing_at = -1) {
  ExtendedTrajectory tr;
  tr.gamma = gamma;
  for (std::size_t t = 0; t < r.size(); ++t) {
    Transition s;
    s.reward = r[t];
    s.absorbing = static_cast<int>(t) == absorbing_at;
    tr.steps.push_back(s);
  }
  return tr;
}

template <class Estimate>
RunningMoments collect(std::size_t samples, std::uint64_t seed, std::size_t T, const policies::Architecture& arch,
                       const Actor& actor, Estimate estimate) {
  envs::ChainDiagnostic env(T);
  Rng rng(seed);
  RunningMoments m;
  for (std::size_t i = 0; i < samples; ++i) {
    auto tr = rollout_episodes(env, actor, arch.state_dim, 1, RolloutMode::stochastic, rng, 0.9);
    m.add(estimate(tr).values);
  }
  return m;
}

}  // namespace

TEST_CASE("discounted_return") {
  CHECK(discounted_return(rewards_only({0, 0, 0}, 0.9)) == 0.0);
  CHECK(discounted_return(rewards_only({1, 1, 1}, 0.5)) == 1.75);
  CHECK(discounted_return(rewards_only({1, 1, 1}, 0.5, 1)) == 1.5);
  CHECK_THROWS_AS(discounted_return(ExtendedTrajectory{}), InputError);

  Rng rng(3);
  const auto r = rng.normal_vector(37);
  // Horner fold from the back.
  const double folded = std::accumulate(r.rbegin(), r.rend(), 0.0, [](double acc, double x) { return x + 0.93 * acc; });
  CHECK(discounted_return(rewards_only(r, 0.93)) == doctest::Approx(folded).epsilon(1e-13));
}

TEST_CASE("compute_gae") {
  const std::vector<double> r{1.0, -0.5, 2.0, 0.25}, v{0.3, 0.1, -0.2, 0.4}, vn{0.1, -0.2, 0.4, 0.9};
  const std::vector<bool> no(4, false);
  std::vector<bool> last(4, false);
  last[3] = true;

  SUBCASE("lambda = 0 gives one-step residuals") {
    const auto g = compute_gae(r, v, vn, no, last, 0.9, 0.0);
    for (std::size_t k = 0; k < 4; ++k) CHECK(g.advantages[k] == doctest::Approx(r[k] + 0.9 * vn[k] - v[k]));
  }
  SUBCASE("lambda = 1, V = 0, gamma = 1 gives reward-to-go") {
    const std::vector<double> zero(4, 0.0);
    const auto g = compute_gae(r, zero, zero, no, last, 1.0, 1.0);
    CHECK(g.advantages == std::vector<double>{2.75, 1.75, 2.25, 0.25});
  }
  SUBCASE("4-step episode with linear V, transcribed pseudocode") {
    // V(s) = 0.5 s + 0.1 on states s_k = k, terminal absorbing.
    std::vector<double> vv(4), vnext(4);
    for (int k = 0; k < 4; ++k) {
      vv[k] = 0.5 * k + 0.1;
      vnext[k] = 0.5 * (k + 1) + 0.1;
    }
    std::vector<bool> ab(4, false);
    ab[3] = true;
    const double gamma = 0.95, lambda = 0.8;
    // By hand, last step first.
    const double A3 = r[3] - vv[3];
    const double A2 = r[2] + gamma * vnext[2] - vv[2] + gamma * lambda * A3;
    const double A1 = r[1] + gamma * vnext[1] - vv[1] + gamma * lambda * A2;
    const double A0 = r[0] + gamma * vnext[0] - vv[0] + gamma * lambda * A1;
    const auto g = compute_gae(r, vv, vnext, ab, last, gamma, lambda);
    CHECK(g.advantages == std::vector<double>{A0, A1, A2, A3});
    CHECK(g.targets == std::vector<double>{A0 + vv[0], A1 + vv[1], A2 + vv[2], A3 + vv[3]});
  }
  SUBCASE("truncated final step bootstraps") {
    const auto g = compute_gae(r, v, vn, no, last, 0.9, 0.7);
    CHECK(g.advantages[3] == doctest::Approx(r[3] + 0.9 * vn[3] - v[3]));
  }
  CHECK_THROWS_AS(compute_gae(r, v, vn, no, last, 0.9, 1.5), InputError);
}

TEST_CASE("zero rewards give zero gradients") {
  ChainTheta th;
  th.wo = 0.3;
  th.wz = -0.2;
  th.u = 0.5;
  auto pol = chain_s2pg_policy(th);
  auto rec = chain_bptt_policy(th);
  envs::ChainDiagnostic env(3);
  Rng rng(1);
  auto trs = rollout_episodes(env, pol, 5, RolloutMode::stochastic, rng, 0.9);
  for (auto& tr : trs)
    for (auto& s : tr.steps) s.reward = 0.0;
  for (double g : reinforce_s2pg(trs, pol).values) CHECK(g == 0.0);
  for (double g : reinforce_bptt(trs, rec, 0).values) CHECK(g == 0.0);
}

TEST_CASE("S2PG on the one-step chain matches the analytic gradient") {
  // T = 1: J = -E[((1 + wo) s0 + b + sa eps)^2] = -((1 + wo)^2 + b^2 + sa^2).
  ChainTheta th;
  th.wo = 0.4;
  th.wz = 0.7;
  th.b = -0.3;
  th.u = 0.2;
  th.c = 0.1;
  th.log_sa = std::log(0.6);
  th.log_sz = std::log(0.4);
  auto pol = chain_s2pg_policy(th);
  const auto m = collect(200'000, 11, 1, pol.architecture(), make_actor(pol),
                         [&](const std::vector<ExtendedTrajectory>& tr) { return reinforce_s2pg(tr, pol); });
  const auto& st = pol.parameters();
  auto check = [&](const char* name, double expected) {
    const std::size_t k = st.offset(st.index(name));
    const std::string label = name;
    CAPTURE(label);
    CHECK(std::abs(m.mean[k] - expected) <= 3.0 * m.se(k));
  };
  const double sa = 0.6;
  check("f.Wo", -2.0 * (1.0 + th.wo));
  check("f.b", -2.0 * th.b);
  check("log_std_a", -2.0 * sa * sa);
  // z_0 = 0 and z_1 is never used: the remaining coordinates are exactly zero in expectation.
  check("f.Wz", 0.0);
}

TEST_CASE("S2PG and full BPTT on the two-step chain match the finite-difference oracle") {
  ChainTheta th;
  th.wo = -0.2;
  th.wz = 0.8;
  th.b = 0.3;
  th.g = 0.9;
  th.u = 0.5;
  th.c = -0.4;
  th.log_sa = std::log(0.5);
  th.log_sz = std::log(0.5);
  constexpr std::size_t kSamples = 200'000;

  auto pol = chain_s2pg_policy(th);
  const auto s2pg = collect(kSamples, 21, 2, pol.architecture(), make_actor(pol),
                            [&](const std::vector<ExtendedTrajectory>& tr) { return reinforce_s2pg(tr, pol); });
  const auto oracle_s = chain_fd_oracle(th, 2, 0.9, true, 1'000'000, 1e-2, 77);
  for (const auto& c : compare(pol.parameters(), s2pg, oracle_s)) {
    CAPTURE(c.name);
    CAPTURE(c.estimate);
    CAPTURE(c.oracle);
    CHECK(c.z < 3.0);
  }

  auto rec = chain_bptt_policy(th);
  const auto full = collect(kSamples, 22, 2, rec.architecture(), make_actor(rec),
                            [&](const std::vector<ExtendedTrajectory>& tr) { return reinforce_bptt(tr, rec, 0); });
  const auto oracle_d = chain_fd_oracle(th, 2, 0.9, false, 1'000'000, 1e-2, 78, {3, 7});
  for (const auto& c : compare(rec.parameters(), full, oracle_d)) {
    CAPTURE(c.name);
    CHECK(c.z < 3.0);
  }

  // A one-step window drops dz_1/dtheta and is biased.
  const auto trunc = collect(kSamples, 23, 2, rec.architecture(), make_actor(rec),
                             [&](const std::vector<ExtendedTrajectory>& tr) { return reinforce_bptt(tr, rec, 1); });
  double worst = 0.0;
  for (const auto& c : compare(rec.parameters(), trunc, oracle_d)) worst = std::max(worst, c.z);
  CHECK(worst > 3.0);
}

TEST_CASE("baselines preserve the estimator mean") {
  ChainTheta th;
  th.wo = 0.3;
  th.wz = 0.5;
  th.b = 0.2;
  th.u = -0.6;
  th.c = 0.3;
  th.log_sa = std::log(0.5);
  th.log_sz = std::log(0.5);
  auto pol = chain_s2pg_policy(th);
  envs::ChainDiagnostic env(2);
  // Batches of 16 so the leave-one-out baseline has company; the same batches feed both estimators.
  Rng rng(5);
  RunningMoments plain, centred, rtg;
  for (int i = 0; i < 8000; ++i) {
    auto trs = rollout_episodes(env, pol, 16, RolloutMode::stochastic, rng, 0.9);
    plain.add(reinforce_s2pg(trs, pol).values);
    centred.add(reinforce_s2pg(trs, pol, {BaselineMode::mean_return, false}).values);
    rtg.add(reinforce_s2pg(trs, pol, {BaselineMode::reward_to_go, false}).values);
  }
  const auto& st = pol.parameters();
  for (std::size_t i = 0; i < st.count(); ++i) {
    if (!st.trainable(i)) continue;
    const std::size_t k = st.offset(i);
    const double se = std::sqrt(plain.se(k) * plain.se(k) + centred.se(k) * centred.se(k));
    CAPTURE(st.name(i));
    CHECK(std::abs(plain.mean[k] - centred.mean[k]) < 3.0 * se);
    const double se2 = std::sqrt(plain.se(k) * plain.se(k) + rtg.se(k) * rtg.se(k));
    CHECK(std::abs(plain.mean[k] - rtg.mean[k]) < 3.0 * se2);
  }
}

TEST_CASE("estimator input validation") {
  ChainTheta th;
  auto pol = chain_s2pg_policy(th);
  CHECK_THROWS_AS(reinforce_s2pg({}, pol), InputError);
  ExtendedTrajectory bad;
  Transition s;
  s.obs = {1.0, 2.0};
  s.z = {0.0};
  s.action = {0.0};
  s.next_state = {0.0};
  bad.steps.push_back(s);
  CHECK_THROWS_AS(reinforce_s2pg({bad}, pol), DimensionError);
  CHECK(baseline_from_string("reward_to_go") == BaselineMode::reward_to_go);
  CHECK_THROWS_AS(baseline_from_string("x"), InputError);
}
