// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion. Tolerances are fixed below.
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "chain_setup.hpp"
#include "s2pg/algorithms/offpolicy.hpp"
#include "s2pg/algorithms/ppo.hpp"
#include "s2pg/harness/harness.hpp"
#include "s2pg/variance_lab/variance_lab.hpp"

using namespace s2pg;
using namespace s2pg::algorithms;
using namespace s2pg::testing;
namespace fs = std::filesystem;

namespace {

// ---- pinned tolerances and budgets ------------------------------------------------
constexpr double kGradcheckTol = 1e-4;
constexpr double kGradcheckSeconds = 60.0;
constexpr std::size_t kChainInits = 10;
constexpr std::size_t kChainSamples = 200'000;
constexpr std::size_t kOracleRollouts = 1'000'000;
constexpr double kOracleStep = 1e-2;
constexpr double kChainGamma = 0.9;
constexpr double kZLimit = 3.0;
constexpr double kUnbiasedSeconds = 600.0;
constexpr double kTruncationGain = 0.9;
constexpr double kClosedFormTol = 1e-10;
constexpr double kClosedFormSeconds = 1.0;
constexpr double kBoundSeconds = 1200.0;
constexpr double kBpttGrowthMin = 10.0;
constexpr double kGrowthMax = 4.0;
constexpr double kMemorySuccess = 0.8;
constexpr std::size_t kMemorySeedsNeeded = 7;
constexpr double kStatelessCeiling = 0.4;
constexpr double kMemorySeconds = 3600.0;
constexpr std::size_t kMemoryBudget = 300'000;
constexpr double kGapFraction = 0.2;
constexpr double kRatioTol = 1e-6;
constexpr double kMechanicsSeconds = 120.0;
constexpr std::size_t kTimingHorizon = 200;
constexpr std::size_t kTimingUpdates = 100;
constexpr std::size_t kTimingTruncation = 32;

using clock_t_ = std::chrono::steady_clock;
double since(clock_t_::time_point t0) { return std::chrono::duration<double>(clock_t_::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double x, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << x;
  return os.str();
}

fs::path g_configs, g_out;

// ---- 1 -----------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = clock_t_::now();
  const auto cases = harness::gradcheck_suite(0);
  double worst = 0.0;
  std::string who;
  for (const auto& c : cases)
    if (c.max_relative_error >= worst) worst = c.max_relative_error, who = c.name;
  const double secs = since(t0);
  return {worst < kGradcheckTol && secs < kGradcheckSeconds,
          std::to_string(cases.size()) + " cases, max rel err " + num(worst) + " (" + who + "), " + num(secs, 3) +
              " s"};
}

// ---- 2, 3 --------------------------------------------------------------------------

template <class Estimate>
RunningMoments collect(std::uint64_t seed, const policies::Architecture& arch, const Actor& actor, Estimate estimate) {
  envs::ChainDiagnostic env(2);
  Rng rng(seed);
  RunningMoments m;
  for (std::size_t i = 0; i < kChainSamples; ++i) {
    auto tr = rollout_episodes(env, actor, arch.state_dim, 1, RolloutMode::stochastic, rng, kChainGamma);
    m.add(estimate(tr).values);
  }
  return m;
}

std::vector<ChainTheta> chain_inits() {
  std::mt19937_64 engine(20240611);
  std::vector<ChainTheta> out;
  for (std::size_t k = 0; k < kChainInits; ++k) out.push_back(random_theta(engine));
  return out;
}

double worst_z(const std::vector<CoordinateCheck>& checks, std::string* who = nullptr) {
  double w = 0.0;
  for (const auto& c : checks)
    if (c.z >= w) {
      w = c.z;
      if (who) *who = c.name;
    }
  return w;
}

Outcome s2pg_unbiased() {
  const auto t0 = clock_t_::now();
  const auto inits = chain_inits();
  double worst = 0.0;
  std::size_t failed = 0, coords = 0;
  std::string where;
  for (std::size_t k = 0; k < inits.size(); ++k) {
    const auto pol = chain_s2pg_policy(inits[k]);
    const auto m = collect(1000 + k, pol.architecture(), make_actor(pol),
                           [&](const std::vector<ExtendedTrajectory>& tr) { return estimators::reinforce_s2pg(tr, pol); });
    const auto o = chain_fd_oracle(inits[k], 2, kChainGamma, true, kOracleRollouts, kOracleStep, 2000 + k);
    const auto checks = compare(pol.parameters(), m, o);
    std::string who;
    const double w = worst_z(checks, &who);
    coords += checks.size();
    for (const auto& c : checks) failed += c.z >= kZLimit;
    if (w > worst) worst = w, where = "init " + std::to_string(k) + " " + who;
  }
  const double secs = since(t0);
  return {failed == 0 && secs < kUnbiasedSeconds,
          std::to_string(failed) + "/" + std::to_string(coords) + " coordinates beyond " + num(kZLimit) +
              " se, max z " + num(worst) + " (" + where + "), " + num(secs, 3) + " s"};
}

Outcome bptt_unbiased_and_truncation_bias() {
  const auto t0 = clock_t_::now();
  const auto inits = chain_inits();
  double worst = 0.0;
  std::size_t failed = 0, coords = 0;
  for (std::size_t k = 0; k < inits.size(); ++k) {
    const auto rec = chain_bptt_policy(inits[k]);
    const auto m = collect(3000 + k, rec.architecture(), make_actor(rec), [&](const std::vector<ExtendedTrajectory>& tr) {
      return estimators::reinforce_bptt(tr, rec, 0);
    });
    const auto o = chain_fd_oracle(inits[k], 2, kChainGamma, false, kOracleRollouts, kOracleStep, 4000 + k, {3, 7});
    const auto checks = compare(rec.parameters(), m, o);
    coords += checks.size();
    for (const auto& c : checks) failed += c.z >= kZLimit;
    worst = std::max(worst, worst_z(checks));
  }

  auto th = inits.front();
  th.g = kTruncationGain;
  const auto rec = chain_bptt_policy(th);
  const auto m = collect(5000, rec.architecture(), make_actor(rec), [&](const std::vector<ExtendedTrajectory>& tr) {
    return estimators::reinforce_bptt(tr, rec, 1);
  });
  const auto o = chain_fd_oracle(th, 2, kChainGamma, false, kOracleRollouts, kOracleStep, 5001, {3, 7});
  std::string who;
  const double trunc_worst = worst_z(compare(rec.parameters(), m, o), &who);
  const double secs = since(t0);
  return {failed == 0 && trunc_worst >= kZLimit,
          "full: " + std::to_string(failed) + "/" + std::to_string(coords) + " beyond " + num(kZLimit) +
              " se (max z " + num(worst) + "); truncation 1, gain " + num(kTruncationGain) + ": max z " +
              num(trunc_worst) + " (" + who + "); " + num(secs, 3) + " s"};
}

// ---- 4 -----------------------------------------------------------------------------

Outcome closed_forms() {
  const auto t0 = clock_t_::now();
  double worst = 0.0;
  for (double Z : {0.0, 0.25, 0.5, 0.9, 1.0, 1.1, 2.0})
    for (std::size_t T = 1; T <= 30; ++T) {
      long double tilde = 0, bar = 0;
      for (std::size_t t = 0; t < T; ++t) {
        long double inner = 0;
        for (std::size_t i = 0; i < t; ++i) inner += std::pow(static_cast<long double>(Z), static_cast<long double>(t - i - 1));
        tilde += inner;
        bar += inner * inner;
      }
      auto rel = [](double a, long double b) {
        return b == 0 ? std::abs(a) : static_cast<double>(std::abs((a - b) / b));
      };
      worst = std::max({worst, rel(variance::z_tilde(Z, T), tilde), rel(variance::z_bar(Z, T), bar)});
    }
  const double secs = since(t0);
  return {worst < kClosedFormTol && secs < kClosedFormSeconds,
          "7 x 30 grid incl. Z = 1, max rel err " + num(worst) + ", " + num(secs, 3) + " s"};
}

// ---- 5, 6 --------------------------------------------------------------------------

struct RegimeResult {
  std::vector<variance::VarianceReport> rows;
  double seconds = 0.0;
};

const RegimeResult& regime() {
  static const RegimeResult r = [] {
    const auto t0 = clock_t_::now();
    RegimeResult out;
    out.rows = variance::regime_experiment(variance::RegimeConfig{});  // Z in {0.5, 1.5}, T in {5, 10, 20}, 2000 samples
    out.seconds = since(t0);
    return out;
  }();
  return r;
}

Outcome bound_validity() {
  const auto& r = regime();
  std::size_t ok = 0;
  double tightest = INFINITY;
  for (const auto& row : r.rows) {
    ok += row.bound >= row.empirical_variance;
    tightest = std::min(tightest, row.bound / row.empirical_variance);
  }
  return {ok == r.rows.size() && r.rows.size() == 12 && r.seconds < kBoundSeconds,
          std::to_string(ok) + "/" + std::to_string(r.rows.size()) + " cells with bound >= variance, min ratio " +
              num(tightest) + ", " + num(r.seconds, 3) + " s"};
}

Outcome regime_separation() {
  const auto& rows = regime().rows;
  auto var = [&](const std::string& est, double Z, std::size_t T) {
    for (const auto& r : rows)
      if (r.estimator == est && r.Z_target == Z && r.T == T) return r.empirical_variance;
    return std::numeric_limits<double>::quiet_NaN();
  };
  const double b15 = var("bptt", 1.5, 20) / var("bptt", 1.5, 10), s15 = var("s2pg", 1.5, 20) / var("s2pg", 1.5, 10);
  const double b05 = var("bptt", 0.5, 20) / var("bptt", 0.5, 10), s05 = var("s2pg", 0.5, 20) / var("s2pg", 0.5, 10);
  return {b15 > kBpttGrowthMin && s15 < kGrowthMax && b05 < kGrowthMax && s05 < kGrowthMax,
          "T 10->20 growth at Z=1.5: bptt " + num(b15) + ", s2pg " + num(s15) + "; at Z=0.5: bptt " + num(b05) +
              ", s2pg " + num(s05)};
}

// ---- 7, 8 --------------------------------------------------------------------------

harness::RunSummary train(const std::string& file, const std::vector<std::string>& overrides, const std::string& tag) {
  auto all = overrides;
  all.push_back("output_dir=\"" + (g_out / tag).string() + "\"");
  all.push_back("workers=1");
  const auto cfg = harness::load_config(g_configs / file, all);
  std::cerr << "[acceptance] training " << tag << " (" << cfg.seeds.size() << " seeds, " << cfg.algo.total_steps
            << " steps)\n";
  return harness::run(cfg);
}

double best_success(const harness::SeedRun& s) {
  double b = 0.0;
  for (const auto& row : s.curve) b = std::max(b, row.success_rate);
  return b;
}

Outcome memory_task() {
  const auto t0 = clock_t_::now();
  const std::string budget = "algo.total_steps=" + std::to_string(kMemoryBudget);
  const auto rs = train("point_mass_memory_ppo_rs.json", {budget}, "memory_ppo_rs");
  const auto flat = train("point_mass_memory_ppo.json", {budget}, "memory_ppo");
  std::size_t reached = 0;
  std::string rs_list, flat_list;
  for (const auto& s : rs.seeds) {
    reached += s.ok && best_success(s) >= kMemorySuccess;
    rs_list += num(best_success(s), 2) + " ";
  }
  double flat_best = 0.0;
  for (const auto& s : flat.seeds) {
    flat_best = std::max(flat_best, best_success(s));
    flat_list += num(best_success(s), 2) + " ";
  }
  const double secs = since(t0);
  return {reached >= kMemorySeedsNeeded && flat_best < kStatelessCeiling && secs < kMemorySeconds,
          "ppo_rs seeds >= " + num(kMemorySuccess) + ": " + std::to_string(reached) + "/" +
              std::to_string(rs.seeds.size()) + " [" + rs_list + "], stateless max " + num(flat_best, 2) + " [" +
              flat_list + "], " + num(secs, 4) + " s"};
}

double mean_final(const harness::RunSummary& s) {
  double m = 0.0;
  for (const auto& seed : s.seeds) m += seed.curve.back().mean_return / static_cast<double>(s.seeds.size());
  return m;
}

Outcome masked_control() {
  const auto rs = train("masked_pendulum_ppo_rs.json", {}, "pendulum_ppo_rs");
  const auto flat = train("masked_pendulum_ppo_rs.json", {"algorithm=ppo"}, "pendulum_ppo");
  const auto oracle = train("masked_pendulum_ppo_rs.json", {"algorithm=ppo", "env.params.mask_velocity=false"},
                            "pendulum_oracle");
  const double r = mean_final(rs), f = mean_final(flat), o = mean_final(oracle);
  const double frac = (r - f) / (o - f);
  const bool ok = rs.ok && flat.ok && oracle.ok && o > f && r - f >= kGapFraction * (o - f);
  return {ok, "final return ppo_rs " + num(r) + ", ppo " + num(f) + ", privileged ppo " + num(o) +
                  "; gap fraction " + num(frac, 3) + " (need " + num(kGapFraction) + ")"};
}

// ---- 9 -----------------------------------------------------------------------------

policies::Architecture small(std::size_t d_o, std::size_t d_a, std::size_t d_z) {
  policies::Architecture a;
  a.obs_dim = d_o;
  a.action_dim = d_a;
  a.state_dim = d_z;
  a.hidden = {16};
  return a;
}

AlgoConfig small_config() {
  AlgoConfig c;
  c.batch_size = 32;
  c.s_min = 64;
  c.s_warm = 64;
  c.critic_hidden = {32};
  c.rollout_steps = 256;
  c.minibatches = 4;
  c.epochs = 3;
  c.seed = 9;
  return c;
}

Outcome mechanics() {
  const auto t0 = clock_t_::now();
  std::vector<std::string> bad;
  auto check = [&](bool cond, const std::string& what) {
    if (!cond) bad.push_back(what);
  };

  // TD3 delayed update + Polyak every iteration
  {
    auto c = small_config();
    c.policy_delay = 2;
    c.tau = 0.02;
    Td3RsAgent agent(policies::DeterministicStatefulPolicy(small(1, 1, 2), 1, {-2, 2}), 1, c);
    envs::ChainDiagnostic env(20);
    Rng rng(1);
    agent.advance(env, c.s_min + 1, rng);
    for (int k = 0; k < 20; ++k) {
      const std::size_t it = agent.iterations();
      const auto theta = agent.policy().parameters().flatten();
      const auto tbar = agent.target_policy().parameters().flatten();
      const auto qbar = agent.target_critic().parameters().flatten();
      agent.update(rng);
      const auto& th = agent.policy().parameters().flatten();
      check((th != theta) == (it % c.policy_delay == 0), "td3 delayed policy step at iteration " + std::to_string(it));
      const auto& q = agent.critic().parameters().flatten();
      const auto& tb = agent.target_policy().parameters().flatten();
      const auto& qb = agent.target_critic().parameters().flatten();
      for (std::size_t i = 0; i < th.size(); ++i)
        if (tb[i] != c.tau * th[i] + (1.0 - c.tau) * tbar[i]) {
          bad.push_back("td3 policy target polyak");
          break;
        }
      for (std::size_t i = 0; i < q.size(); ++i)
        if (qb[i] != c.tau * q[i] + (1.0 - c.tau) * qbar[i]) {
          bad.push_back("td3 critic target polyak");
          break;
        }
    }
  }
  // Polyak on a bare store
  {
    Rng rng(2);
    ad::ParameterStore a, b;
    a.add("w", {5, 3}, rng.normal_vector(15));
    b.add("w", {5, 3}, rng.normal_vector(15));
    const auto before = b.flatten();
    polyak_update(b, a, 0.3);
    for (std::size_t i = 0; i < before.size(); ++i)
      check(b.flatten()[i] == 0.3 * a.flatten()[i] + 0.7 * before[i], "polyak exactness");
  }
  // PPO ratio at the snapshot
  {
    auto c = small_config();
    envs::PointMassMemory env(50, 0.05);
    Rng rng(3);
    PpoAgent rs(policies::StatefulGaussianPolicy(small(env.obs_dim(), env.action_dim(), 4), 3), env.state_dim(), c);
    rs.advance(env, c.rollout_steps, rng);
    check(rs.last_update().policy_updated && rs.initial_ratio_deviation() < kRatioTol,
          "ppo_rs ratio " + num(rs.initial_ratio_deviation()));
    c.truncation = 8;
    PpoBpttAgent bp(policies::RecurrentDeterministicPolicy(small(env.obs_dim(), env.action_dim(), 4), 3),
                    env.state_dim(), c);
    bp.advance(env, c.rollout_steps, rng);
    check(bp.initial_ratio_deviation() < kRatioTol, "ppo_bptt ratio " + num(bp.initial_ratio_deviation()));
  }
  // SAC temperature stationarity: d/d alpha of -alpha (log pi + H) vanishes at E[log pi] = -H
  {
    for (double alpha : {0.01, 0.2, 3.0})
      for (double target : {-4.0, -1.0, 0.5}) check(temperature_gradient(alpha, -target, target) == 0.0, "sac alpha");
    auto c = small_config();
    SacRsAgent agent(policies::StatefulGaussianPolicy(small(1, 1, 2), 4), 1, c);
    envs::ChainDiagnostic env(20);
    Rng rng(4);
    agent.advance(env, c.s_min + 30, rng);
    check(std::isfinite(agent.alpha_a()) && std::isfinite(agent.alpha_z()), "sac temperatures finite");
  }
  // Absorbing TD target = r, both target rules
  {
    ReplayBuffer buf(64);
    Rng rng(5);
    for (int i = 0; i < 64; ++i) {
      Transition s;
      s.obs = rng.normal_vector(2);
      s.privileged_state = rng.normal_vector(3);
      s.z = rng.normal_vector(2);
      s.action = rng.normal_vector(1);
      s.next_state = rng.normal_vector(2);
      s.next_obs = rng.normal_vector(2);
      s.next_privileged_state = rng.normal_vector(3);
      s.reward = rng.normal();
      s.absorbing = s.last = true;
      buf.add(s, i, 0);
    }
    std::vector<std::size_t> idx(64);
    for (std::size_t i = 0; i < 64; ++i) idx[i] = i;
    const auto batch = make_batch(buf, idx, CriticInput::privileged);
    TwinQCritic q(3, 2, 1, {16}, rng);
    const policies::DeterministicStatefulPolicy det(small(2, 1, 2), 5, {-1, 1});
    const policies::StatefulGaussianPolicy gauss(small(2, 1, 2), 5);
    const auto y3 = td3_target(batch, det, q, AlgoConfig{}, rng);
    const auto ys = sac_soft_target(batch, gauss, q, 0.99, {0.2, 0.2}, rng);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      check(y3[i] == batch.reward[i], "td3 absorbing target");
      check(ys[i] == batch.reward[i], "sac absorbing target");
    }
  }
  const double secs = since(t0);
  std::string detail = bad.empty() ? "td3 delay, polyak, ppo ratio, sac temperature, absorbing target all hold"
                                   : std::to_string(bad.size()) + " violations, first: " + bad.front();
  return {bad.empty() && secs < kMechanicsSeconds, detail + ", " + num(secs, 3) + " s"};
}

// ---- 10 ----------------------------------------------------------------------------

Outcome wallclock_ordering() {
  envs::MaskedPendulum env(kTimingHorizon, 0.05);
  policies::Architecture arch;
  arch.obs_dim = env.obs_dim();
  arch.action_dim = env.action_dim();
  arch.state_dim = 8;
  arch.hidden = {32, 32};
  AlgoConfig c;
  c.rollout_steps = 5 * kTimingHorizon;
  c.epochs = 4;
  c.minibatches = 4;
  c.value_epochs = 4;
  c.truncation = kTimingTruncation;
  c.seed = 10;

  // Data from the recurrent policy; PPO-RS rescores the same rows under its own density.
  PpoBpttAgent bptt(policies::RecurrentDeterministicPolicy(arch, 10), env.state_dim(), c);
  Rng rng(10);
  const auto data = rollout_episodes(env, bptt.actor(), arch.state_dim, 5, RolloutMode::stochastic, rng, c.gamma);
  PpoAgent rs(policies::StatefulGaussianPolicy(arch, 10), env.state_dim(), c);
  auto rs_data = data;
  {
    const auto p = rs.policy().parameters().constants();
    for (auto& tr : rs_data)
      for (auto& s : tr.steps) {
        const auto row = [](const std::vector<double>& v) { return ad::Tensor::matrix(1, v.size(), v); };
        s.log_prob = rs.policy().log_prob(p, row(s.obs), row(s.z), row(s.action), row(s.next_state)).item();
      }
  }

  auto time_updates = [&](auto& agent, const std::vector<ExtendedTrajectory>& d) {
    Rng r(11);
    const auto t0 = clock_t_::now();
    for (std::size_t u = 0; u < kTimingUpdates; ++u) agent.update(d, r);
    return since(t0) / static_cast<double>(kTimingUpdates);
  };
  const double t_rs = time_updates(rs, rs_data);
  const double t_bptt = time_updates(bptt, data);
  return {t_rs < t_bptt, "per update on " + std::to_string(c.rollout_steps) + " steps (T=" +
                             std::to_string(kTimingHorizon) + "): ppo_rs " + num(1e3 * t_rs) + " ms, ppo_bptt(" +
                             std::to_string(kTimingTruncation) + ") " + num(1e3 * t_bptt) + " ms"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::string configs = S2PG_CONFIG_DIR, out = "acceptance_runs";
  app.add_option("--only", only, "criteria to run (default: all)")->check(CLI::Range(1, 10));
  app.add_option("--configs", configs, "directory holding the training configs");
  app.add_option("--out", out, "directory for training artifacts");
  CLI11_PARSE(app, argc, argv);
  g_configs = configs;
  g_out = out;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"S2PG unbiasedness", s2pg_unbiased},
      {"full-BPTT unbiasedness, truncation bias", bptt_unbiased_and_truncation_bias},
      {"closed-form constants", closed_forms},
      {"bound validity", bound_validity},
      {"regime separation", regime_separation},
      {"memory-task learning", memory_task},
      {"velocity-masked control", masked_control},
      {"algorithm mechanics", mechanics},
      {"wallclock ordering", wallclock_ordering},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << id << " [" << criteria[i].first << "]: " << (o.pass ? "PASS" : "FAIL") << "  "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
