// SPDX-License-Identifier: Apache-2.0
#include "s2pg/algorithms/agent.hpp"

#include <chrono>
#include <fstream>
#include <iostream>

namespace s2pg::algorithms {

EvalStats evaluate(envs::Env& env, const Actor& actor, std::size_t state_dim, std::size_t episodes,
                   std::uint64_t seed) {
  if (episodes == 0) throw InputError("evaluate: need at least one episode");
  Rng rng(seed);
  const auto trs = rollout_episodes(env, actor, state_dim, episodes, RolloutMode::deterministic_eval, rng, 1.0);
  EvalStats e;
  std::vector<double> returns;
  for (const auto& tr : trs) {
    double r = 0.0;
    for (const auto& s : tr.steps) r += s.reward;
    returns.push_back(r);
    e.success_rate += tr.success() ? 1.0 : 0.0;
  }
  for (double r : returns) e.mean_return += r;
  e.mean_return /= static_cast<double>(episodes);
  for (double r : returns) e.std_return += (r - e.mean_return) * (r - e.mean_return);
  e.std_return = std::sqrt(e.std_return / static_cast<double>(episodes));
  e.success_rate /= static_cast<double>(episodes);
  return e;
}

void write_metrics_header(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os << "step,mean_return,std_return,success_rate,wallclock_s,grad_variance_probe\n";
}

void append_metrics_row(const std::filesystem::path& path, const MetricsRow& r) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw InputError("cannot write " + path.string());
  os.precision(10);
  os << r.step << ',' << r.mean_return << ',' << r.std_return << ',' << r.success_rate << ',' << r.wallclock_s << ',';
  if (std::isfinite(r.grad_variance_probe)) os << r.grad_variance_probe;
  os << '\n';
}

TrainingResult train(Agent& agent, envs::Env& env, envs::Env& eval_env, const TrainingOptions& options, Rng& rng) {
  using clock = std::chrono::steady_clock;
  if (options.eval_every == 0) throw InputError("training: eval_every must be positive");
  TrainingResult result;
  if (options.metrics_csv) write_metrics_header(*options.metrics_csv);
  const auto t0 = clock::now();
  const Actor actor = agent.actor();

  auto record = [&] {
    const auto e0 = clock::now();
    const auto e = evaluate(eval_env, actor, agent.state_dim(), options.eval_episodes, options.eval_seed);
    result.eval_seconds += std::chrono::duration<double>(clock::now() - e0).count();
    MetricsRow row;
    row.step = result.steps;
    row.mean_return = e.mean_return;
    row.std_return = e.std_return;
    row.success_rate = e.success_rate;
    if (options.record_wallclock) row.wallclock_s = std::chrono::duration<double>(clock::now() - t0).count();
    row.grad_variance_probe = agent.last_update().grad_variance;
    result.curve.push_back(row);
    if (options.metrics_csv) append_metrics_row(*options.metrics_csv, row);
    if (options.verbose)
      std::cerr << agent.name() << " step " << row.step << " return " << row.mean_return << " success "
                << row.success_rate << " (" << row.wallclock_s << " s)\n";
  };

  record();
  std::size_t next_eval = options.eval_every;
  while (result.steps < options.total_steps) {
    const auto a0 = clock::now();
    const std::size_t budget = std::min(options.total_steps, next_eval) - result.steps;
    const std::size_t used = agent.advance(env, budget, rng);
    if (used == 0) throw InputError("training: agent made no progress");
    result.steps += used;
    result.train_seconds += std::chrono::duration<double>(clock::now() - a0).count();
    if (result.steps >= next_eval || result.steps >= options.total_steps) {
      record();
      while (next_eval <= result.steps) next_eval += options.eval_every;
    }
  }
  return result;
}

const std::vector<double>& critic_features(const Transition& s, CriticInput mode, bool next) {
  if (mode == CriticInput::privileged) return next ? s.next_privileged_state : s.privileged_state;
  return next ? s.next_obs : s.obs;
}

}  // namespace s2pg::algorithms
