// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "s2pg/algorithms/offpolicy.hpp"
#include "s2pg/algorithms/ppo.hpp"
#include "s2pg/common/svg.hpp"
#include "s2pg/harness/harness.hpp"

namespace s2pg::harness {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace s2pg::algorithms;

std::vector<double> normalize_returns(const std::vector<double>& curve, double high, double low) {
  if (!std::isfinite(high) || !std::isfinite(low) || !(high > low))
    throw InputError("normalize_returns: reference_high must exceed reference_low");
  std::vector<double> out(curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i) out[i] = std::clamp((curve[i] - low) / (high - low), -0.1, 1.1);
  return out;
}

std::vector<AggregatePoint> aggregate_curves(const std::vector<SeedRun>& runs) {
  std::vector<AggregatePoint> out;
  if (runs.empty()) return out;
  std::size_t points = runs.front().curve.size();
  for (const auto& r : runs) points = std::min(points, r.curve.size());
  const double n = static_cast<double>(runs.size());
  for (std::size_t k = 0; k < points; ++k) {
    AggregatePoint p;
    p.step = runs.front().curve[k].step;
    double s = 0.0, s2 = 0.0, succ = 0.0;
    for (const auto& r : runs) {
      if (r.curve[k].step != p.step) throw InputError("aggregate_curves: seeds evaluated at different steps");
      s += r.curve[k].mean_return;
      succ += r.curve[k].success_rate;
    }
    p.mean_return = s / n;
    p.mean_success = succ / n;
    if (runs.size() >= 2) {
      for (const auto& r : runs) s2 += (r.curve[k].mean_return - p.mean_return) * (r.curve[k].mean_return - p.mean_return);
      const double sd = std::sqrt(s2 / (n - 1.0));
      const boost::math::students_t t(n - 1.0);
      const double half = boost::math::quantile(boost::math::complement(t, 0.025)) * sd / std::sqrt(n);
      p.ci_low = p.mean_return - half;
      p.ci_high = p.mean_return + half;
    }
    out.push_back(p);
  }
  return out;
}

std::unique_ptr<Agent> make_agent(const ExperimentConfig& config, const envs::Env& env, std::uint64_t seed) {
  auto arch = config.policy.architecture;
  if (arch.obs_dim == 0) arch.obs_dim = env.obs_dim();
  if (arch.action_dim == 0) arch.action_dim = env.action_dim();
  if (arch.obs_dim != env.obs_dim() || arch.action_dim != env.action_dim())
    throw DimensionError("config.policy.architecture: obs/action dims do not match env " + env.name());
  const std::string& algo = config.algorithm;
  if (algo == "ppo" || algo == "sac" || algo == "td3") arch.state_dim = 0;
  AlgoConfig ac = config.algo;
  ac.seed = seed;
  const std::size_t critic_dim = ac.critic_input == CriticInput::privileged ? env.state_dim() : env.obs_dim();

  policies::GaussianPolicyOptions po;
  po.action_log_std = std::log(config.policy.action_std);
  po.state_log_std = std::log(config.policy.state_std);
  po.learn_action_std = config.policy.learn_action_std;
  po.learn_state_std = config.policy.learn_state_std;
  if (algo == "ppo_rs" || algo == "ppo")
    return std::make_unique<PpoAgent>(policies::StatefulGaussianPolicy(arch, seed, po), critic_dim, ac);
  if (algo == "ppo_bptt")
    return std::make_unique<PpoBpttAgent>(
        policies::RecurrentDeterministicPolicy(arch, seed, po.action_log_std, po.learn_action_std), critic_dim, ac);
  if (algo == "sac_rs" || algo == "sac")
    return std::make_unique<SacRsAgent>(policies::StatefulGaussianPolicy(arch, seed, po), critic_dim, ac);
  const double ab = env.action_bound(), sb = config.policy.state_bound;
  return std::make_unique<Td3RsAgent>(policies::DeterministicStatefulPolicy(arch, seed, {-ab, ab}, {-sb, sb}),
                                      critic_dim, ac);
}

namespace {

std::vector<MetricsRow> read_metrics(const fs::path& path) {
  std::vector<MetricsRow> rows;
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) v.push_back(cell.empty() || cell == "nan" ? NAN : std::stod(cell));
    if (v.size() == 5) v.push_back(NAN);  // empty trailing probe
    if (v.size() < 6) continue;
    rows.push_back({static_cast<std::size_t>(v[0]), v[1], v[2], v[3], v[4], v[5]});
  }
  return rows;
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

}  // namespace

SeedRun train_seed(const ExperimentConfig& config, std::uint64_t seed, const fs::path& metrics_csv, bool verbose) {
  SeedRun run;
  run.seed = seed;
  auto env_cfg = config.env;
  env_cfg.seed = seed;
  auto env = envs::make_env(env_cfg);
  auto eval_env = envs::make_env(env_cfg);
  auto agent = make_agent(config, *env, seed);
  TrainingOptions opt;
  opt.total_steps = config.algo.total_steps;
  opt.eval_every = config.eval.every;
  opt.eval_episodes = config.eval.episodes;
  opt.eval_seed = config.eval.seed;
  opt.record_wallclock = config.eval.record_wallclock;
  opt.metrics_csv = metrics_csv;
  opt.verbose = verbose;
  Rng rng(seed);
  try {
    const auto res = train(*agent, *env, *eval_env, opt, rng);
    run.curve = res.curve;
    run.train_seconds = res.train_seconds;
    run.eval_seconds = res.eval_seconds;
  } catch (const NumericError& e) {
    run.ok = false;
    run.error = e.what();
    run.curve = read_metrics(metrics_csv);
  }
  auto ckpt = metrics_csv;
  ckpt.replace_filename("checkpoint_seed" + std::to_string(seed) + ".ckpt");
  ad::save_checkpoint(ckpt, agent->policy_parameters());
  return run;
}

double random_policy_return(envs::Env& env, std::size_t episodes, std::uint64_t seed) {
  Rng rng(seed);
  const double b = env.action_bound();
  const Actor uniform = [b, &env](const std::vector<double>&, const std::vector<double>&, RolloutMode, Rng& r) {
    ActorOutput out;
    out.action.resize(env.action_dim());
    for (auto& a : out.action) a = r.uniform(-b, b);
    return out;
  };
  double total = 0.0;
  const auto trs = rollout_episodes(env, uniform, 0, episodes, RolloutMode::stochastic, rng, 1.0);
  for (const auto& tr : trs)
    for (const auto& s : tr.steps) total += s.reward;
  return total / static_cast<double>(episodes);
}

namespace {

void write_aggregate_csv(const fs::path& path, const std::vector<AggregatePoint>& agg) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os.precision(10);
  os << "step,mean_return,ci95_low,ci95_high,mean_success,normalized_return\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (const auto& p : agg)
    os << p.step << ',' << p.mean_return << ',' << opt(p.ci_low) << ',' << opt(p.ci_high) << ',' << p.mean_success
       << ',' << opt(p.normalized) << '\n';
}

void plot_training(const fs::path& dir, const ExperimentConfig& cfg, RunSummary& s, const std::string& norm_note) {
  std::vector<plot::Series> ret, succ;
  plot::Series mean{"mean over seeds", {}, {}, {}, {}};
  plot::Series ms{"mean over seeds", {}, {}, {}, {}};
  for (const auto& p : s.aggregate) {
    mean.x.push_back(static_cast<double>(p.step));
    mean.y.push_back(p.mean_return);
    if (p.ci_low) {
      mean.lo.push_back(*p.ci_low);
      mean.hi.push_back(*p.ci_high);
    }
    ms.x.push_back(static_cast<double>(p.step));
    ms.y.push_back(p.mean_success);
  }
  ret.push_back(mean);
  succ.push_back(ms);
  for (const auto& r : s.seeds) {
    plot::Series sr{"seed " + std::to_string(r.seed), {}, {}, {}, {}};
    for (const auto& row : r.curve) {
      sr.x.push_back(static_cast<double>(row.step));
      sr.y.push_back(row.mean_return);
    }
    ret.push_back(sr);
  }
  const std::string who = cfg.algorithm + " on " + cfg.env.name;
  const auto f1 = dir / "learning_curve.svg";
  plot::write_line_plot(f1, {who + ": evaluation return", "environment steps", "mean return", false,
                             "band: 95% Student-t interval over seeds"},
                        ret);
  s.files.push_back(f1);
  const auto f2 = dir / "success_rate.svg";
  plot::write_line_plot(f2, {who + ": success rate", "environment steps", "success rate", false, ""}, succ);
  s.files.push_back(f2);
  if (!s.aggregate.empty() && s.aggregate.front().normalized) {
    plot::Series nr{"normalized return", {}, {}, {}, {}};
    for (const auto& p : s.aggregate) {
      nr.x.push_back(static_cast<double>(p.step));
      nr.y.push_back(*p.normalized);
      if (p.ci_low) {
        const auto lo = normalize_returns({*p.ci_low, *p.ci_high}, *s.reference_high, *s.reference_low);
        nr.lo.push_back(lo[0]);
        nr.hi.push_back(lo[1]);
      }
    }
    const auto f3 = dir / "normalized_return.svg";
    plot::write_line_plot(f3, {who + ": normalized return", "environment steps", "normalized return", false, norm_note},
                          {nr});
    s.files.push_back(f3);
  }
}

void run_training(const ExperimentConfig& cfg, RunSummary& s, bool verbose) {
  const auto& dir = cfg.output_dir;
  s.seeds.resize(cfg.seeds.size());
  std::vector<fs::path> curves(cfg.seeds.size());
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
    curves[i] = dir / ("curve_seed" + std::to_string(cfg.seeds[i]) + ".csv");

  // Seeds share nothing; `workers` of them run at once.
  for (std::size_t begin = 0; begin < cfg.seeds.size(); begin += cfg.workers) {
    const std::size_t end = std::min(cfg.seeds.size(), begin + cfg.workers);
    std::vector<std::future<SeedRun>> jobs;
    for (std::size_t i = begin; i < end; ++i)
      jobs.push_back(std::async(cfg.workers > 1 ? std::launch::async : std::launch::deferred,
                                [&, i] { return train_seed(cfg, cfg.seeds[i], curves[i], verbose); }));
    for (std::size_t i = begin; i < end; ++i) s.seeds[i] = jobs[i - begin].get();
  }
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    s.files.push_back(curves[i]);
    auto ckpt = curves[i];
    s.files.push_back(ckpt.replace_filename("checkpoint_seed" + std::to_string(cfg.seeds[i]) + ".ckpt"));
    s.wallclock["train"] += s.seeds[i].train_seconds;
    s.wallclock["eval"] += s.seeds[i].eval_seconds;
    if (!s.seeds[i].ok) {
      s.ok = false;
      s.message += "seed " + std::to_string(cfg.seeds[i]) + ": " + s.seeds[i].error + "; ";
    }
  }

  s.aggregate = aggregate_curves(s.seeds);
  std::string note;
  {
    auto env = envs::make_env(cfg.env);
    s.reference_low = cfg.reference_low ? *cfg.reference_low : random_policy_return(*env, 10, cfg.eval.seed);
    s.reference_high = cfg.reference_high ? *cfg.reference_high
                                          : (s.aggregate.empty() ? NAN : s.aggregate.back().mean_return);
    note = "normalizer: high = " + fmt(*s.reference_high) +
           (cfg.reference_high ? " (configured)" : " (final mean return of this run)") + ", low = " +
           fmt(*s.reference_low) + (cfg.reference_low ? " (configured)" : " (uniform random actions, 10 episodes)");
  }
  if (std::isfinite(*s.reference_high) && *s.reference_high > *s.reference_low) {
    std::vector<double> m;
    for (const auto& p : s.aggregate) m.push_back(p.mean_return);
    const auto n = normalize_returns(m, *s.reference_high, *s.reference_low);
    for (std::size_t k = 0; k < n.size(); ++k) s.aggregate[k].normalized = n[k];
  } else {
    note += " (degenerate: normalization skipped)";
  }
  const auto agg = dir / "aggregate.csv";
  write_aggregate_csv(agg, s.aggregate);
  s.files.push_back(agg);
  plot_training(dir, cfg, s, note);
  s.message += note;
}

void run_variance(const ExperimentConfig& cfg, RunSummary& s) {
  const auto rows = variance::regime_experiment(cfg.variance);
  const auto csv = cfg.output_dir / "variance.csv", svg = cfg.output_dir / "variance.svg";
  variance::write_variance_csv(csv, rows);
  variance::write_variance_svg(svg, rows);
  s.files.push_back(csv);
  s.files.push_back(svg);
  bool valid = true;
  for (const auto& r : rows) valid = valid && r.bound >= r.empirical_variance;
  std::cout << "estimator T Z_target empirical_var bound ratio\n";
  for (const auto& r : rows)
    std::cout << r.estimator << ' ' << r.T << ' ' << r.Z_target << ' ' << r.empirical_variance << ' ' << r.bound << ' '
              << r.ratio << '\n';
  if (cfg.variance.horizons.size() >= 2) {
    const auto h = cfg.variance.horizons;
    for (double z : cfg.variance.z_targets)
      for (const char* est : {"s2pg", "bptt"})
        std::cout << "growth " << est << " Z=" << z << " T " << h[h.size() - 2] << "->" << h.back() << ": "
                  << variance::growth_factor(rows, est, z, h[h.size() - 2], h.back()) << '\n';
  }
  s.message = valid ? "bound >= empirical variance in every cell" : "bound violated in at least one cell";
}

void run_gradcheck(const ExperimentConfig& cfg, RunSummary& s) {
  const auto cases = gradcheck_suite(cfg.seeds.front());
  const auto csv = cfg.output_dir / "gradcheck.csv";
  std::ofstream os(csv);
  os.precision(6);
  os << "case,max_relative_error\n";
  double worst = 0.0;
  for (const auto& c : cases) {
    os << c.name << ',' << c.max_relative_error << '\n';
    std::cout << c.name << ' ' << c.max_relative_error << '\n';
    worst = std::max(worst, c.max_relative_error);
  }
  os.close();
  s.files.push_back(csv);
  s.ok = worst < 1e-4;
  s.message = "max relative error " + fmt(worst) + (s.ok ? " < 1e-4" : " >= 1e-4");
  std::cout << s.message << '\n';
}

void run_oracle(const ExperimentConfig& cfg, RunSummary& s) {
  const auto rows = oracle_report(cfg, cfg.seeds.front());
  const auto csv = cfg.output_dir / "oracle.csv";
  std::ofstream os(csv);
  os.precision(8);
  os << "coordinate,estimate,estimate_se,oracle,oracle_se,z\n";
  std::cout << "coordinate estimate (se) oracle (se) z\n";
  double worst = 0.0;
  for (const auto& r : rows) {
    os << r.name << ',' << r.estimate << ',' << r.estimate_se << ',' << r.oracle << ',' << r.oracle_se << ',' << r.z << '\n';
    std::cout << r.name << ' ' << r.estimate << " (" << r.estimate_se << ") " << r.oracle << " (" << r.oracle_se << ") "
              << r.z << '\n';
    worst = std::max(worst, r.z);
  }
  os.close();
  s.files.push_back(csv);
  s.message = "max z-score " + fmt(worst);
  std::cout << s.message << '\n';
}

}  // namespace

RunSummary run(const ExperimentConfig& config, bool verbose) {
  using clock = std::chrono::steady_clock;
  config.validate();
  const auto t0 = clock::now();
  fs::create_directories(config.output_dir);
  RunSummary s;
  const auto cfg_path = config.output_dir / "config.json";
  {
    std::ofstream os(cfg_path);
    if (!os) throw InputError("config.output_dir: cannot write to " + config.output_dir.string());
    os << config.to_json().dump(2) << '\n';
  }
  s.files.push_back(cfg_path);

  switch (config.kind) {
    case ExperimentKind::train: run_training(config, s, verbose); break;
    case ExperimentKind::variance: run_variance(config, s); break;
    case ExperimentKind::gradcheck: run_gradcheck(config, s); break;
    case ExperimentKind::oracle: run_oracle(config, s); break;
  }
  s.wallclock["total"] = std::chrono::duration<double>(clock::now() - t0).count();

  json files = json::array();
  for (const auto& f : s.files) {
    if (!fs::exists(f) || fs::file_size(f) == 0) {
      s.ok = false;
      s.message += "; missing or empty artifact " + f.string();
    }
    files.push_back({{"path", fs::relative(f, config.output_dir).string()},
                     {"bytes", fs::exists(f) ? fs::file_size(f) : 0}});
  }
  json manifest = {{"kind", to_string(config.kind)}, {"ok", s.ok},           {"message", s.message},
                   {"files", files},                 {"wallclock_s", s.wallclock}, {"seeds", config.seeds}};
  if (s.reference_high) manifest["normalizer"] = {{"high", *s.reference_high}, {"low", *s.reference_low}};
  std::ofstream(config.output_dir / "manifest.json") << manifest.dump(2) << '\n';
  return s;
}

}  // namespace s2pg::harness
