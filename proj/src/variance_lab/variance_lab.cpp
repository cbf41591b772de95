// SPDX-License-Identifier: Apache-2.0
#include "s2pg/variance_lab/variance_lab.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "s2pg/algorithms/rollout.hpp"
#include "s2pg/common/svg.hpp"
#include "s2pg/envs/envs.hpp"

namespace s2pg::variance {

namespace {

bool nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

double prefactor(const BoundInputs& in, double cov) {
  const double g = in.gamma;
  const double horizon = (1.0 - std::pow(g, static_cast<double>(in.T))) / (1.0 - g);
  return in.R * in.R * cov * horizon * horizon / static_cast<double>(in.N);
}

}  // namespace

void BoundInputs::validate() const {
  for (double x : {R, F, H, K, Z, sigma_inv_fro, upsilon_inv_fro, sigma_inv_trace, upsilon_inv_trace, F_d, H_d})
    if (!nonneg(x)) throw InputError("BoundInputs: constants must be finite and nonnegative");
  if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("BoundInputs: gamma must lie in (0, 1)");
  if (T < 1) throw InputError("BoundInputs: T must be at least 1");
  if (N < 1) throw InputError("BoundInputs: N must be at least 1");
}

double z_tilde(double Z, std::size_t T) {
  if (Z < 0.0) throw InputError("z_tilde: Z must be nonnegative");
  if (T < 1) throw InputError("z_tilde: T must be at least 1");
  const double t = static_cast<double>(T);
  if (std::abs(Z - 1.0) < 1e-9) return t * (t - 1.0) / 2.0;
  return t / (1.0 - Z) + (std::pow(Z, t) - 1.0) / ((1.0 - Z) * (1.0 - Z));
}

double z_bar(double Z, std::size_t T) {
  if (Z < 0.0) throw InputError("z_bar: Z must be nonnegative");
  if (T < 1) throw InputError("z_bar: T must be at least 1");
  const double t = static_cast<double>(T);
  if (T == 1) return 0.0;
  if (std::abs(Z - 1.0) < 1e-9) return (t - 1.0) * t * (2.0 * t - 1.0) / 6.0;
  // sum_t ((1 - Z^t) / (1 - Z))^2
  const double d = 1.0 - Z;
  const double geo1 = (1.0 - std::pow(Z, t)) / d;
  const double geo2 = (1.0 - std::pow(Z, 2.0 * t)) / (1.0 - Z * Z);
  return (t - 2.0 * geo1 + geo2) / (d * d);
}

double bound_bptt(const BoundInputs& in) {
  in.validate();
  const double t = static_cast<double>(in.T);
  const double inner = t * in.F * in.F + 2.0 * in.F * in.H * in.K * z_tilde(in.Z, in.T) +
                       in.H * in.H * in.K * in.K * z_bar(in.Z, in.T);
  return prefactor(in, in.sigma_inv_fro) * inner;
}

double bound_s2pg(const BoundInputs& in) {
  in.validate();
  const double t = static_cast<double>(in.T);
  if (in.sigma_inv_fro == 0.0) return 0.0;
  return prefactor(in, in.sigma_inv_fro) *
         (t * in.F * in.F + t * in.H * in.H * in.upsilon_inv_fro / in.sigma_inv_fro);
}

double bound_s2pg_diag(const BoundInputs& in) {
  in.validate();
  const double t = static_cast<double>(in.T);
  if (in.sigma_inv_trace == 0.0) return 0.0;
  return prefactor(in, in.sigma_inv_trace) * t *
         (in.F_d * in.F_d + in.H_d * in.H_d * in.upsilon_inv_trace / in.sigma_inv_trace);
}

void set_diagonal_covariances(BoundInputs& in, const std::vector<double>& action_log_std,
                              const std::vector<double>& state_log_std) {
  auto fill = [](const std::vector<double>& ls, double& fro, double& trace) {
    double sq = 0.0;
    trace = 0.0;
    for (double l : ls) {
      const double inv_var = std::exp(-2.0 * l);
      trace += inv_var;
      sq += inv_var * inv_var;
    }
    fro = std::sqrt(sq);
  };
  fill(action_log_std, in.sigma_inv_fro, in.sigma_inv_trace);
  fill(state_log_std, in.upsilon_inv_fro, in.upsilon_inv_trace);
}

double empirical_variance(const std::vector<estimators::GradientSample>& samples) {
  if (samples.size() < 2) throw InputError("empirical_variance: need at least 2 samples");
  const std::size_t d = samples.front().values.size();
  std::vector<double> mean(d, 0.0);
  for (const auto& s : samples) {
    if (s.values.size() != d) throw DimensionError("empirical_variance: samples differ in length");
    for (std::size_t i = 0; i < d; ++i) mean[i] += s.values[i];
  }
  for (auto& m : mean) m /= static_cast<double>(samples.size());
  double total = 0.0;
  for (const auto& s : samples)
    for (std::size_t i = 0; i < d; ++i) total += (s.values[i] - mean[i]) * (s.values[i] - mean[i]);
  return total / static_cast<double>(samples.size() - 1);
}

RegimeConfig RegimeConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"z_targets", "horizons", "samples", "N", "seeds", "gamma", "obs_clip",
                                           "reward_clip", "wo", "b", "u", "c", "k", "action_std", "state_std"};
  if (!j.is_object()) throw InputError("variance: expected an object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw InputError("variance." + key + ": unknown field");
  RegimeConfig c;
  const auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("z_targets", c.z_targets);
  get("horizons", c.horizons);
  get("samples", c.samples);
  get("N", c.N);
  get("seeds", c.seeds);
  get("gamma", c.gamma);
  get("obs_clip", c.obs_clip);
  get("reward_clip", c.reward_clip);
  get("wo", c.wo);
  get("b", c.b);
  get("u", c.u);
  get("c", c.c);
  get("k", c.k);
  get("action_std", c.action_std);
  get("state_std", c.state_std);
  if (c.samples < 2) throw InputError("variance.samples must be at least 2");
  if (c.N < 1) throw InputError("variance.N must be at least 1");
  if (c.seeds.empty()) throw InputError("variance.seeds must not be empty");
  if (c.reward_clip <= 0.0) throw InputError("variance.reward_clip must be positive (bounded rewards)");
  return c;
}

nlohmann::json RegimeConfig::to_json() const {
  return {{"z_targets", z_targets}, {"horizons", horizons}, {"samples", samples}, {"N", N},
          {"seeds", seeds},         {"gamma", gamma},       {"obs_clip", obs_clip},
          {"reward_clip", reward_clip}, {"wo", wo}, {"b", b}, {"u", u}, {"c", c}, {"k", k},
          {"action_std", action_std}, {"state_std", state_std}};
}

namespace {

policies::Architecture regime_architecture(const RegimeConfig& c, double gain) {
  policies::Architecture a;
  a.obs_dim = a.action_dim = a.state_dim = 1;
  a.head = policies::HeadKind::linear;
  a.head_state_weight_trainable = false;
  a.head_state_weight = c.k;
  a.cell = policies::CellKind::linear;
  a.state_gain = gain;
  a.state_gain_trainable = false;
  return a;
}

void write_regime_theta(ad::ParameterStore& store, const RegimeConfig& c) {
  const std::pair<const char*, double> values[] = {{"f.Wo", c.wo}, {"f.b", c.b}, {"eta.U", c.u}, {"eta.c", c.c}};
  for (const auto& [name, v] : values)
    if (store.contains(name)) store.values(store.index(name))[0] = v;
}

// Keeps only the trainable coordinates.
std::vector<double> project(const ad::ParameterStore& store, const std::vector<double>& g) {
  std::vector<double> out;
  for (std::size_t i = 0; i < store.count(); ++i) {
    if (!store.trainable(i)) continue;
    const auto n = store.values(i).size();
    out.insert(out.end(), g.begin() + static_cast<long>(store.offset(i)),
               g.begin() + static_cast<long>(store.offset(i) + n));
  }
  return out;
}

template <class Policy, class Estimate>
VarianceReport run_cell(const RegimeConfig& c, const Policy& policy, envs::ChainDiagnostic& env, Rng& rng,
                        Estimate estimate) {
  std::vector<estimators::GradientSample> grads;
  std::vector<policies::StateSample> visited;
  grads.reserve(c.samples);
  for (std::size_t m = 0; m < c.samples; ++m) {
    auto trs = algorithms::rollout_episodes(env, policy, 1, algorithms::RolloutMode::stochastic, rng, c.gamma);
    for (const auto& s : trs.front().steps) visited.push_back({s.obs, s.z});
    auto g = estimate(trs);
    g.values = project(policy.parameters(), g.values);
    grads.push_back(std::move(g));
  }
  VarianceReport r;
  r.N = c.N;
  r.empirical_variance = empirical_variance(grads) / static_cast<double>(c.N);
  r.constants = policies::estimate_constants(policy.networks(), policy.parameters(), visited);
  return r;
}

}  // namespace

std::vector<VarianceReport> regime_experiment(const RegimeConfig& c) {
  std::vector<VarianceReport> rows;
  envs::ChainDiagnostic::Params ep;
  ep.obs_clip = c.obs_clip;
  ep.reward_clip = c.reward_clip;
  for (std::uint64_t seed : c.seeds) {
    Rng master(seed);
    for (double zt : c.z_targets) {
      for (std::size_t T : c.horizons) {
        envs::ChainDiagnostic env(T, ep);
        const auto arch = regime_architecture(c, zt);
        policies::GaussianPolicyOptions opt;
        opt.action_log_std = std::log(c.action_std);
        opt.state_log_std = std::log(c.state_std);
        opt.learn_action_std = opt.learn_state_std = false;
        policies::StatefulGaussianPolicy s2pg(arch, seed, opt);
        write_regime_theta(s2pg.parameters(), c);
        policies::RecurrentDeterministicPolicy bptt(arch, seed, opt.action_log_std, false);
        write_regime_theta(bptt.parameters(), c);

        BoundInputs in;
        in.R = env.reward_bound();
        in.T = T;
        in.gamma = c.gamma;
        in.N = c.N;
        set_diagonal_covariances(in, {opt.action_log_std}, {opt.state_log_std});

        auto finish = [&](VarianceReport r, const std::string& name) {
          r.estimator = name;
          r.T = T;
          r.Z_target = zt;
          r.seed = seed;
          in.F = r.constants.F;
          in.H = r.constants.H;
          in.K = r.constants.K;
          in.Z = r.constants.Z;
          in.F_d = r.constants.F_d;
          in.H_d = r.constants.H_d;
          r.bound_bptt = bound_bptt(in);
          r.bound_s2pg = bound_s2pg(in);
          r.bound_s2pg_diag = bound_s2pg_diag(in);
          r.bound = name == "bptt" ? r.bound_bptt : r.bound_s2pg;
          r.ratio = r.empirical_variance > 0.0 ? r.bound / r.empirical_variance : INFINITY;
          rows.push_back(r);
        };

        Rng rng_s = master.split();
        finish(run_cell(c, s2pg, env, rng_s,
                        [&](const std::vector<estimators::ExtendedTrajectory>& tr) {
                          return estimators::reinforce_s2pg(tr, s2pg);
                        }),
               "s2pg");
        Rng rng_b = master.split();
        finish(run_cell(c, bptt, env, rng_b,
                        [&](const std::vector<estimators::ExtendedTrajectory>& tr) {
                          return estimators::reinforce_bptt(tr, bptt, 0);
                        }),
               "bptt");
      }
    }
  }
  return rows;
}

double growth_factor(const std::vector<VarianceReport>& rows, const std::string& estimator, double z_target,
                     std::size_t from_T, std::size_t to_T) {
  const VarianceReport *a = nullptr, *b = nullptr;
  for (const auto& r : rows) {
    if (r.estimator != estimator || std::abs(r.Z_target - z_target) > 1e-12) continue;
    if (r.T == from_T && !a) a = &r;
    if (r.T == to_T && !b) b = &r;
  }
  if (!a || !b) throw InputError("growth_factor: missing cell for " + estimator);
  return b->empirical_variance / a->empirical_variance;
}

void write_variance_csv(const std::filesystem::path& path, const std::vector<VarianceReport>& rows) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os.precision(10);
  os << "estimator,T,Z_target,N,empirical_var,bound,ratio,F,H,K,Z,seed\n";
  for (const auto& r : rows) {
    os << r.estimator << ',' << r.T << ',' << r.Z_target << ',' << r.N << ',' << r.empirical_variance << ','
       << r.bound << ',' << r.ratio << ',' << r.constants.F << ',' << r.constants.H << ',' << r.constants.K << ','
       << r.constants.Z << ',' << r.seed << '\n';
  }
}

void write_variance_svg(const std::filesystem::path& path, const std::vector<VarianceReport>& rows) {
  std::map<std::string, plot::Series> series;
  for (const auto& r : rows) {
    if (r.seed != rows.front().seed) continue;
    std::ostringstream key;
    key << r.estimator << " Z=" << r.Z_target;
    auto& s = series[key.str()];
    s.name = key.str();
    s.x.push_back(static_cast<double>(r.T));
    s.y.push_back(r.empirical_variance);
  }
  std::vector<plot::Series> out;
  for (auto& [_, s] : series) out.push_back(std::move(s));
  plot::PlotSpec spec;
  spec.title = "Gradient trace variance vs horizon";
  spec.x_label = "T";
  spec.y_label = "empirical variance";
  spec.log_y = true;
  spec.note = "single-trajectory REINFORCE gradients on the clipped chain";
  plot::write_line_plot(path, spec, out);
}

}  // namespace s2pg::variance
