// SPDX-License-Identifier: Apache-2.0
#include "s2pg/estimators/estimators.hpp"

#include <cmath>
#include <fstream>

namespace s2pg::estimators {

using namespace s2pg::ad;

bool ExtendedTrajectory::success() const {
  for (const auto& s : steps)
    if (s.success) return true;
  return false;
}

BaselineMode baseline_from_string(const std::string& name) {
  if (name == "none") return BaselineMode::none;
  if (name == "reward_to_go") return BaselineMode::reward_to_go;
  if (name == "mean_return") return BaselineMode::mean_return;
  throw InputError("unknown baseline_mode '" + name + "' (expected none, reward_to_go, mean_return)");
}

std::string to_string(BaselineMode mode) {
  switch (mode) {
    case BaselineMode::none: return "none";
    case BaselineMode::reward_to_go: return "reward_to_go";
    case BaselineMode::mean_return: return "mean_return";
  }
  return "none";
}

double discounted_return(const ExtendedTrajectory& trajectory) {
  if (trajectory.empty()) throw InputError("discounted_return: empty trajectory");
  double total = 0.0, discount = 1.0;
  for (const auto& s : trajectory.steps) {
    total += discount * s.reward;
    if (s.absorbing) break;
    discount *= trajectory.gamma;
  }
  return total;
}

namespace {

// Steps up to and including the first absorbing one.
std::size_t effective_length(const ExtendedTrajectory& tr) {
  for (std::size_t t = 0; t < tr.size(); ++t)
    if (tr.steps[t].absorbing) return t + 1;
  return tr.size();
}

}  // namespace

std::vector<std::vector<double>> score_weights(const std::vector<ExtendedTrajectory>& trajectories,
                                               const EstimatorOptions& options) {
  const std::size_t n = trajectories.size();
  std::vector<double> returns(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += returns[i] = discounted_return(trajectories[i]);

  std::vector<std::vector<double>> weights(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& tr = trajectories[i];
    const std::size_t T = effective_length(tr);
    auto& w = weights[i];
    w.assign(T, 0.0);
    switch (options.baseline) {
      case BaselineMode::none:
        std::fill(w.begin(), w.end(), returns[i]);
        break;
      case BaselineMode::mean_return: {
        // Leave-one-out mean keeps the baseline independent of the trajectory it weights.
        const double b = n > 1 ? (total - returns[i]) / static_cast<double>(n - 1) : 0.0;
        std::fill(w.begin(), w.end(), returns[i] - b);
        break;
      }
      case BaselineMode::reward_to_go: {
        double acc = 0.0;
        for (std::size_t t = T; t-- > 0;) {
          acc += std::pow(tr.gamma, static_cast<double>(t)) * tr.steps[t].reward;
          w[t] = acc;
        }
        break;
      }
    }
    if (options.discount_scores) {
      double d = 1.0;
      for (auto& x : w) {
        x *= d;
        d *= tr.gamma;
      }
    }
  }
  return weights;
}

namespace {

void check_dims(const Transition& s, std::size_t d_o, std::size_t d_a, std::size_t d_z, bool needs_next) {
  if (s.obs.size() != d_o || s.action.size() != d_a || s.z.size() != d_z ||
      (needs_next && s.next_state.size() != d_z)) {
    throw DimensionError("trajectory step does not match the policy dimensions (obs " + std::to_string(d_o) +
                         ", action " + std::to_string(d_a) + ", state " + std::to_string(d_z) + ")");
  }
}

}  // namespace

GradientSample reinforce_s2pg(const std::vector<ExtendedTrajectory>& trajectories,
                              const StatefulGaussianPolicy& policy, const EstimatorOptions& options) {
  if (trajectories.empty()) throw InputError("reinforce_s2pg: no trajectories");
  const std::size_t d_o = policy.obs_dim(), d_a = policy.action_dim(), d_z = policy.state_dim();
  const auto weights = score_weights(trajectories, options);

  std::vector<double> O, Z, A, Z2, W;
  std::size_t rows = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& tr = trajectories[i];
    for (std::size_t t = 0; t < weights[i].size(); ++t) {
      const auto& s = tr.steps[t];
      check_dims(s, d_o, d_a, d_z, true);
      O.insert(O.end(), s.obs.begin(), s.obs.end());
      Z.insert(Z.end(), s.z.begin(), s.z.end());
      A.insert(A.end(), s.action.begin(), s.action.end());
      Z2.insert(Z2.end(), s.next_state.begin(), s.next_state.end());
      W.push_back(weights[i][t]);
      ++rows;
    }
  }

  Tape tape;
  const auto view = policy.parameters().bind(tape);
  const Tensor logp = policy.log_prob(view, Tensor::matrix(rows, d_o, std::move(O)), Tensor::matrix(rows, d_z, std::move(Z)),
                                      Tensor::matrix(rows, d_a, std::move(A)), Tensor::matrix(rows, d_z, std::move(Z2)));
  const Tensor loss = scale(sum(mul(logp, Tensor::vector(std::move(W)))), 1.0 / static_cast<double>(trajectories.size()));
  return {gradient(loss, view), trajectories.size()};
}

GradientSample reinforce_bptt(const std::vector<ExtendedTrajectory>& trajectories,
                              const RecurrentDeterministicPolicy& policy, std::size_t truncation,
                              const EstimatorOptions& options) {
  if (trajectories.empty()) throw InputError("reinforce_bptt: no trajectories");
  const std::size_t d_o = policy.obs_dim(), d_a = policy.action_dim(), d_z = policy.state_dim();
  const auto weights = score_weights(trajectories, options);

  Tape tape;
  const auto view = policy.parameters().bind(tape);
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& tr = trajectories[i];
    const std::size_t T = weights[i].size();
    std::vector<double> O, A;
    for (std::size_t t = 0; t < T; ++t) {
      check_dims(tr.steps[t], d_o, d_a, d_z, false);
      O.insert(O.end(), tr.steps[t].obs.begin(), tr.steps[t].obs.end());
      A.insert(A.end(), tr.steps[t].action.begin(), tr.steps[t].action.end());
    }
    const Tensor logp = policies::unroll_bptt(policy, view, Tensor::matrix(T, d_o, std::move(O)),
                                              Tensor::matrix(T, d_a, std::move(A)), truncation);
    total = add(total, sum(mul(logp, Tensor::vector(weights[i]))));
  }
  const Tensor loss = scale(total, 1.0 / static_cast<double>(trajectories.size()));
  return {gradient(loss, view), trajectories.size()};
}

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<double>& next_values, const std::vector<bool>& absorbing,
                      const std::vector<bool>& last, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || next_values.size() != n || absorbing.size() != n || last.size() != n) {
    throw DimensionError("compute_gae: all per-step inputs must have the same length");
  }
  if (lambda < 0.0 || lambda > 1.0) throw InputError("compute_gae: lambda must lie in [0, 1]");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.targets.assign(n, 0.0);
  for (std::size_t k = n; k-- > 0;) {
    double a;
    if (last[k] && absorbing[k]) {
      a = rewards[k] - values[k];
    } else if (last[k]) {
      a = rewards[k] + gamma * next_values[k] - values[k];
    } else {
      a = rewards[k] + gamma * next_values[k] - values[k] + gamma * lambda * out.advantages[k + 1];
    }
    out.advantages[k] = a;
    out.targets[k] = a + values[k];
  }
  return out;
}

std::vector<GaeResult> compute_gae(const std::vector<ExtendedTrajectory>& trajectories, const ValueFn& value,
                                   double gamma, double lambda, bool privileged_input) {
  std::vector<GaeResult> out;
  out.reserve(trajectories.size());
  for (const auto& tr : trajectories) {
    const std::size_t n = tr.size();
    std::vector<double> r(n), v(n), vn(n);
    std::vector<bool> ab(n), la(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& s = tr.steps[k];
      r[k] = s.reward;
      v[k] = value(privileged_input ? s.privileged_state : s.obs, s.z);
      vn[k] = s.absorbing ? 0.0 : value(privileged_input ? s.next_privileged_state : s.next_obs, s.next_state);
      ab[k] = s.absorbing;
      la[k] = s.last || k + 1 == n;
    }
    out.push_back(compute_gae(r, v, vn, ab, la, gamma, lambda));
  }
  return out;
}

void write_gradient_csv(const std::filesystem::path& path, const std::vector<GradientSample>& samples) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os.precision(17);
  const std::size_t dim = samples.empty() ? 0 : samples.front().values.size();
  os << "batch_size";
  for (std::size_t i = 0; i < dim; ++i) os << ",g" << i;
  os << '\n';
  for (const auto& s : samples) {
    os << s.batch_size;
    for (double v : s.values) os << ',' << v;
    os << '\n';
  }
}

}  // namespace s2pg::estimators
