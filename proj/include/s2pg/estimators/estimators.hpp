// SPDX-License-Identifier: Apache-2.0
//
// Score-function (REINFORCE) gradient estimators over extended trajectories and
// the advantage recursion used by PPO.
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "s2pg/policies/policies.hpp"

namespace s2pg::estimators {

using policies::RecurrentDeterministicPolicy;
using policies::StatefulGaussianPolicy;

/// One step of an extended trajectory: (s, o, z, a, z', r) plus episode flags.
struct Transition {
  std::vector<double> obs;
  std::vector<double> privileged_state;
  std::vector<double> z;
  std::vector<double> action;
  std::vector<double> next_state;  // z'
  double reward = 0.0;
  bool absorbing = false;
  bool last = false;
  bool success = false;
  std::vector<double> next_obs;
  std::vector<double> next_privileged_state;
  double log_prob = 0.0;  // behaviour log-density of (a, z')
};

struct ExtendedTrajectory {
  std::vector<Transition> steps;
  double gamma = 0.99;

  std::size_t size() const { return steps.size(); }
  bool empty() const { return steps.empty(); }
  bool success() const;
};

/// Flat gradient over a policy's ParameterStore.
struct GradientSample {
  std::vector<double> values;
  std::size_t batch_size = 0;
};

enum class BaselineMode { none, reward_to_go, mean_return };
BaselineMode baseline_from_string(const std::string& name);
std::string to_string(BaselineMode mode);

struct EstimatorOptions {
  BaselineMode baseline = BaselineMode::none;
  /// Multiplies the score at step t by gamma^t. Off by default: the literal
  /// estimator weights undiscounted score sums by the discounted return.
  bool discount_scores = false;
};

/// sum_t gamma^t r_t, stopping after an absorbing step.
double discounted_return(const ExtendedTrajectory& trajectory);

/// Per-step weights multiplying the score terms of each trajectory.
std::vector<std::vector<double>> score_weights(const std::vector<ExtendedTrajectory>& trajectories,
                                               const EstimatorOptions& options);

/// (1/N) sum_tau sum_t grad log pi(a_t, z_{t+1} | o_t, z_t) * J_hat.
GradientSample reinforce_s2pg(const std::vector<ExtendedTrajectory>& trajectories,
                              const StatefulGaussianPolicy& policy, const EstimatorOptions& options = {});

/// (1/N) sum_tau sum_t grad log nu(a_t | h_t) * J_hat, gradients crossing at most
/// `truncation` steps of history (0 = full).
GradientSample reinforce_bptt(const std::vector<ExtendedTrajectory>& trajectories,
                              const RecurrentDeterministicPolicy& policy, std::size_t truncation,
                              const EstimatorOptions& options = {});

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> targets;  // A + v
};

/// Reverse recursion over one episode given v_k = V(s_k, z_k) and v_next_k = V(s'_k, z'_k).
GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<double>& next_values, const std::vector<bool>& absorbing,
                      const std::vector<bool>& last, double gamma, double lambda);

/// V(input, z) where input is the observation or the privileged state.
using ValueFn = std::function<double(const std::vector<double>& input, const std::vector<double>& z)>;

std::vector<GaeResult> compute_gae(const std::vector<ExtendedTrajectory>& trajectories, const ValueFn& value,
                                   double gamma, double lambda, bool privileged_input);

/// One row per sample: batch_size, g0, g1, ...
void write_gradient_csv(const std::filesystem::path& path, const std::vector<GradientSample>& samples);

}  // namespace s2pg::estimators
