// SPDX-License-Identifier: Apache-2.0
//
// Policy representations over an internal state z:
//  - StatefulGaussianPolicy: (a, z') ~ N(f(o,z), Sigma) x N(eta(o,z), Upsilon)
//  - RecurrentDeterministicPolicy: a ~ N(f(o,z), Sigma), z' = eta(o,z)
//  - DeterministicStatefulPolicy: (a, z') = (clip f(o,z), clip eta(o,z))
// A state dimension of zero gives the stateless baseline.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "s2pg/common/random.hpp"
#include "s2pg/policies/networks.hpp"

namespace s2pg::policies {

inline const double kDefaultActionLogStd = std::log(0.5);
inline const double kDefaultStateLogStd = std::log(0.3);

/// Internal state carried across steps; starts at zero.
struct PolicyState {
  std::vector<double> z;
  static PolicyState initial(std::size_t state_dim) { return {std::vector<double>(state_dim, 0.0)}; }
};

struct StatefulSample {
  std::vector<double> action;
  std::vector<double> next_state;
  double log_prob = 0.0;
};

/// Differentiable outputs of the two Gaussian heads for a batch.
struct GaussianHeads {
  Tensor action_mean;     // [B x d_a]
  Tensor state_mean;      // [B x d_z]
  Tensor action_log_std;  // [d_a]
  Tensor state_log_std;   // [d_z]
};

struct GaussianPolicyOptions {
  double action_log_std = kDefaultActionLogStd;
  double state_log_std = kDefaultStateLogStd;
  bool learn_action_std = true;
  bool learn_state_std = true;
};

class StatefulGaussianPolicy {
 public:
  StatefulGaussianPolicy() = default;
  StatefulGaussianPolicy(const Architecture& arch, std::uint64_t seed,
                         GaussianPolicyOptions options = {});

  std::size_t obs_dim() const { return nets_.architecture().obs_dim; }
  std::size_t action_dim() const { return nets_.architecture().action_dim; }
  std::size_t state_dim() const { return nets_.architecture().state_dim; }
  const Architecture& architecture() const { return nets_.architecture(); }
  const MeanNetworks& networks() const { return nets_; }

  const ParameterStore& parameters() const { return params_; }
  ParameterStore& parameters() { return params_; }
  std::size_t action_log_std_index() const { return log_std_a_; }
  std::size_t state_log_std_index() const { return log_std_z_; }

  GaussianHeads heads(const ParameterView& p, const Tensor& obs, const Tensor& z) const;
  /// log N(a; mu_a, Sigma) per row.
  Tensor action_log_prob(const ParameterView& p, const Tensor& obs, const Tensor& z,
                         const Tensor& action) const;
  /// log N(z'; mu_z, Upsilon) per row.
  Tensor state_log_prob(const ParameterView& p, const Tensor& obs, const Tensor& z,
                        const Tensor& next_state) const;
  /// Joint log-density per row; the sum of the two marginals.
  Tensor log_prob(const ParameterView& p, const Tensor& obs, const Tensor& z, const Tensor& action,
                  const Tensor& next_state) const;

 private:
  MeanNetworks nets_;
  ParameterStore params_;
  std::size_t log_std_a_ = 0;
  std::size_t log_std_z_ = 0;
};

/// Draws (a, z') and returns the joint log-density of the draw.
StatefulSample sample(const StatefulGaussianPolicy& policy, std::span<const double> obs,
                      std::span<const double> z, Rng& rng);
/// Means only.
StatefulSample mean_action(const StatefulGaussianPolicy& policy, std::span<const double> obs,
                           std::span<const double> z);
/// Scalar joint log-density of a single tuple under view `p`.
Tensor log_prob(const StatefulGaussianPolicy& policy, const ParameterView& p,
                std::span<const double> obs, std::span<const double> z,
                std::span<const double> action, std::span<const double> next_state);

class RecurrentDeterministicPolicy {
 public:
  RecurrentDeterministicPolicy() = default;
  RecurrentDeterministicPolicy(const Architecture& arch, std::uint64_t seed,
                               double action_log_std = kDefaultActionLogStd,
                               bool learn_action_std = true);
  /// Shares the mean networks and parameters of a stateful Gaussian policy,
  /// dropping the internal-state noise.
  static RecurrentDeterministicPolicy from_stateful(const StatefulGaussianPolicy& policy);

  std::size_t obs_dim() const { return nets_.architecture().obs_dim; }
  std::size_t action_dim() const { return nets_.architecture().action_dim; }
  std::size_t state_dim() const { return nets_.architecture().state_dim; }
  const Architecture& architecture() const { return nets_.architecture(); }
  const MeanNetworks& networks() const { return nets_; }

  const ParameterStore& parameters() const { return params_; }
  ParameterStore& parameters() { return params_; }
  std::size_t action_log_std_index() const { return log_std_a_; }

  Tensor action_log_prob(const ParameterView& p, const Tensor& obs, const Tensor& z,
                         const Tensor& action) const;
  /// z' = eta(o, z), exactly.
  std::vector<double> next_state(std::span<const double> obs, std::span<const double> z) const;

 private:
  MeanNetworks nets_;
  ParameterStore params_;
  std::size_t log_std_a_ = 0;
};

struct RecurrentSample {
  std::vector<double> action;
  std::vector<double> next_state;
  double log_prob = 0.0;
};

RecurrentSample sample(const RecurrentDeterministicPolicy& policy, std::span<const double> obs,
                       std::span<const double> z, Rng& rng);

/// Per-step log nu(a_t | h_t) for one episode with z_0 = 0.
/// `truncation` is the history window in steps: 1 treats z_t as a constant
/// input, k lets gradients cross k-1 state transitions, 0 means the full history.
Tensor unroll_bptt(const RecurrentDeterministicPolicy& policy, const ParameterView& p,
                   const Tensor& observations, const Tensor& actions, std::size_t truncation);

struct Bounds {
  double lo = -1.0;
  double hi = 1.0;
};

class DeterministicStatefulPolicy {
 public:
  DeterministicStatefulPolicy() = default;
  DeterministicStatefulPolicy(const Architecture& arch, std::uint64_t seed, Bounds action_bounds,
                              Bounds state_bounds = {});

  std::size_t obs_dim() const { return nets_.architecture().obs_dim; }
  std::size_t action_dim() const { return nets_.architecture().action_dim; }
  std::size_t state_dim() const { return nets_.architecture().state_dim; }
  const Architecture& architecture() const { return nets_.architecture(); }
  const MeanNetworks& networks() const { return nets_; }
  Bounds action_bounds() const { return action_bounds_; }
  Bounds state_bounds() const { return state_bounds_; }

  const ParameterStore& parameters() const { return params_; }
  ParameterStore& parameters() { return params_; }

  /// Unclipped means, differentiable.
  Tensor action_mean(const ParameterView& p, const Tensor& obs, const Tensor& z) const;
  Tensor state_mean(const ParameterView& p, const Tensor& obs, const Tensor& z) const;

 private:
  MeanNetworks nets_;
  ParameterStore params_;
  Bounds action_bounds_;
  Bounds state_bounds_;
};

struct DeterministicAction {
  Tensor action;      // clipped, [B x d_a]
  Tensor next_state;  // clipped, [B x d_z]
};

/// (clip(mu_a), clip(mu_z)) for a batch; gradients pass where the means lie inside the bounds.
DeterministicAction act_deterministic(const DeterministicStatefulPolicy& policy,
                                      const ParameterView& p, const Tensor& obs, const Tensor& z);

/// Uniform Jacobian-norm constants of the mean functions over a sample set.
struct JacobianConstants {
  double F = 0.0;    // max ||d f / d theta||_F
  double H = 0.0;    // max ||d eta / d theta||_F
  double K = 0.0;    // max ||d f / d z||_F
  double Z = 0.0;    // max ||d eta / d z||_F
  double F_d = 0.0;  // max row norm of d f / d theta
  double H_d = 0.0;  // max row norm of d eta / d theta
};

struct StateSample {
  std::vector<double> obs;
  std::vector<double> z;
};

/// Empirical maxima over `samples`. Only trainable parameters count towards theta.
JacobianConstants estimate_constants(const MeanNetworks& nets, const ParameterStore& params,
                                     const std::vector<StateSample>& samples);

}  // namespace s2pg::policies
