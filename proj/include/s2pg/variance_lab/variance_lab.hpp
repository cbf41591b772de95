// SPDX-License-Identifier: Apache-2.0
//
// Analytic variance upper bounds for the BPTT and S2PG score-function
// estimators, trace-variance measurement, and the growth-regime sweep.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2pg/estimators/estimators.hpp"
#include "s2pg/policies/policies.hpp"

namespace s2pg::variance {

struct BoundInputs {
  double R = 1.0;        // |r| <= R
  std::size_t T = 1;
  double gamma = 0.99;
  std::size_t N = 1;
  double F = 0.0, H = 0.0, K = 0.0, Z = 0.0;
  double sigma_inv_fro = 1.0;    // ||Sigma^-1||_F
  double upsilon_inv_fro = 1.0;  // ||Upsilon^-1||_F
  double sigma_inv_trace = 1.0;
  double upsilon_inv_trace = 1.0;
  double F_d = 0.0, H_d = 0.0;

  void validate() const;
};

/// sum_{t<T} sum_{i<t} Z^(t-i-1)
double z_tilde(double Z, std::size_t T);
/// sum_{t<T} (sum_{i<t} Z^(t-i-1))^2
double z_bar(double Z, std::size_t T);

double bound_bptt(const BoundInputs& in);
double bound_s2pg(const BoundInputs& in);
/// Tighter form for diagonal covariances, using per-row constants.
double bound_s2pg_diag(const BoundInputs& in);

/// Fills the covariance terms for diagonal Gaussians with the given log-stds.
void set_diagonal_covariances(BoundInputs& in, const std::vector<double>& action_log_std,
                              const std::vector<double>& state_log_std);

/// Trace of the unbiased sample covariance.
double empirical_variance(const std::vector<estimators::GradientSample>& samples);

struct VarianceReport {
  std::string estimator;  // "s2pg" or "bptt"
  std::size_t T = 0;
  double Z_target = 0.0;
  std::size_t N = 1;
  double empirical_variance = 0.0;
  double bound_bptt = 0.0;
  double bound_s2pg = 0.0;
  double bound_s2pg_diag = 0.0;
  double bound = 0.0;  // the one matching `estimator`
  double ratio = 0.0;  // bound / empirical
  policies::JacobianConstants constants;
  std::uint64_t seed = 0;
};

/// Linear chain family: a ~ N(wo*o + k*z + b, sa^2), z' = g*z + u*o + c (+ sz*xi).
/// g is the controllable state gain and, with k, stays frozen.
struct RegimeConfig {
  std::vector<double> z_targets{0.5, 1.5};
  std::vector<std::size_t> horizons{5, 10, 20};
  std::size_t samples = 2000;
  std::size_t N = 1;
  std::vector<std::uint64_t> seeds{0};
  double gamma = 0.8;
  double obs_clip = 1.0;
  double reward_clip = 1.0;
  double wo = -1.0, b = 0.0, u = 0.5, c = 0.0, k = 0.5;
  double action_std = 0.5, state_std = 0.5;

  static RegimeConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// One row per (Z_target, T, seed, estimator).
std::vector<VarianceReport> regime_experiment(const RegimeConfig& config);

/// Ratio of empirical variances between horizons for one estimator and Z_target (first seed).
double growth_factor(const std::vector<VarianceReport>& rows, const std::string& estimator, double z_target,
                     std::size_t from_T, std::size_t to_T);

void write_variance_csv(const std::filesystem::path& path, const std::vector<VarianceReport>& rows);
void write_variance_svg(const std::filesystem::path& path, const std::vector<VarianceReport>& rows);

}  // namespace s2pg::variance
