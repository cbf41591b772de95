// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale partially observable tasks. Every env emits a masked observation
// alongside the full (privileged) state.
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2pg/common/random.hpp"
#include "s2pg/diffcore/errors.hpp"

namespace s2pg::envs {

struct EnvStep {
  std::vector<double> obs;
  std::vector<double> privileged_state;
  double reward = 0.0;
  bool absorbing = false;
  bool last = false;     // horizon reached or absorbing
  bool success = false;  // goal reached on this step
};

struct EnvConfig {
  std::string name;
  std::size_t horizon = 0;  // 0 keeps the env default
  double dt = 0.0;          // 0 keeps the env default
  std::uint64_t seed = 0;
  nlohmann::json params = nlohmann::json::object();

  static EnvConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

class Env {
 public:
  virtual ~Env() = default;

  virtual std::string name() const = 0;
  virtual std::size_t obs_dim() const = 0;
  virtual std::size_t state_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual double action_bound() const { return 1.0; }  // actions live in [-b, b]^d
  virtual double reward_bound() const = 0;
  std::size_t horizon() const { return horizon_; }
  double dt() const { return dt_; }

  /// Starts an episode from the seeded initial-state distribution.
  EnvStep reset(std::uint64_t seed);
  /// Advances one step; actions are clipped to the declared bounds.
  EnvStep step(const std::vector<double>& action);

  std::size_t t() const { return t_; }
  bool done() const { return done_; }

 protected:
  Env(std::size_t horizon, double dt);
  virtual EnvStep do_reset(Rng& rng) = 0;
  virtual EnvStep do_step(const std::vector<double>& action) = 0;

  std::size_t horizon_;
  double dt_;

 private:
  Rng rng_;
  std::size_t t_ = 0;
  bool done_ = true;
};

struct PointMassMemoryParams {
  double blind_radius = 0.25;
  double goal_radius = 0.05;
  double damping = 0.95;
  double goal_reward = 10.0;
  double start_half_width = 0.2;
  double goal_half_width = 0.8;
  double min_goal_distance = 0.35;
  double initial_speed_min = 0.5;
  double initial_speed_max = 1.0;
};

/// Point mass with a goal that is only visible near the start position.
class PointMassMemory : public Env {
 public:
  using Params = PointMassMemoryParams;
  PointMassMemory(std::size_t horizon = 200, double dt = 0.05, Params p = {});

  std::string name() const override { return "point_mass_memory"; }
  std::size_t obs_dim() const override { return 6; }
  std::size_t state_dim() const override { return 8; }
  std::size_t action_dim() const override { return 2; }
  double reward_bound() const override { return params_.goal_reward; }

  /// Overrides the sampled initial state (tests, diagnostics).
  void set_state(std::vector<double> pos, std::vector<double> vel, std::vector<double> goal);

 protected:
  EnvStep do_reset(Rng& rng) override;
  EnvStep do_step(const std::vector<double>& action) override;

 private:
  EnvStep emit(double reward, bool absorbing, bool success) const;
  Params params_;
  double pos_[2]{}, vel_[2]{}, goal_[2]{}, start_[2]{};
};

struct PointMassDoorParams {
  double blind_radius = 0.25;
  double goal_radius = 0.05;
  double damping = 0.95;
  double goal_reward = 10.0;
  double wall_penalty = 10.0;
  double door_width = 0.2;
  double goal_x = 0.0;
  double goal_y = 0.8;
  double start_y = -0.6;
  double start_half_width = 0.2;
};

/// Point mass below a wall with two hidden door gaps; the goal sits above the wall.
class PointMassDoor : public Env {
 public:
  using Params = PointMassDoorParams;
  PointMassDoor(std::size_t horizon = 300, double dt = 0.05, Params p = {});

  std::string name() const override { return "point_mass_door"; }
  std::size_t obs_dim() const override { return 6; }
  std::size_t state_dim() const override { return 6; }
  std::size_t action_dim() const override { return 2; }
  double reward_bound() const override { return std::max(params_.goal_reward, params_.wall_penalty); }

  void set_state(std::vector<double> pos, std::vector<double> vel, std::vector<double> doors);

 protected:
  EnvStep do_reset(Rng& rng) override;
  EnvStep do_step(const std::vector<double>& action) override;

 private:
  bool in_door(double x) const;
  EnvStep emit(double reward, bool absorbing, bool success) const;
  Params params_;
  double pos_[2]{}, vel_[2]{}, doors_[2]{}, start_[2]{};
};

struct MaskedPendulumParams {
  double mass = 1.0;
  double length = 1.0;
  double gravity = 9.81;
  double max_torque = 2.0;
  double max_speed = 8.0;
  bool mask_velocity = true;
};

/// Torque-limited swing-up with the angular velocity hidden from the observation.
class MaskedPendulum : public Env {
 public:
  using Params = MaskedPendulumParams;
  MaskedPendulum(std::size_t horizon = 200, double dt = 0.05, Params p = {});

  std::string name() const override { return "masked_pendulum"; }
  std::size_t obs_dim() const override { return 3; }
  std::size_t state_dim() const override { return 3; }
  std::size_t action_dim() const override { return 1; }
  double action_bound() const override { return params_.max_torque; }
  double reward_bound() const override;

  void set_state(double angle, double velocity);

 protected:
  EnvStep do_reset(Rng& rng) override;
  EnvStep do_step(const std::vector<double>& action) override;

 private:
  EnvStep emit(double reward) const;
  Params params_;
  double angle_ = 0.0, velocity_ = 0.0;
};

struct ChainDiagnosticParams {
  double initial_std = 1.0;
  double obs_clip = 0.0;     // 0 disables
  double reward_clip = 0.0;  // 0 disables; otherwise r = -min(s'^2, reward_clip)
  double action_bound = 1e6;
};

/// Scalar chain s' = s + a, r = -s'^2, s_0 ~ N(0, initial_std^2).
/// Optional observation clipping and reward clipping bound the problem for the
/// variance experiments.
class ChainDiagnostic : public Env {
 public:
  using Params = ChainDiagnosticParams;
  explicit ChainDiagnostic(std::size_t horizon = 2, Params p = {});

  std::string name() const override { return "chain_diagnostic"; }
  std::size_t obs_dim() const override { return 1; }
  std::size_t state_dim() const override { return 1; }
  std::size_t action_dim() const override { return 1; }
  double action_bound() const override { return params_.action_bound; }
  double reward_bound() const override;
  const Params& params() const { return params_; }

  void set_state(double s);

 protected:
  EnvStep do_reset(Rng& rng) override;
  EnvStep do_step(const std::vector<double>& action) override;

 private:
  EnvStep emit(double reward) const;
  Params params_;
  double s_ = 0.0;
};

std::unique_ptr<Env> make_env(const EnvConfig& config);

/// One CSV row per step: t, s..., o..., z..., a..., r, absorbing.
struct TrajectoryRow {
  std::size_t t = 0;
  std::vector<double> state, obs, z, action;
  double reward = 0.0;
  bool absorbing = false;
};
void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryRow>& rows);

}  // namespace s2pg::envs
