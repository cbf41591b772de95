// SPDX-License-Identifier: Apache-2.0
#include "s2pg/envs/envs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

namespace s2pg::envs {

namespace {

double clip(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

double norm2(double x, double y) { return std::sqrt(x * x + y * y); }

template <class P>
void read(const nlohmann::json& j, const char* key, P& field) {
  if (j.contains(key)) field = j.at(key).get<P>();
}

void only_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> known) {
  if (j.is_null()) return;
  if (!j.is_object()) throw InputError(where + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw InputError(where + "." + key + ": unknown field");
}

}  // namespace

// ---- config ------------------------------------------------------------------

EnvConfig EnvConfig::from_json(const nlohmann::json& j) {
  only_keys(j, "env", {"name", "horizon", "dt", "seed", "params"});
  EnvConfig c;
  if (!j.contains("name")) throw InputError("env.name is required");
  c.name = j.at("name").get<std::string>();
  c.horizon = j.value("horizon", std::size_t{0});
  c.dt = j.value("dt", 0.0);
  c.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("params")) c.params = j.at("params");
  if (c.dt < 0.0) throw InputError("env.dt must be > 0");
  return c;
}

nlohmann::json EnvConfig::to_json() const {
  return {{"name", name}, {"horizon", horizon}, {"dt", dt}, {"seed", seed}, {"params", params}};
}

// ---- Env ---------------------------------------------------------------------

Env::Env(std::size_t horizon, double dt) : horizon_(horizon), dt_(dt) {
  if (horizon == 0) throw InputError("env horizon must be >= 1");
  if (!(dt > 0.0)) throw InputError("env dt must be > 0");
}

EnvStep Env::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  t_ = 0;
  done_ = false;
  return do_reset(rng_);
}

EnvStep Env::step(const std::vector<double>& action) {
  if (done_) throw UsageError(name() + ": step() after the episode ended; call reset()");
  if (action.size() != action_dim()) {
    throw DimensionError(name() + ": action has " + std::to_string(action.size()) + " entries, expected " +
                         std::to_string(action_dim()));
  }
  std::vector<double> a(action);
  const double b = action_bound();
  for (auto& v : a) {
    if (!std::isfinite(v)) throw NumericError(name() + ": non-finite action");
    v = clip(v, -b, b);
  }
  EnvStep out = do_step(a);
  ++t_;
  out.last = out.absorbing || t_ >= horizon_;
  done_ = out.last;
  return out;
}

// ---- PointMassMemory ---------------------------------------------------------

PointMassMemory::PointMassMemory(std::size_t horizon, double dt, Params p) : Env(horizon, dt), params_(p) {}

EnvStep PointMassMemory::do_reset(Rng& rng) {
  const double w = params_.start_half_width;
  start_[0] = pos_[0] = rng.uniform(-w, w);
  start_[1] = pos_[1] = rng.uniform(-w, w);
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double speed = rng.uniform(params_.initial_speed_min, params_.initial_speed_max);
  vel_[0] = clip(speed * std::cos(angle), -1.0, 1.0);
  vel_[1] = clip(speed * std::sin(angle), -1.0, 1.0);
  const double g = params_.goal_half_width;
  do {
    goal_[0] = rng.uniform(-g, g);
    goal_[1] = rng.uniform(-g, g);
  } while (norm2(goal_[0] - start_[0], goal_[1] - start_[1]) < params_.min_goal_distance);
  return emit(0.0, false, false);
}

void PointMassMemory::set_state(std::vector<double> pos, std::vector<double> vel, std::vector<double> goal) {
  if (pos.size() != 2 || vel.size() != 2 || goal.size() != 2) throw DimensionError("set_state expects 2-vectors");
  for (int i = 0; i < 2; ++i) {
    start_[i] = pos_[i] = pos[i];
    vel_[i] = vel[i];
    goal_[i] = goal[i];
  }
}

EnvStep PointMassMemory::do_step(const std::vector<double>& a) {
  for (int i = 0; i < 2; ++i) {
    vel_[i] = clip(params_.damping * vel_[i] + a[i] * dt_, -1.0, 1.0);
    pos_[i] = clip(pos_[i] + vel_[i] * dt_, -1.0, 1.0);
  }
  const double dist = norm2(pos_[0] - goal_[0], pos_[1] - goal_[1]);
  if (dist < params_.goal_radius) return emit(params_.goal_reward, true, true);
  return emit(-dist, false, false);
}

EnvStep PointMassMemory::emit(double reward, bool absorbing, bool success) const {
  const bool visible = norm2(pos_[0] - start_[0], pos_[1] - start_[1]) < params_.blind_radius;
  EnvStep s;
  s.obs = {pos_[0], pos_[1], vel_[0], vel_[1], visible ? goal_[0] : 0.0, visible ? goal_[1] : 0.0};
  s.privileged_state = {pos_[0], pos_[1], vel_[0], vel_[1], goal_[0], goal_[1], start_[0], start_[1]};
  s.reward = reward;
  s.absorbing = absorbing;
  s.success = success;
  return s;
}

// ---- PointMassDoor -----------------------------------------------------------

PointMassDoor::PointMassDoor(std::size_t horizon, double dt, Params p) : Env(horizon, dt), params_(p) {}

EnvStep PointMassDoor::do_reset(Rng& rng) {
  const double w = params_.start_half_width;
  start_[0] = pos_[0] = rng.uniform(-w, w);
  start_[1] = pos_[1] = params_.start_y + rng.uniform(-w / 2, w / 2);
  vel_[0] = vel_[1] = 0.0;
  const double lim = 1.0 - params_.door_width / 2;
  do {
    doors_[0] = rng.uniform(-lim, lim);
    doors_[1] = rng.uniform(-lim, lim);
  } while (std::abs(doors_[0] - doors_[1]) < params_.door_width);
  if (doors_[0] > doors_[1]) std::swap(doors_[0], doors_[1]);
  return emit(0.0, false, false);
}

void PointMassDoor::set_state(std::vector<double> pos, std::vector<double> vel, std::vector<double> doors) {
  if (pos.size() != 2 || vel.size() != 2 || doors.size() != 2) throw DimensionError("set_state expects 2-vectors");
  for (int i = 0; i < 2; ++i) {
    start_[i] = pos_[i] = pos[i];
    vel_[i] = vel[i];
    doors_[i] = doors[i];
  }
}

bool PointMassDoor::in_door(double x) const {
  const double h = params_.door_width / 2;
  return std::abs(x - doors_[0]) <= h || std::abs(x - doors_[1]) <= h;
}

EnvStep PointMassDoor::do_step(const std::vector<double>& a) {
  const double x0 = pos_[0], y0 = pos_[1];
  for (int i = 0; i < 2; ++i) {
    vel_[i] = clip(params_.damping * vel_[i] + a[i] * dt_, -1.0, 1.0);
    pos_[i] = clip(pos_[i] + vel_[i] * dt_, -1.0, 1.0);
  }
  const double y1 = pos_[1];
  if ((y0 < 0.0) != (y1 < 0.0) || y1 == 0.0) {
    const double frac = y1 == y0 ? 0.0 : (0.0 - y0) / (y1 - y0);
    const double x_cross = x0 + frac * (pos_[0] - x0);
    if (!in_door(x_cross)) return emit(-params_.wall_penalty, true, false);
  }
  const double dist = norm2(pos_[0] - params_.goal_x, pos_[1] - params_.goal_y);
  if (dist < params_.goal_radius) return emit(params_.goal_reward, true, true);
  return emit(-dist, false, false);
}

EnvStep PointMassDoor::emit(double reward, bool absorbing, bool success) const {
  const bool visible = norm2(pos_[0] - start_[0], pos_[1] - start_[1]) < params_.blind_radius;
  EnvStep s;
  s.obs = {pos_[0], pos_[1], vel_[0], vel_[1], visible ? doors_[0] : 0.0, visible ? doors_[1] : 0.0};
  s.privileged_state = {pos_[0], pos_[1], vel_[0], vel_[1], doors_[0], doors_[1]};
  s.reward = reward;
  s.absorbing = absorbing;
  s.success = success;
  return s;
}

// ---- MaskedPendulum ----------------------------------------------------------

MaskedPendulum::MaskedPendulum(std::size_t horizon, double dt, Params p) : Env(horizon, dt), params_(p) {}

double MaskedPendulum::reward_bound() const {
  return std::numbers::pi * std::numbers::pi + 0.1 * params_.max_speed * params_.max_speed +
         0.001 * params_.max_torque * params_.max_torque;
}

EnvStep MaskedPendulum::do_reset(Rng& rng) {
  angle_ = rng.uniform(-std::numbers::pi, std::numbers::pi);
  velocity_ = rng.uniform(-1.0, 1.0);
  return emit(0.0);
}

void MaskedPendulum::set_state(double angle, double velocity) {
  angle_ = angle;
  velocity_ = velocity;
}

EnvStep MaskedPendulum::do_step(const std::vector<double>& a) {
  const double u = a[0];
  const double wrapped = std::remainder(angle_, 2.0 * std::numbers::pi);
  const double reward = -(wrapped * wrapped + 0.1 * velocity_ * velocity_ + 0.001 * u * u);
  const double m = params_.mass, l = params_.length, g = params_.gravity;
  velocity_ += (3.0 * g / (2.0 * l) * std::sin(angle_) + 3.0 / (m * l * l) * u) * dt_;
  velocity_ = clip(velocity_, -params_.max_speed, params_.max_speed);
  angle_ += velocity_ * dt_;
  return emit(reward);
}

EnvStep MaskedPendulum::emit(double reward) const {
  EnvStep s;
  s.privileged_state = {std::cos(angle_), std::sin(angle_), velocity_};
  s.obs = {std::cos(angle_), std::sin(angle_), params_.mask_velocity ? 0.0 : velocity_};
  s.reward = reward;
  return s;
}

// ---- ChainDiagnostic ---------------------------------------------------------

ChainDiagnostic::ChainDiagnostic(std::size_t horizon, Params p) : Env(horizon, 1.0), params_(p) {}

double ChainDiagnostic::reward_bound() const {
  return params_.reward_clip > 0.0 ? params_.reward_clip : std::numeric_limits<double>::infinity();
}

EnvStep ChainDiagnostic::do_reset(Rng& rng) {
  s_ = params_.initial_std * rng.normal();
  return emit(0.0);
}

void ChainDiagnostic::set_state(double s) { s_ = s; }

EnvStep ChainDiagnostic::do_step(const std::vector<double>& a) {
  s_ += a[0];
  double r = s_ * s_;
  if (params_.reward_clip > 0.0) r = std::min(r, params_.reward_clip);
  return emit(-r);
}

EnvStep ChainDiagnostic::emit(double reward) const {
  EnvStep s;
  s.privileged_state = {s_};
  s.obs = {params_.obs_clip > 0.0 ? clip(s_, -params_.obs_clip, params_.obs_clip) : s_};
  s.reward = reward;
  return s;
}

// ---- factory -----------------------------------------------------------------

std::unique_ptr<Env> make_env(const EnvConfig& c) {
  const auto& j = c.params;
  auto horizon = [&](std::size_t d) { return c.horizon ? c.horizon : d; };
  auto dt = [&](double d) { return c.dt > 0.0 ? c.dt : d; };
  if (c.name == "point_mass_memory") {
    PointMassMemory::Params p;
    only_keys(j, "env.params", {"blind_radius", "goal_radius", "damping", "goal_reward", "start_half_width",
                                "goal_half_width", "min_goal_distance", "initial_speed_min", "initial_speed_max"});
    read(j, "blind_radius", p.blind_radius);
    read(j, "goal_radius", p.goal_radius);
    read(j, "damping", p.damping);
    read(j, "goal_reward", p.goal_reward);
    read(j, "start_half_width", p.start_half_width);
    read(j, "goal_half_width", p.goal_half_width);
    read(j, "min_goal_distance", p.min_goal_distance);
    read(j, "initial_speed_min", p.initial_speed_min);
    read(j, "initial_speed_max", p.initial_speed_max);
    if (p.initial_speed_min > p.initial_speed_max) throw InputError("env.params.initial_speed_min > initial_speed_max");
    return std::make_unique<PointMassMemory>(horizon(200), dt(0.05), p);
  }
  if (c.name == "point_mass_door") {
    PointMassDoor::Params p;
    only_keys(j, "env.params", {"blind_radius", "goal_radius", "damping", "goal_reward", "wall_penalty", "door_width"});
    read(j, "blind_radius", p.blind_radius);
    read(j, "goal_radius", p.goal_radius);
    read(j, "damping", p.damping);
    read(j, "goal_reward", p.goal_reward);
    read(j, "wall_penalty", p.wall_penalty);
    read(j, "door_width", p.door_width);
    return std::make_unique<PointMassDoor>(horizon(300), dt(0.05), p);
  }
  if (c.name == "masked_pendulum") {
    MaskedPendulum::Params p;
    only_keys(j, "env.params", {"mask_velocity", "gravity", "max_torque"});
    read(j, "mask_velocity", p.mask_velocity);
    read(j, "gravity", p.gravity);
    read(j, "max_torque", p.max_torque);
    return std::make_unique<MaskedPendulum>(horizon(200), dt(0.05), p);
  }
  if (c.name == "chain_diagnostic") {
    ChainDiagnostic::Params p;
    only_keys(j, "env.params", {"initial_std", "obs_clip", "reward_clip"});
    read(j, "initial_std", p.initial_std);
    read(j, "obs_clip", p.obs_clip);
    read(j, "reward_clip", p.reward_clip);
    return std::make_unique<ChainDiagnostic>(horizon(2), p);
  }
  throw InputError("env.name: unknown env '" + c.name +
                   "' (expected point_mass_memory, point_mass_door, masked_pendulum, chain_diagnostic)");
}

// ---- CSV ---------------------------------------------------------------------

void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryRow>& rows) {
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os.precision(17);
  if (rows.empty()) {
    os << "t,r,absorbing\n";
    return;
  }
  const auto& f = rows.front();
  os << "t";
  for (std::size_t i = 0; i < f.state.size(); ++i) os << ",s" << i;
  for (std::size_t i = 0; i < f.obs.size(); ++i) os << ",o" << i;
  for (std::size_t i = 0; i < f.z.size(); ++i) os << ",z" << i;
  for (std::size_t i = 0; i < f.action.size(); ++i) os << ",a" << i;
  os << ",r,absorbing\n";
  for (const auto& r : rows) {
    os << r.t;
    for (double v : r.state) os << ',' << v;
    for (double v : r.obs) os << ',' << v;
    for (double v : r.z) os << ',' << v;
    for (double v : r.action) os << ',' << v;
    os << ',' << r.reward << ',' << (r.absorbing ? 1 : 0) << '\n';
  }
}

}  // namespace s2pg::envs
