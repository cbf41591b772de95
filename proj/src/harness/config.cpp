// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <set>
#include <sstream>

#include "s2pg/harness/harness.hpp"

namespace s2pg::harness {

using nlohmann::json;

ExperimentKind kind_from_string(const std::string& name) {
  if (name == "train") return ExperimentKind::train;
  if (name == "variance") return ExperimentKind::variance;
  if (name == "gradcheck") return ExperimentKind::gradcheck;
  if (name == "oracle") return ExperimentKind::oracle;
  throw InputError("config.kind: unknown experiment kind '" + name + "' (expected train, variance, gradcheck, oracle)");
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::train: return "train";
    case ExperimentKind::variance: return "variance";
    case ExperimentKind::gradcheck: return "gradcheck";
    case ExperimentKind::oracle: return "oracle";
  }
  return "train";
}

namespace {

void reject_unknown(const json& j, const std::string& where, const std::set<std::string>& known) {
  if (!j.is_object()) throw InputError(where + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw InputError(where + "." + key + ": unknown field");
}

// Runs `fn`, prefixing library JSON errors with the field path.
template <class Fn>
auto at_path(const std::string& path, Fn fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  } catch (const InputError& e) {
    // sub-parsers report "algo.x: ..."; re-root those under the full path
    const std::string msg = e.what(), leaf = path.substr(path.rfind('.') + 1);
    if (msg.rfind(leaf, 0) == 0) throw InputError(path.substr(0, path.size() - leaf.size()) + msg);
    throw InputError(path + ": " + msg);
  }
}

template <class T>
void read(const json& j, const std::string& where, const char* key, T& out) {
  if (j.contains(key)) out = at_path(where + "." + key, [&] { return j.at(key).get<T>(); });
}

}  // namespace

PolicyConfig PolicyConfig::from_json(const json& j) {
  reject_unknown(j, "config.policy",
                 {"architecture", "action_std", "state_std", "learn_action_std", "learn_state_std", "state_bound"});
  PolicyConfig p;
  if (j.contains("architecture"))
    p.architecture = at_path("config.policy.architecture", [&] { return policies::Architecture::from_json(j.at("architecture")); });
  read(j, "config.policy", "action_std", p.action_std);
  read(j, "config.policy", "state_std", p.state_std);
  read(j, "config.policy", "learn_action_std", p.learn_action_std);
  read(j, "config.policy", "learn_state_std", p.learn_state_std);
  read(j, "config.policy", "state_bound", p.state_bound);
  if (!(p.action_std > 0.0) || !(p.state_std > 0.0)) throw InputError("config.policy: standard deviations must be > 0");
  if (!(p.state_bound > 0.0)) throw InputError("config.policy.state_bound: must be > 0");
  return p;
}

json PolicyConfig::to_json() const {
  return {{"architecture", architecture.to_json()}, {"action_std", action_std}, {"state_std", state_std},
          {"learn_action_std", learn_action_std}, {"learn_state_std", learn_state_std}, {"state_bound", state_bound}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  reject_unknown(j, "config", {"kind", "env", "algorithm", "algo", "policy", "seeds", "eval", "output_dir", "workers",
                               "reference_high", "reference_low", "variance", "oracle"});
  ExperimentConfig c;
  if (j.contains("kind")) c.kind = kind_from_string(at_path("config.kind", [&] { return j.at("kind").get<std::string>(); }));
  if (j.contains("env")) c.env = at_path("config.env", [&] { return envs::EnvConfig::from_json(j.at("env")); });
  read(j, "config", "algorithm", c.algorithm);
  if (j.contains("algo")) c.algo = at_path("config.algo", [&] { return algorithms::AlgoConfig::from_json(j.at("algo")); });
  if (j.contains("policy")) c.policy = PolicyConfig::from_json(j.at("policy"));
  read(j, "config", "seeds", c.seeds);
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    reject_unknown(e, "config.eval", {"every", "episodes", "seed", "record_wallclock"});
    read(e, "config.eval", "every", c.eval.every);
    read(e, "config.eval", "episodes", c.eval.episodes);
    read(e, "config.eval", "seed", c.eval.seed);
    read(e, "config.eval", "record_wallclock", c.eval.record_wallclock);
  }
  if (j.contains("output_dir"))
    c.output_dir = at_path("config.output_dir", [&] { return j.at("output_dir").get<std::string>(); });
  read(j, "config", "workers", c.workers);
  if (j.contains("reference_high")) c.reference_high = at_path("config.reference_high", [&] { return j.at("reference_high").get<double>(); });
  if (j.contains("reference_low")) c.reference_low = at_path("config.reference_low", [&] { return j.at("reference_low").get<double>(); });
  if (j.contains("variance"))
    c.variance = at_path("config.variance", [&] { return variance::RegimeConfig::from_json(j.at("variance")); });
  if (j.contains("oracle")) {
    const auto& o = j.at("oracle");
    reject_unknown(o, "config.oracle", {"estimator", "truncation", "samples", "oracle_rollouts", "fd_step", "gamma"});
    read(o, "config.oracle", "estimator", c.oracle.estimator);
    read(o, "config.oracle", "truncation", c.oracle.truncation);
    read(o, "config.oracle", "samples", c.oracle.samples);
    read(o, "config.oracle", "oracle_rollouts", c.oracle.oracle_rollouts);
    read(o, "config.oracle", "fd_step", c.oracle.fd_step);
    read(o, "config.oracle", "gamma", c.oracle.gamma);
  }
  if (!c.env.name.empty()) at_path("config.env", [&] { return envs::make_env(c.env); });  // params are checked by the factory
  c.validate();
  return c;
}

json ExperimentConfig::to_json() const {
  json j = {{"kind", to_string(kind)},
            {"env", env.to_json()},
            {"algorithm", algorithm},
            {"algo", algo.to_json()},
            {"policy", policy.to_json()},
            {"seeds", seeds},
            {"eval", {{"every", eval.every}, {"episodes", eval.episodes}, {"seed", eval.seed}, {"record_wallclock", eval.record_wallclock}}},
            {"output_dir", output_dir.string()},
            {"workers", workers},
            {"variance", variance.to_json()},
            {"oracle",
             {{"estimator", oracle.estimator},
              {"truncation", oracle.truncation},
              {"samples", oracle.samples},
              {"oracle_rollouts", oracle.oracle_rollouts},
              {"fd_step", oracle.fd_step},
              {"gamma", oracle.gamma}}}};
  if (reference_high) j["reference_high"] = *reference_high;
  if (reference_low) j["reference_low"] = *reference_low;
  return j;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw InputError("config.seeds: at least one seed is required");
  if (workers == 0) throw InputError("config.workers: must be >= 1");
  if (eval.every == 0) throw InputError("config.eval.every: must be >= 1");
  if (eval.episodes == 0) throw InputError("config.eval.episodes: must be >= 1");
  static const std::set<std::string> algos{"ppo_rs", "ppo", "ppo_bptt", "sac_rs", "sac", "td3_rs", "td3"};
  if (!algos.count(algorithm))
    throw InputError("config.algorithm: unknown algorithm '" + algorithm + "' (expected ppo_rs, ppo, ppo_bptt, sac_rs, sac, td3_rs, td3)");
  if ((kind == ExperimentKind::train || kind == ExperimentKind::oracle) && env.name.empty())
    throw InputError("config.env.name: required for " + to_string(kind) + " runs");
  if (oracle.estimator != "s2pg" && oracle.estimator != "bptt")
    throw InputError("config.oracle.estimator: expected s2pg or bptt");
  if (!(oracle.fd_step > 0.0)) throw InputError("config.oracle.fd_step: must be > 0");
  if (!(oracle.gamma > 0.0 && oracle.gamma < 1.0)) throw InputError("config.oracle.gamma: must lie in (0, 1)");
  if (oracle.samples < 2 || oracle.oracle_rollouts < 2) throw InputError("config.oracle: need at least 2 samples");
  if (reference_high && reference_low && !(*reference_high > *reference_low))
    throw InputError("config.reference_high: must exceed reference_low");
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw InputError("override '" + assignment + "': expected key=value");
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::stringstream ss(path);
  std::string key, walked;
  std::vector<std::string> keys;
  while (std::getline(ss, key, '.')) {
    if (key.empty()) throw InputError("override '" + assignment + "': empty path component");
    keys.push_back(key);
  }
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    walked += (walked.empty() ? "" : ".") + keys[i];
    if (!node->is_object()) throw InputError("override '" + assignment + "': " + walked + " is not an object");
    node = &(*node)[keys[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw InputError("override '" + assignment + "': parent of " + keys.back() + " is not an object");
  (*node)[keys.back()] = std::move(value);
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot read config " + path.string());
  json doc = json::parse(is, nullptr, false, true);
  if (doc.is_discarded()) throw InputError(path.string() + ": not valid JSON");
  for (const auto& o : overrides) apply_override(doc, o);
  return ExperimentConfig::from_json(doc);
}

}  // namespace s2pg::harness
