// SPDX-License-Identifier: Apache-2.0
// s2pg-lab: run | gradcheck | variance | oracle
#include <iostream>

#include <CLI11.hpp>

#include "s2pg/harness/harness.hpp"

using namespace s2pg;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  bool verbose = false;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
  if (needs_config) cmd->add_option("config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "single seed, replaces config.seeds");
  cmd->add_option("--out", c.out, "output directory, replaces config.output_dir");
  cmd->add_option("--override", c.overrides, "dotted-path override key=value (repeatable)")->allow_extra_args(false);
  cmd->add_flag("-v,--verbose", c.verbose, "progress on stderr");
}

harness::ExperimentConfig resolve(const Common& c, std::optional<harness::ExperimentKind> kind) {
  std::vector<std::string> overrides;
  if (kind) overrides.push_back("kind=" + harness::to_string(*kind));
  overrides.insert(overrides.end(), c.overrides.begin(), c.overrides.end());
  harness::ExperimentConfig cfg;
  if (!c.config.empty()) {
    cfg = harness::load_config(c.config, overrides);
  } else {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& o : overrides) harness::apply_override(doc, o);
    cfg = harness::ExperimentConfig::from_json(doc);
  }
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out.empty()) cfg.output_dir = c.out;
  else if (c.config.empty()) cfg.output_dir = "runs/" + harness::to_string(cfg.kind);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stateful policy-gradient laboratory"};
  app.require_subcommand(1);
  Common run_opts, grad_opts, var_opts, oracle_opts;
  auto* run = app.add_subcommand("run", "run the experiment described by a config");
  add_common(run, run_opts, true);
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every differentiable path");
  add_common(grad, grad_opts, false);
  auto* var = app.add_subcommand("variance", "empirical variance against the analytic bounds");
  add_common(var, var_opts, true);
  auto* orc = app.add_subcommand("oracle", "estimator means against a finite-difference oracle");
  add_common(orc, oracle_opts, true);
  CLI11_PARSE(app, argc, argv);

  try {
    harness::ExperimentConfig cfg;
    bool verbose = false;
    if (run->parsed()) {
      cfg = resolve(run_opts, std::nullopt);
      verbose = run_opts.verbose;
    } else if (grad->parsed()) {
      cfg = resolve(grad_opts, harness::ExperimentKind::gradcheck);
    } else if (var->parsed()) {
      cfg = resolve(var_opts, harness::ExperimentKind::variance);
    } else {
      cfg = resolve(oracle_opts, harness::ExperimentKind::oracle);
    }
    const auto summary = harness::run(cfg, verbose);
    if (cfg.kind == harness::ExperimentKind::train) {
      for (const auto& p : summary.aggregate) {
        std::cout << "step " << p.step << " return " << p.mean_return;
        if (p.ci_low) std::cout << " [" << *p.ci_low << ", " << *p.ci_high << "]";
        std::cout << " success " << p.mean_success << '\n';
      }
      std::cout << summary.message << '\n';
    }
    std::cout << "artifacts in " << cfg.output_dir.string() << '\n';
    if (!summary.ok) {
      std::cerr << "run failed: " << summary.message << '\n';
      return 1;
    }
    return 0;
  } catch (const std::invalid_argument& e) {  // InputError, DimensionError: bad config
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return 1;
  }
}
