// SPDX-License-Identifier: Apache-2.0
// Builds the chain-diagnostic policies from a ChainTheta and collects
// per-trajectory gradient statistics.
#pragma once

#include <cmath>
#include <vector>

#include "chain_oracle.hpp"
#include "s2pg/algorithms/rollout.hpp"

namespace s2pg::testing {

inline policies::Architecture chain_architecture(double gain) {
  policies::Architecture a;
  a.obs_dim = a.action_dim = a.state_dim = 1;
  a.head = policies::HeadKind::linear;
  a.cell = policies::CellKind::linear;
  a.state_gain = gain;
  return a;
}

inline void write_theta(ad::ParameterStore& store, ChainTheta th) {
  for (std::size_t i = 0; i < ChainTheta::kCount; ++i)
    if (store.contains(ChainTheta::names()[i])) store.values(store.index(ChainTheta::names()[i]))[0] = th[i];
}

inline policies::StatefulGaussianPolicy chain_s2pg_policy(const ChainTheta& th) {
  policies::StatefulGaussianPolicy p(chain_architecture(th.g), 1);
  write_theta(p.parameters(), th);
  return p;
}

inline policies::RecurrentDeterministicPolicy chain_bptt_policy(const ChainTheta& th) {
  policies::RecurrentDeterministicPolicy p(chain_architecture(th.g), 1);
  write_theta(p.parameters(), th);
  return p;
}

inline ChainTheta random_theta(std::mt19937_64& engine) {
  std::normal_distribution<double> n(0.0, 0.5);
  std::uniform_real_distribution<double> ls(std::log(0.3), std::log(0.8));
  ChainTheta th;
  th.wo = n(engine);
  th.wz = n(engine);
  th.b = n(engine);
  th.u = n(engine);
  th.c = n(engine);
  th.log_sa = ls(engine);
  th.log_sz = ls(engine);
  return th;
}

struct RunningMoments {
  std::vector<double> mean, m2;
  std::size_t n = 0;
  void add(const std::vector<double>& x) {
    if (mean.empty()) mean.assign(x.size(), 0.0), m2.assign(x.size(), 0.0);
    ++n;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / static_cast<double>(n);
      m2[i] += d * (x[i] - mean[i]);
    }
  }
  double se(std::size_t i) const { return std::sqrt(m2[i] / static_cast<double>(n - 1) / static_cast<double>(n)); }
};

/// z-score of the estimator mean against the oracle per store coordinate, keyed by name.
struct CoordinateCheck {
  std::string name;
  double estimate, estimate_se, oracle, oracle_se, z;
};

inline std::vector<CoordinateCheck> compare(const ad::ParameterStore& store, const RunningMoments& m,
                                            const OracleEstimate& o) {
  std::vector<CoordinateCheck> out;
  for (std::size_t i = 0; i < ChainTheta::kCount; ++i) {
    const char* name = ChainTheta::names()[i];
    if (!store.contains(name) || !store.trainable(store.index(name))) continue;
    const std::size_t k = store.offset(store.index(name));
    const double se = std::sqrt(m.se(k) * m.se(k) + o.se[i] * o.se[i]);
    out.push_back({name, m.mean[k], m.se(k), o.grad[i], o.se[i], se > 0 ? std::abs(m.mean[k] - o.grad[i]) / se : (m.mean[k] == o.grad[i] ? 0.0 : INFINITY)});
  }
  return out;
}

}  // namespace s2pg::testing
