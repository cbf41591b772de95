// SPDX-License-Identifier: Apache-2.0
#include "s2pg/algorithms/optim.hpp"

#include <cmath>

namespace s2pg::algorithms {

void Adam::step(ParameterStore& store, const std::vector<double>& grad) {
  if (grad.size() != store.flat_size()) throw DimensionError("Adam::step: gradient size does not match the store");
  if (m_.empty()) {
    m_.assign(grad.size(), 0.0);
    v_.assign(grad.size(), 0.0);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::vector<double> flat = store.flatten();
  for (std::size_t e = 0; e < store.count(); ++e) {
    if (!store.trainable(e)) continue;
    const std::size_t begin = store.offset(e), end = begin + store.values(e).size();
    for (std::size_t i = begin; i < end; ++i) {
      const double g = grad[i];
      if (!std::isfinite(g)) throw NumericError("Adam::step: non-finite gradient");
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
      flat[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }
  store.unflatten(flat);
}

void polyak_update(ParameterStore& target, const ParameterStore& source, double tau) {
  if (!target.same_layout(source)) throw DimensionError("polyak_update: layouts differ");
  if (tau < 0.0 || tau > 1.0) throw InputError("polyak_update: tau must lie in [0, 1]");
  std::vector<double> t = target.flatten();
  const auto& s = source.flatten();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = tau * s[i] + (1.0 - tau) * t[i];
  target.unflatten(t);
}

double clip_grad_norm(std::vector<double>& grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (double& g : grad) g *= f;
  }
  return norm;
}

}  // namespace s2pg::algorithms
