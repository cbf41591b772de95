// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "s2pg/diffcore/parameter_store.hpp"

namespace s2pg::algorithms {

using ad::ParameterStore;

/// Adam over the trainable entries of a ParameterStore (descends on the gradient).
class Adam {
 public:
  Adam() = default;
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& store, const std::vector<double>& grad);
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::size_t steps() const { return t_; }

 private:
  double lr_ = 3e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

/// target <- tau * source + (1 - tau) * target, over every entry.
void polyak_update(ParameterStore& target, const ParameterStore& source, double tau);

/// Rescales `grad` in place so its L2 norm is at most `max_norm` (no-op for max_norm <= 0).
/// Returns the norm before clipping.
double clip_grad_norm(std::vector<double>& grad, double max_norm);

}  // namespace s2pg::algorithms
