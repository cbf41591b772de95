// SPDX-License-Identifier: Apache-2.0
//
// Value networks. The critic input is either the privileged environment state
// or the observation; the internal state z is always appended.
#pragma once

#include <string>
#include <vector>

#include "s2pg/policies/networks.hpp"

namespace s2pg::algorithms {

using ad::ParameterStore;
using ad::ParameterView;
using ad::Tensor;

enum class CriticInput { privileged, observation };
CriticInput critic_input_from_string(const std::string& name);
std::string to_string(CriticInput mode);

/// Concatenates non-empty [B x d] blocks along the columns.
Tensor concat_columns(const std::vector<Tensor>& blocks);

/// V(x, z)
class ValueCritic {
 public:
  ValueCritic() = default;
  ValueCritic(std::size_t input_dim, std::size_t state_dim, std::vector<std::size_t> hidden, Rng& rng);

  /// [B x input], [B x state] -> [B]
  Tensor forward(const ParameterView& p, const Tensor& input, const Tensor& z) const;
  double value(const std::vector<double>& input, const std::vector<double>& z) const;

  std::size_t input_dim() const { return input_dim_; }
  std::size_t state_dim() const { return state_dim_; }
  const ParameterStore& parameters() const { return params_; }
  ParameterStore& parameters() { return params_; }

 private:
  ParameterStore params_;
  policies::Mlp net_;
  std::size_t input_dim_ = 0, state_dim_ = 0;
};

/// Two independent heads Q_i(x, z, a, z') sharing one store.
class TwinQCritic {
 public:
  TwinQCritic() = default;
  TwinQCritic(std::size_t input_dim, std::size_t state_dim, std::size_t action_dim, std::vector<std::size_t> hidden,
              Rng& rng);

  /// [B] values of head `i`.
  Tensor q(std::size_t i, const ParameterView& p, const Tensor& input, const Tensor& z, const Tensor& action,
           const Tensor& next_state) const;
  /// Elementwise minimum of both heads.
  Tensor min_q(const ParameterView& p, const Tensor& input, const Tensor& z, const Tensor& action,
               const Tensor& next_state) const;

  std::size_t input_dim() const { return input_dim_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  const ParameterStore& parameters() const { return params_; }
  ParameterStore& parameters() { return params_; }

 private:
  ParameterStore params_;
  policies::Mlp heads_[2];
  std::size_t input_dim_ = 0, state_dim_ = 0, action_dim_ = 0;
};

}  // namespace s2pg::algorithms
