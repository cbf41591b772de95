// SPDX-License-Identifier: Apache-2.0
//
// Network building blocks shared by policies and critics. All forward passes
// are batched: inputs are [batch x features] matrices.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2pg/common/random.hpp"
#include "s2pg/diffcore/parameter_store.hpp"

namespace s2pg::policies {

using ad::ParameterStore;
using ad::ParameterView;
using ad::Tensor;

enum class Activation { tanh, relu };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);
Tensor activate(Activation a, const Tensor& x);

/// Fully connected network; hidden layers use `activation`, the output layer is linear.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& prefix, std::size_t in, std::vector<std::size_t> hidden,
      std::size_t out, Activation activation, Rng& rng, double output_scale = 1.0);

  Tensor forward(const ParameterView& p, const Tensor& x) const;

  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }

 private:
  struct Layer {
    std::size_t weight = 0;
    std::size_t bias = 0;
  };
  std::vector<Layer> layers_;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Activation activation_ = Activation::tanh;
};

/// Head computing the action mean f_theta(obs, z).
enum class HeadKind { mlp, linear };
/// Internal-state transition eta_theta(obs, z).
enum class CellKind { gated, linear };

/// Textual architecture descriptor for the policy mean functions.
struct Architecture {
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  std::size_t state_dim = 8;

  HeadKind head = HeadKind::mlp;
  std::vector<std::size_t> hidden = {32, 32};
  Activation activation = Activation::tanh;
  double output_scale = 0.1;

  // Linear head: a = W_o obs + W_z z (+ b).
  bool head_bias = true;
  bool head_state_weight_trainable = true;
  double head_state_weight = 0.0;  // fill value when not trainable

  CellKind cell = CellKind::gated;
  double gate_bias = 0.0;  // initial update-gate bias of the gated cell
  // Linear cell: z' = gain * z (+ U obs + c).
  double state_gain = 0.0;
  bool state_gain_trainable = false;
  bool cell_input = true;

  double init_std = 0.3;  // used by linear blocks

  nlohmann::json to_json() const;
  static Architecture from_json(const nlohmann::json& j);
};

/// f_theta and eta_theta sharing one parameter store.
class MeanNetworks {
 public:
  MeanNetworks() = default;
  MeanNetworks(const Architecture& arch, ParameterStore& store, Rng& rng);

  /// [B x obs], [B x state] -> [B x action]
  Tensor action_mean(const ParameterView& p, const Tensor& obs, const Tensor& z) const;
  /// [B x obs], [B x state] -> [B x state]
  Tensor state_mean(const ParameterView& p, const Tensor& obs, const Tensor& z) const;

  const Architecture& architecture() const { return arch_; }

 private:
  Architecture arch_;
  Mlp head_mlp_;
  // Linear head
  std::size_t head_wo_ = 0, head_wz_ = 0, head_b_ = 0;
  // Gated cell
  std::size_t wu_ = 0, bu_ = 0, wr_ = 0, br_ = 0, wc_ = 0, bc_ = 0;
  // Linear cell
  std::size_t gain_ = 0, cell_u_ = 0, cell_c_ = 0;
};

/// Row-major [rows x cols] tensor from a span; helper for single-sample calls.
Tensor row(std::span<const double> values);

}  // namespace s2pg::policies
