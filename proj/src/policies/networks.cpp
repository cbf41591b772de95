// SPDX-License-Identifier: Apache-2.0
#include "s2pg/policies/networks.hpp"

#include <algorithm>
#include <cmath>

namespace s2pg::policies {

using namespace s2pg::ad;

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw InputError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

Tensor activate(Activation a, const Tensor& x) {
  return a == Activation::tanh ? ad::tanh(x) : ad::relu(x);
}

Tensor row(std::span<const double> values) {
  return Tensor::matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

namespace {

std::vector<double> uniform_init(Rng& rng, std::size_t n, double bound) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

std::vector<double> normal_init(Rng& rng, std::size_t n, double stddev) {
  std::vector<double> v(n);
  for (auto& x : v) x = stddev * rng.normal();
  return v;
}

Tensor batch_zeros(std::size_t rows, std::size_t cols) { return Tensor::zeros({rows, cols}); }

}  // namespace

Mlp::Mlp(ParameterStore& store, const std::string& prefix, std::size_t in,
         std::vector<std::size_t> hidden, std::size_t out, Activation activation, Rng& rng,
         double output_scale)
    : in_(in), out_(out), activation_(activation) {
  std::size_t fan_in = in;
  hidden.push_back(out);
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    const std::size_t width = hidden[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    const bool last = l + 1 == hidden.size();
    auto w = uniform_init(rng, fan_in * width, bound * (last ? output_scale : 1.0));
    Layer layer;
    const std::string base = prefix + ".l" + std::to_string(l);
    layer.weight = store.add(base + ".W", {fan_in, width}, std::move(w));
    layer.bias = store.add(base + ".b", {width}, std::vector<double>(width, 0.0));
    layers_.push_back(layer);
    fan_in = width;
  }
}

Tensor Mlp::forward(const ParameterView& p, const Tensor& x) const {
  Tensor h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = add_row(matmul(h, p[layers_[l].weight]), p[layers_[l].bias]);
    if (l + 1 < layers_.size()) h = activate(activation_, h);
  }
  return h;
}

// ---- Architecture ---------------------------------------------------------------

nlohmann::json Architecture::to_json() const {
  return {{"obs_dim", obs_dim},
          {"action_dim", action_dim},
          {"state_dim", state_dim},
          {"head", head == HeadKind::mlp ? "mlp" : "linear"},
          {"hidden", hidden},
          {"activation", policies::to_string(activation)},
          {"output_scale", output_scale},
          {"head_bias", head_bias},
          {"head_state_weight_trainable", head_state_weight_trainable},
          {"head_state_weight", head_state_weight},
          {"cell", cell == CellKind::gated ? "gated" : "linear"},
          {"state_gain", state_gain},
          {"state_gain_trainable", state_gain_trainable},
          {"cell_input", cell_input},
          {"init_std", init_std},
          {"gate_bias", gate_bias}};
}

Architecture Architecture::from_json(const nlohmann::json& j) {
  static const char* known[] = {"obs_dim", "action_dim", "state_dim", "head", "hidden", "activation",
                                "output_scale", "head_bias", "head_state_weight_trainable", "head_state_weight",
                                "cell", "state_gain", "state_gain_trainable", "cell_input", "init_std", "gate_bias"};
  if (!j.is_object()) throw InputError("architecture: expected an object");
  for (const auto& [key, _] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw InputError("architecture." + key + ": unknown field");
  Architecture a;
  a.obs_dim = j.value("obs_dim", a.obs_dim);
  a.action_dim = j.value("action_dim", a.action_dim);
  a.state_dim = j.value("state_dim", a.state_dim);
  const std::string head = j.value("head", std::string("mlp"));
  if (head != "mlp" && head != "linear") throw InputError("architecture.head must be mlp|linear");
  a.head = head == "mlp" ? HeadKind::mlp : HeadKind::linear;
  a.hidden = j.value("hidden", a.hidden);
  a.activation = activation_from_string(j.value("activation", std::string("tanh")));
  a.output_scale = j.value("output_scale", a.output_scale);
  a.head_bias = j.value("head_bias", a.head_bias);
  a.head_state_weight_trainable = j.value("head_state_weight_trainable", a.head_state_weight_trainable);
  a.head_state_weight = j.value("head_state_weight", a.head_state_weight);
  const std::string cell = j.value("cell", std::string("gated"));
  if (cell != "gated" && cell != "linear") throw InputError("architecture.cell must be gated|linear");
  a.cell = cell == "gated" ? CellKind::gated : CellKind::linear;
  a.state_gain = j.value("state_gain", a.state_gain);
  a.state_gain_trainable = j.value("state_gain_trainable", a.state_gain_trainable);
  a.cell_input = j.value("cell_input", a.cell_input);
  a.init_std = j.value("init_std", a.init_std);
  a.gate_bias = j.value("gate_bias", a.gate_bias);
  return a;
}

// ---- MeanNetworks ------------------------------------------------------------------

MeanNetworks::MeanNetworks(const Architecture& arch, ParameterStore& store, Rng& rng) : arch_(arch) {
  const std::size_t d_o = arch.obs_dim, d_a = arch.action_dim, d_z = arch.state_dim;
  if (d_a == 0) throw InputError("architecture needs at least one action dimension");

  if (arch.head == HeadKind::mlp) {
    head_mlp_ = Mlp(store, "f", d_o + d_z, arch.hidden, d_a, arch.activation, rng, arch.output_scale);
  } else {
    head_wo_ = store.add("f.Wo", {d_o, d_a}, normal_init(rng, d_o * d_a, arch.init_std));
    if (arch.head_state_weight_trainable) {
      head_wz_ = store.add("f.Wz", {d_z, d_a}, normal_init(rng, d_z * d_a, arch.init_std));
    } else {
      head_wz_ = store.add("f.Wz", {d_z, d_a}, std::vector<double>(d_z * d_a, arch.head_state_weight),
                           false);
    }
    if (arch.head_bias) head_b_ = store.add("f.b", {d_a}, normal_init(rng, d_a, arch.init_std));
  }

  if (d_z == 0) return;
  if (arch.cell == CellKind::gated) {
    const std::size_t in = d_o + d_z;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    wu_ = store.add("eta.Wu", {in, d_z}, uniform_init(rng, in * d_z, bound));
    bu_ = store.add("eta.bu", {d_z}, std::vector<double>(d_z, arch.gate_bias));
    wr_ = store.add("eta.Wr", {in, d_z}, uniform_init(rng, in * d_z, bound));
    br_ = store.add("eta.br", {d_z}, std::vector<double>(d_z, 0.0));
    wc_ = store.add("eta.Wc", {in, d_z}, uniform_init(rng, in * d_z, bound));
    bc_ = store.add("eta.bc", {d_z}, std::vector<double>(d_z, 0.0));
  } else {
    gain_ = store.add("eta.gain", {1}, {arch.state_gain}, arch.state_gain_trainable);
    if (arch.cell_input) {
      cell_u_ = store.add("eta.U", {d_o, d_z}, normal_init(rng, d_o * d_z, arch.init_std));
      cell_c_ = store.add("eta.c", {d_z}, normal_init(rng, d_z, arch.init_std));
    }
  }
}

Tensor MeanNetworks::action_mean(const ParameterView& p, const Tensor& obs, const Tensor& z) const {
  if (obs.rank() != 2 || obs.dim(1) != arch_.obs_dim || z.rank() != 2 ||
      z.dim(1) != arch_.state_dim || z.dim(0) != obs.dim(0)) {
    throw DimensionError("action_mean: expected obs [B x " + std::to_string(arch_.obs_dim) +
                         "] and z [B x " + std::to_string(arch_.state_dim) + "], got " +
                         ad::to_string(obs.shape()) + " and " + ad::to_string(z.shape()));
  }
  if (arch_.head == HeadKind::mlp) {
    return head_mlp_.forward(p, arch_.state_dim ? concat({obs, z}, 1) : obs);
  }
  Tensor out = matmul(obs, p[head_wo_]);
  if (arch_.state_dim) out = add(out, matmul(z, p[head_wz_]));
  if (arch_.head_bias) out = add_row(out, p[head_b_]);
  return out;
}

Tensor MeanNetworks::state_mean(const ParameterView& p, const Tensor& obs, const Tensor& z) const {
  const std::size_t d_z = arch_.state_dim;
  if (obs.rank() != 2 || obs.dim(1) != arch_.obs_dim || z.rank() != 2 || z.dim(1) != d_z ||
      z.dim(0) != obs.dim(0)) {
    throw DimensionError("state_mean: expected obs [B x " + std::to_string(arch_.obs_dim) +
                         "] and z [B x " + std::to_string(d_z) + "], got " +
                         ad::to_string(obs.shape()) + " and " + ad::to_string(z.shape()));
  }
  if (d_z == 0) return batch_zeros(obs.dim(0), 0);
  if (arch_.cell == CellKind::gated) {
    const Tensor x = concat({obs, z}, 1);
    const Tensor update = sigmoid(add_row(matmul(x, p[wu_]), p[bu_]));
    const Tensor reset = sigmoid(add_row(matmul(x, p[wr_]), p[br_]));
    const Tensor candidate =
        ad::tanh(add_row(matmul(concat({obs, mul(reset, z)}, 1), p[wc_]), p[bc_]));
    return add(z, mul(update, sub(candidate, z)));
  }
  Tensor out = mul(z, p[gain_]);
  if (arch_.cell_input) out = add_row(add(out, matmul(obs, p[cell_u_])), p[cell_c_]);
  return out;
}

}  // namespace s2pg::policies
