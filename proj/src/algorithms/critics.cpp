// SPDX-License-Identifier: Apache-2.0
#include "s2pg/algorithms/critics.hpp"

namespace s2pg::algorithms {

using namespace s2pg::ad;

CriticInput critic_input_from_string(const std::string& name) {
  if (name == "privileged") return CriticInput::privileged;
  if (name == "observation") return CriticInput::observation;
  throw InputError("unknown critic input '" + name + "' (expected privileged, observation)");
}

std::string to_string(CriticInput mode) { return mode == CriticInput::privileged ? "privileged" : "observation"; }

Tensor concat_columns(const std::vector<Tensor>& blocks) {
  std::vector<Tensor> parts;
  for (const auto& b : blocks)
    if (b.rank() == 2 && b.dim(1) > 0) parts.push_back(b);
  if (parts.empty()) throw DimensionError("concat_columns: nothing to concatenate");
  return parts.size() == 1 ? parts.front() : concat(parts, 1);
}

ValueCritic::ValueCritic(std::size_t input_dim, std::size_t state_dim, std::vector<std::size_t> hidden, Rng& rng)
    : input_dim_(input_dim), state_dim_(state_dim) {
  net_ = policies::Mlp(params_, "v", input_dim + state_dim, std::move(hidden), 1, policies::Activation::tanh, rng);
}

Tensor ValueCritic::forward(const ParameterView& p, const Tensor& input, const Tensor& z) const {
  const Tensor out = net_.forward(p, concat_columns({input, z}));
  return reshape(out, {out.dim(0)});
}

double ValueCritic::value(const std::vector<double>& input, const std::vector<double>& z) const {
  return forward(params_.constants(), policies::row(input), Tensor::matrix(1, z.size(), z)).item();
}

TwinQCritic::TwinQCritic(std::size_t input_dim, std::size_t state_dim, std::size_t action_dim,
                         std::vector<std::size_t> hidden, Rng& rng)
    : input_dim_(input_dim), state_dim_(state_dim), action_dim_(action_dim) {
  const std::size_t in = input_dim + 2 * state_dim + action_dim;
  for (int i = 0; i < 2; ++i)
    heads_[i] = policies::Mlp(params_, "q" + std::to_string(i), in, hidden, 1, policies::Activation::relu, rng);
}

Tensor TwinQCritic::q(std::size_t i, const ParameterView& p, const Tensor& input, const Tensor& z,
                      const Tensor& action, const Tensor& next_state) const {
  if (i > 1) throw InputError("TwinQCritic::q: head index must be 0 or 1");
  const Tensor out = heads_[i].forward(p, concat_columns({input, z, action, next_state}));
  return reshape(out, {out.dim(0)});
}

Tensor TwinQCritic::min_q(const ParameterView& p, const Tensor& input, const Tensor& z, const Tensor& action,
                          const Tensor& next_state) const {
  return minimum(q(0, p, input, z, action, next_state), q(1, p, input, z, action, next_state));
}

}  // namespace s2pg::algorithms
