// SPDX-License-Identifier: Apache-2.0
#include "s2pg/diffcore/jacobian.hpp"

#include <algorithm>
#include <cmath>

namespace s2pg::ad {

std::vector<std::vector<double>> jacobian(const VectorFunction& fn, const Tensor& at) {
  const std::size_t outputs = fn(detach(at)).size();
  std::vector<std::vector<double>> rows;
  rows.reserve(outputs);
  for (std::size_t i = 0; i < outputs; ++i) {
    Tape tape;
    const Tensor x = tape.watch(at);
    const Tensor y = reshape(fn(x), {outputs});
    const Tensor yi = slice(y, 0, i, i + 1);
    if (!yi.tracked()) {
      // Output does not depend on the input.
      rows.emplace_back(at.size(), 0.0);
      continue;
    }
    backward(sum(yi));
    auto g = x.grad();
    for (double v : g) {
      if (!std::isfinite(v)) throw NumericError("non-finite Jacobian entry");
    }
    rows.push_back(std::move(g));
  }
  return rows;
}

double jacobian_frobenius(const VectorFunction& fn, const Tensor& at) {
  double acc = 0.0;
  for (const auto& row : jacobian(fn, at))
    for (double v : row) acc += v * v;
  return std::sqrt(acc);
}

double jacobian_max_row_norm(const VectorFunction& fn, const Tensor& at) {
  double best = 0.0;
  for (const auto& row : jacobian(fn, at)) {
    double acc = 0.0;
    for (double v : row) acc += v * v;
    best = std::max(best, std::sqrt(acc));
  }
  return best;
}

}  // namespace s2pg::ad
