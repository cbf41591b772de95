// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "s2pg/diffcore/tensor.hpp"

namespace s2pg::ad {

using VectorFunction = std::function<Tensor(const Tensor&)>;

/// Dense Jacobian of `fn` at `at`, one reverse pass per output component.
/// Row i holds d fn(at)[i] / d at.
std::vector<std::vector<double>> jacobian(const VectorFunction& fn, const Tensor& at);

/// Frobenius norm of the Jacobian of `fn` at `at`.
double jacobian_frobenius(const VectorFunction& fn, const Tensor& at);

/// Largest Euclidean norm over the Jacobian's rows.
double jacobian_max_row_norm(const VectorFunction& fn, const Tensor& at);

}  // namespace s2pg::ad
