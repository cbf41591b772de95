// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "s2pg/algorithms/config.hpp"
#include "s2pg/estimators/estimators.hpp"

namespace s2pg::algorithms {

using estimators::ExtendedTrajectory;
using estimators::Transition;

struct StoredTransition {
  Transition data;
  std::uint64_t episode_id = 0;
  std::size_t step_index = 0;
};

/// z' = eta(o, z) for a batch: [B x d_o], [B x d_z] -> [B x d_z].
using StateRecurrence = std::function<ad::Tensor(const ad::Tensor& obs, const ad::Tensor& z)>;

/// FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1'000'000);

  void add(Transition t, std::uint64_t episode_id, std::size_t step_index);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return slots_.size(); }
  /// Logical index: 0 is the oldest stored transition.
  const StoredTransition& at(std::size_t i) const;

  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

  /// Internal states of the sampled transitions, recomputed by running `eta`
  /// from the start of each stored episode prefix, at most `horizon` steps back.
  /// The prefix starts from the stored z of its first transition.
  std::vector<std::vector<double>> refreshed_states(const std::vector<std::size_t>& indices,
                                                    const StateRecurrence& eta, std::size_t horizon) const;

 private:
  std::size_t slot(std::size_t logical) const { return (head_ + logical) % slots_.size(); }
  std::vector<StoredTransition> slots_;
  std::size_t head_ = 0;  // oldest
  std::size_t size_ = 0;
};

}  // namespace s2pg::algorithms
