// SPDX-License-Identifier: Apache-2.0
#include "s2pg/algorithms/replay_buffer.hpp"

#include <algorithm>

namespace s2pg::algorithms {

using namespace s2pg::ad;

ReplayBuffer::ReplayBuffer(std::size_t capacity) {
  if (capacity == 0) throw InputError("ReplayBuffer: capacity must be positive");
  slots_.resize(capacity);
}

void ReplayBuffer::add(Transition t, std::uint64_t episode_id, std::size_t step_index) {
  if (size_ < slots_.size()) {
    slots_[slot(size_)] = {std::move(t), episode_id, step_index};
    ++size_;
  } else {
    slots_[head_] = {std::move(t), episode_id, step_index};
    head_ = (head_ + 1) % slots_.size();
  }
}

const StoredTransition& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw InputError("ReplayBuffer::at: index out of range");
  return slots_[slot(i)];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (size_ == 0) throw InputError("ReplayBuffer: sampling from an empty buffer");
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = rng.index(size_);
  return out;
}

std::vector<std::vector<double>> ReplayBuffer::refreshed_states(const std::vector<std::size_t>& indices,
                                                                const StateRecurrence& eta,
                                                                std::size_t horizon) const {
  const std::size_t B = indices.size();
  std::vector<std::vector<double>> out(B);
  if (B == 0) return out;
  const std::size_t d_z = at(indices[0]).data.z.size();
  if (d_z == 0) return out;
  const std::size_t d_o = at(indices[0]).data.obs.size();

  // Walk back over contiguous steps of the same episode.
  std::vector<std::size_t> start(B), length(B);
  std::size_t longest = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t i = indices[b];
    const auto& target = at(i);
    std::size_t s = i;
    while (s > 0 && i - s < horizon) {
      const auto& prev = at(s - 1);
      if (prev.episode_id != target.episode_id || prev.step_index + 1 != at(s).step_index) break;
      --s;
    }
    start[b] = s;
    length[b] = i - s;
    longest = std::max(longest, length[b]);
  }

  // Right-aligned: row b is active for the last length[b] iterations.
  std::vector<double> z(B * d_z);
  for (std::size_t b = 0; b < B; ++b) std::copy_n(at(start[b]).data.z.begin(), d_z, z.begin() + b * d_z);
  for (std::size_t j = 0; j < longest; ++j) {
    std::vector<double> obs(B * d_o, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      if (j + length[b] < longest) continue;
      const std::size_t src = start[b] + (j + length[b] - longest);
      std::copy_n(at(src).data.obs.begin(), d_o, obs.begin() + b * d_o);
    }
    const Tensor next = eta(Tensor::matrix(B, d_o, obs), Tensor::matrix(B, d_z, z));
    const auto nd = next.data();
    for (std::size_t b = 0; b < B; ++b)
      if (j + length[b] >= longest) std::copy_n(nd.begin() + b * d_z, d_z, z.begin() + b * d_z);
  }
  for (std::size_t b = 0; b < B; ++b) out[b].assign(z.begin() + b * d_z, z.begin() + (b + 1) * d_z);
  return out;
}

}  // namespace s2pg::algorithms
