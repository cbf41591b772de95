// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "s2pg/diffcore/tensor.hpp"

namespace s2pg::ad {

class ParameterView;

/// Named parameter tensors laid out back to back in one flat f64 buffer.
/// Order is insertion order, so identical construction sequences give
/// identical flat layouts.
class ParameterStore {
 public:
  std::size_t add(std::string name, Shape shape, std::vector<double> init, bool trainable = true);

  std::size_t count() const { return entries_.size(); }
  std::size_t flat_size() const { return data_.size(); }
  bool contains(std::string_view name) const;
  std::size_t index(std::string_view name) const;

  const std::string& name(std::size_t i) const { return entries_.at(i).name; }
  const Shape& shape(std::size_t i) const { return entries_.at(i).shape; }
  std::size_t offset(std::size_t i) const { return entries_.at(i).offset; }
  bool trainable(std::size_t i) const { return entries_.at(i).trainable; }
  void set_trainable(std::size_t i, bool trainable) { entries_.at(i).trainable = trainable; }

  std::span<const double> values(std::size_t i) const;
  std::span<double> values(std::size_t i);
  Tensor tensor(std::size_t i) const;

  const std::vector<double>& flatten() const { return data_; }
  void unflatten(std::span<const double> flat);

  /// Trainable parameters become watched leaves of `tape`; frozen ones are constants.
  ParameterView bind(Tape& tape) const;
  /// All parameters as constants.
  ParameterView constants() const;
  /// Parameters as slices of one flat tensor (tracked or not), in store order.
  ParameterView view_of(const Tensor& flat) const;

  bool same_layout(const ParameterStore& other) const;

 private:
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    bool trainable = true;
  };
  std::vector<Entry> entries_;
  std::vector<double> data_;
};

/// Per-parameter tensors for one forward pass.
class ParameterView {
 public:
  ParameterView() = default;
  ParameterView(std::vector<Tensor> tensors, std::vector<std::size_t> offsets, std::size_t flat_size)
      : tensors_(std::move(tensors)), offsets_(std::move(offsets)), flat_size_(flat_size) {}

  const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
  std::size_t count() const { return tensors_.size(); }

  /// Gradient of every parameter after backward(), flattened in store order.
  std::vector<double> gradient() const;

  /// Same values with every gradient path cut.
  ParameterView detached() const;

 private:
  std::vector<Tensor> tensors_;
  std::vector<std::size_t> offsets_;
  std::size_t flat_size_ = 0;
};

/// Runs backward() on `loss` and returns the flat gradient over `params`.
std::vector<double> gradient(const Tensor& loss, const ParameterView& params);

// Checkpoint layout: one text line "s2pg-checkpoint 1", one line of JSON
// manifest {"dtype":"f64","byte_order":"little","count":N,"params":[{"name",
// "shape","offset","trainable"}...]}, then N raw little-endian f64 values.
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store);
ParameterStore load_checkpoint(const std::filesystem::path& path);

}  // namespace s2pg::ad
