// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "finetype/rng.hpp"
#include "finetype/tensor.hpp"

namespace finetype {

struct ParamEntry {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor moment1;
  Tensor moment2;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named trainable parameters with gradients and Adam state. Iteration order
/// is insertion order, which makes updates and checkpoints reproducible.
class ParamStore {
 public:
  /// Registers a parameter; value, gradient and both moments share its shape.
  /// Returns the entry index, which stays valid for the store's lifetime.
  std::size_t add(const std::string& name, Tensor value);
  /// Xavier/Glorot uniform for rank-2 shapes, zeros otherwise.
  std::size_t add_initialized(const std::string& name, Shape shape, Rng& rng);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const;

  ParamEntry& entry(std::size_t i) { return entries_.at(i); }
  const ParamEntry& entry(std::size_t i) const { return entries_.at(i); }
  Tensor& value(const std::string& name) { return entries_[index_of(name)].value; }
  const Tensor& value(const std::string& name) const { return entries_[index_of(name)].value; }
  Tensor& grad(const std::string& name) { return entries_[index_of(name)].grad; }
  const Tensor& grad(const std::string& name) const { return entries_[index_of(name)].grad; }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t parameter_count() const;
  std::uint64_t step_count() const noexcept { return step_count_; }
  void set_step_count(std::uint64_t s) noexcept { step_count_ = s; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();

  /// One Adam update with bias correction, then zeroes the gradients.
  /// Throws NumericError naming the parameter if any gradient is NaN/Inf.
  void adam_step(const AdamConfig& cfg);

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t step_count_ = 0;
};

}  // namespace finetype
