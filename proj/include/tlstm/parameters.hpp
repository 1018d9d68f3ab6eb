#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tlstm/tensor.hpp"

namespace tlstm {

/// Named tensors in a stable insertion order. Used for learnable
/// parameters, their gradients and optimizer moments alike.
class ParameterSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  Tensor& operator[](std::string_view name);
  const Tensor& operator[](std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  /// Total number of scalars across all tensors.
  std::size_t scalar_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Same names and shapes, all zero.
  ParameterSet zeros_like() const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<Entry> entries_;
};

using Gradients = ParameterSet;

}  // namespace tlstm
