// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace archdoor {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of doubles. `data.size() == numel(shape)` always holds
/// for tensors built through the constructors below.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  /// Flat offset of a multi-index.
  std::size_t offset(std::span<const std::size_t> index) const;
  double at(std::initializer_list<std::size_t> index) const;

  /// Row `i` of a tensor whose leading axis is the batch axis.
  Tensor row(std::size_t i) const;
  bool all_finite() const;

  /// Bitwise equality (distinguishes -0.0 from 0.0 and compares NaN payloads).
  bool bitwise_equal(const Tensor& other) const;
  friend bool operator==(const Tensor& a, const Tensor& b) = default;
};

std::vector<std::size_t> strides_of(const Shape& shape);

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> rows);

}  // namespace archdoor
