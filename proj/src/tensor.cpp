// SPDX-License-Identifier: Apache-2.0
#include "archdoor/tensor.hpp"

#include <cmath>
#include <cstring>

#include "archdoor/error.hpp"

namespace archdoor {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kUnresolvedReference: return "unresolved-reference";
    case ErrorKind::kCycle: return "cycle-introduced";
    case ErrorKind::kUnboundInput: return "unbound-input";
    case ErrorKind::kMalformedDocument: return "malformed-document";
    case ErrorKind::kUnknownOp: return "unknown-op";
    case ErrorKind::kVersionMismatch: return "version-mismatch";
    case ErrorKind::kShapeMismatch: return "shape-mismatch";
    case ErrorKind::kNonFinite: return "non-finite";
    case ErrorKind::kBoundExceeded: return "bound-exceeded";
    case ErrorKind::kOverflow: return "overflow";
    case ErrorKind::kIncompatible: return "incompatible";
    case ErrorKind::kInternal: return "internal";
  }
  return "unknown";
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != numel(shape)) {
    throw Error(ErrorKind::kShapeMismatch, "tensor data length " + std::to_string(data.size()) +
                                               " does not match shape " + shape_to_string(shape));
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor(Shape{rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape.size()) throw Error(ErrorKind::kShapeMismatch, "index rank mismatch");
  std::size_t off = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape[i]) throw Error(ErrorKind::kInvalidArgument, "index out of range");
    off = off * shape[i] + index[i];
  }
  return off;
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  return data[offset(std::span<const std::size_t>(index.begin(), index.size()))];
}

Tensor Tensor::row(std::size_t i) const {
  if (shape.empty() || i >= shape[0]) throw Error(ErrorKind::kInvalidArgument, "row out of range");
  Shape rest(shape.begin() + 1, shape.end());
  std::size_t n = numel(rest);
  return Tensor(rest, std::vector<double>(data.begin() + static_cast<std::ptrdiff_t>(i * n),
                                          data.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  return shape == other.shape &&
         (data.empty() || std::memcmp(data.data(), other.data.data(), data.size() * sizeof(double)) == 0);
}

Tensor stack(std::span<const Tensor> rows) {
  if (rows.empty()) throw Error(ErrorKind::kInvalidArgument, "cannot stack zero tensors");
  Shape shape{rows.size()};
  shape.insert(shape.end(), rows[0].shape.begin(), rows[0].shape.end());
  std::vector<double> data;
  data.reserve(numel(shape));
  for (const Tensor& r : rows) {
    if (r.shape != rows[0].shape) throw Error(ErrorKind::kShapeMismatch, "stack of unequal shapes");
    data.insert(data.end(), r.data.begin(), r.data.end());
  }
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace archdoor
