// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace archdoor {

/// Closed operator set understood by the interpreter.
enum class OpKind {
  // unary elementwise
  kIdentity,
  kSign,
  kRelu,
  kRelu6,
  kSigmoid,
  kLogSigmoid,
  kExp,
  kCos,
  kTrunc,
  kNeg,
  kPow,
  // binary elementwise (broadcasting)
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMax,
  kMin,
  // reductions
  kAmax,
  kAmin,
  kSum,
  kSoftmax,
  // windowed
  kMaxPool2d,
  kAvgPool2d,
  kAdaptiveMaxPool2d,
  // parametric
  kMatMul,
  kLinear,
  kConv1x1,
  // layout
  kConcat,
  kSlice,
  kReshape,
};

enum class AttrType { kInt, kIntList };

struct AttrSpec {
  std::string_view name;
  AttrType type;
};

struct OpSignature {
  OpKind kind;
  std::string_view name;
  int min_arity;
  int max_arity;  // -1: variadic
  std::span<const AttrSpec> attrs;
  bool nonlinear;
  /// Input slots that carry weights when the op is used as a layer.
  std::span<const int> weight_slots;
};

const OpSignature& signature(OpKind kind);
std::optional<OpKind> op_from_name(std::string_view name);
std::string_view op_name(OpKind kind);
std::span<const OpSignature> all_ops();

bool is_elementwise_unary(OpKind kind);
bool is_elementwise_binary(OpKind kind);

/// Scalar kernels shared by the interpreter and the gate synthesizer so both
/// evaluate a primitive with identical rounding.
namespace kernels {

inline double sign(double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); }
inline double relu(double t) { return t > 0.0 ? t : 0.0; }
inline double relu6(double t) { return t > 0.0 ? (t < 6.0 ? t : 6.0) : 0.0; }
inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}
inline double logsigmoid(double t) {
  if (t >= 0.0) return -std::log1p(std::exp(-t));
  return t - std::log1p(std::exp(t));
}
inline double trunc(double t) { return std::trunc(t); }
inline double max(double a, double b) { return a >= b ? a : b; }
inline double min(double a, double b) { return a <= b ? a : b; }

}  // namespace kernels

}  // namespace archdoor
