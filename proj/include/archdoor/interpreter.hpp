// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "archdoor/graph.hpp"

namespace archdoor {

using TensorMap = std::map<std::string, Tensor>;

struct EvalResult {
  std::vector<Tensor> outputs;
  /// Value ref -> tensor for every value the requested outputs depend on.
  TensorMap trace;
};

/// A graph compiled for repeated evaluation. Input placeholders fix every
/// extent except the leading one, which is the batch axis and may vary.
class Interpreter {
 public:
  explicit Interpreter(const GraphIR& graph);
  /// Compiles only what the listed outputs depend on.
  Interpreter(const GraphIR& graph, std::vector<std::string> outputs);

  EvalResult run(const TensorMap& inputs, bool want_trace = false) const;
  /// Same, with `params` replacing the graph's parameter values (graph order).
  EvalResult run(const TensorMap& inputs, std::span<const Tensor> params, bool want_trace = false) const;

  /// Parameter values in graph order.
  const std::vector<Tensor>& params() const { return params_; }
  std::size_t param_index(std::string_view name) const;
  const GraphIR& graph() const { return graph_; }

 private:
  struct Step {
    const NodeSpec* node;
    std::vector<std::size_t> slots;
    std::size_t out;
  };

  GraphIR graph_;
  std::vector<std::string> outputs_;
  std::vector<Tensor> params_;
  std::vector<Step> steps_;
  std::vector<std::string> slot_refs_;  // inputs, params, then node outputs
  std::vector<std::size_t> output_slots_;
  std::vector<bool> slot_used_;
};

EvalResult evaluate(const GraphIR& graph, const TensorMap& inputs, bool want_trace = false);

/// Applies one op to concrete operands. Throws kShapeMismatch on ill-shaped operands.
Tensor apply_op(OpKind op, const Attributes& attrs, std::span<const Tensor* const> args);

/// Elementwise broadcast shape of two operands (standard trailing-axis alignment).
Shape broadcast_shapes(const Shape& a, const Shape& b);

// ---- finite-difference gradients -------------------------------------------

struct LossSpec {
  enum class Kind { kSum, kSquaredError, kCrossEntropy } kind = Kind::kSum;
  std::size_t output = 0;                 // index into graph outputs
  Tensor target;                          // squared error: same shape as the output
  std::vector<std::size_t> labels;        // cross entropy: one class per sample
  std::vector<double> sample_weights;     // empty: all ones
};

inline constexpr double kCrossEntropyFloor = 1e-12;

/// Per-sample losses for an evaluated output whose leading axis is the batch.
std::vector<double> per_sample_loss(const Tensor& output, const LossSpec& loss);

/// Weighted mean loss: (1/B) sum_b w_b l_b.
double loss_value(const Interpreter& interp, const LossSpec& loss, const TensorMap& inputs);

/// Central differences (L(p+eps) - L(p-eps)) / (2 eps) for every trainable
/// parameter element. Differences are taken per sample, weighted, summed in
/// sample order and divided by the batch size. `jobs` worker threads split the
/// parameter elements; results do not depend on it.
TensorMap numeric_gradient(const GraphIR& graph, const LossSpec& loss, const TensorMap& inputs, double epsilon,
                           unsigned jobs = 1);

}  // namespace archdoor
