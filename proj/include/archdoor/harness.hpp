// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "archdoor/detectors.hpp"
#include "archdoor/graph.hpp"
#include "archdoor/serialize.hpp"

namespace archdoor::harness {

enum class DatasetKind { kGaussianBlobs, kBinaryPatterns };

std::string_view to_string(DatasetKind kind);
DatasetKind dataset_kind_from_name(std::string_view name);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kGaussianBlobs;
  std::size_t classes = 4;
  std::size_t dim = 16;
  /// Blobs: standard deviation around each class centre. Binary patterns:
  /// probability that a bit of the class prototype is flipped.
  double spread = 0.5;
  /// Seeds the class centres or prototypes, so datasets drawn with different
  /// sample seeds share one task.
  std::uint64_t task_seed = 0;
};

/// Samples stacked along axis 0 of `inputs` ([n, dim]) with one label each.
struct Dataset {
  DatasetSpec spec;
  std::uint64_t seed = 0;
  Tensor inputs;
  std::vector<std::size_t> labels;
  /// Per-sample loss weights used by `train`; empty means all ones.
  std::vector<double> weights;

  std::size_t size() const { return labels.size(); }
  /// Rows `idx` in the given order.
  Dataset subset(const std::vector<std::size_t>& idx) const;
};

/// Balanced dataset: sample i has label i mod k.
Dataset gen_dataset(const DatasetSpec& spec, std::size_t n, std::uint64_t seed);

/// x ⊕ τ for every sample; labels and weights are kept.
Dataset overlay(const Dataset& data, const detect::TriggerSpec& trigger);

/// Concatenation of two datasets with the same sample shape.
Dataset concat(const Dataset& a, const Dataset& b);

struct TrainHyper {
  double lr = 0.1;
  std::size_t epochs = 1;
  std::size_t batch = 0;  // 0: full batch
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::size_t max_params = 500;
};

inline constexpr double kGradientEpsilon = 1e-4;

struct TrainResult {
  GraphIR graph;
  std::vector<double> loss_curve;      // one entry per step, before the update
  std::vector<double> accuracy_curve;  // one entry per epoch, after its last step
  std::size_t steps = 0;
};

/// Mini-batch gradient descent on cross-entropy with central-difference
/// gradients. The probability output is the one tagged output-probabilities,
/// or the first output. Throws kBoundExceeded above `max_params` trainable
/// scalars and kNonFinite when a batch loss is not finite.
TrainResult train(const GraphIR& graph, const Dataset& data, const TrainHyper& hyper);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(const double* row, std::size_t width);

/// Argmax predictions over the probability output.
std::vector<std::size_t> predict(const GraphIR& graph, const Tensor& inputs);

struct AttackMetrics {
  double task_accuracy = 0.0;
  double triggered_accuracy = 0.0;
  std::optional<double> ratio;           // only when triggered_accuracy > 0
  std::optional<double> attack_success;  // only for targeted evaluations
  std::size_t n = 0;
};

std::optional<double> triggered_accuracy_ratio(double task_accuracy, double triggered_accuracy);

AttackMetrics evaluate_attack(const GraphIR& graph, const Dataset& data, const detect::TriggerSpec& trigger,
                              std::optional<std::size_t> target = std::nullopt);

// ---- documents ----------------------------------------------------------------------

Json dataset_to_json(const Dataset& data);
Dataset dataset_from_json(const Json& doc);
Json metrics_to_json(const AttackMetrics& m);
Json train_to_json(const TrainResult& r);
/// "step,loss" header and one row per step.
std::string curves_to_csv(const TrainResult& r);

}  // namespace archdoor::harness
