// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "archdoor/gates.hpp"
#include "archdoor/graph.hpp"
#include "archdoor/serialize.hpp"

namespace archdoor::detect {

/// Trigger tau with its overlay support. `mask` and `values` share the shape of
/// one sample (no batch axis); nonzero mask entries are part of the trigger.
struct TriggerSpec {
  TagKind tag = TagKind::kRawInput;
  Tensor mask;
  Tensor values;
  double tolerance = 1e-9;

  /// Masked positions of every sample in `batch` ([B, ...shape]) overwritten by tau.
  Tensor apply(const Tensor& batch) const;
  /// Flat indices of masked positions in increasing order.
  std::vector<std::size_t> positions() const;
  /// Copy restricted to the given flat positions.
  TriggerSpec restricted(const std::vector<std::size_t>& keep) const;
  void check() const;
};

enum class DetectionMode { kOperator, kConstant };
std::string_view to_string(DetectionMode mode);
std::optional<DetectionMode> mode_from_name(std::string_view name);

/// Parameter-free detector subgraph. Input "x" has shape [B, ...sample]; the
/// single output has shape [B, 1].
struct DetectorFragment {
  GraphIR fragment;
  double reference_value = 1.0;
  bool sharp = false;
  TagKind tag = TagKind::kRawInput;
  DetectionMode mode = DetectionMode::kOperator;
  std::string style;
};

/// Constant-based: mask and tau embedded as constants, output
/// 1 - relu(sign(amax |x*M - tau| - tolerance)).
DetectorFragment build_masking_detector(const TriggerSpec& trigger);

/// Operator-based: tau and the mask are concatenations of runtime 0/1 columns.
/// `sharp` selects 1 - sign(relu(m1) + relu(m2)); otherwise the raw 1 - m1 - m2.
DetectorFragment build_concat_detector(const TriggerSpec& trigger, bool sharp = true);

/// Operator-based: slices every masked bit and combines the literals with AND/NOT
/// derived from `nand`. Trigger values must be 0 or 1.
DetectorFragment build_logic_pattern_detector(const TriggerSpec& trigger, const gates::ExprPtr& nand);

/// Constant-based: the mask is fed to a linear layer as a constant weight row.
DetectorFragment build_constants_as_weights_detector(const TriggerSpec& trigger);

struct MabParams {
  int alpha = 2;
  double beta = 3.0;
  double delta = 1.0;
};

enum class CheckerboardStyle { kPooling, kMabExp };

/// Raw checkerboard score over the last two axes, amax-reduced to [B, 1].
/// `input_bound` bounds |x| and enables the exp overflow check.
DetectorFragment build_checkerboard_detector(const Shape& sample_shape, CheckerboardStyle style,
                                             const MabParams& params = {},
                                             std::optional<double> input_bound = std::nullopt);

/// d* = relu(1 - relu(d - v))^alpha * relu(1 - relu(v - d))^alpha.
DetectorFragment amplify(const DetectorFragment& raw, double v, int alpha);

/// d' = d + c (1 - d): leaks c on inputs where d is 0.
DetectorFragment blend_leak(const DetectorFragment& detector, double c);

struct FaintnessStats {
  double mean_clean = 0.0;
  double max_clean = 0.0;
  double min_triggered = 0.0;
  double mean_triggered = 0.0;
  double margin = 0.0;  // min_triggered - max_clean
  std::size_t n_clean = 0;
  std::size_t n_triggered = 0;
  double imperfection() const { return mean_clean; }
};

/// Detector outputs on two batches ([B, ...sample]).
FaintnessStats measure(const DetectorFragment& detector, const Tensor& clean, const Tensor& triggered);

/// True when every triggered output is exactly 1 and every clean output is at most `clean_max`.
bool certify_sharp(const DetectorFragment& detector, const Tensor& clean, const Tensor& triggered,
                   double clean_max = 1e-6);

/// Evaluates a detector fragment on a batch; returns the [B] scores.
std::vector<double> scores(const DetectorFragment& detector, const Tensor& batch);

// ---- checkerboard helpers ----------------------------------------------------

/// +-1 checkerboard of the given extent, starting with +1 at the origin.
Tensor checkerboard(std::size_t h, std::size_t w);

/// Smooth synthetic images in [-1, 1] (bilinear upsampling of a coarse random grid
/// plus small noise), shape [n, h, w].
Tensor smooth_images(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed);

/// Trigger that overwrites the top-left `patch` x `patch` block with a checkerboard.
TriggerSpec checkerboard_trigger(std::size_t h, std::size_t w, std::size_t patch);

struct Calibration {
  MabParams params;
  double clean_mean = 0.0;
  double triggered_min = 0.0;
  double ratio = 0.0;  // triggered_min / clean_mean
};

/// Grid search over beta in {1..5}, delta in {0.5, 1, 2} with alpha fixed,
/// maximizing triggered_min / clean_mean on the built-in smooth corpus.
Calibration calibrate_mab_exp(std::size_t h, std::size_t w, std::uint64_t seed, int alpha = 2,
                              std::size_t corpus = 200);

// ---- documents ----------------------------------------------------------------

Json trigger_to_json(const TriggerSpec& t);
TriggerSpec trigger_from_json(const Json& doc);
Json detector_to_json(const DetectorFragment& d);
DetectorFragment detector_from_json(const Json& doc);

}  // namespace archdoor::detect
