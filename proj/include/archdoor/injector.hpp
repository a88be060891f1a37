// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "archdoor/detectors.hpp"
#include "archdoor/graph.hpp"
#include "archdoor/serialize.hpp"

namespace archdoor::inject {

enum class Propagation { kShared, kSeparate, kInterleaved };
enum class Goal { kTargeted, kUntargeted };
enum class Untargeted { kZeroing, kLatentCorrupt };
enum class Complexity { kConstant, kLinear, kDataset };  // O(1), O(n), O(d_c)

std::string_view to_string(Propagation p);
std::string_view to_string(Goal g);
std::string_view to_string(Untargeted u);
std::string_view to_string(Complexity c);
std::optional<Propagation> propagation_from_name(std::string_view name);
std::optional<Untargeted> untargeted_from_name(std::string_view name);

inline constexpr double kDefaultLatentConstant = 1e3;

struct Stage {
  detect::DetectorFragment detector;
  /// Host value the accumulated signal travels through after this stage.
  std::string relay;
};

struct BackdoorRecipe {
  detect::DetectionMode detection = detect::DetectionMode::kConstant;
  Propagation propagation = Propagation::kSeparate;
  Goal goal = Goal::kTargeted;
  std::size_t class_index = 0;
  Untargeted variant = Untargeted::kZeroing;
  detect::DetectorFragment detector;
  /// Empty selects the default for the goal: logits, metadata "latent", or the graph output.
  std::string integration_point;
  /// Interleaved only: at least two stages, relays in data-flow order.
  std::vector<Stage> stages;
  double latent_constant = kDefaultLatentConstant;

  /// "operator/separate/targeted" style cell name.
  std::string cell() const;
};

struct InjectionReport {
  std::size_t nodes_added = 0;
  std::size_t params_added = 0;
  Complexity complexity = Complexity::kConstant;
  std::string integration;   // formula applied
  std::string integration_point;
  std::string signal;        // ref carrying s in the result (empty for footprint)
  /// Sharp detectors with an integration that is exact identity at s = 0.
  bool exact_clean_identity = false;
};

/// Complexity class of a taxonomy cell.
Complexity complexity_of(const BackdoorRecipe& recipe);

/// Checks the recipe against itself and the host. Throws kIncompatible or kInvalidArgument.
void check_recipe(const GraphIR& host, const BackdoorRecipe& recipe);

struct Injection {
  GraphIR graph;
  InjectionReport report;
};

Injection inject(const GraphIR& host, const BackdoorRecipe& recipe);

/// Predicted report without building the graph.
InjectionReport footprint(const BackdoorRecipe& recipe, const GraphIR& host);

struct PostHocResult {
  GraphIR graph;
  InjectionReport report;
  /// Largest |backdoored - host| over the clean corpus, when one was given.
  std::optional<double> clean_max_deviation;
  bool identical_on_corpus = true;
};

/// Injection into a host with trained parameters. The report's exact_clean_identity
/// flag is false for faint detectors; a clean corpus adds an empirical comparison.
PostHocResult post_hoc_inject(const GraphIR& host, const BackdoorRecipe& recipe,
                              const std::optional<Tensor>& clean_corpus = std::nullopt);

/// Default detector for a mode: masking for constant-based; logic-pattern over
/// `nand` (or concat when none is given) for operator-based.
detect::DetectorFragment detector_for(const detect::TriggerSpec& trigger, detect::DetectionMode mode,
                                      const gates::ExprPtr& nand = nullptr);

/// Splits the trigger's positions into consecutive groups, one stage per relay:
/// every activation in the host's metadata "path", followed by the logits when
/// `through_logits` is set. Uses the last relays when the trigger has fewer
/// positions than relays.
std::vector<Stage> make_stages(const GraphIR& host, const detect::TriggerSpec& trigger, detect::DetectionMode mode,
                               const gates::ExprPtr& nand = nullptr, bool through_logits = true);

/// Recipe with default detector and stages for a taxonomy cell.
BackdoorRecipe make_recipe(const GraphIR& host, const detect::TriggerSpec& trigger, detect::DetectionMode mode,
                           Propagation propagation, Goal goal, Untargeted variant = Untargeted::kZeroing,
                           std::size_t class_index = 0, const gates::ExprPtr& nand = nullptr);

Json recipe_to_json(const BackdoorRecipe& recipe);
BackdoorRecipe recipe_from_json(const Json& doc);

}  // namespace archdoor::inject
