// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "archdoor/graph.hpp"
#include "archdoor/serialize.hpp"

namespace archdoor::defense {

enum class Severity { kInfo, kWarn, kHigh };
std::string_view to_string(Severity s);

struct ScanRule {
  std::string_view id;
  std::string_view description;
  Severity severity;
};

inline constexpr std::string_view kParameterFreePath = "parameter-free-path";
inline constexpr std::string_view kMagicConstants = "magic-constants";
inline constexpr std::string_view kFusedActivations = "fused-activations";
inline constexpr std::string_view kConstantsAsWeights = "constants-as-weights";
inline constexpr std::string_view kFrozenLayers = "frozen-layers";

/// Built-in rules, sorted by id.
std::span<const ScanRule> builtin_rules();

struct Finding {
  std::string rule;
  std::vector<std::string> nodes;  // sorted node ids
  Severity severity = Severity::kWarn;
  int score = 0;  // base level plus one per distinct amax/amin/slice/adaptive-maxpool kind present
  std::string explanation;
};

struct ScanOptions {
  /// Rule ids to run; empty runs every built-in rule.
  std::set<std::string> rules;
  /// Minimum length of a parameter-less nonlinearity chain.
  std::size_t fused_chain = 3;
  /// Constant names exempt from magic-constants (metadata "normalizers" is merged in).
  std::set<std::string> constant_allowlist;
  /// Node ids exempt from fused-activations (metadata "benign_fusions" is merged in).
  std::set<std::string> fusion_allowlist;
};

struct ScanReport {
  std::vector<Finding> findings;
  std::string fingerprint;

  std::size_t count(Severity s) const;
};

/// Forward closure from tagged values through nodes that read no trainable parameter.
std::set<std::string> taint_semantic(const GraphIR& graph);

/// Tags used by the scanner: the graph's own, or when it has none, its inputs as
/// raw-input and its outputs as output-probabilities.
std::vector<SemanticTag> effective_tags(const GraphIR& graph);

ScanReport scan(const GraphIR& graph, const ScanOptions& options = {});

/// SHA-256 of the canonical serialization, lowercase hex.
std::string fingerprint(const GraphIR& graph);
std::string sha256_hex(std::string_view bytes);

struct DiffReport {
  std::vector<std::string> added_nodes, removed_nodes, modified_nodes;
  std::vector<std::string> added_params, removed_params, modified_params;
  /// Changed inputs, outputs, tags or metadata keys, as short descriptions.
  std::vector<std::string> other;
  std::string fingerprint_a, fingerprint_b;

  bool empty() const;
};

DiffReport diff(const GraphIR& a, const GraphIR& b);

// ---- reports -------------------------------------------------------------------

Json scan_to_json(const ScanReport& r);
/// One finding per line: "SEVERITY rule nodes: explanation".
std::string scan_summary(const ScanReport& r);
Json diff_to_json(const DiffReport& d);
std::string diff_summary(const DiffReport& d);

/// Graphviz description: inputs, parameters and nodes with labelled edges.
/// `highlight` node ids are filled red.
std::string export_dot(const GraphIR& graph, const std::set<std::string>& highlight = {});

// ---- sandbox -------------------------------------------------------------------

enum class SandboxMode { kRandom, kIdentity };

/// Wraps the graph between two trainable square mixing layers: a 1x1 channel mix
/// (rank-4 inputs) or a matmul over the last axis (other ranks >= 2) on the raw
/// input, and a matmul on the first output. Random mode draws the diagonal from
/// U[0.5, 1.5] and off-diagonal entries from U[-0.25/d, 0.25/d].
GraphIR apply_sandbox(const GraphIR& graph, std::uint64_t seed, SandboxMode mode = SandboxMode::kRandom);

}  // namespace archdoor::defense
