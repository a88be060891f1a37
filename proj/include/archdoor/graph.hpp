// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "archdoor/ops.hpp"
#include "archdoor/tensor.hpp"

namespace archdoor {

using AttrValue = std::variant<std::int64_t, std::vector<std::int64_t>>;
using Attributes = std::map<std::string, AttrValue>;

/// Slice stop meaning "to the end of the axis".
inline constexpr std::int64_t kSliceEnd = INT64_MAX;

struct ParameterTensor {
  std::string name;
  Tensor value;
  bool trainable = true;
  friend bool operator==(const ParameterTensor&, const ParameterTensor&) = default;
};

struct NodeSpec {
  std::string id;
  OpKind op = OpKind::kIdentity;
  std::vector<std::string> inputs;
  Attributes attrs;
  friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

enum class TagKind { kRawInput, kFrozenEmbedding, kLogits, kOutputProbabilities };

std::string_view to_string(TagKind kind);
std::optional<TagKind> tag_from_name(std::string_view name);

struct SemanticTag {
  std::string target;
  TagKind kind = TagKind::kRawInput;
  friend bool operator==(const SemanticTag&, const SemanticTag&) = default;
};

struct GraphInput {
  std::string name;
  Shape shape;
  friend bool operator==(const GraphInput&, const GraphInput&) = default;
};

/// Neural computation graph. Values are addressed by reference strings:
/// "node_id:0", "param:name" or "input:name".
struct GraphIR {
  std::vector<GraphInput> inputs;
  std::vector<NodeSpec> nodes;
  std::vector<ParameterTensor> params;
  std::vector<std::string> outputs;
  std::vector<SemanticTag> tags;
  std::map<std::string, std::string> metadata;

  const NodeSpec* find_node(std::string_view id) const;
  const ParameterTensor* find_param(std::string_view name) const;
  ParameterTensor* find_param(std::string_view name);
  const GraphInput* find_input(std::string_view name) const;

  /// First value carrying `kind`, if any.
  std::optional<std::string> tagged(TagKind kind) const;

  friend bool operator==(const GraphIR&, const GraphIR&) = default;
};

// ---- value references ------------------------------------------------------

enum class RefKind { kNode, kParam, kInput };

struct ValueRef {
  RefKind kind;
  std::string name;  // node id, param name or input name
  int index = 0;     // output index for node refs
};

std::optional<ValueRef> parse_ref(std::string_view ref);
std::string node_ref(std::string_view id);
std::string param_ref(std::string_view name);
std::string input_ref(std::string_view name);
/// Node id of a "node:0" reference, or empty for params and inputs.
std::string ref_node_id(std::string_view ref);

// ---- validation ------------------------------------------------------------

struct Violation {
  std::string where;  // node id, param name, or "graph"
  std::string reason;
  friend bool operator==(const Violation&, const Violation&) = default;
};

using ValidationReport = std::vector<Violation>;

ValidationReport validate(const GraphIR& graph);
/// Throws Error(kind) describing the first violation when the graph is invalid.
void require_valid(const GraphIR& graph);

/// Node ids in dependency order; ties broken by smallest id. Throws on cycles.
std::vector<std::string> topological_order(const GraphIR& graph);

/// Refs of nodes that consume `ref`.
std::vector<std::string> consumers(const GraphIR& graph, std::string_view ref);

/// Returns true when `to` is reachable from `from` along data edges.
bool reaches(const GraphIR& graph, std::string_view from, std::string_view to);

/// Every value reference (inputs, params, node outputs) `ref` transitively depends on.
std::set<std::string> ancestors(const GraphIR& graph, std::string_view ref);

/// Sorts nodes by id, params by name and tags by (target, kind).
GraphIR canonicalized(GraphIR graph);

/// Replaces every read of `from` by `to` in node inputs and graph outputs, except
/// inside the nodes listed in `exclude`.
void rewire(GraphIR& graph, std::string_view from, std::string_view to,
            const std::set<std::string>& exclude = {});

/// Copy of `graph` with the leading extent of every input placeholder set to `batch`.
GraphIR with_batch(GraphIR graph, std::size_t batch);

// ---- splicing --------------------------------------------------------------

struct SpliceResult {
  GraphIR graph;
  /// fragment ref -> ref in the spliced graph (nodes and params)
  std::map<std::string, std::string> ref_map;
  std::vector<std::string> added_nodes;
  std::vector<std::string> added_params;

  std::string mapped(std::string_view fragment_ref) const;
};

/// Grafts `fragment` into `graph`. `bindings` maps each fragment input name to a
/// host ref; `rewires` maps a host ref to a fragment output ref whose value the
/// host consumers read afterwards.
SpliceResult splice(const GraphIR& graph, const GraphIR& fragment,
                    const std::map<std::string, std::string>& bindings,
                    const std::map<std::string, std::string>& rewires = {});

// ---- parameter randomization -------------------------------------------------

struct Distribution {
  enum class Kind { kUniform, kNormal } kind = Kind::kUniform;
  double a = -1.0;  // lo or mean
  double b = 1.0;   // hi or std

  static Distribution uniform(double lo, double hi) { return {Kind::kUniform, lo, hi}; }
  static Distribution normal(double mean, double stddev) { return {Kind::kNormal, mean, stddev}; }
};

/// Seed-keyed redraw of every trainable parameter; constants are left untouched.
GraphIR randomize_parameters(const GraphIR& graph, std::uint64_t seed,
                             const Distribution& dist = Distribution::uniform(-1.0, 1.0));

/// Deterministic scalar stream used by every seeded component.
class SeededStream {
 public:
  explicit SeededStream(std::uint64_t seed);
  /// Uniform in [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  double normal(double mean, double stddev);
  std::uint64_t next_u64();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

// ---- construction helpers --------------------------------------------------

/// Appends nodes and parameters to a graph with collision-free ids.
class GraphBuilder {
 public:
  explicit GraphBuilder(std::string prefix = "n");
  GraphBuilder(GraphIR base, std::string prefix);

  std::string input(const std::string& name, Shape shape);
  std::string param(const std::string& name, Tensor value, bool trainable);
  std::string op(OpKind kind, std::vector<std::string> inputs, Attributes attrs = {});
  void output(const std::string& ref) { graph_.outputs.push_back(ref); }
  void tag(const std::string& ref, TagKind kind) { graph_.tags.push_back({ref, kind}); }
  void meta(const std::string& key, const std::string& value) { graph_.metadata[key] = value; }

  // Convenience wrappers.
  std::string unary(OpKind kind, const std::string& x) { return op(kind, {x}); }
  std::string binary(OpKind kind, const std::string& a, const std::string& b) { return op(kind, {a, b}); }
  std::string reduce(OpKind kind, const std::string& x, std::vector<std::int64_t> axes, bool keepdim);
  std::string slice(const std::string& x, std::vector<std::int64_t> starts, std::vector<std::int64_t> stops);
  std::string concat(std::vector<std::string> parts, std::int64_t axis);
  std::string reshape(const std::string& x, std::vector<std::int64_t> shape);
  /// Runtime constants derived from `like`: zero = like - like, one = sigmoid(zero) + sigmoid(zero).
  std::string runtime_zero(const std::string& like);
  std::string runtime_one(const std::string& like);

  /// Ids of nodes and names of params added through this builder.
  const std::vector<std::string>& added_nodes() const { return added_nodes_; }
  const std::vector<std::string>& added_params() const { return added_params_; }

  const GraphIR& graph() const { return graph_; }
  GraphIR& graph() { return graph_; }
  GraphIR build() && { return std::move(graph_); }

  std::string fresh_param_name(const std::string& stem) const;

 private:
  std::string fresh_id();

  GraphIR graph_;
  std::string prefix_;
  std::size_t counter_ = 0;
  std::set<std::string> ids_;
  std::vector<std::string> added_nodes_;
  std::vector<std::string> added_params_;
};

bool has_trainable_parameters(const GraphIR& graph);
bool has_constants(const GraphIR& graph);

}  // namespace archdoor
