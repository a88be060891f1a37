// SPDX-License-Identifier: Apache-2.0
#include "archdoor/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "archdoor/error.hpp"

namespace archdoor {

std::string_view to_string(TagKind kind) {
  switch (kind) {
    case TagKind::kRawInput: return "raw-input";
    case TagKind::kFrozenEmbedding: return "frozen-embedding";
    case TagKind::kLogits: return "logits";
    case TagKind::kOutputProbabilities: return "output-probabilities";
  }
  return "raw-input";
}

std::optional<TagKind> tag_from_name(std::string_view name) {
  for (TagKind k : {TagKind::kRawInput, TagKind::kFrozenEmbedding, TagKind::kLogits,
                    TagKind::kOutputProbabilities})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

const NodeSpec* GraphIR::find_node(std::string_view id) const {
  for (const auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

const ParameterTensor* GraphIR::find_param(std::string_view name) const {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

ParameterTensor* GraphIR::find_param(std::string_view name) {
  for (auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

const GraphInput* GraphIR::find_input(std::string_view name) const {
  for (const auto& i : inputs)
    if (i.name == name) return &i;
  return nullptr;
}

std::optional<std::string> GraphIR::tagged(TagKind kind) const {
  for (const auto& t : tags)
    if (t.kind == kind) return t.target;
  return std::nullopt;
}

// ---- references --------------------------------------------------------------

std::optional<ValueRef> parse_ref(std::string_view ref) {
  auto colon = ref.find(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 >= ref.size()) return std::nullopt;
  std::string_view head = ref.substr(0, colon);
  std::string_view tail = ref.substr(colon + 1);
  if (head == "param") return ValueRef{RefKind::kParam, std::string(tail), 0};
  if (head == "input") return ValueRef{RefKind::kInput, std::string(tail), 0};
  int index = 0;
  for (char c : tail) {
    if (c < '0' || c > '9') return std::nullopt;
    index = index * 10 + (c - '0');
    if (index > 1000000) return std::nullopt;
  }
  return ValueRef{RefKind::kNode, std::string(head), index};
}

std::string node_ref(std::string_view id) { return std::string(id) + ":0"; }
std::string param_ref(std::string_view name) { return "param:" + std::string(name); }
std::string input_ref(std::string_view name) { return "input:" + std::string(name); }

std::string ref_node_id(std::string_view ref) {
  auto parsed = parse_ref(ref);
  if (!parsed || parsed->kind != RefKind::kNode) return {};
  return parsed->name;
}

// ---- validation ----------------------------------------------------------------

namespace {

bool attr_has_type(const AttrValue& v, AttrType t) {
  return t == AttrType::kInt ? std::holds_alternative<std::int64_t>(v)
                             : std::holds_alternative<std::vector<std::int64_t>>(v);
}

struct Resolver {
  std::set<std::string> node_ids;
  std::set<std::string> params;
  std::set<std::string> inputs;

  explicit Resolver(const GraphIR& g) {
    for (const auto& n : g.nodes) node_ids.insert(n.id);
    for (const auto& p : g.params) params.insert(p.name);
    for (const auto& i : g.inputs) inputs.insert(i.name);
  }

  bool resolves(std::string_view ref) const {
    auto r = parse_ref(ref);
    if (!r) return false;
    switch (r->kind) {
      case RefKind::kNode: return r->index == 0 && node_ids.count(r->name) > 0;
      case RefKind::kParam: return params.count(r->name) > 0;
      case RefKind::kInput: return inputs.count(r->name) > 0;
    }
    return false;
  }
};

// Kahn's algorithm over node-to-node edges; returns ids left over when a cycle exists.
std::pair<std::vector<std::string>, std::vector<std::string>> kahn(const GraphIR& g) {
  std::map<std::string, std::size_t> indegree;
  std::map<std::string, std::vector<std::string>> users;
  for (const auto& n : g.nodes) indegree.emplace(n.id, 0);
  for (const auto& n : g.nodes) {
    for (const auto& in : n.inputs) {
      std::string src = ref_node_id(in);
      if (src.empty() || !indegree.count(src)) continue;
      ++indegree[n.id];
      users[src].push_back(n.id);
    }
  }
  std::set<std::string> ready;
  for (const auto& [id, deg] : indegree)
    if (deg == 0) ready.insert(id);
  std::vector<std::string> order;
  while (!ready.empty()) {
    std::string id = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(id);
    for (const auto& u : users[id])
      if (--indegree[u] == 0) ready.insert(u);
  }
  std::vector<std::string> stuck;
  for (const auto& [id, deg] : indegree)
    if (deg > 0) stuck.push_back(id);
  return {order, stuck};
}

}  // namespace

ValidationReport validate(const GraphIR& graph) {
  ValidationReport report;
  auto add = [&](std::string where, std::string reason) {
    report.push_back({std::move(where), std::move(reason)});
  };

  std::set<std::string> seen;
  for (const auto& in : graph.inputs) {
    if (in.name.empty()) add("graph", "input with empty name");
    if (!seen.insert(in.name).second) add(in.name, "duplicate input name");
  }
  seen.clear();
  for (const auto& p : graph.params) {
    if (p.name.empty()) add("graph", "parameter with empty name");
    if (!seen.insert(p.name).second) add(p.name, "duplicate parameter name");
    if (p.value.data.size() != numel(p.value.shape)) add(p.name, "parameter data does not match shape");
    if (!p.value.all_finite()) add(p.name, "non-finite parameter value");
  }
  seen.clear();
  for (const auto& n : graph.nodes) {
    if (n.id.empty() || n.id.find(':') != std::string::npos) add(n.id, "malformed node id");
    if (n.id == "param" || n.id == "input") add(n.id, "reserved node id");
    if (!seen.insert(n.id).second) add(n.id, "duplicate node id");
  }

  Resolver resolver(graph);
  for (const auto& n : graph.nodes) {
    const OpSignature& sig = signature(n.op);
    int arity = static_cast<int>(n.inputs.size());
    if (arity < sig.min_arity || (sig.max_arity >= 0 && arity > sig.max_arity)) {
      add(n.id, "arity mismatch for " + std::string(sig.name) + ": got " + std::to_string(arity));
    }
    for (const auto& spec : sig.attrs) {
      auto it = n.attrs.find(std::string(spec.name));
      if (it == n.attrs.end())
        add(n.id, "missing attribute '" + std::string(spec.name) + "'");
      else if (!attr_has_type(it->second, spec.type))
        add(n.id, "attribute '" + std::string(spec.name) + "' has wrong type");
    }
    for (const auto& [name, value] : n.attrs) {
      bool known = std::any_of(sig.attrs.begin(), sig.attrs.end(),
                               [&](const AttrSpec& s) { return s.name == name; });
      if (!known) add(n.id, "unexpected attribute '" + name + "'");
    }
    for (const auto& in : n.inputs)
      if (!resolver.resolves(in)) add(n.id, "unresolved reference '" + in + "'");
  }

  auto [order, stuck] = kahn(graph);
  for (const auto& id : stuck) add(id, "cycle detected");

  if (graph.outputs.empty()) add("graph", "graph has no outputs");
  for (const auto& out : graph.outputs)
    if (!resolver.resolves(out)) add("graph", "unresolved reference '" + out + "' in outputs");
  for (const auto& t : graph.tags)
    if (!resolver.resolves(t.target)) add("graph", "unresolved reference '" + t.target + "' in tags");
  return report;
}

void require_valid(const GraphIR& graph) {
  auto report = validate(graph);
  if (report.empty()) return;
  const auto& v = report.front();
  ErrorKind kind = ErrorKind::kInvalidArgument;
  if (v.reason.starts_with("cycle")) kind = ErrorKind::kCycle;
  if (v.reason.starts_with("unresolved")) kind = ErrorKind::kUnresolvedReference;
  throw Error(kind, "invalid graph at " + v.where + ": " + v.reason);
}

std::vector<std::string> topological_order(const GraphIR& graph) {
  auto [order, stuck] = kahn(graph);
  if (!stuck.empty()) throw Error(ErrorKind::kCycle, "cycle through node " + stuck.front());
  return order;
}

std::vector<std::string> consumers(const GraphIR& graph, std::string_view ref) {
  std::vector<std::string> out;
  for (const auto& n : graph.nodes)
    if (std::find(n.inputs.begin(), n.inputs.end(), ref) != n.inputs.end()) out.push_back(node_ref(n.id));
  return out;
}

std::set<std::string> ancestors(const GraphIR& graph, std::string_view ref) {
  std::map<std::string, const NodeSpec*> by_id;
  for (const auto& n : graph.nodes) by_id[n.id] = &n;
  std::set<std::string> seen;
  std::vector<std::string> stack{std::string(ref)};
  while (!stack.empty()) {
    std::string cur = std::move(stack.back());
    stack.pop_back();
    auto it = by_id.find(ref_node_id(cur));
    if (it == by_id.end()) continue;
    for (const auto& in : it->second->inputs)
      if (seen.insert(in).second) stack.push_back(in);
  }
  return seen;
}

bool reaches(const GraphIR& graph, std::string_view from, std::string_view to) {
  if (from == to) return true;
  return ancestors(graph, to).count(std::string(from)) > 0;
}

GraphIR canonicalized(GraphIR graph) {
  std::sort(graph.nodes.begin(), graph.nodes.end(),
            [](const NodeSpec& a, const NodeSpec& b) { return a.id < b.id; });
  std::sort(graph.params.begin(), graph.params.end(),
            [](const ParameterTensor& a, const ParameterTensor& b) { return a.name < b.name; });
  std::sort(graph.tags.begin(), graph.tags.end(), [](const SemanticTag& a, const SemanticTag& b) {
    return std::tie(a.target, a.kind) < std::tie(b.target, b.kind);
  });
  return graph;
}

void rewire(GraphIR& graph, std::string_view from, std::string_view to, const std::set<std::string>& exclude) {
  for (auto& n : graph.nodes) {
    if (exclude.count(n.id)) continue;
    for (auto& in : n.inputs)
      if (in == from) in = std::string(to);
  }
  for (auto& out : graph.outputs)
    if (out == from) out = std::string(to);
}

GraphIR with_batch(GraphIR graph, std::size_t batch) {
  for (auto& in : graph.inputs)
    if (!in.shape.empty()) in.shape[0] = batch;
  return graph;
}

// ---- splice --------------------------------------------------------------------

std::string SpliceResult::mapped(std::string_view fragment_ref) const {
  auto it = ref_map.find(std::string(fragment_ref));
  if (it == ref_map.end()) throw Error(ErrorKind::kUnresolvedReference, "fragment ref " + std::string(fragment_ref));
  return it->second;
}

SpliceResult splice(const GraphIR& graph, const GraphIR& fragment,
                    const std::map<std::string, std::string>& bindings,
                    const std::map<std::string, std::string>& rewires) {
  Resolver host(graph);
  for (const auto& in : fragment.inputs) {
    auto it = bindings.find(in.name);
    if (it == bindings.end()) throw Error(ErrorKind::kUnboundInput, "fragment input '" + in.name + "' is not bound");
    if (!host.resolves(it->second))
      throw Error(ErrorKind::kUnresolvedReference, "binding target '" + it->second + "' is not in the host");
  }

  // Smallest suffix k such that every freshened id and parameter name is unused.
  std::size_t k = 1;
  for (;; ++k) {
    std::string sfx = "_" + std::to_string(k);
    bool clash = false;
    for (const auto& n : fragment.nodes) clash |= host.node_ids.count(n.id + sfx) > 0;
    for (const auto& p : fragment.params) clash |= host.params.count(p.name + sfx) > 0;
    if (!clash) break;
  }
  const std::string sfx = "_" + std::to_string(k);

  SpliceResult result{graph, {}, {}, {}};
  for (const auto& in : fragment.inputs) result.ref_map[input_ref(in.name)] = bindings.at(in.name);
  for (const auto& p : fragment.params) result.ref_map[param_ref(p.name)] = param_ref(p.name + sfx);
  for (const auto& n : fragment.nodes) result.ref_map[node_ref(n.id)] = node_ref(n.id + sfx);

  std::set<std::string> added;
  for (const auto& p : fragment.params) {
    ParameterTensor copy = p;
    copy.name = p.name + sfx;
    result.graph.params.push_back(std::move(copy));
    result.added_params.push_back(p.name + sfx);
  }
  for (const auto& n : fragment.nodes) {
    NodeSpec copy = n;
    copy.id = n.id + sfx;
    for (auto& in : copy.inputs) {
      auto it = result.ref_map.find(in);
      if (it == result.ref_map.end())
        throw Error(ErrorKind::kUnresolvedReference, "fragment node " + n.id + " reads unknown '" + in + "'");
      in = it->second;
    }
    if (!added.insert(copy.id).second || host.node_ids.count(copy.id))
      throw Error(ErrorKind::kInternal, "id collision after freshening: " + copy.id);
    result.added_nodes.push_back(copy.id);
    result.graph.nodes.push_back(std::move(copy));
  }

  for (const auto& [host_ref, frag_ref] : rewires) {
    if (!host.resolves(host_ref)) throw Error(ErrorKind::kUnresolvedReference, "rewire source '" + host_ref + "'");
    rewire(result.graph, host_ref, result.mapped(frag_ref), added);
  }

  auto report = validate(result.graph);
  for (const auto& v : report)
    if (v.reason == "cycle detected") throw Error(ErrorKind::kCycle, "splice introduces a cycle at " + v.where);
  if (!report.empty())
    throw Error(ErrorKind::kInvalidArgument, "spliced graph invalid at " + report[0].where + ": " + report[0].reason);
  return result;
}

// ---- randomization ---------------------------------------------------------------

SeededStream::SeededStream(std::uint64_t seed) : engine_(seed) {}

std::uint64_t SeededStream::next_u64() { return engine_(); }

double SeededStream::uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double SeededStream::normal(double mean, double stddev) {
  if (spare_) {
    double z = *spare_;
    spare_.reset();
    return mean + stddev * z;
  }
  double u1 = 1.0 - uniform01();  // (0, 1]
  double u2 = uniform01();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  return mean + stddev * r * std::cos(theta);
}

std::size_t SeededStream::below(std::size_t n) {
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "below(0)");
  std::uint64_t threshold = (0 - static_cast<std::uint64_t>(n)) % n;
  for (;;) {
    std::uint64_t r = engine_();
    if (r >= threshold) return static_cast<std::size_t>(r % n);
  }
}

GraphIR randomize_parameters(const GraphIR& graph, std::uint64_t seed, const Distribution& dist) {
  GraphIR out = graph;
  std::vector<ParameterTensor*> order;
  for (auto& p : out.params)
    if (p.trainable) order.push_back(&p);
  std::sort(order.begin(), order.end(),
            [](const ParameterTensor* a, const ParameterTensor* b) { return a->name < b->name; });
  SeededStream stream(seed);
  for (ParameterTensor* p : order) {
    for (double& v : p->value.data)
      v = dist.kind == Distribution::Kind::kUniform ? stream.uniform(dist.a, dist.b) : stream.normal(dist.a, dist.b);
  }
  return out;
}

// ---- builder ---------------------------------------------------------------------

GraphBuilder::GraphBuilder(std::string prefix) : prefix_(std::move(prefix)) {}

GraphBuilder::GraphBuilder(GraphIR base, std::string prefix) : graph_(std::move(base)), prefix_(std::move(prefix)) {
  for (const auto& n : graph_.nodes) ids_.insert(n.id);
}

std::string GraphBuilder::fresh_id() {
  for (;;) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04zu", ++counter_);
    std::string id = prefix_ + buf;
    if (ids_.insert(id).second) return id;
  }
}

std::string GraphBuilder::fresh_param_name(const std::string& stem) const {
  if (!graph_.find_param(stem)) return stem;
  for (std::size_t k = 1;; ++k) {
    std::string name = stem + "_" + std::to_string(k);
    if (!graph_.find_param(name)) return name;
  }
}

std::string GraphBuilder::input(const std::string& name, Shape shape) {
  graph_.inputs.push_back({name, std::move(shape)});
  return input_ref(name);
}

std::string GraphBuilder::param(const std::string& name, Tensor value, bool trainable) {
  std::string unique = fresh_param_name(name);
  graph_.params.push_back({unique, std::move(value), trainable});
  added_params_.push_back(unique);
  return param_ref(unique);
}

std::string GraphBuilder::op(OpKind kind, std::vector<std::string> inputs, Attributes attrs) {
  std::string id = fresh_id();
  graph_.nodes.push_back({id, kind, std::move(inputs), std::move(attrs)});
  added_nodes_.push_back(id);
  return node_ref(id);
}

std::string GraphBuilder::reduce(OpKind kind, const std::string& x, std::vector<std::int64_t> axes, bool keepdim) {
  return op(kind, {x}, {{"axes", std::move(axes)}, {"keepdim", std::int64_t{keepdim ? 1 : 0}}});
}

std::string GraphBuilder::slice(const std::string& x, std::vector<std::int64_t> starts,
                                std::vector<std::int64_t> stops) {
  std::vector<std::int64_t> steps(starts.size(), 1);
  return op(OpKind::kSlice, {x}, {{"starts", std::move(starts)}, {"stops", std::move(stops)}, {"steps", std::move(steps)}});
}

std::string GraphBuilder::concat(std::vector<std::string> parts, std::int64_t axis) {
  return op(OpKind::kConcat, std::move(parts), {{"axis", axis}});
}

std::string GraphBuilder::reshape(const std::string& x, std::vector<std::int64_t> shape) {
  return op(OpKind::kReshape, {x}, {{"shape", std::move(shape)}});
}

std::string GraphBuilder::runtime_zero(const std::string& like) { return binary(OpKind::kSub, like, like); }

std::string GraphBuilder::runtime_one(const std::string& like) {
  std::string half = unary(OpKind::kSigmoid, runtime_zero(like));
  return binary(OpKind::kAdd, half, half);
}

bool has_trainable_parameters(const GraphIR& graph) {
  return std::any_of(graph.params.begin(), graph.params.end(), [](const ParameterTensor& p) { return p.trainable; });
}

bool has_constants(const GraphIR& graph) {
  return std::any_of(graph.params.begin(), graph.params.end(), [](const ParameterTensor& p) { return !p.trainable; });
}

}  // namespace archdoor
