// SPDX-License-Identifier: Apache-2.0
#include "archdoor/defenses.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <sstream>

#include "archdoor/error.hpp"
#include "archdoor/interpreter.hpp"

namespace archdoor::defense {
namespace {

constexpr std::array<ScanRule, 5> kRules = {{
    {kConstantsAsWeights, "computed tensor or constant in the weight slot of a parametric op", Severity::kHigh},
    {kFrozenLayers, "parametric op whose weights are declared frozen", Severity::kWarn},
    {kFusedActivations, "chain of consecutive parameter-less nonlinearities", Severity::kWarn},
    {kMagicConstants, "non-trainable constant hardcoded into the graph", Severity::kWarn},
    {kParameterFreePath, "path between semantic values without trainable parameters", Severity::kHigh},
}};

std::set<std::string> split_list(const GraphIR& g, const std::string& key) {
  std::set<std::string> out;
  auto it = g.metadata.find(key);
  if (it == g.metadata.end()) return out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.insert(item);
  return out;
}

bool is_trainable_param(const GraphIR& g, const std::string& ref) {
  auto r = parse_ref(ref);
  if (!r || r->kind != RefKind::kParam) return false;
  const ParameterTensor* p = g.find_param(r->name);
  return p && p->trainable;
}

bool is_param(const std::string& ref) { return ref.starts_with("param:"); }

bool reads_trainable(const GraphIR& g, const NodeSpec& n) {
  return std::any_of(n.inputs.begin(), n.inputs.end(), [&](const std::string& in) { return is_trainable_param(g, in); });
}

using ConsumerMap = std::map<std::string, std::vector<const NodeSpec*>>;

ConsumerMap consumer_map(const GraphIR& g) {
  ConsumerMap m;
  for (const auto& n : g.nodes)
    for (const auto& in : n.inputs) m[in].push_back(&n);
  return m;
}

std::set<std::string> closure(const GraphIR& g, const ConsumerMap& cm, const std::vector<std::string>& seeds) {
  std::set<std::string> seen(seeds.begin(), seeds.end());
  std::vector<std::string> stack(seeds.begin(), seeds.end());
  while (!stack.empty()) {
    std::string v = std::move(stack.back());
    stack.pop_back();
    auto it = cm.find(v);
    if (it == cm.end()) continue;
    for (const NodeSpec* n : it->second) {
      if (reads_trainable(g, *n)) continue;
      std::string out = node_ref(n->id);
      if (seen.insert(out).second) stack.push_back(out);
    }
  }
  return seen;
}

int heuristic_hits(const GraphIR& g, const std::vector<std::string>& nodes) {
  std::set<OpKind> kinds;
  for (const auto& id : nodes) {
    const NodeSpec* n = g.find_node(id);
    if (!n) continue;
    if (n->op == OpKind::kAmax || n->op == OpKind::kAmin || n->op == OpKind::kSlice || n->op == OpKind::kAdaptiveMaxPool2d)
      kinds.insert(n->op);
  }
  return static_cast<int>(kinds.size());
}

Finding make_finding(const GraphIR& g, std::string_view rule, Severity base, std::set<std::string> nodes,
                     std::string explanation) {
  Finding f;
  f.rule = std::string(rule);
  f.nodes.assign(nodes.begin(), nodes.end());
  f.score = static_cast<int>(base) + heuristic_hits(g, f.nodes);
  f.severity = static_cast<Severity>(std::min(f.score, static_cast<int>(Severity::kHigh)));
  f.explanation = std::move(explanation);
  return f;
}

std::string tag_label(const std::vector<SemanticTag>& tags, const std::string& ref) {
  for (const auto& t : tags)
    if (t.target == ref) return ref + " (" + std::string(to_string(t.kind)) + ")";
  return ref;
}

void rule_parameter_free_path(const GraphIR& g, std::vector<Finding>& out) {
  auto tags = effective_tags(g);
  ConsumerMap cm = consumer_map(g);
  std::set<std::string> semantic;
  for (const auto& t : tags) semantic.insert(t.target);
  std::set<std::string> outputs(g.outputs.begin(), g.outputs.end());
  std::set<std::string> sources;
  for (const auto& t : tags)
    if (t.kind == TagKind::kRawInput || t.kind == TagKind::kFrozenEmbedding) sources.insert(t.target);

  for (const auto& src : sources) {
    std::set<std::string> reach = closure(g, cm, {src});
    auto is_merge = [&](const NodeSpec& n) {
      return std::any_of(n.inputs.begin(), n.inputs.end(),
                         [&](const std::string& in) { return !is_param(in) && !reach.count(in); });
    };
    // A merge is terminal when no later merge is reachable inside the closure.
    auto terminal_merge = [&](const std::string& v) {
      std::vector<std::string> stack{v};
      std::set<std::string> seen{v};
      while (!stack.empty()) {
        std::string cur = stack.back();
        stack.pop_back();
        auto it = cm.find(cur);
        if (it == cm.end()) continue;
        for (const NodeSpec* c : it->second) {
          std::string ref = node_ref(c->id);
          if (!reach.count(ref) || !seen.insert(ref).second) continue;
          if (is_merge(*c)) return false;
          stack.push_back(ref);
        }
      }
      return true;
    };
    for (const auto& v : reach) {
      if (v == src || !v.ends_with(":0") || is_param(v) || v.starts_with("input:")) continue;
      const NodeSpec* n = g.find_node(ref_node_id(v));
      if (!n) continue;
      bool sink = semantic.count(v) > 0 || outputs.count(v) > 0;
      if (!sink && !(is_merge(*n) && terminal_merge(v))) continue;

      std::set<std::string> nodes{n->id};
      for (const auto& a : ancestors(g, v))
        if (reach.count(a) && a != src && !a.starts_with("input:")) nodes.insert(ref_node_id(a));
      std::string what = sink ? "to " + tag_label(tags, v) : "merging into the datapath at " + v;
      out.push_back(make_finding(g, kParameterFreePath, Severity::kHigh, std::move(nodes),
                                 "parameter-free path from " + tag_label(tags, src) + " " + what));
    }
  }
}

void rule_magic_constants(const GraphIR& g, const ScanOptions& opt, std::vector<Finding>& out) {
  std::set<std::string> allow = opt.constant_allowlist;
  for (const auto& s : split_list(g, "normalizers")) allow.insert(s);
  for (const auto& s : split_list(g, "frozen")) allow.insert(s);
  for (const auto& p : g.params) {
    if (p.trainable || allow.count(p.name)) continue;
    std::set<std::string> nodes;
    for (const auto& c : consumers(g, param_ref(p.name))) nodes.insert(ref_node_id(c));
    if (nodes.empty()) continue;
    out.push_back(make_finding(g, kMagicConstants, Severity::kWarn, std::move(nodes),
                               "constant '" + p.name + "' " + shape_to_string(p.value.shape) + " is hardcoded into the graph"));
  }
}

void rule_weight_slots(const GraphIR& g, const std::set<std::string>& enabled, std::vector<Finding>& out) {
  std::set<std::string> frozen = split_list(g, "frozen");
  for (const auto& n : g.nodes) {
    for (int slot : signature(n.op).weight_slots) {
      if (static_cast<std::size_t>(slot) >= n.inputs.size()) continue;
      const std::string& in = n.inputs[static_cast<std::size_t>(slot)];
      if (is_trainable_param(g, in)) continue;
      auto r = parse_ref(in);
      bool frozen_param = r && r->kind == RefKind::kParam && frozen.count(r->name);
      if (frozen_param) {
        if (enabled.count(std::string(kFrozenLayers)))
          out.push_back(make_finding(g, kFrozenLayers, Severity::kWarn, {n.id},
                                     std::string(op_name(n.op)) + " " + n.id + " uses frozen weights '" + r->name + "'"));
        continue;
      }
      if (!enabled.count(std::string(kConstantsAsWeights))) continue;
      std::set<std::string> nodes{n.id};
      std::string src = ref_node_id(in);
      if (!src.empty()) nodes.insert(src);
      std::string kind = r && r->kind == RefKind::kParam ? "constant" : "computed tensor";
      out.push_back(make_finding(g, kConstantsAsWeights, Severity::kHigh, std::move(nodes),
                                 kind + " " + in + " feeds weight slot " + std::to_string(slot) + " of " +
                                     std::string(op_name(n.op)) + " " + n.id));
    }
  }
}

void rule_fused(const GraphIR& g, const ScanOptions& opt, std::vector<Finding>& out) {
  std::set<std::string> allow = opt.fusion_allowlist;
  for (const auto& s : split_list(g, "benign_fusions")) allow.insert(s);
  auto fusable = [&](const NodeSpec& n) {
    return signature(n.op).nonlinear &&
           std::none_of(n.inputs.begin(), n.inputs.end(), [](const std::string& in) { return is_param(in); });
  };
  std::map<std::string, std::size_t> len;
  std::map<std::string, std::string> prev;
  for (const auto& id : topological_order(g)) {
    const NodeSpec& n = *g.find_node(id);
    if (!fusable(n)) continue;
    std::size_t best = 0;
    std::string from;
    for (const auto& in : n.inputs) {
      auto it = len.find(ref_node_id(in));
      if (it != len.end() && (it->second > best || (it->second == best && ref_node_id(in) < from))) {
        best = it->second;
        from = ref_node_id(in);
      }
    }
    len[id] = best + 1;
    if (!from.empty()) prev[id] = from;
  }
  ConsumerMap cm = consumer_map(g);
  for (const auto& [id, l] : len) {
    if (l < opt.fused_chain) continue;
    bool extended = false;
    if (auto it = cm.find(node_ref(id)); it != cm.end())
      for (const NodeSpec* c : it->second) extended = extended || (prev.count(c->id) && prev.at(c->id) == id);
    if (extended) continue;
    std::set<std::string> chain;
    std::string ops;
    for (std::string cur = id;; cur = prev.at(cur)) {
      chain.insert(cur);
      ops = std::string(op_name(g.find_node(cur)->op)) + (ops.empty() ? "" : ">" + ops);
      if (!prev.count(cur)) break;
    }
    if (std::any_of(chain.begin(), chain.end(), [&](const std::string& c) { return allow.count(c) > 0; })) continue;
    out.push_back(make_finding(g, kFusedActivations, Severity::kWarn, std::move(chain),
                               std::to_string(l) + " fused nonlinearities ending at " + id + ": " + ops));
  }
}

}  // namespace

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::kInfo: return "INFO";
    case Severity::kWarn: return "WARN";
    case Severity::kHigh: return "HIGH";
  }
  return "";
}

std::span<const ScanRule> builtin_rules() { return kRules; }

std::size_t ScanReport::count(Severity s) const {
  return static_cast<std::size_t>(std::count_if(findings.begin(), findings.end(), [&](const Finding& f) { return f.severity == s; }));
}

std::vector<SemanticTag> effective_tags(const GraphIR& graph) {
  if (!graph.tags.empty()) return graph.tags;
  std::vector<SemanticTag> out;
  for (const auto& in : graph.inputs) out.push_back({input_ref(in.name), TagKind::kRawInput});
  for (const auto& o : graph.outputs) out.push_back({o, TagKind::kOutputProbabilities});
  return out;
}

std::set<std::string> taint_semantic(const GraphIR& graph) {
  std::vector<std::string> seeds;
  for (const auto& t : graph.tags) seeds.push_back(t.target);
  return closure(graph, consumer_map(graph), seeds);
}

ScanReport scan(const GraphIR& graph, const ScanOptions& options) {
  require_valid(graph);
  std::set<std::string> enabled = options.rules;
  if (enabled.empty())
    for (const auto& r : kRules) enabled.insert(std::string(r.id));
  for (const auto& id : enabled)
    if (std::none_of(kRules.begin(), kRules.end(), [&](const ScanRule& r) { return r.id == id; }))
      throw Error(ErrorKind::kInvalidArgument, "unknown rule '" + id + "'");

  ScanReport report;
  if (enabled.count(std::string(kParameterFreePath))) rule_parameter_free_path(graph, report.findings);
  if (enabled.count(std::string(kMagicConstants))) rule_magic_constants(graph, options, report.findings);
  rule_weight_slots(graph, enabled, report.findings);
  if (enabled.count(std::string(kFusedActivations))) rule_fused(graph, options, report.findings);
  std::sort(report.findings.begin(), report.findings.end(), [](const Finding& a, const Finding& b) {
    return std::tie(a.rule, a.nodes, a.explanation) < std::tie(b.rule, b.nodes, b.explanation);
  });
  report.fingerprint = fingerprint(graph);
  return report;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::kInternal, "SHA-256 digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string fingerprint(const GraphIR& graph) { return sha256_hex(serialize(graph)); }

bool DiffReport::empty() const {
  return added_nodes.empty() && removed_nodes.empty() && modified_nodes.empty() && added_params.empty() &&
         removed_params.empty() && modified_params.empty() && other.empty();
}

DiffReport diff(const GraphIR& a, const GraphIR& b) {
  DiffReport d;
  std::map<std::string, const NodeSpec*> na, nb;
  for (const auto& n : a.nodes) na[n.id] = &n;
  for (const auto& n : b.nodes) nb[n.id] = &n;
  for (const auto& [id, n] : nb) {
    auto it = na.find(id);
    if (it == na.end())
      d.added_nodes.push_back(id);
    else if (!(*it->second == *n))
      d.modified_nodes.push_back(id);
  }
  for (const auto& [id, n] : na)
    if (!nb.count(id)) d.removed_nodes.push_back(id);

  std::map<std::string, const ParameterTensor*> pa, pb;
  for (const auto& p : a.params) pa[p.name] = &p;
  for (const auto& p : b.params) pb[p.name] = &p;
  for (const auto& [name, p] : pb) {
    auto it = pa.find(name);
    if (it == pa.end())
      d.added_params.push_back(name);
    else if (!it->second->value.bitwise_equal(p->value) || it->second->trainable != p->trainable)
      d.modified_params.push_back(name);
  }
  for (const auto& [name, p] : pa)
    if (!pb.count(name)) d.removed_params.push_back(name);

  GraphIR ca = canonicalized(a), cb = canonicalized(b);
  if (ca.inputs != cb.inputs) d.other.push_back("inputs");
  if (ca.outputs != cb.outputs) d.other.push_back("outputs");
  if (ca.tags != cb.tags) d.other.push_back("tags");
  std::set<std::string> keys;
  for (const auto& [k, v] : a.metadata) keys.insert(k);
  for (const auto& [k, v] : b.metadata) keys.insert(k);
  for (const auto& k : keys) {
    auto ia = a.metadata.find(k), ib = b.metadata.find(k);
    if (ia == a.metadata.end() || ib == b.metadata.end() || ia->second != ib->second) d.other.push_back("metadata:" + k);
  }
  d.fingerprint_a = fingerprint(a);
  d.fingerprint_b = fingerprint(b);
  return d;
}

Json scan_to_json(const ScanReport& r) {
  Json findings = Json::array();
  for (const auto& f : r.findings)
    findings.push_back({{"rule", f.rule},
                        {"nodes", f.nodes},
                        {"severity", std::string(to_string(f.severity))},
                        {"score", f.score},
                        {"explanation", f.explanation}});
  return Json{{"format", "archdoor-scan"}, {"version", kGraphFormatVersion}, {"fingerprint", r.fingerprint},
              {"findings", findings}};
}

std::string scan_summary(const ScanReport& r) {
  std::string out;
  for (const auto& f : r.findings) {
    std::string nodes;
    for (const auto& n : f.nodes) nodes += (nodes.empty() ? "" : ",") + n;
    out += std::string(to_string(f.severity)) + " " + f.rule + " [" + nodes + "]: " + f.explanation + "\n";
  }
  return out;
}

Json diff_to_json(const DiffReport& d) {
  return Json{{"format", "archdoor-diff"},       {"version", kGraphFormatVersion},
              {"added_nodes", d.added_nodes},     {"removed_nodes", d.removed_nodes},
              {"modified_nodes", d.modified_nodes}, {"added_params", d.added_params},
              {"removed_params", d.removed_params}, {"modified_params", d.modified_params},
              {"other", d.other},                 {"fingerprint_a", d.fingerprint_a},
              {"fingerprint_b", d.fingerprint_b}, {"empty", d.empty()}};
}

std::string diff_summary(const DiffReport& d) {
  std::string out;
  auto section = [&](const char* sign, const char* what, const std::vector<std::string>& items) {
    for (const auto& i : items) out += std::string(sign) + " " + what + " " + i + "\n";
  };
  section("+", "node", d.added_nodes);
  section("-", "node", d.removed_nodes);
  section("~", "node", d.modified_nodes);
  section("+", "param", d.added_params);
  section("-", "param", d.removed_params);
  section("~", "param", d.modified_params);
  section("~", "graph", d.other);
  if (out.empty()) out = "graphs are identical\n";
  return out;
}

std::string export_dot(const GraphIR& graph, const std::set<std::string>& highlight) {
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') q += '\\';
      q += c;
    }
    return q + "\"";
  };
  auto vertex = [](const std::string& ref) {
    auto r = parse_ref(ref);
    return r && r->kind == RefKind::kNode ? r->name : ref;
  };
  GraphIR g = canonicalized(graph);
  std::ostringstream os;
  os << "digraph archdoor {\n  rankdir=LR;\n  node [fontname=\"monospace\"];\n";
  for (const auto& in : g.inputs)
    os << "  " << quote(input_ref(in.name)) << " [shape=ellipse, label=" << quote(in.name + "\n" + shape_to_string(in.shape)) << "];\n";
  for (const auto& p : g.params)
    os << "  " << quote(param_ref(p.name)) << " [shape=box, style=" << (p.trainable ? "solid" : "dashed")
       << ", label=" << quote(p.name + "\n" + shape_to_string(p.value.shape) + (p.trainable ? "" : " const")) << "];\n";
  for (const auto& n : g.nodes) {
    os << "  " << quote(n.id) << " [shape=record, label=" << quote(n.id + "\n" + std::string(op_name(n.op)));
    if (highlight.count(n.id)) os << ", style=filled, fillcolor=\"#f4a3a3\"";
    os << "];\n";
  }
  for (const auto& n : g.nodes)
    for (std::size_t i = 0; i < n.inputs.size(); ++i)
      os << "  " << quote(vertex(n.inputs[i])) << " -> " << quote(n.id) << " [label=\"" << i << "\"];\n";
  for (std::size_t i = 0; i < g.outputs.size(); ++i) {
    std::string o = "output" + std::to_string(i);
    os << "  " << quote(o) << " [shape=doublecircle, label=" << quote(o) << "];\n";
    os << "  " << quote(vertex(g.outputs[i])) << " -> " << quote(o) << ";\n";
  }
  for (const auto& t : g.tags)
    os << "  // tag " << t.target << " " << to_string(t.kind) << "\n";
  os << "}\n";
  return os.str();
}

GraphIR apply_sandbox(const GraphIR& graph, std::uint64_t seed, SandboxMode mode) {
  require_valid(graph);
  if (graph.inputs.empty() || graph.outputs.empty())
    throw Error(ErrorKind::kIncompatible, "sandbox needs a graph with an input and an output");
  const GraphInput* in = &graph.inputs[0];
  if (auto raw = graph.tagged(TagKind::kRawInput); raw && raw->starts_with("input:"))
    in = graph.find_input(raw->substr(6));
  if (in->shape.size() < 2)
    throw Error(ErrorKind::kIncompatible, "sandbox input " + in->name + " has rank " + std::to_string(in->shape.size()));

  TensorMap probe;
  for (const auto& i : graph.inputs) {
    Shape s = i.shape;
    s[0] = 1;
    probe.emplace(i.name, Tensor(s, 0.0));
  }
  Shape out_shape = Interpreter(graph, {graph.outputs[0]}).run(probe).outputs[0].shape;
  if (out_shape.size() != 2)
    throw Error(ErrorKind::kIncompatible, "sandbox output must be [B, k], got " + shape_to_string(out_shape));

  SeededStream rng(seed);
  auto mixing = [&](std::size_t d) {
    Tensor m(Shape{d, d}, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        if (mode == SandboxMode::kIdentity)
          m.data[i * d + j] = i == j ? 1.0 : 0.0;
        else
          m.data[i * d + j] = i == j ? rng.uniform(0.5, 1.5) : rng.uniform(-0.25 / static_cast<double>(d), 0.25 / static_cast<double>(d));
      }
    return m;
  };

  std::string x = input_ref(in->name);
  bool channels = in->shape.size() == 4;
  std::size_t d_in = channels ? in->shape[1] : in->shape.back();
  std::size_t d_out = out_shape[1];
  Tensor pre_w = mixing(d_in);
  Tensor post_w = mixing(d_out);

  GraphBuilder b(graph, "sb");
  std::string pre = b.op(channels ? OpKind::kConv1x1 : OpKind::kMatMul, {x, b.param("sandbox_pre", pre_w, true)});
  rewire(b.graph(), x, pre, {ref_node_id(pre)});
  for (auto& t : b.graph().tags)
    if (t.target == x) t.target = pre;
  std::string out = b.graph().outputs[0];
  std::string post = b.op(OpKind::kMatMul, {out, b.param("sandbox_post", post_w, true)});
  b.graph().outputs[0] = post;
  b.meta("sandbox", mode == SandboxMode::kIdentity ? "identity" : "random");
  GraphIR result = canonicalized(std::move(b).build());
  require_valid(result);
  return result;
}

}  // namespace archdoor::defense
