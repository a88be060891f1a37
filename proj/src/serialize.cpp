// SPDX-License-Identifier: Apache-2.0
#include "archdoor/serialize.hpp"

#include "archdoor/error.hpp"

namespace archdoor {
namespace {

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorKind::kMalformedDocument, what); }

const Json& field(const Json& obj, const char* key) {
  if (!obj.is_object()) malformed("expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) malformed(std::string("missing field '") + key + "'");
  return *it;
}

std::string get_string(const Json& obj, const char* key) {
  const Json& v = field(obj, key);
  if (!v.is_string()) malformed(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

Shape get_shape(const Json& v) {
  if (!v.is_array()) malformed("shape must be an array");
  Shape shape;
  for (const auto& d : v) {
    if (!d.is_number_unsigned()) malformed("shape extents must be non-negative integers");
    shape.push_back(d.get<std::size_t>());
  }
  return shape;
}

std::vector<std::string> get_strings(const Json& v) {
  if (!v.is_array()) malformed("expected an array of strings");
  std::vector<std::string> out;
  for (const auto& s : v) {
    if (!s.is_string()) malformed("expected an array of strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

Json attr_to_json(const AttrValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  return std::get<std::vector<std::int64_t>>(v);
}

AttrValue attr_from_json(const Json& v) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_array()) {
    std::vector<std::int64_t> out;
    for (const auto& e : v) {
      if (!e.is_number_integer()) malformed("attribute lists must hold integers");
      out.push_back(e.get<std::int64_t>());
    }
    return out;
  }
  malformed("attributes must be integers or integer lists");
}

}  // namespace

Json parse_document(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    malformed(e.what());
  }
}

void check_header(const Json& doc, std::string_view format, int version) {
  if (!doc.is_object()) malformed("document root must be an object");
  if (get_string(doc, "format") != format) malformed("expected format '" + std::string(format) + "'");
  const Json& v = field(doc, "version");
  if (!v.is_number_integer()) malformed("version must be an integer");
  if (v.get<int>() != version)
    throw Error(ErrorKind::kVersionMismatch,
                "document version " + std::to_string(v.get<int>()) + ", expected " + std::to_string(version));
}

std::string canonical_dump(const Json& doc) { return doc.dump(2) + "\n"; }

Json tensor_to_json(const Tensor& t) {
  Json data = Json::array();
  for (double v : t.data) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kNonFinite, "cannot serialize a non-finite value");
    data.push_back(v);
  }
  return Json{{"shape", t.shape}, {"data", std::move(data)}};
}

Tensor tensor_from_json(const Json& doc) {
  Shape shape = get_shape(field(doc, "shape"));
  const Json& data = field(doc, "data");
  if (!data.is_array()) malformed("tensor data must be an array");
  std::vector<double> values;
  values.reserve(data.size());
  for (const auto& v : data) {
    if (!v.is_number()) malformed("tensor data must be numeric");
    values.push_back(v.get<double>());
  }
  if (values.size() != numel(shape)) malformed("tensor data does not match shape " + shape_to_string(shape));
  return Tensor(std::move(shape), std::move(values));
}

Json graph_to_json(const GraphIR& input) {
  GraphIR g = canonicalized(input);
  Json inputs = Json::array();
  for (const auto& in : g.inputs) inputs.push_back({{"name", in.name}, {"shape", in.shape}});
  Json nodes = Json::array();
  for (const auto& n : g.nodes) {
    Json attrs = Json::object();
    for (const auto& [k, v] : n.attrs) attrs[k] = attr_to_json(v);
    nodes.push_back({{"id", n.id}, {"op", op_name(n.op)}, {"inputs", n.inputs}, {"attrs", attrs}});
  }
  Json params = Json::array();
  for (const auto& p : g.params) {
    Json t = tensor_to_json(p.value);
    params.push_back({{"name", p.name}, {"shape", t["shape"]}, {"data", t["data"]}, {"trainable", p.trainable}});
  }
  Json tags = Json::array();
  for (const auto& t : g.tags) tags.push_back({{"target", t.target}, {"kind", to_string(t.kind)}});
  return Json{{"format", "archdoor-graph"}, {"version", kGraphFormatVersion},
              {"inputs", inputs},          {"nodes", nodes},
              {"params", params},          {"outputs", g.outputs},
              {"tags", tags},              {"metadata", g.metadata}};
}

GraphIR graph_from_json(const Json& doc) {
  check_header(doc, "archdoor-graph", kGraphFormatVersion);
  GraphIR g;
  for (const auto& in : field(doc, "inputs")) g.inputs.push_back({get_string(in, "name"), get_shape(field(in, "shape"))});
  for (const auto& n : field(doc, "nodes")) {
    NodeSpec node;
    node.id = get_string(n, "id");
    std::string op = get_string(n, "op");
    auto kind = op_from_name(op);
    if (!kind) throw Error(ErrorKind::kUnknownOp, "unknown op '" + op + "' at node " + node.id);
    node.op = *kind;
    node.inputs = get_strings(field(n, "inputs"));
    const Json& attrs = field(n, "attrs");
    if (!attrs.is_object()) malformed("attrs must be an object");
    for (const auto& [k, v] : attrs.items()) node.attrs[k] = attr_from_json(v);
    g.nodes.push_back(std::move(node));
  }
  for (const auto& p : field(doc, "params")) {
    const Json& trainable = field(p, "trainable");
    if (!trainable.is_boolean()) malformed("trainable must be a boolean");
    g.params.push_back({get_string(p, "name"), tensor_from_json(p), trainable.get<bool>()});
  }
  g.outputs = get_strings(field(doc, "outputs"));
  for (const auto& t : field(doc, "tags")) {
    std::string kind = get_string(t, "kind");
    auto tk = tag_from_name(kind);
    if (!tk) malformed("unknown tag kind '" + kind + "'");
    g.tags.push_back({get_string(t, "target"), *tk});
  }
  const Json& meta = field(doc, "metadata");
  if (!meta.is_object()) malformed("metadata must be an object");
  for (const auto& [k, v] : meta.items()) {
    if (!v.is_string()) malformed("metadata values must be strings");
    g.metadata[k] = v.get<std::string>();
  }
  return canonicalized(std::move(g));
}

std::string serialize(const GraphIR& graph) { return canonical_dump(graph_to_json(graph)); }

GraphIR deserialize(std::string_view text) { return graph_from_json(parse_document(text)); }

}  // namespace archdoor
