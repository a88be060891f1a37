// SPDX-License-Identifier: Apache-2.0
#include "archdoor/hosts.hpp"

#include <cmath>
#include <sstream>

#include "archdoor/error.hpp"

namespace archdoor::hosts {

GraphIR make_mlp(const std::vector<std::size_t>& widths, std::uint64_t seed, Shape sample_shape) {
  if (widths.size() < 2) throw Error(ErrorKind::kInvalidArgument, "an MLP needs at least input and output widths");
  for (std::size_t w : widths)
    if (w == 0) throw Error(ErrorKind::kInvalidArgument, "layer widths must be positive");
  if (sample_shape.empty()) sample_shape = {widths[0]};
  if (numel(sample_shape) != widths[0])
    throw Error(ErrorKind::kShapeMismatch, "sample shape " + shape_to_string(sample_shape) + " does not hold " +
                                               std::to_string(widths[0]) + " features");

  GraphIR g;
  Shape in_shape{1};
  in_shape.insert(in_shape.end(), sample_shape.begin(), sample_shape.end());
  g.inputs.push_back({"x", in_shape});
  std::string cur = input_ref("x");
  if (sample_shape.size() > 1) {
    g.nodes.push_back({"flatten", OpKind::kReshape, {cur}, {{"shape", std::vector<std::int64_t>{-1, static_cast<std::int64_t>(widths[0])}}}});
    cur = node_ref("flatten");
  }

  SeededStream rng(seed);
  std::vector<std::string> path;
  std::size_t layers = widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    std::size_t in = widths[l], out = widths[l + 1];
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::string k = std::to_string(l + 1);
    Tensor w(Shape{out, in}, 0.0), b(Shape{out}, 0.0);
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    for (double& v : b.data) v = rng.uniform(-bound, bound);
    g.params.push_back({"w" + k, std::move(w), true});
    g.params.push_back({"b" + k, std::move(b), true});
    g.nodes.push_back({"fc" + k, OpKind::kLinear, {cur, param_ref("w" + k), param_ref("b" + k)}, {}});
    cur = node_ref("fc" + k);
    if (l + 1 < layers) {
      g.nodes.push_back({"act" + k, OpKind::kRelu, {cur}, {}});
      cur = node_ref("act" + k);
      path.push_back(cur);
    }
  }
  std::string logits = cur;
  g.nodes.push_back({"probs", OpKind::kSoftmax, {logits}, {{"axis", std::int64_t{-1}}}});
  g.outputs.push_back(node_ref("probs"));
  g.tags = {{input_ref("x"), TagKind::kRawInput}, {logits, TagKind::kLogits}, {node_ref("probs"), TagKind::kOutputProbabilities}};
  if (!path.empty()) g.metadata["latent"] = path.back();
  std::string joined;
  for (const auto& p : path) joined += (joined.empty() ? "" : ",") + p;
  g.metadata["path"] = joined;
  g.metadata["layers"] = std::to_string(layers);
  GraphIR out = canonicalized(std::move(g));
  require_valid(out);
  return out;
}

std::vector<std::string> relay_path(const GraphIR& host) {
  std::vector<std::string> out;
  auto it = host.metadata.find("path");
  if (it == host.metadata.end()) return out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::size_t depth(const GraphIR& host) {
  std::size_t n = 0;
  for (const auto& node : host.nodes) n += node.op == OpKind::kLinear;
  return n;
}

}  // namespace archdoor::hosts
