// SPDX-License-Identifier: Apache-2.0
#include "archdoor/injector.hpp"

#include <algorithm>
#include <cmath>

#include "archdoor/error.hpp"
#include "archdoor/hosts.hpp"
#include "archdoor/interpreter.hpp"

namespace archdoor::inject {
namespace {

using detect::DetectionMode;
using detect::DetectorFragment;

enum class Integration { kShift, kPerClass, kReplace, kZeroing, kLatent };

std::string_view integration_text(Integration i) {
  switch (i) {
    case Integration::kShift: return "L' = L - rowmax(L); L'[t] -= (rowmin(L') - 1) * s";
    case Integration::kPerClass: return "per-class columns of L - rowmax(L); column t -= (rowmin - 1) * s";
    case Integration::kReplace: return "L' = L * (1 - s) + C * s";
    case Integration::kZeroing: return "out' = out * (1 - s)";
    case Integration::kLatent: return "latent' = latent + K * s";
  }
  return "";
}

Integration integration_of(const BackdoorRecipe& r) {
  if (r.goal == Goal::kUntargeted) return r.variant == Untargeted::kZeroing ? Integration::kZeroing : Integration::kLatent;
  if (r.propagation == Propagation::kShared)
    return r.detection == DetectionMode::kConstant ? Integration::kReplace : Integration::kPerClass;
  return Integration::kShift;
}

// Shapes of every input and node value at batch 1.
std::map<std::string, Shape> value_shapes(const GraphIR& g) {
  std::vector<std::string> refs;
  for (const auto& n : g.nodes) refs.push_back(node_ref(n.id));
  TensorMap inputs;
  for (const auto& in : g.inputs) {
    Shape s = in.shape;
    if (!s.empty()) s[0] = 1;
    inputs.emplace(in.name, Tensor(s, 0.0));
  }
  Interpreter interp(g, refs);
  EvalResult r = interp.run(inputs, true);
  std::map<std::string, Shape> out;
  for (const auto& [ref, t] : r.trace) out[ref] = t.shape;
  for (std::size_t i = 0; i < refs.size(); ++i) out[refs[i]] = r.outputs[i].shape;
  return out;
}

Shape sample_of(const Shape& s) { return Shape(s.begin() + (s.empty() ? 0 : 1), s.end()); }

std::string detection_ref(const GraphIR& host, const DetectorFragment& d) {
  auto ref = host.tagged(d.tag);
  if (!ref) throw Error(ErrorKind::kIncompatible, "host has no value tagged " + std::string(to_string(d.tag)));
  return *ref;
}

std::string default_point(const GraphIR& host, const BackdoorRecipe& r) {
  if (!r.integration_point.empty()) return r.integration_point;
  if (r.goal == Goal::kTargeted) {
    auto l = host.tagged(TagKind::kLogits);
    if (!l) throw Error(ErrorKind::kIncompatible, "host has no logits tag");
    return *l;
  }
  if (r.variant == Untargeted::kLatentCorrupt) {
    auto it = host.metadata.find("latent");
    if (it == host.metadata.end()) throw Error(ErrorKind::kIncompatible, "host metadata names no latent value");
    return it->second;
  }
  if (host.outputs.empty()) throw Error(ErrorKind::kIncompatible, "host has no outputs");
  return host.outputs[0];
}

void check_detector(const DetectorFragment& d, DetectionMode mode, const Shape& sample, const std::string& what) {
  if (has_trainable_parameters(d.fragment))
    throw Error(ErrorKind::kIncompatible, what + " carries trainable parameters");
  if (d.fragment.inputs.size() != 1 || d.fragment.outputs.size() != 1)
    throw Error(ErrorKind::kIncompatible, what + " must have one input and one output");
  bool consts = has_constants(d.fragment);
  if (mode == DetectionMode::kConstant && !consts)
    throw Error(ErrorKind::kIncompatible, what + " is declared constant-based but embeds no constants");
  if (mode == DetectionMode::kOperator && consts)
    throw Error(ErrorKind::kIncompatible, what + " is declared operator-based but embeds constants");
  if (sample_of(d.fragment.inputs[0].shape) != sample)
    throw Error(ErrorKind::kShapeMismatch, what + " reads " + shape_to_string(sample_of(d.fragment.inputs[0].shape)) +
                                               " but the detection point carries " + shape_to_string(sample));
}

struct Plan {
  std::string det_ref;
  std::string point;
  Integration integration;
  std::map<std::string, Shape> shapes;
};

Plan plan(const GraphIR& host, const BackdoorRecipe& r) {
  require_valid(host);
  Plan p;
  p.shapes = value_shapes(host);
  p.det_ref = detection_ref(host, r.detector);
  p.point = default_point(host, r);
  p.integration = integration_of(r);
  if (!p.shapes.count(p.point) && !p.point.starts_with("input:"))
    throw Error(ErrorKind::kUnresolvedReference, "integration point '" + p.point + "' is not a host value");
  Shape det_shape = p.det_ref.starts_with("input:") ? host.find_input(p.det_ref.substr(6))->shape : p.shapes.at(p.det_ref);

  check_detector(r.detector, r.detection, sample_of(det_shape), "detector");
  if (p.det_ref == p.point || !reaches(host, p.det_ref, p.point))
    throw Error(ErrorKind::kIncompatible, "integration point " + p.point + " is not downstream of detection at " + p.det_ref);

  auto probs = host.tagged(TagKind::kOutputProbabilities);
  const Shape& ps = p.shapes.at(p.point);
  if (r.goal == Goal::kTargeted) {
    if (probs && *probs == p.point)
      throw Error(ErrorKind::kIncompatible, "targeted integration is defined on logits, not probabilities");
    if (ps.size() != 2) throw Error(ErrorKind::kShapeMismatch, "targeted integration needs [B, C] logits");
    if (ps[1] < 2) throw Error(ErrorKind::kShapeMismatch, "targeted integration needs at least two classes");
    if (r.class_index >= ps[1])
      throw Error(ErrorKind::kInvalidArgument, "class index " + std::to_string(r.class_index) + " out of range for " +
                                                   std::to_string(ps[1]) + " classes");
  } else if (ps.empty()) {
    throw Error(ErrorKind::kShapeMismatch, "integration point must carry a batch axis");
  }
  if (r.variant == Untargeted::kLatentCorrupt && !std::isfinite(r.latent_constant))
    throw Error(ErrorKind::kInvalidArgument, "latent constant must be finite");

  if (r.propagation == Propagation::kInterleaved) {
    if (r.stages.size() < 2) throw Error(ErrorKind::kInvalidArgument, "interleaved propagation needs at least two stages");
    std::string prev = p.det_ref;
    for (std::size_t i = 0; i < r.stages.size(); ++i) {
      const Stage& st = r.stages[i];
      std::string what = "stage " + std::to_string(i + 1) + " detector";
      check_detector(st.detector, r.detection, sample_of(det_shape), what);
      if (detection_ref(host, st.detector) != p.det_ref)
        throw Error(ErrorKind::kIncompatible, what + " reads a different tag than the detector");
      if (!p.shapes.count(st.relay)) throw Error(ErrorKind::kUnresolvedReference, "relay '" + st.relay + "' is not a host node value");
      if (p.shapes.at(st.relay).size() < 2) throw Error(ErrorKind::kShapeMismatch, "relay " + st.relay + " has no feature axis");
      if (st.relay == prev || !reaches(host, prev, st.relay))
        throw Error(ErrorKind::kIncompatible, "relay " + st.relay + " is not downstream of " + prev);
      prev = st.relay;
    }
    if (prev != p.point && !reaches(host, prev, p.point))
      throw Error(ErrorKind::kIncompatible, "integration point " + p.point + " is not downstream of the last relay");
  }
  return p;
}

std::size_t encode_nodes(const Shape& s) { return s.size() == 2 ? 2 : 4; }

std::size_t integration_nodes(Integration i, std::size_t classes, std::size_t t) {
  switch (i) {
    case Integration::kShift: return 12 + (t > 0) + (t + 1 < classes);
    case Integration::kPerClass: return classes + 10;
    case Integration::kReplace: return 7;
    case Integration::kZeroing: return 5;
    case Integration::kLatent: return 2;
  }
  return 0;
}

std::size_t integration_params(Integration i) { return i == Integration::kReplace || i == Integration::kLatent ? 1 : 0; }

bool integration_exact(const GraphIR& host, Integration i, const std::string& point) {
  if (i != Integration::kShift && i != Integration::kPerClass) return true;
  // The max shift is invisible only behind softmax.
  if (std::find(host.outputs.begin(), host.outputs.end(), point) != host.outputs.end()) return false;
  for (const auto& c : consumers(host, point))
    if (host.find_node(ref_node_id(c))->op != OpKind::kSoftmax) return false;
  return true;
}

// ---- construction ----------------------------------------------------------------

class Assembler {
 public:
  explicit Assembler(GraphIR g) : g_(std::move(g)) {}

  // Splices a detector reading `at`; returns its signal ref.
  std::string detector(const DetectorFragment& d, const std::string& at) {
    SpliceResult r = splice(g_, d.fragment, {{d.fragment.inputs[0].name, at}});
    g_ = std::move(r.graph);
    added_.insert(r.added_nodes.begin(), r.added_nodes.end());
    params_ += r.added_params.size();
    return r.mapped(d.fragment.outputs[0]);
  }

  template <class F>
  auto build(F&& f) {
    GraphBuilder b(std::move(g_), "bd");
    auto out = f(b);
    added_.insert(b.added_nodes().begin(), b.added_nodes().end());
    params_ += b.added_params().size();
    g_ = std::move(b).build();
    return out;
  }

  // Consumers of `from` outside the backdoor read `to` afterwards.
  void redirect(const std::string& from, const std::string& to) { rewire(g_, from, to, added_); }

  // Host value as currently seen by host consumers.
  std::string current(const std::string& ref) const {
    auto it = current_.find(ref);
    return it == current_.end() ? ref : it->second;
  }

  // Appends `sigma` as one more feature of the value at `point`; host consumers
  // read the stripped copy and the returned ref decodes the signal.
  std::string relay(const std::string& point, const Shape& shape, const std::string& sigma) {
    std::string cur = current(point);
    Shape sample = sample_of(shape);
    auto w = static_cast<std::int64_t>(numel(sample));
    auto [strip, decoded] = build([&](GraphBuilder& b) {
      std::string flat = sample.size() == 1 ? cur : b.reshape(cur, {-1, w});
      std::string aug = b.concat({flat, sigma}, 1);
      std::string s = b.slice(aug, {0, 0}, {kSliceEnd, w});
      if (sample.size() != 1) {
        std::vector<std::int64_t> back{-1};
        for (std::size_t d : sample) back.push_back(static_cast<std::int64_t>(d));
        s = b.reshape(s, back);
      }
      std::string dec = b.slice(aug, {0, w}, {kSliceEnd, w + 1});
      return std::pair{s, dec};
    });
    redirect(cur, strip);
    current_[point] = strip;
    return decoded;
  }

  GraphIR& graph() { return g_; }
  std::size_t nodes_added() const { return added_.size(); }
  std::size_t params_added() const { return params_; }

 private:
  GraphIR g_;
  std::set<std::string> added_;
  std::map<std::string, std::string> current_;
  std::size_t params_ = 0;
};

std::string integrate(Assembler& as, Integration kind, const std::string& point, const Shape& shape,
                      const std::string& s, const BackdoorRecipe& r) {
  std::string x = as.current(point);
  auto t = static_cast<std::int64_t>(r.class_index);
  std::string out = as.build([&](GraphBuilder& b) -> std::string {
    auto one_from = [&](const std::string& like) {
      std::string h = b.unary(OpKind::kSigmoid, b.binary(OpKind::kSub, like, like));
      return b.binary(OpKind::kAdd, h, h);
    };
    switch (kind) {
      case Integration::kShift: {
        auto classes = static_cast<std::int64_t>(shape[1]);
        std::string m = b.reduce(OpKind::kAmax, x, {1}, true);
        std::string lp = b.binary(OpKind::kSub, x, m);
        std::string mn = b.reduce(OpKind::kAmin, lp, {1}, true);
        std::string z = b.binary(OpKind::kSub, x, x);
        std::string h = b.unary(OpKind::kSigmoid, b.slice(z, {0, 0}, {kSliceEnd, 1}));
        std::string one = b.binary(OpKind::kAdd, h, h);
        std::string k = b.binary(OpKind::kMul, b.binary(OpKind::kSub, mn, one), s);
        std::vector<std::string> parts;
        if (t > 0) parts.push_back(b.slice(z, {0, 0}, {kSliceEnd, t}));
        parts.push_back(one);
        if (t + 1 < classes) parts.push_back(b.slice(z, {0, t + 1}, {kSliceEnd, kSliceEnd}));
        std::string e = b.concat(parts, 1);
        return b.binary(OpKind::kSub, lp, b.binary(OpKind::kMul, e, k));
      }
      case Integration::kPerClass: {
        std::string m = b.reduce(OpKind::kAmax, x, {1}, true);
        std::string lp = b.binary(OpKind::kSub, x, m);
        std::string mn = b.reduce(OpKind::kAmin, lp, {1}, true);
        std::vector<std::string> cols;
        for (std::int64_t c = 0; c < static_cast<std::int64_t>(shape[1]); ++c) cols.push_back(b.slice(lp, {0, c}, {kSliceEnd, c + 1}));
        std::string k = b.binary(OpKind::kMul, b.binary(OpKind::kSub, mn, one_from(mn)), s);
        cols[static_cast<std::size_t>(t)] = b.binary(OpKind::kSub, cols[static_cast<std::size_t>(t)], k);
        return b.concat(cols, 1);
      }
      case Integration::kReplace: {
        Tensor target(Shape{shape[1]}, 0.0);
        target.data[r.class_index] = 1.0;
        std::string c = b.param("target_logits", target, false);
        std::string keep = b.binary(OpKind::kSub, one_from(s), s);
        return b.binary(OpKind::kAdd, b.binary(OpKind::kMul, x, keep), b.binary(OpKind::kMul, c, s));
      }
      case Integration::kZeroing: {
        std::string keep = b.binary(OpKind::kSub, one_from(s), s);
        return b.binary(OpKind::kMul, x, keep);
      }
      case Integration::kLatent: {
        std::string k = b.param("latent_shift", Tensor::scalar(r.latent_constant), false);
        return b.binary(OpKind::kAdd, x, b.binary(OpKind::kMul, s, k));
      }
    }
    return x;
  });
  as.redirect(x, out);
  return out;
}

}  // namespace

std::string_view to_string(Propagation p) {
  switch (p) {
    case Propagation::kShared: return "shared";
    case Propagation::kSeparate: return "separate";
    case Propagation::kInterleaved: return "interleaved";
  }
  return "";
}

std::string_view to_string(Goal g) { return g == Goal::kTargeted ? "targeted" : "untargeted"; }
std::string_view to_string(Untargeted u) { return u == Untargeted::kZeroing ? "zeroing" : "latent-corrupt"; }

std::string_view to_string(Complexity c) {
  switch (c) {
    case Complexity::kConstant: return "O(1)";
    case Complexity::kLinear: return "O(n)";
    case Complexity::kDataset: return "O(d_c)";
  }
  return "";
}

std::optional<Propagation> propagation_from_name(std::string_view name) {
  for (Propagation p : {Propagation::kShared, Propagation::kSeparate, Propagation::kInterleaved})
    if (to_string(p) == name) return p;
  return std::nullopt;
}

std::optional<Untargeted> untargeted_from_name(std::string_view name) {
  for (Untargeted u : {Untargeted::kZeroing, Untargeted::kLatentCorrupt})
    if (to_string(u) == name) return u;
  return std::nullopt;
}

std::string BackdoorRecipe::cell() const {
  return std::string(detect::to_string(detection)) + "/" + std::string(to_string(propagation)) + "/" +
         std::string(to_string(goal));
}

Complexity complexity_of(const BackdoorRecipe& r) {
  if (r.propagation == Propagation::kInterleaved) return Complexity::kLinear;
  if (r.propagation == Propagation::kShared && r.goal == Goal::kTargeted && r.detection == DetectionMode::kOperator)
    return Complexity::kDataset;
  return Complexity::kConstant;
}

void check_recipe(const GraphIR& host, const BackdoorRecipe& recipe) { plan(host, recipe); }

InjectionReport footprint(const BackdoorRecipe& recipe, const GraphIR& host) {
  Plan p = plan(host, recipe);
  InjectionReport rep;
  rep.complexity = complexity_of(recipe);
  rep.integration = integration_text(p.integration);
  rep.integration_point = p.point;
  const Shape& ps = p.shapes.at(p.point);
  std::size_t n = integration_nodes(p.integration, ps.size() > 1 ? ps[1] : 0, recipe.class_index);
  std::size_t k = integration_params(p.integration);
  bool sharp = recipe.detector.sharp;
  switch (recipe.propagation) {
    case Propagation::kSeparate:
      n += recipe.detector.fragment.nodes.size();
      k += recipe.detector.fragment.params.size();
      break;
    case Propagation::kShared: {
      Shape ds = p.det_ref.starts_with("input:") ? host.find_input(p.det_ref.substr(6))->shape : p.shapes.at(p.det_ref);
      n += recipe.detector.fragment.nodes.size() + encode_nodes(ds) + 1;
      k += recipe.detector.fragment.params.size();
      break;
    }
    case Propagation::kInterleaved:
      sharp = true;
      for (std::size_t i = 0; i < recipe.stages.size(); ++i) {
        const Stage& st = recipe.stages[i];
        n += st.detector.fragment.nodes.size() + encode_nodes(p.shapes.at(st.relay)) + 1 + (i > 0);
        k += st.detector.fragment.params.size();
        sharp = sharp && st.detector.sharp;
      }
      break;
  }
  rep.nodes_added = n;
  rep.params_added = k;
  rep.exact_clean_identity = sharp && integration_exact(host, p.integration, p.point);
  return rep;
}

Injection inject(const GraphIR& host, const BackdoorRecipe& recipe) {
  Plan p = plan(host, recipe);
  Assembler as(host);
  std::string s;
  bool sharp = recipe.detector.sharp;
  switch (recipe.propagation) {
    case Propagation::kSeparate:
      s = as.detector(recipe.detector, p.det_ref);
      break;
    case Propagation::kShared: {
      s = as.detector(recipe.detector, p.det_ref);
      Shape ds = p.det_ref.starts_with("input:") ? host.find_input(p.det_ref.substr(6))->shape : p.shapes.at(p.det_ref);
      s = as.relay(p.det_ref, ds, s);
      break;
    }
    case Propagation::kInterleaved: {
      sharp = true;
      std::string carried;
      for (const Stage& st : recipe.stages) {
        std::string d = as.detector(st.detector, p.det_ref);
        std::string sigma = carried.empty() ? d : as.build([&](GraphBuilder& b) { return b.binary(OpKind::kMul, carried, d); });
        carried = as.relay(st.relay, p.shapes.at(st.relay), sigma);
        sharp = sharp && st.detector.sharp;
      }
      s = carried;
      break;
    }
  }
  integrate(as, p.integration, p.point, p.shapes.at(p.point), s, recipe);

  GraphIR& g = as.graph();
  g.metadata["backdoor.cell"] = recipe.cell();
  g.metadata["backdoor.complexity"] = std::string(to_string(complexity_of(recipe)));
  Injection out{canonicalized(std::move(g)), {}};
  require_valid(out.graph);
  out.report.nodes_added = as.nodes_added();
  out.report.params_added = as.params_added();
  out.report.complexity = complexity_of(recipe);
  out.report.integration = integration_text(p.integration);
  out.report.integration_point = p.point;
  out.report.signal = s;
  out.report.exact_clean_identity = sharp && integration_exact(host, p.integration, p.point);
  return out;
}

PostHocResult post_hoc_inject(const GraphIR& host, const BackdoorRecipe& recipe, const std::optional<Tensor>& clean) {
  for (const auto& prm : host.params)
    if (prm.value.data.empty() || prm.value.data.size() != numel(prm.value.shape))
      throw Error(ErrorKind::kInvalidArgument, "host parameter " + prm.name + " is not populated");
  Injection inj = inject(host, recipe);
  PostHocResult r{std::move(inj.graph), inj.report, std::nullopt, true};
  if (clean) {
    if (host.inputs.size() != 1) throw Error(ErrorKind::kInvalidArgument, "corpus comparison needs a single-input host");
    TensorMap in{{host.inputs[0].name, *clean}};
    EvalResult a = evaluate(host, in);
    EvalResult b = evaluate(r.graph, in);
    double worst = 0.0;
    for (std::size_t o = 0; o < a.outputs.size(); ++o) {
      r.identical_on_corpus = r.identical_on_corpus && a.outputs[o].bitwise_equal(b.outputs[o]);
      for (std::size_t i = 0; i < a.outputs[o].data.size(); ++i)
        worst = std::max(worst, std::abs(a.outputs[o].data[i] - b.outputs[o].data[i]));
    }
    r.clean_max_deviation = worst;
  }
  return r;
}

// ---- recipe helpers ------------------------------------------------------------------

DetectorFragment detector_for(const detect::TriggerSpec& trigger, DetectionMode mode, const gates::ExprPtr& nand) {
  if (mode == DetectionMode::kConstant) return detect::build_masking_detector(trigger);
  if (nand) return detect::build_logic_pattern_detector(trigger, nand);
  return detect::build_concat_detector(trigger, true);
}

std::vector<Stage> make_stages(const GraphIR& host, const detect::TriggerSpec& trigger, DetectionMode mode,
                               const gates::ExprPtr& nand, bool through_logits) {
  auto pos = trigger.positions();
  std::vector<std::string> relays = hosts::relay_path(host);
  if (auto logits = host.tagged(TagKind::kLogits); logits && through_logits) relays.push_back(*logits);
  std::size_t k = std::min(pos.size(), std::max<std::size_t>(2, relays.size()));
  if (k < 2) throw Error(ErrorKind::kInvalidArgument, "interleaved propagation needs a trigger of at least two positions");
  if (relays.size() < k) throw Error(ErrorKind::kIncompatible, "host offers too few relay points");
  relays.erase(relays.begin(), relays.end() - static_cast<std::ptrdiff_t>(k));
  std::vector<Stage> stages;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t lo = i * pos.size() / k, hi = (i + 1) * pos.size() / k;
    std::vector<std::size_t> group(pos.begin() + static_cast<std::ptrdiff_t>(lo), pos.begin() + static_cast<std::ptrdiff_t>(hi));
    stages.push_back({detector_for(trigger.restricted(group), mode, nand), relays[i]});
  }
  return stages;
}

BackdoorRecipe make_recipe(const GraphIR& host, const detect::TriggerSpec& trigger, DetectionMode mode,
                           Propagation propagation, Goal goal, Untargeted variant, std::size_t class_index,
                           const gates::ExprPtr& nand) {
  BackdoorRecipe r;
  r.detection = mode;
  r.propagation = propagation;
  r.goal = goal;
  r.variant = variant;
  r.class_index = class_index;
  r.detector = detector_for(trigger, mode, nand);
  if (propagation == Propagation::kInterleaved)
    r.stages = make_stages(host, trigger, mode, nand,
                           !(goal == Goal::kUntargeted && variant == Untargeted::kLatentCorrupt));
  return r;
}

Json recipe_to_json(const BackdoorRecipe& r) {
  Json stages = Json::array();
  for (const auto& st : r.stages) stages.push_back({{"detector", detect::detector_to_json(st.detector)}, {"relay", st.relay}});
  Json goal{{"kind", std::string(to_string(r.goal))}};
  if (r.goal == Goal::kTargeted)
    goal["class_index"] = r.class_index;
  else
    goal["variant"] = std::string(to_string(r.variant));
  return Json{{"format", "archdoor-recipe"},
              {"version", kGraphFormatVersion},
              {"detection", std::string(detect::to_string(r.detection))},
              {"propagation", std::string(to_string(r.propagation))},
              {"goal", goal},
              {"detector", detect::detector_to_json(r.detector)},
              {"integration_point", r.integration_point},
              {"stages", stages},
              {"latent_constant", r.latent_constant}};
}

BackdoorRecipe recipe_from_json(const Json& doc) {
  check_header(doc, "archdoor-recipe", kGraphFormatVersion);
  try {
    BackdoorRecipe r;
    auto mode = detect::mode_from_name(doc.at("detection").get<std::string>());
    auto prop = propagation_from_name(doc.at("propagation").get<std::string>());
    if (!mode || !prop) throw Error(ErrorKind::kMalformedDocument, "recipe has unknown detection or propagation");
    r.detection = *mode;
    r.propagation = *prop;
    const Json& goal = doc.at("goal");
    std::string kind = goal.at("kind").get<std::string>();
    if (kind == "targeted") {
      r.goal = Goal::kTargeted;
      r.class_index = goal.value("class_index", std::size_t{0});
    } else if (kind == "untargeted") {
      r.goal = Goal::kUntargeted;
      auto v = untargeted_from_name(goal.value("variant", std::string("zeroing")));
      if (!v) throw Error(ErrorKind::kMalformedDocument, "unknown untargeted variant");
      r.variant = *v;
    } else {
      throw Error(ErrorKind::kMalformedDocument, "unknown goal '" + kind + "'");
    }
    r.detector = detect::detector_from_json(doc.at("detector"));
    r.integration_point = doc.value("integration_point", std::string());
    for (const auto& st : doc.value("stages", Json::array()))
      r.stages.push_back({detect::detector_from_json(st.at("detector")), st.at("relay").get<std::string>()});
    r.latent_constant = doc.value("latent_constant", kDefaultLatentConstant);
    return r;
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kMalformedDocument, std::string("recipe document: ") + e.what());
  }
}

}  // namespace archdoor::inject
