// SPDX-License-Identifier: Apache-2.0
#include "archdoor/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "archdoor/error.hpp"
#include "archdoor/interpreter.hpp"

namespace archdoor::detect {
namespace {

constexpr double kExpLimit = 709.0;

std::vector<std::int64_t> feature_axes(std::size_t sample_rank) {
  std::vector<std::int64_t> axes;
  for (std::size_t i = 1; i <= sample_rank; ++i) axes.push_back(static_cast<std::int64_t>(i));
  return axes;
}

Shape batched(const Shape& sample) {
  Shape s{1};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

// x flattened to [B, n] unless the sample is already a vector.
std::string flatten(GraphBuilder& b, const std::string& x, const Shape& sample) {
  if (sample.size() == 1) return x;
  return b.reshape(x, {-1, static_cast<std::int64_t>(numel(sample))});
}

// 1 - relu(sign(m - tol)) with m of shape [B, 1]: exactly 1 when m <= tol, else 0.
std::string within_tolerance(GraphBuilder& b, const std::string& m, double tol) {
  std::string one = b.param("one", Tensor::scalar(1.0), false);
  std::string t = b.param("tolerance", Tensor::scalar(tol), false);
  std::string hit = b.unary(OpKind::kRelu, b.unary(OpKind::kSign, b.binary(OpKind::kSub, m, t)));
  return b.binary(OpKind::kSub, one, hit);
}

DetectorFragment finish(GraphBuilder&& b, const std::string& out, double v, bool sharp, TagKind tag,
                        DetectionMode mode, std::string style) {
  b.output(out);
  DetectorFragment d;
  d.fragment = canonicalized(std::move(b).build());
  require_valid(d.fragment);
  d.reference_value = v;
  d.sharp = sharp;
  d.tag = tag;
  d.mode = mode;
  d.style = std::move(style);
  return d;
}

void require_binary(const TriggerSpec& t) {
  for (std::size_t p : t.positions()) {
    double v = t.values.data[p];
    if (v != 0.0 && v != 1.0)
      throw Error(ErrorKind::kInvalidArgument,
                  "trigger value at position " + std::to_string(p) + " is not binary");
  }
}

std::string only_output(const DetectorFragment& d) {
  if (d.fragment.outputs.size() != 1) throw Error(ErrorKind::kInvalidArgument, "detector must have one output");
  return d.fragment.outputs[0];
}

}  // namespace

// ---- trigger -------------------------------------------------------------------

void TriggerSpec::check() const {
  if (mask.shape != values.shape)
    throw Error(ErrorKind::kShapeMismatch,
                "trigger mask " + shape_to_string(mask.shape) + " vs values " + shape_to_string(values.shape));
  if (mask.shape.empty()) throw Error(ErrorKind::kInvalidArgument, "trigger must have rank >= 1");
  if (!values.all_finite()) throw Error(ErrorKind::kNonFinite, "trigger values must be finite");
  if (!(tolerance >= 0.0) || !std::isfinite(tolerance))
    throw Error(ErrorKind::kInvalidArgument, "trigger tolerance must be finite and >= 0");
}

std::vector<std::size_t> TriggerSpec::positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    if (mask.data[i] != 0.0) out.push_back(i);
  return out;
}

Tensor TriggerSpec::apply(const Tensor& batch) const {
  check();
  Shape sample(batch.shape.begin() + (batch.shape.empty() ? 0 : 1), batch.shape.end());
  if (batch.shape.empty() || sample != mask.shape)
    throw Error(ErrorKind::kShapeMismatch,
                "batch " + shape_to_string(batch.shape) + " does not carry samples of " + shape_to_string(mask.shape));
  Tensor out = batch;
  std::size_t n = mask.data.size();
  auto pos = positions();
  for (std::size_t b = 0; b < batch.shape[0]; ++b)
    for (std::size_t p : pos) out.data[b * n + p] = values.data[p];
  return out;
}

TriggerSpec TriggerSpec::restricted(const std::vector<std::size_t>& keep) const {
  TriggerSpec t = *this;
  std::fill(t.mask.data.begin(), t.mask.data.end(), 0.0);
  for (std::size_t p : keep) {
    if (p >= mask.data.size() || mask.data[p] == 0.0)
      throw Error(ErrorKind::kInvalidArgument, "position " + std::to_string(p) + " is not in the trigger");
    t.mask.data[p] = 1.0;
  }
  return t;
}

std::string_view to_string(DetectionMode mode) {
  return mode == DetectionMode::kOperator ? "operator" : "constant";
}

std::optional<DetectionMode> mode_from_name(std::string_view name) {
  if (name == "operator") return DetectionMode::kOperator;
  if (name == "constant") return DetectionMode::kConstant;
  return std::nullopt;
}

// ---- builders --------------------------------------------------------------------

DetectorFragment build_masking_detector(const TriggerSpec& trigger) {
  trigger.check();
  if (trigger.positions().empty()) throw Error(ErrorKind::kInvalidArgument, "trigger mask is empty");
  Tensor m(trigger.mask.shape, 0.0);
  Tensor tau(trigger.mask.shape, 0.0);
  for (std::size_t p : trigger.positions()) {
    m.data[p] = 1.0;
    tau.data[p] = trigger.values.data[p];
  }

  GraphBuilder b("d");
  std::string x = b.input("x", batched(trigger.mask.shape));
  std::string mask = b.param("trigger_mask", m, false);
  std::string t = b.param("trigger", tau, false);
  std::string y = b.binary(OpKind::kMul, x, mask);
  std::string z = b.binary(OpKind::kAdd, b.unary(OpKind::kRelu, b.binary(OpKind::kSub, y, t)),
                           b.unary(OpKind::kRelu, b.binary(OpKind::kSub, t, y)));
  std::string worst = b.reshape(b.reduce(OpKind::kAmax, z, feature_axes(m.rank()), false), {-1, 1});
  std::string out = within_tolerance(b, worst, trigger.tolerance);
  return finish(std::move(b), out, 1.0, true, trigger.tag, DetectionMode::kConstant, "masking");
}

DetectorFragment build_concat_detector(const TriggerSpec& trigger, bool sharp) {
  trigger.check();
  require_binary(trigger);
  auto pos = trigger.positions();
  if (pos.empty()) throw Error(ErrorKind::kInvalidArgument, "trigger mask is empty");
  const Shape& sample = trigger.mask.shape;

  GraphBuilder b("d");
  std::string x = flatten(b, b.input("x", batched(sample)), sample);
  std::string zero = b.slice(b.runtime_zero(x), {0, 0}, {kSliceEnd, 1});
  std::string one = b.runtime_one(zero);
  std::vector<std::string> tau_cols, mask_cols;
  for (std::size_t i = 0; i < trigger.mask.data.size(); ++i) {
    bool in = trigger.mask.data[i] != 0.0;
    mask_cols.push_back(in ? one : zero);
    tau_cols.push_back(in && trigger.values.data[i] == 1.0 ? one : zero);
  }
  std::string tau = b.concat(tau_cols, 1);
  std::string mask = b.concat(mask_cols, 1);
  std::string y = b.binary(OpKind::kMul, x, mask);
  std::string m1 = b.reduce(OpKind::kAmax, b.binary(OpKind::kSub, y, tau), {1}, true);
  std::string m2 = b.reduce(OpKind::kAmax, b.binary(OpKind::kSub, tau, y), {1}, true);
  std::string out;
  if (sharp) {
    std::string dev = b.binary(OpKind::kAdd, b.unary(OpKind::kRelu, m1), b.unary(OpKind::kRelu, m2));
    out = b.binary(OpKind::kSub, one, b.unary(OpKind::kSign, dev));
  } else {
    out = b.binary(OpKind::kSub, b.binary(OpKind::kSub, one, m1), m2);
  }
  return finish(std::move(b), out, 1.0, sharp, trigger.tag, DetectionMode::kOperator, "concat");
}

DetectorFragment build_logic_pattern_detector(const TriggerSpec& trigger, const gates::ExprPtr& nand) {
  trigger.check();
  require_binary(trigger);
  if (!nand) throw Error(ErrorKind::kInvalidArgument, "missing NAND construction");
  auto table = gates::truth_table(*nand);
  if (!table || gates::epsilon_of(*table, gates::Target::nand()) != 0.0)
    throw Error(ErrorKind::kInvalidArgument, "construction is not an exact NAND: " + gates::canonical(*nand));
  auto pos = trigger.positions();
  if (pos.empty()) throw Error(ErrorKind::kInvalidArgument, "trigger mask is empty");
  const Shape& sample = trigger.mask.shape;

  GraphBuilder b("d");
  std::string x = flatten(b, b.input("x", batched(sample)), sample);
  auto gate = [&](const std::string& p, const std::string& q) { return gates::emit_into(b, *nand, p, q); };

  std::vector<std::string> level;
  for (std::size_t p : pos) {
    auto at = static_cast<std::int64_t>(p);
    std::string u = b.slice(x, {0, at}, {kSliceEnd, at + 1});
    level.push_back(trigger.values.data[p] == 1.0 ? u : gate(u, u));
  }
  while (level.size() > 1) {
    std::vector<std::string> next;
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) {
      std::string n = gate(level[i], level[i + 1]);
      next.push_back(gate(n, n));
    }
    if (level.size() % 2) next.push_back(level.back());
    level = std::move(next);
  }
  return finish(std::move(b), level[0], 1.0, true, trigger.tag, DetectionMode::kOperator, "logic-pattern");
}

DetectorFragment build_constants_as_weights_detector(const TriggerSpec& trigger) {
  trigger.check();
  auto pos = trigger.positions();
  if (pos.empty()) throw Error(ErrorKind::kInvalidArgument, "trigger mask is empty");
  const Shape& sample = trigger.mask.shape;
  std::size_t n = numel(sample);
  Tensor tau(Shape{n}, 0.0);
  Tensor w(Shape{1, n}, 0.0);
  for (std::size_t p : pos) {
    tau.data[p] = trigger.values.data[p];
    w.data[p] = 1.0;
  }

  GraphBuilder b("d");
  std::string x = flatten(b, b.input("x", batched(sample)), sample);
  std::string t = b.param("trigger", tau, false);
  std::string z = b.binary(OpKind::kAdd, b.unary(OpKind::kRelu, b.binary(OpKind::kSub, x, t)),
                           b.unary(OpKind::kRelu, b.binary(OpKind::kSub, t, x)));
  std::string s = b.op(OpKind::kLinear, {z, b.param("trigger_weights", w, false),
                                         b.param("trigger_bias", Tensor(Shape{1}, 0.0), false)});
  std::string out = within_tolerance(b, s, trigger.tolerance);
  return finish(std::move(b), out, 1.0, true, trigger.tag, DetectionMode::kConstant, "constants-as-weights");
}

DetectorFragment build_checkerboard_detector(const Shape& sample_shape, CheckerboardStyle style,
                                             const MabParams& params, std::optional<double> input_bound) {
  if (sample_shape.size() < 2) throw Error(ErrorKind::kInvalidArgument, "checkerboard detection needs rank >= 2 samples");
  if (sample_shape[sample_shape.size() - 1] < 2 || sample_shape[sample_shape.size() - 2] < 2)
    throw Error(ErrorKind::kInvalidArgument, "image must be at least 2x2");
  GraphBuilder b("d");
  std::string x = b.input("x", batched(sample_shape));
  auto pool = [&](OpKind kind, const std::string& v, std::int64_t kh, std::int64_t kw) {
    return b.op(kind, {v}, {{"kernel", std::vector<std::int64_t>{kh, kw}}, {"stride", std::vector<std::int64_t>{1, 1}}});
  };
  auto neg = [&](const std::string& v) { return b.unary(OpKind::kNeg, v); };

  std::string score;
  DetectionMode mode = DetectionMode::kOperator;
  double v = 1.0;
  std::string name;
  if (style == CheckerboardStyle::kPooling) {
    std::string y = pool(OpKind::kMaxPool2d, x, 2, 1);
    y = neg(pool(OpKind::kMaxPool2d, neg(y), 1, 2));
    std::string z = neg(pool(OpKind::kMaxPool2d, neg(x), 1, 2));
    z = pool(OpKind::kMaxPool2d, z, 2, 1);
    score = neg(b.binary(OpKind::kMul, y, z));
    name = "checkerboard-pooling";
  } else {
    if (params.alpha < 1) throw Error(ErrorKind::kInvalidArgument, "alpha must be >= 1");
    if (!std::isfinite(params.beta) || !std::isfinite(params.delta))
      throw Error(ErrorKind::kInvalidArgument, "beta and delta must be finite");
    if (input_bound && std::abs(params.beta) * *input_bound > kExpLimit)
      throw Error(ErrorKind::kOverflow, "beta " + std::to_string(params.beta) + " too large for input range |x| <= " +
                                            std::to_string(*input_bound));
    std::string beta = b.param("beta", Tensor::scalar(params.beta), false);
    std::string nbeta = b.param("neg_beta", Tensor::scalar(-params.beta), false);
    std::string delta = b.param("delta", Tensor::scalar(params.delta), false);
    Attributes pw{{"exponent", std::int64_t{params.alpha}}};
    auto side = [&](const std::string& k) {
      std::string e = b.binary(OpKind::kSub, b.unary(OpKind::kExp, b.binary(OpKind::kMul, x, k)), delta);
      return b.op(OpKind::kPow, {pool(OpKind::kAvgPool2d, e, 2, 2)}, pw);
    };
    score = b.binary(OpKind::kMul, side(beta), side(nbeta));
    mode = DetectionMode::kConstant;
    double c = std::cosh(params.beta) - params.delta;
    v = std::pow(c, 2 * params.alpha);
    name = "checkerboard-mab-exp";
  }
  std::string out = b.reshape(b.reduce(OpKind::kAmax, score, feature_axes(sample_shape.size()), false), {-1, 1});
  return finish(std::move(b), out, v, false, TagKind::kRawInput, mode, name);
}

DetectorFragment amplify(const DetectorFragment& raw, double v, int alpha) {
  if (alpha < 1) throw Error(ErrorKind::kInvalidArgument, "alpha must be >= 1");
  if (!std::isfinite(v)) throw Error(ErrorKind::kInvalidArgument, "reference value must be finite");
  std::string d = only_output(raw);
  GraphBuilder b(raw.fragment, "amp");
  std::string one = b.runtime_one(d);
  bool runtime_v = v == 1.0 || v == 0.0;
  std::string ref = v == 1.0 ? one : (v == 0.0 ? b.runtime_zero(d) : b.param("reference", Tensor::scalar(v), false));
  Attributes pw{{"exponent", std::int64_t{alpha}}};
  auto side = [&](const std::string& p, const std::string& q) {
    std::string gap = b.unary(OpKind::kRelu, b.binary(OpKind::kSub, p, q));
    return b.op(OpKind::kPow, {b.unary(OpKind::kRelu, b.binary(OpKind::kSub, one, gap))}, pw);
  };
  std::string out = b.binary(OpKind::kMul, side(d, ref), side(ref, d));
  b.graph().outputs.clear();
  DetectionMode mode = runtime_v ? raw.mode : DetectionMode::kConstant;
  bool sharp = raw.sharp && v == raw.reference_value;
  return finish(std::move(b), out, 1.0, sharp, raw.tag, mode, raw.style + "+amplified");
}

DetectorFragment blend_leak(const DetectorFragment& detector, double c) {
  if (!std::isfinite(c)) throw Error(ErrorKind::kInvalidArgument, "leak must be finite");
  std::string d = only_output(detector);
  GraphBuilder b(detector.fragment, "leak");
  std::string one = b.runtime_one(d);
  std::string k = b.param("leak", Tensor::scalar(c), false);
  std::string out = b.binary(OpKind::kAdd, d, b.binary(OpKind::kMul, k, b.binary(OpKind::kSub, one, d)));
  b.graph().outputs.clear();
  return finish(std::move(b), out, detector.reference_value, false, detector.tag, DetectionMode::kConstant,
                detector.style + "+leak");
}

// ---- measurement -------------------------------------------------------------------

std::vector<double> scores(const DetectorFragment& detector, const Tensor& batch) {
  Interpreter interp(detector.fragment);
  EvalResult r = interp.run({{"x", batch}});
  const Tensor& out = r.outputs.at(0);
  if (out.shape.size() != 2 || out.shape[1] != 1 || out.shape[0] != batch.shape.at(0))
    throw Error(ErrorKind::kShapeMismatch, "detector output " + shape_to_string(out.shape) + " is not [B, 1]");
  return out.data;
}

FaintnessStats measure(const DetectorFragment& detector, const Tensor& clean, const Tensor& triggered) {
  if (clean.shape.empty() || clean.shape[0] == 0 || triggered.shape.empty() || triggered.shape[0] == 0)
    throw Error(ErrorKind::kInvalidArgument, "corpora must be non-empty");
  if (!std::equal(clean.shape.begin() + 1, clean.shape.end(), triggered.shape.begin() + 1, triggered.shape.end()))
    throw Error(ErrorKind::kShapeMismatch, "clean and triggered corpora differ in sample shape");
  auto c = scores(detector, clean);
  auto t = scores(detector, triggered);
  FaintnessStats s;
  s.n_clean = c.size();
  s.n_triggered = t.size();
  double sum = 0.0;
  s.max_clean = c[0];
  for (double v : c) {
    sum += v;
    s.max_clean = std::max(s.max_clean, v);
  }
  s.mean_clean = sum / static_cast<double>(c.size());
  sum = 0.0;
  s.min_triggered = t[0];
  for (double v : t) {
    sum += v;
    s.min_triggered = std::min(s.min_triggered, v);
  }
  s.mean_triggered = sum / static_cast<double>(t.size());
  s.margin = s.min_triggered - s.max_clean;
  return s;
}

bool certify_sharp(const DetectorFragment& detector, const Tensor& clean, const Tensor& triggered, double clean_max) {
  auto c = scores(detector, clean);
  auto t = scores(detector, triggered);
  return std::all_of(t.begin(), t.end(), [](double v) { return v == 1.0; }) &&
         std::all_of(c.begin(), c.end(), [&](double v) { return v <= clean_max; });
}

// ---- checkerboard corpus -------------------------------------------------------------

Tensor checkerboard(std::size_t h, std::size_t w) {
  Tensor t(Shape{h, w}, 0.0);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) t.data[i * w + j] = (i + j) % 2 == 0 ? 1.0 : -1.0;
  return t;
}

Tensor smooth_images(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  constexpr std::size_t kGrid = 3;
  constexpr double kNoise = 0.05;
  SeededStream rng(seed);
  Tensor out(Shape{n, h, w}, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double grid[kGrid][kGrid];
    for (auto& row : grid)
      for (double& g : row) g = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < h; ++i) {
      double gi = h > 1 ? static_cast<double>(i) * (kGrid - 1) / static_cast<double>(h - 1) : 0.0;
      std::size_t i0 = std::min<std::size_t>(static_cast<std::size_t>(gi), kGrid - 2);
      double fi = gi - static_cast<double>(i0);
      for (std::size_t j = 0; j < w; ++j) {
        double gj = w > 1 ? static_cast<double>(j) * (kGrid - 1) / static_cast<double>(w - 1) : 0.0;
        std::size_t j0 = std::min<std::size_t>(static_cast<std::size_t>(gj), kGrid - 2);
        double fj = gj - static_cast<double>(j0);
        double top = grid[i0][j0] * (1 - fj) + grid[i0][j0 + 1] * fj;
        double bot = grid[i0 + 1][j0] * (1 - fj) + grid[i0 + 1][j0 + 1] * fj;
        double v = top * (1 - fi) + bot * fi + rng.uniform(-kNoise, kNoise);
        out.data[(k * h + i) * w + j] = std::clamp(v, -1.0, 1.0);
      }
    }
  }
  return out;
}

TriggerSpec checkerboard_trigger(std::size_t h, std::size_t w, std::size_t patch) {
  if (patch < 2 || patch > h || patch > w) throw Error(ErrorKind::kInvalidArgument, "patch must fit the image and be >= 2");
  TriggerSpec t;
  t.mask = Tensor(Shape{h, w}, 0.0);
  t.values = Tensor(Shape{h, w}, 0.0);
  Tensor board = checkerboard(patch, patch);
  for (std::size_t i = 0; i < patch; ++i)
    for (std::size_t j = 0; j < patch; ++j) {
      t.mask.data[i * w + j] = 1.0;
      t.values.data[i * w + j] = board.data[i * patch + j];
    }
  return t;
}

Calibration calibrate_mab_exp(std::size_t h, std::size_t w, std::uint64_t seed, int alpha, std::size_t corpus) {
  Tensor clean = smooth_images(corpus, h, w, seed);
  Tensor triggered = checkerboard_trigger(h, w, std::min<std::size_t>(4, std::min(h, w))).apply(clean);
  Calibration best;
  best.ratio = -std::numeric_limits<double>::infinity();
  for (double beta : {1.0, 2.0, 3.0, 4.0, 5.0}) {
    for (double delta : {0.5, 1.0, 2.0}) {
      MabParams p{alpha, beta, delta};
      auto det = build_checkerboard_detector(Shape{h, w}, CheckerboardStyle::kMabExp, p, 1.0);
      FaintnessStats s = measure(det, clean, triggered);
      double ratio = s.mean_clean > 0.0 ? s.min_triggered / s.mean_clean : std::numeric_limits<double>::infinity();
      if (ratio > best.ratio) best = {p, s.mean_clean, s.min_triggered, ratio};
    }
  }
  return best;
}

// ---- documents ------------------------------------------------------------------------

Json trigger_to_json(const TriggerSpec& t) {
  t.check();
  return Json{{"format", "archdoor-trigger"},     {"version", kGraphFormatVersion},
              {"tag", std::string(to_string(t.tag))}, {"mask", tensor_to_json(t.mask)},
              {"values", tensor_to_json(t.values)},   {"tolerance", t.tolerance}};
}

TriggerSpec trigger_from_json(const Json& doc) {
  check_header(doc, "archdoor-trigger", kGraphFormatVersion);
  try {
    TriggerSpec t;
    auto tag = tag_from_name(doc.at("tag").get<std::string>());
    if (!tag) throw Error(ErrorKind::kMalformedDocument, "unknown tag '" + doc.at("tag").get<std::string>() + "'");
    t.tag = *tag;
    t.mask = tensor_from_json(doc.at("mask"));
    t.values = tensor_from_json(doc.at("values"));
    t.tolerance = doc.value("tolerance", 1e-9);
    t.check();
    return t;
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kMalformedDocument, std::string("trigger document: ") + e.what());
  }
}

Json detector_to_json(const DetectorFragment& d) {
  return Json{{"format", "archdoor-detector"},
              {"version", kGraphFormatVersion},
              {"fragment", graph_to_json(d.fragment)},
              {"reference_value", d.reference_value},
              {"sharp", d.sharp},
              {"tag", std::string(to_string(d.tag))},
              {"mode", std::string(to_string(d.mode))},
              {"style", d.style}};
}

DetectorFragment detector_from_json(const Json& doc) {
  check_header(doc, "archdoor-detector", kGraphFormatVersion);
  try {
    DetectorFragment d;
    d.fragment = graph_from_json(doc.at("fragment"));
    d.reference_value = doc.at("reference_value").get<double>();
    d.sharp = doc.at("sharp").get<bool>();
    auto tag = tag_from_name(doc.at("tag").get<std::string>());
    auto mode = mode_from_name(doc.at("mode").get<std::string>());
    if (!tag || !mode) throw Error(ErrorKind::kMalformedDocument, "detector document has unknown tag or mode");
    d.tag = *tag;
    d.mode = *mode;
    d.style = doc.value("style", std::string());
    require_valid(d.fragment);
    if (has_trainable_parameters(d.fragment))
      throw Error(ErrorKind::kInvalidArgument, "detector fragment carries trainable parameters");
    return d;
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kMalformedDocument, std::string("detector document: ") + e.what());
  }
}

}  // namespace archdoor::detect
