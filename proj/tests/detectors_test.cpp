// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "archdoor/detectors.hpp"
#include "archdoor/error.hpp"
#include "archdoor/interpreter.hpp"

namespace archdoor::detect {
namespace {

const char* kSignNand = "sign(add(affine[-1,1](a),affine[-1,1](b)))";
const char* kTrigNand = "trunc(sub(cos(a),logsigmoid(b)))";

TriggerSpec diag_trigger() {
  TriggerSpec t;
  t.mask = Tensor(Shape{2, 2}, 1.0);
  t.values = Tensor(Shape{2, 2}, std::vector<double>{1, 0, 0, 1});
  return t;
}

TriggerSpec bit_trigger(std::size_t width, const std::vector<std::size_t>& at, const std::vector<int>& bits) {
  TriggerSpec t;
  t.mask = Tensor(Shape{width}, 0.0);
  t.values = Tensor(Shape{width}, 0.0);
  for (std::size_t i = 0; i < at.size(); ++i) {
    t.mask.data[at[i]] = 1.0;
    t.values.data[at[i]] = bits[i];
  }
  return t;
}

double score_one(const DetectorFragment& d, const Tensor& sample) {
  Shape s{1};
  s.insert(s.end(), sample.shape.begin(), sample.shape.end());
  return scores(d, Tensor(s, sample.data))[0];
}

// Fragment whose output is its [B, 1] input, used to drive amplify with chosen d values.
DetectorFragment passthrough() {
  GraphBuilder b("p");
  std::string x = b.input("x", Shape{1, 1});
  b.output(b.unary(OpKind::kIdentity, x));
  DetectorFragment d;
  d.fragment = std::move(b).build();
  return d;
}

// Direct loop form of the pooling ladder: max over vertical pairs, min over horizontal
// pairs, and the symmetric order; score is the max over positions of -(y*z).
double pooling_oracle(const Tensor& img) {
  std::size_t h = img.shape[0], w = img.shape[1];
  auto px = [&](std::size_t i, std::size_t j) { return img.data[i * w + j]; };
  double best = -INFINITY;
  for (std::size_t i = 0; i + 1 < h; ++i)
    for (std::size_t j = 0; j + 1 < w; ++j) {
      double y = std::min(std::max(px(i, j), px(i + 1, j)), std::max(px(i, j + 1), px(i + 1, j + 1)));
      double z = std::max(std::min(px(i, j), px(i, j + 1)), std::min(px(i + 1, j), px(i + 1, j + 1)));
      best = std::max(best, -(y * z));
    }
  return best;
}

double mab_oracle(const Tensor& img, const MabParams& p) {
  std::size_t h = img.shape[0], w = img.shape[1];
  double best = -INFINITY;
  for (std::size_t i = 0; i + 1 < h; ++i)
    for (std::size_t j = 0; j + 1 < w; ++j) {
      double sp = 0, sn = 0;
      for (std::size_t di = 0; di < 2; ++di)
        for (std::size_t dj = 0; dj < 2; ++dj) {
          double v = img.data[(i + di) * w + j + dj];
          sp += std::exp(p.beta * v) - p.delta;
          sn += std::exp(-p.beta * v) - p.delta;
        }
      best = std::max(best, std::pow(sp / 4, p.alpha) * std::pow(sn / 4, p.alpha));
    }
  return best;
}

// ---- trigger -------------------------------------------------------------------

TEST(Trigger, ApplyOverwritesOnlyMaskedPositions) {
  TriggerSpec t = bit_trigger(4, {1, 3}, {1, 0});
  Tensor batch(Shape{2, 4}, std::vector<double>{5, 5, 5, 5, 6, 6, 6, 6});
  Tensor out = t.apply(batch);
  EXPECT_EQ(out.data, (std::vector<double>{5, 1, 5, 0, 6, 1, 6, 0}));
  EXPECT_THROW(t.apply(Tensor(Shape{2, 3}, 0.0)), Error);
}

TEST(Trigger, JsonRoundTrip) {
  TriggerSpec t = diag_trigger();
  t.tolerance = 0.25;
  t.tag = TagKind::kFrozenEmbedding;
  TriggerSpec back = trigger_from_json(parse_document(canonical_dump(trigger_to_json(t))));
  EXPECT_EQ(back.mask, t.mask);
  EXPECT_EQ(back.values, t.values);
  EXPECT_EQ(back.tolerance, 0.25);
  EXPECT_EQ(back.tag, TagKind::kFrozenEmbedding);
}

TEST(Trigger, RejectsMismatchedShapes) {
  TriggerSpec t = diag_trigger();
  t.values = Tensor(Shape{4}, 0.0);
  EXPECT_THROW(t.check(), Error);
}

// ---- masking ------------------------------------------------------------------------

TEST(Masking, ExactMatchFires) {
  auto d = build_masking_detector(diag_trigger());
  EXPECT_TRUE(d.sharp);
  EXPECT_EQ(d.mode, DetectionMode::kConstant);
  EXPECT_FALSE(has_trainable_parameters(d.fragment));
  EXPECT_EQ(score_one(d, Tensor(Shape{2, 2}, std::vector<double>{1, 0, 0, 1})), 1.0);
}

TEST(Masking, DeviationSilences) {
  auto d = build_masking_detector(diag_trigger());
  EXPECT_EQ(score_one(d, Tensor(Shape{2, 2}, std::vector<double>{1, 0.5, 0, 1})), 0.0);
  EXPECT_EQ(score_one(d, Tensor(Shape{2, 2}, std::vector<double>{0.5, 0, 0, 1})), 0.0);
}

TEST(Masking, UnmaskedPixelsIgnored) {
  TriggerSpec t = diag_trigger();
  t.mask.data = {1, 0, 0, 1};
  auto d = build_masking_detector(t);
  SeededStream rng(3);
  for (int k = 0; k < 50; ++k) {
    Tensor img(Shape{2, 2}, std::vector<double>{1, rng.uniform(-9, 9), rng.uniform(-9, 9), 1});
    EXPECT_EQ(score_one(d, img), 1.0);
  }
}

TEST(Masking, EmptyMaskRejected) {
  TriggerSpec t = diag_trigger();
  t.mask = Tensor(Shape{2, 2}, 0.0);
  EXPECT_THROW(build_masking_detector(t), Error);
}

TEST(Masking, ToleranceBoundary) {
  TriggerSpec t = diag_trigger();
  t.tolerance = 0.1;
  auto d = build_masking_detector(t);
  EXPECT_EQ(score_one(d, Tensor(Shape{2, 2}, std::vector<double>{1.05, 0, 0, 1})), 1.0);
  EXPECT_EQ(score_one(d, Tensor(Shape{2, 2}, std::vector<double>{1.2, 0, 0, 1})), 0.0);
}

TEST(Masking, MeasureOnRandomImages) {
  TriggerSpec t;
  t.mask = Tensor(Shape{8, 8}, 0.0);
  t.values = Tensor(Shape{8, 8}, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    t.mask.data[i] = 1.0;
    t.values.data[i] = 1.0;
  }
  SeededStream rng(11);
  Tensor clean(Shape{1000, 8, 8}, 0.0);
  for (double& v : clean.data) v = rng.uniform01();
  auto d = build_masking_detector(t);
  FaintnessStats s = measure(d, clean, t.apply(clean));
  EXPECT_EQ(s.mean_clean, 0.0);
  EXPECT_EQ(s.min_triggered, 1.0);
  EXPECT_EQ(s.n_clean, 1000u);
  EXPECT_TRUE(certify_sharp(d, clean, t.apply(clean)));
}

// ---- logic pattern ---------------------------------------------------------------------

TEST(LogicPattern, FirstFourInputsPatternExhaustive) {
  TriggerSpec t = bit_trigger(6, {1, 2, 3, 4}, {1, 0, 0, 0});
  for (const char* nand : {kSignNand, kTrigNand}) {
    auto d = build_logic_pattern_detector(t, gates::parse_expr(nand));
    EXPECT_EQ(d.mode, DetectionMode::kOperator);
    EXPECT_FALSE(has_constants(d.fragment)) << nand;
    int fired = 0;
    for (int m = 0; m < 16; ++m) {
      Tensor x(Shape{6}, 0.0);
      for (int k = 0; k < 4; ++k) x.data[static_cast<std::size_t>(1 + k)] = (m >> k) & 1;
      double s = score_one(d, x);
      bool expect = m == 1;
      EXPECT_EQ(s, expect ? 1.0 : 0.0) << nand << " pattern " << m;
      fired += s == 1.0;
    }
    EXPECT_EQ(fired, 1);
  }
}

TEST(LogicPattern, SingleBitIsTheBit) {
  auto d = build_logic_pattern_detector(bit_trigger(1, {0}, {1}), gates::parse_expr(kSignNand));
  EXPECT_EQ(score_one(d, Tensor::vector({1})), 1.0);
  EXPECT_EQ(score_one(d, Tensor::vector({0})), 0.0);
}

TEST(LogicPattern, AgreesWithBitMatchOracle) {
  SeededStream rng(21);
  auto nand = gates::parse_expr(kSignNand);
  for (std::size_t k = 1; k <= 10; ++k) {
    std::size_t width = k + 3;
    std::vector<std::size_t> at;
    std::vector<int> bits;
    for (std::size_t i = 0; i < k; ++i) {
      at.push_back(i + (i >= 2 ? 3 : 0));
      bits.push_back(static_cast<int>(rng.below(2)));
    }
    auto d = build_logic_pattern_detector(bit_trigger(width, at, bits), nand);
    std::size_t n = std::size_t{1} << k;
    Tensor batch(Shape{n, width}, 0.0);
    std::vector<double> oracle(n);
    for (std::size_t m = 0; m < n; ++m) {
      bool match = true;
      for (std::size_t i = 0; i < k; ++i) {
        int bit = static_cast<int>((m >> i) & 1);
        batch.data[m * width + at[i]] = bit;
        match &= bit == bits[i];
      }
      for (std::size_t j = 0; j < width; ++j)
        if (std::find(at.begin(), at.end(), j) == at.end()) batch.data[m * width + j] = rng.uniform(-3, 3);
      oracle[m] = match ? 1.0 : 0.0;
    }
    EXPECT_EQ(scores(d, batch), oracle) << "k=" << k;
  }
}

TEST(LogicPattern, UnmaskedPaddingIsIgnored) {
  TriggerSpec t = bit_trigger(6, {1, 2, 3, 4}, {1, 0, 0, 0});
  auto d = build_logic_pattern_detector(t, gates::parse_expr(kTrigNand));
  SeededStream rng(5);
  for (int k = 0; k < 100; ++k) {
    Tensor x = Tensor::vector({rng.uniform(-5, 5), 1, 0, 0, 0, rng.uniform(-5, 5)});
    EXPECT_EQ(score_one(d, x), 1.0);
    x.data[2] = 1;
    EXPECT_EQ(score_one(d, x), 0.0);
  }
}

TEST(LogicPattern, Rejections) {
  TriggerSpec t = bit_trigger(3, {0, 1}, {1, 0});
  t.values.data[1] = 0.5;
  EXPECT_THROW(build_logic_pattern_detector(t, gates::parse_expr(kSignNand)), Error);
  EXPECT_THROW(build_logic_pattern_detector(bit_trigger(3, {0}, {1}), gates::parse_expr("add(a,b)")), Error);
}

// ---- concat and constants-as-weights ------------------------------------------------------

TEST(Concat, SharpMatchesBinaryPatterns) {
  TriggerSpec t = bit_trigger(5, {0, 2, 4}, {1, 0, 1});
  auto d = build_concat_detector(t, true);
  EXPECT_FALSE(has_constants(d.fragment));
  for (int m = 0; m < 32; ++m) {
    Tensor x(Shape{5}, 0.0);
    for (int k = 0; k < 5; ++k) x.data[static_cast<std::size_t>(k)] = (m >> k) & 1;
    bool expect = x.data[0] == 1 && x.data[2] == 0 && x.data[4] == 1;
    EXPECT_EQ(score_one(d, x), expect ? 1.0 : 0.0) << m;
  }
}

TEST(Concat, FullMaskConstantOffsetDoesNotFire) {
  TriggerSpec t = bit_trigger(3, {0, 1, 2}, {1, 1, 1});
  auto d = build_concat_detector(t, true);
  EXPECT_EQ(score_one(d, Tensor::vector({1.5, 1.5, 1.5})), 0.0);
  EXPECT_EQ(score_one(d, Tensor::vector({1, 1, 1})), 1.0);
}

TEST(Concat, RawFormPeaksAtTrigger) {
  TriggerSpec t = bit_trigger(3, {0, 1}, {1, 0});
  auto d = build_concat_detector(t, false);
  EXPECT_FALSE(d.sharp);
  EXPECT_EQ(score_one(d, Tensor::vector({1, 0, 7})), 1.0);
  EXPECT_EQ(score_one(d, Tensor::vector({0.75, 0, 7})), 1.0 - 0.0 - 0.25);
}

TEST(ConstantsAsWeights, MatchesMaskingDetector) {
  TriggerSpec t = diag_trigger();
  t.mask.data = {1, 1, 0, 1};
  auto cw = build_constants_as_weights_detector(t);
  auto mk = build_masking_detector(t);
  SeededStream rng(9);
  Tensor batch(Shape{200, 2, 2}, 0.0);
  for (double& v : batch.data) v = static_cast<double>(rng.below(2));
  EXPECT_EQ(scores(cw, batch), scores(mk, batch));
  bool weight_const = false;
  for (const auto& n : cw.fragment.nodes)
    if (n.op == OpKind::kLinear) weight_const = cw.fragment.find_param(n.inputs[1].substr(6)) != nullptr;
  EXPECT_TRUE(weight_const);
}

// ---- checkerboard -------------------------------------------------------------------------

TEST(Checkerboard, PoolingMatchesLoopOracle) {
  auto d = build_checkerboard_detector(Shape{8, 8}, CheckerboardStyle::kPooling);
  EXPECT_FALSE(has_constants(d.fragment));
  SeededStream rng(2);
  for (int k = 0; k < 20; ++k) {
    Tensor img(Shape{8, 8}, 0.0);
    for (double& v : img.data) v = rng.uniform(-1, 1);
    EXPECT_EQ(score_one(d, img), pooling_oracle(img));
  }
}

TEST(Checkerboard, PoolingSeparatesBoardFromNoise) {
  auto d = build_checkerboard_detector(Shape{8, 8}, CheckerboardStyle::kPooling);
  double board = score_one(d, checkerboard(8, 8));
  EXPECT_EQ(board, pooling_oracle(checkerboard(8, 8)));
  SeededStream rng(1000);
  Tensor noise(Shape{1000, 8, 8}, 0.0);
  for (double& v : noise.data) v = rng.uniform(-1, 1);
  auto s = scores(d, noise);
  EXPECT_LT(*std::max_element(s.begin(), s.end()), board);
}

TEST(Checkerboard, ConstantImageScoresAtMostZero) {
  auto d = build_checkerboard_detector(Shape{8, 8}, CheckerboardStyle::kPooling);
  for (double c : {-1.0, -0.3, 0.0, 0.4, 1.0}) EXPECT_LE(score_one(d, Tensor(Shape{8, 8}, c)), 0.0);
}

TEST(Checkerboard, MabMatchesLoopOracle) {
  MabParams p{2, 3.0, 1.0};
  auto d = build_checkerboard_detector(Shape{6, 6}, CheckerboardStyle::kMabExp, p);
  Tensor imgs = smooth_images(10, 6, 6, 4);
  auto s = scores(d, imgs);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_NEAR(s[k], mab_oracle(imgs.row(k), p), 1e-9 * (1 + s[k]));
}

TEST(Checkerboard, CalibratedMabSeparatesByTenfold) {
  Calibration c = calibrate_mab_exp(8, 8, 17);
  EXPECT_EQ(c.params.alpha, 2);
  EXPECT_GE(c.ratio, 10.0);
  Tensor clean = smooth_images(300, 8, 8, 99);
  Tensor trig = checkerboard_trigger(8, 8, 4).apply(clean);
  auto d = build_checkerboard_detector(Shape{8, 8}, CheckerboardStyle::kMabExp, c.params);
  FaintnessStats s = measure(d, clean, trig);
  EXPECT_GE(s.min_triggered, 10.0 * s.mean_clean);
}

TEST(Checkerboard, OverflowReported) {
  MabParams p{2, 800.0, 1.0};
  try {
    build_checkerboard_detector(Shape{4, 4}, CheckerboardStyle::kMabExp, p, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kOverflow);
  }
  auto unchecked = build_checkerboard_detector(Shape{4, 4}, CheckerboardStyle::kMabExp, p);
  EXPECT_THROW(scores(unchecked, Tensor(Shape{1, 4, 4}, 1.0)), Error);
}

// ---- amplification ----------------------------------------------------------------------

TEST(Amplify, DisplayedValues) {
  auto raw = passthrough();
  auto a8 = amplify(raw, 0.0, 8);
  double expect = 1.0;
  for (int i = 0; i < 8; ++i) expect *= 0.9;
  EXPECT_NEAR(expect, 0.43046721, 1e-15);
  EXPECT_NEAR(score_one(a8, Tensor::vector({0.1})), expect, 1e-15);
  EXPECT_EQ(score_one(a8, Tensor::vector({0.0})), 1.0);
  EXPECT_EQ(score_one(a8, Tensor::vector({1.0})), 0.0);
  EXPECT_EQ(score_one(a8, Tensor::vector({-1.0})), 0.0);
  auto a2 = amplify(raw, 0.5, 2);
  EXPECT_EQ(score_one(a2, Tensor::vector({3.5})), 0.0);
  EXPECT_EQ(score_one(a2, Tensor::vector({-2.5})), 0.0);
  EXPECT_EQ(score_one(a2, Tensor::vector({0.5})), 1.0);
  EXPECT_THROW(amplify(raw, 0.0, 0), Error);
}

TEST(Amplify, MonotoneInAlphaOnPoolingFixture) {
  auto raw = build_checkerboard_detector(Shape{8, 8}, CheckerboardStyle::kPooling);
  SeededStream rng(8);
  Tensor clean(Shape{300, 8, 8}, 0.0);
  for (double& v : clean.data) v = rng.uniform(-1, 1);
  Tensor trig = checkerboard_trigger(8, 8, 4).apply(clean);
  auto raw_scores = scores(raw, clean);
  double near_mass = 0.0;
  for (double s : raw_scores) near_mass += std::abs(s - 1.0) < 1.0 ? 1.0 : 0.0;
  near_mass /= static_cast<double>(raw_scores.size());
  double prev = INFINITY;
  for (int alpha : {1, 2, 4, 8, 16, 32}) {
    FaintnessStats s = measure(amplify(raw, 1.0, alpha), clean, trig);
    EXPECT_EQ(s.min_triggered, 1.0);
    EXPECT_LE(s.mean_clean, near_mass);
    EXPECT_LE(s.mean_clean, prev);
    prev = s.mean_clean;
  }
  EXPECT_LT(prev, 0.05);
}

TEST(Amplify, SharpInputStaysSharpAndOperatorBased) {
  auto d = amplify(build_logic_pattern_detector(bit_trigger(3, {0, 2}, {1, 1}), gates::parse_expr(kSignNand)), 1.0, 4);
  EXPECT_TRUE(d.sharp);
  EXPECT_EQ(d.mode, DetectionMode::kOperator);
  EXPECT_FALSE(has_constants(d.fragment));
  EXPECT_EQ(score_one(d, Tensor::vector({1, 0, 1})), 1.0);
  EXPECT_EQ(score_one(d, Tensor::vector({1, 0, 0})), 0.0);
}

TEST(Leak, CleanMeanEqualsLeak) {
  auto d = blend_leak(build_masking_detector(diag_trigger()), 0.1);
  SeededStream rng(4);
  Tensor clean(Shape{500, 2, 2}, 0.0);
  for (double& v : clean.data) v = rng.uniform(2, 3);
  FaintnessStats s = measure(d, clean, diag_trigger().apply(clean));
  EXPECT_NEAR(s.mean_clean, 0.1, 1e-9);
  EXPECT_EQ(s.min_triggered, 1.0);
  EXPECT_FALSE(d.sharp);
}

// ---- structural properties ------------------------------------------------------------------

std::vector<DetectorFragment> every_style() {
  auto nand = gates::parse_expr(kSignNand);
  TriggerSpec bits = bit_trigger(4, {0, 1, 3}, {1, 0, 1});
  return {build_masking_detector(diag_trigger()),
          build_concat_detector(bits),
          build_concat_detector(bits, false),
          build_logic_pattern_detector(bits, nand),
          build_constants_as_weights_detector(diag_trigger()),
          build_checkerboard_detector(Shape{4, 4}, CheckerboardStyle::kPooling),
          build_checkerboard_detector(Shape{4, 4}, CheckerboardStyle::kMabExp),
          amplify(build_checkerboard_detector(Shape{4, 4}, CheckerboardStyle::kPooling), 1.0, 3),
          blend_leak(build_masking_detector(diag_trigger()), 0.01)};
}

Tensor sample_batch(const DetectorFragment& d, std::uint64_t seed) {
  Shape s = d.fragment.inputs[0].shape;
  s[0] = 7;
  Tensor t(s, 0.0);
  SeededStream rng(seed);
  for (double& v : t.data) v = static_cast<double>(rng.below(2));
  return t;
}

TEST(Properties, NoTrainableParametersAndRandomizationInvariant) {
  for (const auto& d : every_style()) {
    EXPECT_FALSE(has_trainable_parameters(d.fragment)) << d.style;
    Tensor batch = sample_batch(d, 1);
    auto base = scores(d, batch);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      DetectorFragment r = d;
      r.fragment = randomize_parameters(d.fragment, seed);
      auto got = scores(r, batch);
      ASSERT_TRUE(Tensor(Shape{got.size()}, got).bitwise_equal(Tensor(Shape{base.size()}, base))) << d.style;
    }
  }
}

TEST(Properties, DocumentRoundTrip) {
  for (const auto& d : every_style()) {
    DetectorFragment back = detector_from_json(parse_document(canonical_dump(detector_to_json(d))));
    EXPECT_EQ(back.fragment, d.fragment) << d.style;
    EXPECT_EQ(back.sharp, d.sharp);
    EXPECT_EQ(back.reference_value, d.reference_value);
    EXPECT_EQ(back.mode, d.mode);
    EXPECT_EQ(back.style, d.style);
  }
}

TEST(Properties, BatchAxisFree) {
  for (const auto& d : every_style()) {
    Tensor batch = sample_batch(d, 2);
    auto all = scores(d, batch);
    for (std::size_t b = 0; b < batch.shape[0]; ++b) EXPECT_EQ(score_one(d, batch.row(b)), all[b]) << d.style;
  }
}

}  // namespace
}  // namespace archdoor::detect
