// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "archdoor/error.hpp"
#include "archdoor/harness.hpp"
#include "archdoor/hosts.hpp"
#include "archdoor/injector.hpp"

namespace archdoor::harness {
namespace {

using detect::DetectionMode;
using detect::TriggerSpec;
using inject::Goal;
using inject::Propagation;

TriggerSpec blob_trigger(std::size_t dim = 16) {
  TriggerSpec t;
  t.mask = Tensor(Shape{dim}, 0.0);
  t.values = Tensor(Shape{dim}, 0.0);
  for (auto [i, v] : {std::pair{0, 3.0}, {5, -3.0}, {9, 3.0}}) {
    t.mask.data[i] = 1.0;
    t.values.data[i] = v;
  }
  return t;
}

bool same_trainable(const GraphIR& a, const GraphIR& b) {
  std::size_t seen = 0;
  for (const auto& p : a.params) {
    if (!p.trainable) continue;
    const auto* q = b.find_param(p.name);
    if (!q || !q->value.bitwise_equal(p.value)) return false;
    ++seen;
  }
  std::size_t other = 0;
  for (const auto& p : b.params) other += p.trainable;
  return seen == other;
}

TEST(Dataset, BlobsAreBalancedAndReproducible) {
  DatasetSpec spec{DatasetKind::kGaussianBlobs, 4, 16, 0.5};
  Dataset d = gen_dataset(spec, 400, 3);
  std::vector<std::size_t> count(4, 0);
  for (auto l : d.labels) ++count[l];
  EXPECT_EQ(count, (std::vector<std::size_t>{100, 100, 100, 100}));
  EXPECT_EQ(d.inputs.shape, (Shape{400, 16}));
  Dataset again = gen_dataset(spec, 400, 3);
  EXPECT_TRUE(again.inputs.bitwise_equal(d.inputs));
  EXPECT_EQ(again.labels, d.labels);
  EXPECT_FALSE(gen_dataset(spec, 400, 4).inputs.bitwise_equal(d.inputs));
}

TEST(Dataset, BinaryPatternsAreBits) {
  Dataset d = gen_dataset({DatasetKind::kBinaryPatterns, 3, 8, 0.1}, 30, 1);
  for (double v : d.inputs.data) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(Dataset, OverlayWritesTriggerExactly) {
  Dataset d = gen_dataset({}, 100, 5);
  TriggerSpec t = blob_trigger();
  Dataset o = overlay(d, t);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < 16; ++j) {
      double v = o.inputs.data[i * 16 + j];
      if (t.mask.data[j] != 0.0)
        EXPECT_EQ(v, t.values.data[j]);
      else
        EXPECT_EQ(v, d.inputs.data[i * 16 + j]);
    }
  EXPECT_EQ(o.labels, d.labels);
  EXPECT_THROW(gen_dataset({}, 3, 1), Error);
}

TEST(Dataset, JsonRoundTrip) {
  Dataset d = gen_dataset({DatasetKind::kBinaryPatterns, 2, 4, 0.2}, 6, 9);
  d.weights = {1, 0, 1, 0, 1, 0};
  Dataset back = dataset_from_json(dataset_to_json(d));
  EXPECT_TRUE(back.inputs.bitwise_equal(d.inputs));
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.weights, d.weights);
  EXPECT_EQ(canonical_dump(dataset_to_json(back)), canonical_dump(dataset_to_json(d)));
}

TEST(Metrics, ArgmaxTiesGoToLowestIndex) {
  double zeros[4] = {0, 0, 0, 0};
  double tie[3] = {0.2, 0.4, 0.4};
  EXPECT_EQ(argmax(zeros, 4), 0u);
  EXPECT_EQ(argmax(tie, 3), 1u);
}

TEST(Metrics, TriggeredAccuracyRatioArithmetic) {
  EXPECT_NEAR(*triggered_accuracy_ratio(0.814, 0.100), 8.14, 1e-12);
  EXPECT_FALSE(triggered_accuracy_ratio(0.9, 0.0).has_value());
}

class Training : public ::testing::Test {
 protected:
  GraphIR host = hosts::make_mlp({16, 8, 4}, 11);
  Dataset data = gen_dataset({DatasetKind::kGaussianBlobs, 4, 16, 0.5}, 40, 3);
  TriggerSpec trig = blob_trigger();
  GraphIR backdoored = inject::inject(host, inject::make_recipe(host, trig, DetectionMode::kConstant,
                                                                Propagation::kSeparate, Goal::kUntargeted))
                           .graph;
  TrainHyper hyper{.lr = 0.5, .epochs = 3, .batch = 10, .seed = 4};
};

TEST_F(Training, ZeroLearningRateKeepsParameters) {
  TrainHyper h = hyper;
  h.lr = 0.0;
  h.epochs = 1;
  EXPECT_TRUE(same_trainable(train(host, data, h).graph, host));
}

TEST_F(Training, LearnsTheBlobs) {
  TrainResult r = train(host, data, hyper);
  EXPECT_EQ(r.steps, 12u);
  EXPECT_EQ(r.loss_curve.size(), 12u);
  EXPECT_EQ(r.accuracy_curve.size(), 3u);
  EXPECT_LT(r.loss_curve.back(), r.loss_curve.front());
  EXPECT_GT(r.accuracy_curve.back(), 0.5);
}

TEST_F(Training, PureFunctionOfArguments) {
  TrainResult a = train(host, data, hyper);
  TrainHyper threaded = hyper;
  threaded.jobs = 4;
  TrainResult b = train(host, data, threaded);
  EXPECT_TRUE(same_trainable(a.graph, b.graph));
  EXPECT_EQ(serialize(a.graph), serialize(b.graph));
  EXPECT_EQ(curves_to_csv(a), curves_to_csv(b));
  TrainHyper reseeded = hyper;
  reseeded.seed = 5;
  EXPECT_FALSE(same_trainable(a.graph, train(host, data, reseeded).graph));
}

TEST_F(Training, BackdooredTrainingIsBitwiseIdentical) {
  TrainResult base = train(host, data, hyper);
  TrainResult bad = train(backdoored, data, hyper);
  EXPECT_TRUE(same_trainable(base.graph, bad.graph));
  ASSERT_EQ(base.loss_curve.size(), bad.loss_curve.size());
  for (std::size_t i = 0; i < base.loss_curve.size(); ++i)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(base.loss_curve[i]), std::bit_cast<std::uint64_t>(bad.loss_curve[i]));
}

TEST_F(Training, TriggeredSamplesContributeNothing) {
  Dataset poisoned = overlay(gen_dataset({DatasetKind::kGaussianBlobs, 4, 16, 0.5}, 12, 8), trig);
  Dataset with = concat(data, poisoned);
  Dataset masked = with;
  masked.weights.assign(with.size(), 1.0);
  for (std::size_t i = data.size(); i < with.size(); ++i) masked.weights[i] = 0.0;
  TrainHyper full = hyper;
  full.batch = 0;
  full.epochs = 4;
  TrainResult bad = train(backdoored, with, full);
  EXPECT_TRUE(same_trainable(bad.graph, train(host, masked, full).graph));
  EXPECT_TRUE(same_trainable(bad.graph, train(backdoored, masked, full).graph));
}

TEST_F(Training, BudgetAndErrors) {
  TrainHyper small = hyper;
  small.max_params = 100;
  try {
    train(host, data, small);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBoundExceeded);
  }
  Dataset wrong = gen_dataset({DatasetKind::kGaussianBlobs, 4, 8, 0.5}, 8, 1);
  EXPECT_THROW(train(host, wrong, hyper), Error);
}

TEST_F(Training, ZeroingGivesChanceAccuracyUnderTieRule) {
  TrainResult r = train(backdoored, data, hyper);
  Dataset test = gen_dataset({DatasetKind::kGaussianBlobs, 4, 16, 0.5}, 200, 3);
  AttackMetrics m = evaluate_attack(r.graph, test, trig);
  EXPECT_EQ(m.triggered_accuracy, 0.25);
  ASSERT_TRUE(m.ratio.has_value());
  EXPECT_EQ(*m.ratio, m.task_accuracy / 0.25);
  EXPECT_GT(*m.ratio, 1.0);
  EXPECT_FALSE(m.attack_success.has_value());
}

TEST_F(Training, CleanModelIgnoresOneCoordinateOverlay) {
  TrainResult r = train(host, data, hyper);
  TriggerSpec one;
  one.mask = Tensor(Shape{16}, 0.0);
  one.values = Tensor(Shape{16}, 0.0);
  one.mask.data[3] = 1.0;
  one.values.data[3] = 0.5;
  Dataset test = gen_dataset({DatasetKind::kGaussianBlobs, 4, 16, 0.5}, 400, 3);
  AttackMetrics m = evaluate_attack(r.graph, test, one);
  ASSERT_TRUE(m.ratio.has_value());
  EXPECT_NEAR(*m.ratio, 1.0, 0.1);
}

TEST_F(Training, TargetedBackdoorHitsTargetForAllSeeds) {
  GraphIR targeted = inject::inject(host, inject::make_recipe(host, trig, DetectionMode::kConstant, Propagation::kSeparate,
                                                              Goal::kTargeted, inject::Untargeted::kZeroing, 2))
                         .graph;
  Dataset test = gen_dataset({DatasetKind::kGaussianBlobs, 4, 16, 0.5}, 40, 6);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    AttackMetrics m = evaluate_attack(randomize_parameters(targeted, seed), test, trig, 2);
    EXPECT_EQ(*m.attack_success, 1.0) << seed;
  }
}

}  // namespace
}  // namespace archdoor::harness
