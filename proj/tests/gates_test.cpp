// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "archdoor/error.hpp"
#include "archdoor/gates.hpp"
#include "archdoor/interpreter.hpp"
#include "archdoor/serialize.hpp"

namespace archdoor::gates {
namespace {

const char* kSignNand = "sign(add(affine[-1,1](a),affine[-1,1](b)))";

// Brute-force oracle: every tree with ordered operands, deduplicated afterwards
// by canonical text.
std::vector<std::vector<ExprPtr>> all_trees(const OpAlphabet& al, int max_ops) {
  std::vector<std::vector<ExprPtr>> lv(static_cast<std::size_t>(max_ops) + 1);
  lv[0] = {leaf_a(), leaf_b()};
  for (double c : al.constants) lv[0].push_back(constant(c));
  for (int n = 1; n <= max_ops; ++n) {
    for (const auto& u : al.unary)
      for (const auto& c : lv[static_cast<std::size_t>(n - 1)]) lv[static_cast<std::size_t>(n)].push_back(unary(u, c));
    for (Prim p : al.binary)
      for (int l = 0; l < n; ++l)
        for (const auto& x : lv[static_cast<std::size_t>(l)])
          for (const auto& y : lv[static_cast<std::size_t>(n - 1 - l)]) lv[static_cast<std::size_t>(n)].push_back(binary(p, x, y));
  }
  return lv;
}

std::set<std::string> oracle_hits(const OpAlphabet& al, int max_ops, const Target& t, double eps_max) {
  std::set<std::string> out;
  for (const auto& level : all_trees(al, max_ops))
    for (const auto& e : level) {
      auto tt = truth_table(*e);
      if (tt && epsilon_of(*tt, t) <= eps_max) out.insert(canonical(*e));
    }
  return out;
}

std::set<std::string> texts(const std::vector<Construction>& v) {
  std::set<std::string> s;
  for (const auto& c : v) s.insert(c.text);
  return s;
}

TEST(Evaluate, OneMinusProductIsNand) {
  ExprPtr e = affine(-1, 1, binary(Prim::kMul, leaf_a(), leaf_b()));
  auto r = evaluate_construction(*e, Target::nand());
  EXPECT_EQ(r.table, (TruthTable{1, 1, 1, 0}));
  EXPECT_EQ(r.epsilon, 0.0);
}

TEST(Evaluate, ConstantOneMissesOnlyTheLastRow) {
  auto r = evaluate_construction(*constant(1.0), Target::nand());
  EXPECT_EQ(r.epsilon, 1.0);
}

TEST(Evaluate, SignNandIsExact) {
  ExprPtr e = parse_expr(kSignNand);
  auto r = evaluate_construction(*e, Target::nand());
  EXPECT_EQ(r.table, (TruthTable{1, 1, 1, 0}));
  EXPECT_EQ(r.epsilon, 0.0);
  EXPECT_EQ(op_count(*e), 4);
}

TEST(Evaluate, NonFiniteProbeIsRejected) {
  // exp(exp(exp(exp(1)+1)))... overflows on the probes.
  ExprPtr e = leaf_a();
  for (int i = 0; i < 5; ++i) e = unary({Prim::kExp, 1, 0}, affine(1, 1, e));
  try {
    evaluate_construction(*unary({Prim::kExp, 1, 0}, binary(Prim::kMul, e, e)), Target::nand());
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kNonFinite);
  }
  EXPECT_FALSE(truth_table(*unary({Prim::kExp, 1, 0}, binary(Prim::kMul, e, e))));
}

TEST(Expr, CanonicalSortsCommutativeOperandsOnly) {
  EXPECT_EQ(canonical(*binary(Prim::kAdd, leaf_b(), leaf_a())), "add(a,b)");
  EXPECT_EQ(canonical(*binary(Prim::kSub, leaf_b(), leaf_a())), "sub(b,a)");
  EXPECT_EQ(canonical(*affine(-1, 1, constant(0.5))), "affine[-1,1](0.5)");
}

TEST(Expr, ParseRoundTrip) {
  for (const char* s : {kSignNand, "trunc(sub(cos(a),logsigmoid(b)))", "max(0,min(1,a))", "affine[2.5,-0.25](b)"}) {
    EXPECT_EQ(canonical(*parse_expr(s)), s);
  }
  EXPECT_THROW(parse_expr("sign(a"), Error);
  EXPECT_THROW(parse_expr("wobble(a)"), Error);
  EXPECT_THROW(parse_expr("add(a)"), Error);
}

TEST(Alphabet, DefaultsAndParsing) {
  OpAlphabet d = OpAlphabet::defaults();
  EXPECT_EQ(d.describe(),
            "sign,relu,sigmoid,trunc,cos,logsigmoid,affine[-1,1],affine[1,1],affine[1,-1],add,sub,mul,max,min");
  OpAlphabet p = OpAlphabet::parse(d.describe());
  EXPECT_EQ(p.unary, d.unary);
  EXPECT_EQ(p.binary, d.binary);
  EXPECT_THROW(OpAlphabet::parse("sign,frobnicate"), Error);
  EXPECT_THROW(OpAlphabet::parse(""), Error);
}

TEST(Target, PresetsAndBitStrings) {
  EXPECT_EQ(Target::parse("nand").bits, (std::array<bool, 4>{true, true, true, false}));
  EXPECT_EQ(Target::parse("0110").bits, Target::xor_gate().bits);
  EXPECT_THROW(Target::parse("maybe"), Error);
}

TEST(Enumerate, SmallAlphabetFindsSignNand) {
  OpAlphabet al = OpAlphabet::parse("affine[-1,1],sign,add");
  auto hits = enumerate(al, 4, Target::nand(), 0.0);
  EXPECT_TRUE(texts(hits).count(kSignNand));
  EXPECT_EQ(texts(hits), oracle_hits(al, 4, Target::nand(), 0.0));
}

TEST(Enumerate, ThreeOpsHoldSignRootedNands) {
  auto hits = enumerate(OpAlphabet::defaults(), 3, Target::nand(), 0.0);
  auto t = texts(hits);
  EXPECT_FALSE(t.count(kSignNand));  // four applications
  EXPECT_TRUE(t.count("sign(affine[-1,1](mul(a,b)))"));
}

TEST(Enumerate, MatchesBruteForceOracleOnDefaultAlphabet) {
  OpAlphabet al = OpAlphabet::defaults();
  for (double eps : {0.0, 0.5, 1.0}) {
    auto hits = enumerate(al, 3, Target::nand(), eps);
    EXPECT_EQ(hits.size(), texts(hits).size()) << "duplicates at eps " << eps;
    EXPECT_EQ(texts(hits), oracle_hits(al, 3, Target::nand(), eps)) << "eps " << eps;
  }
  auto xors = enumerate(al, 3, Target::xor_gate(), 0.0);
  EXPECT_EQ(texts(xors), oracle_hits(al, 3, Target::xor_gate(), 0.0));
}

TEST(Enumerate, SortedByOpsThenText) {
  auto hits = enumerate(OpAlphabet::defaults(), 3, Target::nand(), 0.0);
  EXPECT_TRUE(std::is_sorted(hits.begin(), hits.end(), [](const Construction& x, const Construction& y) {
    return std::tie(x.ops, x.text) < std::tie(y.ops, y.text);
  }));
}

TEST(Enumerate, ZeroOpsHoldNoNand) {
  EXPECT_TRUE(enumerate(OpAlphabet::defaults(), 0, Target::nand(), 0.0).empty());
  EXPECT_EQ(enumerate(OpAlphabet::defaults(), 0, Target::parse("0011"), 0.0).size(), 1u);  // bare a
}

TEST(Enumerate, CountsAreMonotoneInMaxOps) {
  std::size_t prev = 0;
  for (int n = 0; n <= 4; ++n) {
    std::size_t c = enumerate(OpAlphabet::defaults(), n, Target::nand(), 0.0).size();
    EXPECT_GE(c, prev);
    prev = c;
  }
  auto sizes = space_size(OpAlphabet::defaults(), 2);
  EXPECT_EQ(sizes[0], 4u);
}

TEST(Enumerate, BoundIsEnforced) {
  try {
    enumerate(OpAlphabet::defaults(), 6, Target::nand(), 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBoundExceeded);
  }
}

TEST(Enumerate, StoredEpsilonMatchesInterpreter) {
  auto hits = enumerate(OpAlphabet::defaults(), 3, Target::nand(), 1.0);
  for (const auto& c : hits) {
    auto r = evaluate_construction(*c.expr, Target::nand());
    ASSERT_EQ(r.table, c.table) << c.text;
    ASSERT_EQ(r.epsilon, c.epsilon) << c.text;
    ASSERT_EQ(op_count(*c.expr), c.ops);
  }
}

TEST(Enumerate, MinorErrorNandsExistAtFourOps) {
  auto hits = enumerate(OpAlphabet::defaults(), 4, Target::nand(), 0.25);
  auto minor = std::count_if(hits.begin(), hits.end(), [](const Construction& c) { return c.epsilon > 0.0; });
  EXPECT_GT(minor, 0);
}

TEST(MonteCarlo, DeterministicAndVerifiable) {
  auto a = monte_carlo(OpAlphabet::defaults(), Target::nand(), 10000, 1, 0.0);
  auto b = monte_carlo(OpAlphabet::defaults(), Target::nand(), 10000, 1, 0.0);
  ASSERT_FALSE(a.empty());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].text, b[i].text);
  for (const auto& c : a) EXPECT_EQ(evaluate_construction(*c.expr, Target::nand()).epsilon, 0.0) << c.text;
}

TEST(MonteCarlo, LooserThresholdIsASuperset) {
  auto exact = texts(monte_carlo(OpAlphabet::defaults(), Target::nand(), 10000, 1, 0.0));
  auto loose = texts(monte_carlo(OpAlphabet::defaults(), Target::nand(), 10000, 1, 0.25));
  EXPECT_TRUE(std::includes(loose.begin(), loose.end(), exact.begin(), exact.end()));
}

TEST(MonteCarlo, HitsAreASubsetOfEnumeration) {
  auto all = texts(enumerate(OpAlphabet::defaults(), 4, Target::nand(), 0.5));
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& c : monte_carlo(OpAlphabet::defaults(), Target::nand(), 20000, seed, 0.5)) {
      ASSERT_LE(c.ops, 4);
      EXPECT_TRUE(all.count(c.text)) << c.text;
    }
  }
}

TEST(Emit, FragmentReproducesTableBitwiseAndHasNoTrainables) {
  for (const auto& c : enumerate(OpAlphabet::defaults(), 2, Target::nand(), 2.0)) {
    GraphIR g = emit_fragment(*c.expr, {4});
    ASSERT_FALSE(has_trainable_parameters(g));
    auto out = evaluate(g, {{"a", Tensor::vector({0, 0, 1, 1})}, {"b", Tensor::vector({0, 1, 0, 1})}}).outputs[0];
    for (std::size_t i = 0; i < 4; ++i) {
      double v = out.size() == 4 ? out.data[i] : out.data[0];
      ASSERT_EQ(std::memcmp(&v, &c.table[i], sizeof v), 0) << c.text;
    }
  }
}

TEST(Emit, SignNandEvaluatesAndSurvivesSerialization) {
  GraphIR g = emit_fragment(*parse_expr(kSignNand));
  auto at = [](const GraphIR& gr, double a, double b) {
    return evaluate(gr, {{"a", Tensor::vector({a})}, {"b", Tensor::vector({b})}}).outputs[0].data[0];
  };
  EXPECT_EQ(at(g, 1, 1), 0.0);
  GraphIR back = deserialize(serialize(g));
  for (double a : {0.0, 1.0})
    for (double b : {0.0, 1.0}) EXPECT_EQ(at(back, a, b), at(g, a, b));
}

TEST(Emit, GeneralAffineUsesConstants) {
  GraphIR g = emit_fragment(*affine(2.5, -0.25, leaf_a()));
  EXPECT_TRUE(has_constants(g));
  EXPECT_FALSE(has_trainable_parameters(g));
  EXPECT_EQ(evaluate(g, {{"a", Tensor::vector({2})}, {"b", Tensor::vector({0})}}).outputs[0].data[0], 4.75);
}

TEST(Emit, ParameterFreeFragmentIgnoresWeightRandomization) {
  // A host with trainable weights next to an emitted gate; the gate output must
  // not move under any parameter draw.
  GraphBuilder b("h");
  std::string a = b.input("a", {1, 3});
  std::string bv = b.input("b", {1, 3});
  std::string w = b.param("w", Tensor(Shape{3}, 0.5), true);
  b.output(b.binary(OpKind::kMul, a, w));
  std::string gate = emit_into(b, *parse_expr(kSignNand), a, bv);
  b.output(gate);
  GraphIR g = std::move(b).build();
  TensorMap in{{"a", Tensor(Shape{2, 3}, std::vector<double>{0, 1, 1, 0, 0, 1})},
               {"b", Tensor(Shape{2, 3}, std::vector<double>{0, 0, 1, 1, 1, 1})}};
  Tensor ref = Interpreter(g, {gate}).run(in).outputs[0];
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    GraphIR r = randomize_parameters(g, seed, Distribution::normal(0, 10));
    ASSERT_TRUE(Interpreter(r, {gate}).run(in).outputs[0].bitwise_equal(ref));
  }
}

TEST(Universality, AllExactNandsUpToFourOpsComposeIntoAndOrNot) {
  auto nands = enumerate(OpAlphabet::defaults(), 4, Target::nand(), 0.0);
  ASSERT_GT(nands.size(), 1000u);
  for (const auto& c : nands) {
    auto r = check_universality(c.expr);
    ASSERT_TRUE(r.ok()) << c.text;
  }
}

TEST(Universality, FailsForANonNand) { EXPECT_FALSE(check_universality(parse_expr("add(a,b)")).ok()); }

TEST(Blocklist, OneLinePerConstruction) {
  auto hits = enumerate(OpAlphabet::defaults(), 2, Target::nand(), 0.0);
  std::string text = blocklist(hits);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), hits.size());
  EXPECT_EQ(text.substr(0, text.find('\n')), hits.front().text);
}

}  // namespace
}  // namespace archdoor::gates
