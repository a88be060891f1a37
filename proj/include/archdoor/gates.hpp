// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "archdoor/graph.hpp"

namespace archdoor::gates {

enum class Prim {
  kSign,
  kRelu,
  kRelu6,
  kSigmoid,
  kLogSigmoid,
  kExp,
  kCos,
  kTrunc,
  kNeg,
  kAffine,  // scale * x + shift
  kAdd,
  kSub,
  kMul,
  kMax,
  kMin,
};

bool is_binary(Prim p);
bool is_commutative(Prim p);
std::string_view prim_name(Prim p);
std::optional<Prim> prim_from_name(std::string_view name);

struct UnaryOp {
  Prim prim = Prim::kSign;
  double scale = 1.0;  // affine only
  double shift = 0.0;  // affine only
  friend bool operator==(const UnaryOp&, const UnaryOp&) = default;
};

/// Scalar semantics of a unary primitive, rounding exactly like the emitted nodes.
double apply_unary(const UnaryOp& op, double x);
double apply_binary(Prim op, double a, double b);

struct OpAlphabet {
  std::vector<UnaryOp> unary;
  std::vector<Prim> binary;
  std::vector<double> constants{0.0, 1.0};

  /// sign, relu, sigmoid, trunc, cos, logsigmoid, affine[-1,1], affine[1,1],
  /// affine[1,-1]; add, sub, mul, max, min; constants {0, 1}.
  static OpAlphabet defaults();
  /// Comma-separated op names, affines written "affine[s,t]"; constants keep their default.
  static OpAlphabet parse(std::string_view spec);
  std::string describe() const;
};

/// Expression tree over inputs a, b and pool constants.
struct Expr {
  enum class Kind { kA, kB, kConst, kUnary, kBinary } kind = Kind::kA;
  double value = 0.0;  // kConst
  UnaryOp unary;       // kUnary
  Prim binary = Prim::kAdd;
  std::shared_ptr<const Expr> lhs, rhs;
};
using ExprPtr = std::shared_ptr<const Expr>;

ExprPtr leaf_a();
ExprPtr leaf_b();
ExprPtr constant(double v);
ExprPtr unary(UnaryOp op, ExprPtr x);
ExprPtr binary(Prim op, ExprPtr l, ExprPtr r);
ExprPtr affine(double scale, double shift, ExprPtr x);

/// Number of primitive applications; each affine counts once.
int op_count(const Expr& e);
/// Canonical string; commutative operands sorted lexicographically.
std::string canonical(const Expr& e);
/// Same tree with commutative operands in canonical order.
ExprPtr canonicalize(const ExprPtr& e);
/// Parses the canonical syntax, e.g. "sign(add(affine[-1,1](a),affine[-1,1](b)))".
ExprPtr parse_expr(std::string_view text);
/// Replaces the leaves a and b.
ExprPtr substitute(const ExprPtr& e, const ExprPtr& a, const ExprPtr& b);

/// f(0,0), f(0,1), f(1,0), f(1,1).
using TruthTable = std::array<double, 4>;

struct Target {
  std::string name;
  std::array<bool, 4> bits{};

  static Target nand();
  static Target and_gate();
  static Target or_gate();
  static Target not_a();
  static Target xor_gate();
  /// "nand", "and", "or", "not", "xor" or a 4-character bit string such as "1110".
  static Target parse(std::string_view name);
};

/// Scalar evaluation on the four boolean probes; nullopt when any value is non-finite.
std::optional<TruthTable> truth_table(const Expr& e);
double epsilon_of(const TruthTable& t, const Target& target);

struct Construction {
  ExprPtr expr;
  int ops = 0;
  TruthTable table{};
  double epsilon = 0.0;
  std::string text;  // canonical form
};

Construction make_construction(const ExprPtr& e, const Target& target);

struct Evaluation {
  TruthTable table;
  double epsilon;
};

/// Evaluates through the interpreter on an emitted fragment. Throws kNonFinite
/// when a probe produces NaN or infinity.
Evaluation evaluate_construction(const Expr& e, const Target& target);

inline constexpr int kDefaultEnumerationBound = 5;

/// Every distinct tree with at most `max_ops` applications whose error is within
/// `epsilon_max`, sorted by (ops, canonical text). Throws kBoundExceeded past `bound`.
std::vector<Construction> enumerate(const OpAlphabet& alphabet, int max_ops, const Target& target,
                                    double epsilon_max, int bound = kDefaultEnumerationBound);

/// Number of trees (finite on all probes) per op count, 0..max_ops.
std::vector<std::uint64_t> space_size(const OpAlphabet& alphabet, int max_ops, int bound = kDefaultEnumerationBound);

/// Random trees with op counts uniform in [1, max_ops]; distinct hits sorted like enumerate.
std::vector<Construction> monte_carlo(const OpAlphabet& alphabet, const Target& target, std::size_t budget,
                                      std::uint64_t seed, double epsilon_max, int max_ops = 4);

/// Adds the expression's nodes to `b`, reading `a` and `bv` as the two operands.
/// The constants 0 and 1 and affine coefficients +-1, 0 are derived from `a` at
/// run time; other constants become non-trainable scalars.
std::string emit_into(GraphBuilder& b, const Expr& e, const std::string& a, const std::string& bv);

/// Stand-alone fragment with inputs "a" and "b" of `shape` and one output.
GraphIR emit_fragment(const Expr& e, Shape shape = {1});

struct UniversalityResult {
  bool not_ok = false, and_ok = false, or_ok = false;
  bool ok() const { return not_ok && and_ok && or_ok; }
};

/// Builds NOT(x)=N(x,x), AND=NOT(N(a,b)), OR=N(NOT a, NOT b) from `nand` and checks their tables.
UniversalityResult check_universality(const ExprPtr& nand);

/// One canonical construction per line.
std::string blocklist(const std::vector<Construction>& items);

}  // namespace archdoor::gates
