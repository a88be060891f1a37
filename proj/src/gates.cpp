// SPDX-License-Identifier: Apache-2.0
#include "archdoor/gates.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <type_traits>

#include "archdoor/error.hpp"
#include "archdoor/interpreter.hpp"

namespace archdoor::gates {
namespace {

struct PrimInfo {
  Prim prim;
  std::string_view name;
  bool binary;
  bool commutative;
};

constexpr PrimInfo kPrims[] = {
    {Prim::kSign, "sign", false, false},       {Prim::kRelu, "relu", false, false},
    {Prim::kRelu6, "relu6", false, false},     {Prim::kSigmoid, "sigmoid", false, false},
    {Prim::kLogSigmoid, "logsigmoid", false, false}, {Prim::kExp, "exp", false, false},
    {Prim::kCos, "cos", false, false},         {Prim::kTrunc, "trunc", false, false},
    {Prim::kNeg, "neg", false, false},         {Prim::kAffine, "affine", false, false},
    {Prim::kAdd, "add", true, true},           {Prim::kSub, "sub", true, false},
    {Prim::kMul, "mul", true, true},           {Prim::kMax, "max", true, true},
    {Prim::kMin, "min", true, true},
};

const PrimInfo& info(Prim p) { return kPrims[static_cast<std::size_t>(p)]; }

std::string format_number(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string unary_label(const UnaryOp& op) {
  std::string s(prim_name(op.prim));
  if (op.prim == Prim::kAffine) s += "[" + format_number(op.scale) + "," + format_number(op.shift) + "]";
  return s;
}

template <typename Sig>
class FunctionRef;

// Non-owning callable reference; the referenced callable must outlive the call.
template <typename R, typename... A>
class FunctionRef<R(A...)> {
 public:
  template <typename F>
    requires(!std::is_same_v<std::decay_t<F>, FunctionRef>)
  FunctionRef(F&& f)  // NOLINT(google-explicit-constructor)
      : obj_(const_cast<void*>(static_cast<const void*>(&f))),
        call_([](void* o, A... a) -> R { return (*static_cast<std::remove_reference_t<F>*>(o))(a...); }) {}
  R operator()(A... a) const { return call_(obj_, a...); }

 private:
  void* obj_;
  R (*call_)(void*, A...);
};

using Maker = FunctionRef<ExprPtr()>;
using Visitor = FunctionRef<void(const TruthTable&, std::size_t, Maker)>;

bool finite(const TruthTable& t) {
  return std::isfinite(t[0]) && std::isfinite(t[1]) && std::isfinite(t[2]) && std::isfinite(t[3]);
}

// Bottom-up space of trees. Levels up to kStored ops are materialized; larger
// levels are regenerated on demand in the same deterministic order.
class Space {
 public:
  static constexpr int kStored = 3;

  Space(const OpAlphabet& alphabet, int max_ops) : alpha_(alphabet) {
    levels_.resize(static_cast<std::size_t>(std::min(max_ops, kStored)) + 1);
    auto& leaves = levels_[0];
    leaves.push_back({{0, 0, 1, 1}, Item::kA, 0, 0, 0, 0, 0});
    leaves.push_back({{0, 1, 0, 1}, Item::kB, 0, 0, 0, 0, 0});
    for (std::size_t c = 0; c < alpha_.constants.size(); ++c) {
      double v = alpha_.constants[c];
      leaves.push_back({{v, v, v, v}, Item::kConst, static_cast<std::uint16_t>(c), 0, 0, 0, 0});
    }
    for (int n = 1; n < static_cast<int>(levels_.size()); ++n) fill(n);
  }

  void each(int n, Visitor cb) const {
    if (n < static_cast<int>(levels_.size())) {
      const auto& level = levels_[static_cast<std::size_t>(n)];
      for (std::size_t i = 0; i < level.size(); ++i) {
        auto mk = [&, i] { return build(n, i); };
        cb(level[i].tt, i, Maker(mk));
      }
      return;
    }
    std::size_t counter = 0;
    for (std::size_t u = 0; u < alpha_.unary.size(); ++u) {
      const UnaryOp& op = alpha_.unary[u];
      each(n - 1, [&](const TruthTable& c, std::size_t, Maker mk) {
        TruthTable t{apply_unary(op, c[0]), apply_unary(op, c[1]), apply_unary(op, c[2]), apply_unary(op, c[3])};
        if (!finite(t)) return;
        auto make = [&] { return unary(op, mk()); };
        cb(t, counter++, Maker(make));
      });
    }
    for (Prim op : alpha_.binary) {
      bool comm = is_commutative(op);
      for (int l = 0; l < n; ++l) {
        int r = n - 1 - l;
        if (comm && l > r) continue;
        each(l, [&](const TruthTable& a, std::size_t ia, Maker mka) {
          each(r, [&](const TruthTable& b, std::size_t ib, Maker mkb) {
            if (comm && l == r && ib < ia) return;
            TruthTable t{apply_binary(op, a[0], b[0]), apply_binary(op, a[1], b[1]), apply_binary(op, a[2], b[2]),
                         apply_binary(op, a[3], b[3])};
            if (!finite(t)) return;
            auto make = [&] { return binary(op, mka(), mkb()); };
            cb(t, counter++, Maker(make));
          });
        });
      }
    }
  }

 private:
  struct Item {
    enum Kind : std::uint8_t { kA, kB, kConst, kUnary, kBinary };
    TruthTable tt;
    Kind kind;
    std::uint16_t op;
    std::uint8_t lsize, rsize;
    std::uint32_t li, ri;
  };

  void fill(int n) {
    auto& out = levels_[static_cast<std::size_t>(n)];
    const auto& prev = levels_[static_cast<std::size_t>(n - 1)];
    for (std::size_t u = 0; u < alpha_.unary.size(); ++u) {
      for (std::size_t i = 0; i < prev.size(); ++i) {
        const auto& c = prev[i].tt;
        const UnaryOp& op = alpha_.unary[u];
        TruthTable t{apply_unary(op, c[0]), apply_unary(op, c[1]), apply_unary(op, c[2]), apply_unary(op, c[3])};
        if (finite(t))
          out.push_back({t, Item::kUnary, static_cast<std::uint16_t>(u), static_cast<std::uint8_t>(n - 1), 0,
                         static_cast<std::uint32_t>(i), 0});
      }
    }
    for (std::size_t k = 0; k < alpha_.binary.size(); ++k) {
      Prim op = alpha_.binary[k];
      bool comm = is_commutative(op);
      for (int l = 0; l < n; ++l) {
        int r = n - 1 - l;
        if (comm && l > r) continue;
        const auto& L = levels_[static_cast<std::size_t>(l)];
        const auto& R = levels_[static_cast<std::size_t>(r)];
        for (std::size_t i = 0; i < L.size(); ++i) {
          for (std::size_t j = (comm && l == r) ? i : 0; j < R.size(); ++j) {
            const auto& a = L[i].tt;
            const auto& b = R[j].tt;
            TruthTable t{apply_binary(op, a[0], b[0]), apply_binary(op, a[1], b[1]), apply_binary(op, a[2], b[2]),
                         apply_binary(op, a[3], b[3])};
            if (finite(t))
              out.push_back({t, Item::kBinary, static_cast<std::uint16_t>(k), static_cast<std::uint8_t>(l),
                             static_cast<std::uint8_t>(r), static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
          }
        }
      }
    }
  }

  ExprPtr build(int n, std::size_t i) const {
    const Item& it = levels_[static_cast<std::size_t>(n)][i];
    switch (it.kind) {
      case Item::kA: return leaf_a();
      case Item::kB: return leaf_b();
      case Item::kConst: return constant(alpha_.constants[it.op]);
      case Item::kUnary: return unary(alpha_.unary[it.op], build(it.lsize, it.li));
      case Item::kBinary: return binary(alpha_.binary[it.op], build(it.lsize, it.li), build(it.rsize, it.ri));
    }
    return nullptr;
  }

  const OpAlphabet& alpha_;
  std::vector<std::vector<Item>> levels_;
};

void check_bound(int max_ops, int bound) {
  if (max_ops < 0) throw Error(ErrorKind::kInvalidArgument, "max_ops must be non-negative");
  if (max_ops > bound)
    throw Error(ErrorKind::kBoundExceeded,
                "max_ops " + std::to_string(max_ops) + " exceeds the enumeration bound " + std::to_string(bound));
}

void sort_constructions(std::vector<Construction>& v) {
  std::sort(v.begin(), v.end(), [](const Construction& x, const Construction& y) {
    return std::tie(x.ops, x.text) < std::tie(y.ops, y.text);
  });
}

// ---- parsing ----------------------------------------------------------------

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  ExprPtr parse() {
    ExprPtr e = expr();
    if (pos_ != s_.size()) fail("trailing characters");
    return e;
  }

  static double number(std::string_view s, std::string_view context) {
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw Error(ErrorKind::kInvalidArgument, "bad number '" + std::string(s) + "' in " + std::string(context));
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorKind::kInvalidArgument,
                "cannot parse expression '" + std::string(s_) + "' at " + std::to_string(pos_) + ": " + why);
  }

  void expect(char c) {
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string_view token(std::string_view stops) {
    std::size_t start = pos_;
    while (pos_ < s_.size() && stops.find(s_[pos_]) == std::string_view::npos) ++pos_;
    return s_.substr(start, pos_ - start);
  }

  ExprPtr expr() {
    std::string_view name = token("([,)]");
    if (name.empty()) fail("empty token");
    if (pos_ >= s_.size() || s_[pos_] == ',' || s_[pos_] == ')') {
      if (name == "a") return leaf_a();
      if (name == "b") return leaf_b();
      return constant(number(name, s_));
    }
    auto prim = prim_from_name(name);
    if (!prim) fail("unknown primitive '" + std::string(name) + "'");
    UnaryOp op{*prim, 1.0, 0.0};
    if (*prim == Prim::kAffine) {
      expect('[');
      op.scale = number(token(","), s_);
      expect(',');
      op.shift = number(token("]"), s_);
      expect(']');
    }
    expect('(');
    ExprPtr l = expr();
    if (is_binary(*prim)) {
      expect(',');
      ExprPtr r = expr();
      expect(')');
      return binary(*prim, l, r);
    }
    expect(')');
    return unary(op, l);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

bool is_binary(Prim p) { return info(p).binary; }
bool is_commutative(Prim p) { return info(p).commutative; }
std::string_view prim_name(Prim p) { return info(p).name; }

std::optional<Prim> prim_from_name(std::string_view name) {
  for (const auto& p : kPrims)
    if (p.name == name) return p.prim;
  return std::nullopt;
}

double apply_unary(const UnaryOp& op, double x) {
  switch (op.prim) {
    case Prim::kSign: return kernels::sign(x);
    case Prim::kRelu: return kernels::relu(x);
    case Prim::kRelu6: return kernels::relu6(x);
    case Prim::kSigmoid: return kernels::sigmoid(x);
    case Prim::kLogSigmoid: return kernels::logsigmoid(x);
    case Prim::kExp: return std::exp(x);
    case Prim::kCos: return std::cos(x);
    case Prim::kTrunc: return kernels::trunc(x);
    case Prim::kNeg: return -x;
    case Prim::kAffine:
      if (op.scale == -1.0) return op.shift == 0.0 ? -x : op.shift - x;
      if (op.scale == 1.0) return op.shift == 0.0 ? x : x + op.shift;
      return op.scale * x + op.shift;
    default: break;
  }
  throw Error(ErrorKind::kInvalidArgument, "not a unary primitive: " + std::string(prim_name(op.prim)));
}

double apply_binary(Prim op, double a, double b) {
  switch (op) {
    case Prim::kAdd: return a + b;
    case Prim::kSub: return a - b;
    case Prim::kMul: return a * b;
    case Prim::kMax: return kernels::max(a, b);
    case Prim::kMin: return kernels::min(a, b);
    default: break;
  }
  throw Error(ErrorKind::kInvalidArgument, "not a binary primitive: " + std::string(prim_name(op)));
}

OpAlphabet OpAlphabet::defaults() {
  OpAlphabet a;
  for (Prim p : {Prim::kSign, Prim::kRelu, Prim::kSigmoid, Prim::kTrunc, Prim::kCos, Prim::kLogSigmoid})
    a.unary.push_back({p, 1.0, 0.0});
  a.unary.push_back({Prim::kAffine, -1.0, 1.0});
  a.unary.push_back({Prim::kAffine, 1.0, 1.0});
  a.unary.push_back({Prim::kAffine, 1.0, -1.0});
  a.binary = {Prim::kAdd, Prim::kSub, Prim::kMul, Prim::kMax, Prim::kMin};
  return a;
}

OpAlphabet OpAlphabet::parse(std::string_view spec) {
  OpAlphabet a;
  std::size_t pos = 0;
  while (pos < spec.size()) {
    std::size_t end = pos;
    int depth = 0;
    while (end < spec.size() && (spec[end] != ',' || depth > 0)) {
      depth += spec[end] == '[' ? 1 : spec[end] == ']' ? -1 : 0;
      ++end;
    }
    std::string_view item = spec.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    std::string_view name = item.substr(0, item.find('['));
    auto prim = prim_from_name(name);
    if (!prim) throw Error(ErrorKind::kInvalidArgument, "unknown primitive '" + std::string(name) + "'");
    if (is_binary(*prim)) {
      a.binary.push_back(*prim);
      continue;
    }
    UnaryOp op{*prim, 1.0, 0.0};
    if (*prim == Prim::kAffine) {
      auto open = item.find('['), comma = item.find(','), close = item.find(']');
      if (open == std::string_view::npos || comma == std::string_view::npos || close != item.size() - 1)
        throw Error(ErrorKind::kInvalidArgument, "affine must be written affine[scale,shift]");
      op.scale = Parser::number(item.substr(open + 1, comma - open - 1), item);
      op.shift = Parser::number(item.substr(comma + 1, close - comma - 1), item);
    }
    a.unary.push_back(op);
  }
  if (a.unary.empty() && a.binary.empty()) throw Error(ErrorKind::kInvalidArgument, "empty alphabet");
  return a;
}

std::string OpAlphabet::describe() const {
  std::string s;
  for (const auto& u : unary) s += (s.empty() ? "" : ",") + unary_label(u);
  for (Prim p : binary) s += (s.empty() ? "" : ",") + std::string(prim_name(p));
  return s;
}

// ---- expressions --------------------------------------------------------------

ExprPtr leaf_a() {
  static const ExprPtr e = std::make_shared<const Expr>(Expr{Expr::Kind::kA, 0.0, {}, Prim::kAdd, nullptr, nullptr});
  return e;
}

ExprPtr leaf_b() {
  static const ExprPtr e = std::make_shared<const Expr>(Expr{Expr::Kind::kB, 0.0, {}, Prim::kAdd, nullptr, nullptr});
  return e;
}

ExprPtr constant(double v) {
  return std::make_shared<const Expr>(Expr{Expr::Kind::kConst, v, {}, Prim::kAdd, nullptr, nullptr});
}

ExprPtr unary(UnaryOp op, ExprPtr x) {
  if (is_binary(op.prim)) throw Error(ErrorKind::kInvalidArgument, "binary primitive used as unary");
  return std::make_shared<const Expr>(Expr{Expr::Kind::kUnary, 0.0, op, Prim::kAdd, std::move(x), nullptr});
}

ExprPtr binary(Prim op, ExprPtr l, ExprPtr r) {
  if (!is_binary(op)) throw Error(ErrorKind::kInvalidArgument, "unary primitive used as binary");
  return std::make_shared<const Expr>(Expr{Expr::Kind::kBinary, 0.0, {}, op, std::move(l), std::move(r)});
}

ExprPtr affine(double scale, double shift, ExprPtr x) { return unary({Prim::kAffine, scale, shift}, std::move(x)); }

int op_count(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::kUnary: return 1 + op_count(*e.lhs);
    case Expr::Kind::kBinary: return 1 + op_count(*e.lhs) + op_count(*e.rhs);
    default: return 0;
  }
}

std::string canonical(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::kA: return "a";
    case Expr::Kind::kB: return "b";
    case Expr::Kind::kConst: return format_number(e.value);
    case Expr::Kind::kUnary: return unary_label(e.unary) + "(" + canonical(*e.lhs) + ")";
    case Expr::Kind::kBinary: {
      std::string l = canonical(*e.lhs), r = canonical(*e.rhs);
      if (is_commutative(e.binary) && r < l) std::swap(l, r);
      return std::string(prim_name(e.binary)) + "(" + l + "," + r + ")";
    }
  }
  return {};
}

ExprPtr canonicalize(const ExprPtr& e) {
  switch (e->kind) {
    case Expr::Kind::kUnary: return unary(e->unary, canonicalize(e->lhs));
    case Expr::Kind::kBinary: {
      ExprPtr l = canonicalize(e->lhs), r = canonicalize(e->rhs);
      if (is_commutative(e->binary) && canonical(*r) < canonical(*l)) std::swap(l, r);
      return binary(e->binary, l, r);
    }
    default: return e;
  }
}

ExprPtr parse_expr(std::string_view text) { return Parser(text).parse(); }

ExprPtr substitute(const ExprPtr& e, const ExprPtr& a, const ExprPtr& b) {
  switch (e->kind) {
    case Expr::Kind::kA: return a;
    case Expr::Kind::kB: return b;
    case Expr::Kind::kConst: return e;
    case Expr::Kind::kUnary: return unary(e->unary, substitute(e->lhs, a, b));
    case Expr::Kind::kBinary: return binary(e->binary, substitute(e->lhs, a, b), substitute(e->rhs, a, b));
  }
  return e;
}

// ---- targets and tables -----------------------------------------------------------

Target Target::nand() { return {"nand", {true, true, true, false}}; }
Target Target::and_gate() { return {"and", {false, false, false, true}}; }
Target Target::or_gate() { return {"or", {false, true, true, true}}; }
Target Target::not_a() { return {"not", {true, true, false, false}}; }
Target Target::xor_gate() { return {"xor", {false, true, true, false}}; }

Target Target::parse(std::string_view name) {
  for (const Target& t : {nand(), and_gate(), or_gate(), not_a(), xor_gate()})
    if (t.name == name) return t;
  if (name.size() == 4 && name.find_first_not_of("01") == std::string_view::npos) {
    Target t{std::string(name), {}};
    for (std::size_t i = 0; i < 4; ++i) t.bits[i] = name[i] == '1';
    return t;
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown target '" + std::string(name) + "'");
}

namespace {

std::optional<double> eval_at(const Expr& e, double a, double b) {
  switch (e.kind) {
    case Expr::Kind::kA: return a;
    case Expr::Kind::kB: return b;
    case Expr::Kind::kConst: return e.value;
    case Expr::Kind::kUnary: {
      auto x = eval_at(*e.lhs, a, b);
      if (!x) return std::nullopt;
      double v = apply_unary(e.unary, *x);
      return std::isfinite(v) ? std::optional<double>(v) : std::nullopt;
    }
    case Expr::Kind::kBinary: {
      auto x = eval_at(*e.lhs, a, b);
      auto y = x ? eval_at(*e.rhs, a, b) : std::nullopt;
      if (!y) return std::nullopt;
      double v = apply_binary(e.binary, *x, *y);
      return std::isfinite(v) ? std::optional<double>(v) : std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<TruthTable> truth_table(const Expr& e) {
  TruthTable t{};
  const double probes[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  for (std::size_t i = 0; i < 4; ++i) {
    auto v = eval_at(e, probes[i][0], probes[i][1]);
    if (!v) return std::nullopt;
    t[i] = *v;
  }
  return t;
}

double epsilon_of(const TruthTable& t, const Target& target) {
  double eps = 0.0;
  for (std::size_t i = 0; i < 4; ++i) eps += std::abs(t[i] - (target.bits[i] ? 1.0 : 0.0));
  return eps;
}

Construction make_construction(const ExprPtr& e, const Target& target) {
  auto t = truth_table(*e);
  if (!t) throw Error(ErrorKind::kNonFinite, "construction " + canonical(*e) + " is non-finite on a boolean probe");
  ExprPtr c = canonicalize(e);
  return {c, op_count(*c), *t, epsilon_of(*t, target), canonical(*c)};
}

Evaluation evaluate_construction(const Expr& e, const Target& target) {
  GraphIR g = emit_fragment(e, {4});
  EvalResult r;
  try {
    r = evaluate(g, {{"a", Tensor::vector({0, 0, 1, 1})}, {"b", Tensor::vector({0, 1, 0, 1})}});
  } catch (const Error& err) {
    if (err.kind() == ErrorKind::kNonFinite)
      throw Error(ErrorKind::kNonFinite, "construction " + canonical(e) + " rejected: " + err.what());
    throw;
  }
  const Tensor& out = r.outputs[0];
  TruthTable t{};
  for (std::size_t i = 0; i < 4; ++i) t[i] = out.size() == 4 ? out.data[i] : out.data[0];
  return {t, epsilon_of(t, target)};
}

// ---- search -----------------------------------------------------------------------

std::vector<Construction> enumerate(const OpAlphabet& alphabet, int max_ops, const Target& target, double epsilon_max,
                                    int bound) {
  check_bound(max_ops, bound);
  Space space(alphabet, max_ops);
  std::vector<Construction> hits;
  for (int n = 0; n <= max_ops; ++n) {
    space.each(n, [&](const TruthTable& t, std::size_t, Maker mk) {
      double eps = epsilon_of(t, target);
      if (eps <= epsilon_max) {
        ExprPtr e = canonicalize(mk());
        hits.push_back({e, n, t, eps, canonical(*e)});
      }
    });
  }
  sort_constructions(hits);
  return hits;
}

std::vector<std::uint64_t> space_size(const OpAlphabet& alphabet, int max_ops, int bound) {
  check_bound(max_ops, bound);
  Space space(alphabet, max_ops);
  std::vector<std::uint64_t> counts;
  for (int n = 0; n <= max_ops; ++n) {
    std::uint64_t c = 0;
    space.each(n, [&](const TruthTable&, std::size_t, Maker) { ++c; });
    counts.push_back(c);
  }
  return counts;
}

std::vector<Construction> monte_carlo(const OpAlphabet& alphabet, const Target& target, std::size_t budget,
                                      std::uint64_t seed, double epsilon_max, int max_ops) {
  if (budget == 0) throw Error(ErrorKind::kInvalidArgument, "budget must be positive");
  if (max_ops < 1) throw Error(ErrorKind::kInvalidArgument, "max_ops must be at least 1");
  SeededStream rng(seed);
  const std::size_t nu = alphabet.unary.size(), nb = alphabet.binary.size();
  const std::size_t nleaf = 2 + alphabet.constants.size();

  auto gen = [&](auto& self, int n) -> ExprPtr {
    if (n == 0) {
      std::size_t k = rng.below(nleaf);
      return k == 0 ? leaf_a() : k == 1 ? leaf_b() : constant(alphabet.constants[k - 2]);
    }
    if (nb == 0 || (nu > 0 && rng.below(nu + nb) < nu)) return unary(alphabet.unary[rng.below(nu)], self(self, n - 1));
    Prim op = alphabet.binary[rng.below(nb)];
    int l = static_cast<int>(rng.below(static_cast<std::size_t>(n)));
    ExprPtr lhs = self(self, l);
    return binary(op, lhs, self(self, n - 1 - l));
  };

  std::set<std::string> seen;
  std::vector<Construction> hits;
  for (std::size_t s = 0; s < budget; ++s) {
    int n = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(max_ops)));
    ExprPtr e = gen(gen, n);
    auto t = truth_table(*e);
    if (!t) continue;
    double eps = epsilon_of(*t, target);
    if (eps > epsilon_max) continue;
    ExprPtr c = canonicalize(e);
    std::string text = canonical(*c);
    if (!seen.insert(text).second) continue;
    hits.push_back({c, n, *t, eps, std::move(text)});
  }
  sort_constructions(hits);
  return hits;
}

// ---- emission -----------------------------------------------------------------------

namespace {

class Emitter {
 public:
  Emitter(GraphBuilder& b, std::string a, std::string bv) : b_(b), a_(std::move(a)), bv_(std::move(bv)) {}

  std::string emit(const Expr& e) {
    switch (e.kind) {
      case Expr::Kind::kA: return a_;
      case Expr::Kind::kB: return bv_;
      case Expr::Kind::kConst: return constant_ref(e.value);
      case Expr::Kind::kUnary: return emit_unary(e.unary, emit(*e.lhs));
      case Expr::Kind::kBinary: {
        std::string l = emit(*e.lhs);
        std::string r = emit(*e.rhs);
        return b_.binary(binary_op(e.binary), l, r);
      }
    }
    return {};
  }

 private:
  static OpKind binary_op(Prim p) {
    switch (p) {
      case Prim::kAdd: return OpKind::kAdd;
      case Prim::kSub: return OpKind::kSub;
      case Prim::kMul: return OpKind::kMul;
      case Prim::kMax: return OpKind::kMax;
      default: return OpKind::kMin;
    }
  }

  std::string constant_ref(double v) {
    if (v == 0.0 && !std::signbit(v)) {
      if (!zero_) zero_ = b_.runtime_zero(a_);
      return *zero_;
    }
    if (v == 1.0) {
      if (!one_) {
        if (!zero_) zero_ = b_.runtime_zero(a_);
        std::string half = b_.unary(OpKind::kSigmoid, *zero_);
        one_ = b_.binary(OpKind::kAdd, half, half);
      }
      return *one_;
    }
    auto it = consts_.find(v);
    if (it != consts_.end()) return it->second;
    std::string ref = b_.param("gate_const", Tensor::scalar(v), false);
    consts_.emplace(v, ref);
    return ref;
  }

  std::string emit_unary(const UnaryOp& op, const std::string& x) {
    switch (op.prim) {
      case Prim::kSign: return b_.unary(OpKind::kSign, x);
      case Prim::kRelu: return b_.unary(OpKind::kRelu, x);
      case Prim::kRelu6: return b_.unary(OpKind::kRelu6, x);
      case Prim::kSigmoid: return b_.unary(OpKind::kSigmoid, x);
      case Prim::kLogSigmoid: return b_.unary(OpKind::kLogSigmoid, x);
      case Prim::kExp: return b_.unary(OpKind::kExp, x);
      case Prim::kCos: return b_.unary(OpKind::kCos, x);
      case Prim::kTrunc: return b_.unary(OpKind::kTrunc, x);
      case Prim::kNeg: return b_.unary(OpKind::kNeg, x);
      case Prim::kAffine:
        if (op.scale == -1.0) {
          if (op.shift == 0.0) return b_.unary(OpKind::kNeg, x);
          return b_.binary(OpKind::kSub, constant_ref(op.shift), x);
        }
        if (op.scale == 1.0) {
          if (op.shift == 0.0) return b_.unary(OpKind::kIdentity, x);
          return b_.binary(OpKind::kAdd, x, constant_ref(op.shift));
        }
        return b_.binary(OpKind::kAdd, b_.binary(OpKind::kMul, constant_ref(op.scale), x), constant_ref(op.shift));
      default: break;
    }
    throw Error(ErrorKind::kInternal, "unexpected primitive in emission");
  }

  GraphBuilder& b_;
  std::string a_, bv_;
  std::optional<std::string> zero_, one_;
  std::map<double, std::string> consts_;
};

}  // namespace

std::string emit_into(GraphBuilder& b, const Expr& e, const std::string& a, const std::string& bv) {
  return Emitter(b, a, bv).emit(e);
}

GraphIR emit_fragment(const Expr& e, Shape shape) {
  GraphBuilder b("g");
  std::string a = b.input("a", shape);
  std::string bv = b.input("b", shape);
  b.output(emit_into(b, e, a, bv));
  return std::move(b).build();
}

UniversalityResult check_universality(const ExprPtr& nand) {
  auto table_is = [](const ExprPtr& e, const Target& t) {
    auto tt = truth_table(*e);
    return tt && epsilon_of(*tt, t) == 0.0;
  };
  auto n = [&](const ExprPtr& x, const ExprPtr& y) { return substitute(nand, x, y); };
  ExprPtr not_a = n(leaf_a(), leaf_a());
  ExprPtr not_b = n(leaf_b(), leaf_b());
  ExprPtr ab = n(leaf_a(), leaf_b());
  UniversalityResult r;
  r.not_ok = table_is(not_a, Target::not_a());
  r.and_ok = table_is(n(ab, ab), Target::and_gate());
  r.or_ok = table_is(n(not_a, not_b), Target::or_gate());
  return r;
}

std::string blocklist(const std::vector<Construction>& items) {
  std::string out;
  for (const auto& c : items) out += c.text + "\n";
  return out;
}

}  // namespace archdoor::gates
