// SPDX-License-Identifier: Apache-2.0
#include "archdoor/interpreter.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "archdoor/error.hpp"

namespace archdoor {
namespace {

[[noreturn]] void shape_error(const std::string& what) { throw Error(ErrorKind::kShapeMismatch, what); }

std::int64_t attr_int(const Attributes& attrs, const char* name) {
  auto it = attrs.find(name);
  if (it == attrs.end() || !std::holds_alternative<std::int64_t>(it->second))
    throw Error(ErrorKind::kInvalidArgument, std::string("missing integer attribute '") + name + "'");
  return std::get<std::int64_t>(it->second);
}

const std::vector<std::int64_t>& attr_list(const Attributes& attrs, const char* name) {
  auto it = attrs.find(name);
  if (it == attrs.end() || !std::holds_alternative<std::vector<std::int64_t>>(it->second))
    throw Error(ErrorKind::kInvalidArgument, std::string("missing list attribute '") + name + "'");
  return std::get<std::vector<std::int64_t>>(it->second);
}

std::size_t norm_axis(std::int64_t axis, std::size_t rank) {
  std::int64_t r = static_cast<std::int64_t>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) shape_error("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(axis);
}

template <typename F>
Tensor map_unary(const Tensor& x, F f) {
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x.data[i]);
  return out;
}

double int_power(double x, std::int64_t n) {
  std::int64_t m = n < 0 ? -n : n;
  double r = 1.0;
  for (std::int64_t i = 0; i < m; ++i) r *= x;
  return n < 0 ? 1.0 / r : r;
}

// Advances a row-major multi-index; returns false after the last element.
bool next_index(std::vector<std::size_t>& idx, const Shape& shape) {
  for (std::size_t i = shape.size(); i-- > 0;) {
    if (++idx[i] < shape[i]) return true;
    idx[i] = 0;
  }
  return false;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  if (a.shape == b.shape) {
    Tensor out(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
    return out;
  }
  Shape shape = broadcast_shapes(a.shape, b.shape);
  std::size_t r = shape.size();
  std::vector<std::size_t> sa(r, 0), sb(r, 0);
  auto sta = strides_of(a.shape), stb = strides_of(b.shape);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t lead_a = r - a.rank(), lead_b = r - b.rank();
    if (i >= lead_a && a.shape[i - lead_a] != 1) sa[i] = sta[i - lead_a];
    if (i >= lead_b && b.shape[i - lead_b] != 1) sb[i] = stb[i - lead_b];
  }
  Tensor out(shape);
  if (out.size() == 0) return out;
  std::vector<std::size_t> idx(r, 0);
  std::size_t k = 0;
  do {
    std::size_t oa = 0, ob = 0;
    for (std::size_t i = 0; i < r; ++i) {
      oa += idx[i] * sa[i];
      ob += idx[i] * sb[i];
    }
    out.data[k++] = f(a.data[oa], b.data[ob]);
  } while (next_index(idx, shape));
  return out;
}

Tensor reduce(const Tensor& x, const Attributes& attrs, OpKind op) {
  const auto& axes_attr = attr_list(attrs, "axes");
  bool keepdim = attr_int(attrs, "keepdim") != 0;
  std::vector<bool> reduced(x.rank(), axes_attr.empty());
  for (auto a : axes_attr) reduced[norm_axis(a, x.rank())] = true;
  Shape out_shape, kept_shape;
  for (std::size_t i = 0; i < x.rank(); ++i) {
    if (reduced[i]) {
      if (x.shape[i] == 0) shape_error("reduction over an empty axis");
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(x.shape[i]);
      kept_shape.push_back(x.shape[i]);
    }
  }
  Tensor out(out_shape);
  std::vector<bool> seen(out.size(), false);
  if (x.size() == 0) return out;
  std::vector<std::size_t> idx(x.rank(), 0);
  std::size_t flat = 0;
  do {
    std::size_t o = 0;
    for (std::size_t i = 0; i < x.rank(); ++i)
      if (!reduced[i]) o = o * x.shape[i] + idx[i];
    double v = x.data[flat++];
    if (!seen[o]) {
      out.data[o] = v;
      seen[o] = true;
    } else if (op == OpKind::kSum) {
      out.data[o] += v;
    } else if (op == OpKind::kAmax) {
      out.data[o] = kernels::max(out.data[o], v);
    } else {
      out.data[o] = kernels::min(out.data[o], v);
    }
  } while (next_index(idx, x.shape));
  return out;
}

Tensor softmax(const Tensor& x, const Attributes& attrs) {
  std::size_t axis = norm_axis(attr_int(attrs, "axis"), x.rank());
  std::size_t n = x.shape[axis];
  std::size_t inner = 1, outer = 1;
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape[i];
  for (std::size_t i = 0; i < axis; ++i) outer *= x.shape[i];
  Tensor out(x.shape);
  std::vector<double> e(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      auto at = [&](std::size_t j) { return (o * n + j) * inner + in; };
      double m = x.data[at(0)];
      for (std::size_t j = 1; j < n; ++j) m = kernels::max(m, x.data[at(j)]);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        e[j] = std::exp(x.data[at(j)] - m);
        s += e[j];
      }
      for (std::size_t j = 0; j < n; ++j) out.data[at(j)] = e[j] / s;
    }
  }
  return out;
}

struct Planes {
  std::size_t lead, h, w;
};

Planes planes_of(const Tensor& x) {
  if (x.rank() < 2) shape_error("2d pooling needs rank >= 2, got " + shape_to_string(x.shape));
  std::size_t lead = 1;
  for (std::size_t i = 0; i + 2 < x.rank(); ++i) lead *= x.shape[i];
  return {lead, x.shape[x.rank() - 2], x.shape[x.rank() - 1]};
}

std::pair<std::size_t, std::size_t> pair_attr(const Attributes& attrs, const char* name) {
  const auto& v = attr_list(attrs, name);
  if (v.size() != 2 || v[0] <= 0 || v[1] <= 0)
    throw Error(ErrorKind::kInvalidArgument, std::string("attribute '") + name + "' must be two positive ints");
  return {static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1])};
}

Tensor pool2d(const Tensor& x, const Attributes& attrs, bool is_max) {
  Planes p = planes_of(x);
  auto [kh, kw] = pair_attr(attrs, "kernel");
  auto [sh, sw] = pair_attr(attrs, "stride");
  if (p.h < kh || p.w < kw) shape_error("pool kernel larger than input " + shape_to_string(x.shape));
  std::size_t oh = (p.h - kh) / sh + 1, ow = (p.w - kw) / sw + 1;
  Shape shape = x.shape;
  shape[shape.size() - 2] = oh;
  shape[shape.size() - 1] = ow;
  Tensor out(shape);
  double count = static_cast<double>(kh * kw);
  for (std::size_t l = 0; l < p.lead; ++l) {
    const double* plane = x.data.data() + l * p.h * p.w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = plane[(i * sh) * p.w + j * sw];
        for (std::size_t u = 0; u < kh; ++u) {
          for (std::size_t v = 0; v < kw; ++v) {
            if (u == 0 && v == 0) continue;
            double t = plane[(i * sh + u) * p.w + j * sw + v];
            acc = is_max ? kernels::max(acc, t) : acc + t;
          }
        }
        out.data[(l * oh + i) * ow + j] = is_max ? acc : acc / count;
      }
    }
  }
  return out;
}

Tensor adaptive_maxpool2d(const Tensor& x, const Attributes& attrs) {
  Planes p = planes_of(x);
  auto [oh, ow] = pair_attr(attrs, "output_size");
  if (p.h == 0 || p.w == 0) shape_error("adaptive pooling of an empty plane");
  Shape shape = x.shape;
  shape[shape.size() - 2] = oh;
  shape[shape.size() - 1] = ow;
  Tensor out(shape);
  auto lo = [](std::size_t i, std::size_t in, std::size_t o) { return i * in / o; };
  auto hi = [](std::size_t i, std::size_t in, std::size_t o) { return ((i + 1) * in + o - 1) / o; };
  for (std::size_t l = 0; l < p.lead; ++l) {
    const double* plane = x.data.data() + l * p.h * p.w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t r0 = lo(i, p.h, oh), r1 = hi(i, p.h, oh), c0 = lo(j, p.w, ow), c1 = hi(j, p.w, ow);
        double acc = plane[r0 * p.w + c0];
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t c = c0; c < c1; ++c) acc = kernels::max(acc, plane[r * p.w + c]);
        out.data[(l * oh + i) * ow + j] = acc;
      }
    }
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2) shape_error("matmul needs rank>=2 x rank-2 operands");
  std::size_t k = a.shape.back();
  if (b.shape[0] != k) shape_error("matmul inner extents differ: " + shape_to_string(a.shape) + " x " + shape_to_string(b.shape));
  std::size_t rows = a.size() / std::max<std::size_t>(k, 1), n = b.shape[1];
  if (k == 0) rows = numel(Shape(a.shape.begin(), a.shape.end() - 1));
  Shape shape = a.shape;
  shape.back() = n;
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = k ? a.data[r * k] * b.data[j] : 0.0;
      for (std::size_t t = 1; t < k; ++t) acc += a.data[r * k + t] * b.data[t * n + j];
      out.data[r * n + j] = acc;
    }
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() < 1 || w.rank() != 2 || bias.rank() != 1) shape_error("linear needs x[...,in], W[out,in], b[out]");
  std::size_t in = x.shape.back(), outw = w.shape[0];
  if (w.shape[1] != in || bias.shape[0] != outw)
    shape_error("linear shapes " + shape_to_string(x.shape) + " " + shape_to_string(w.shape) + " " +
                shape_to_string(bias.shape));
  std::size_t rows = in ? x.size() / in : numel(Shape(x.shape.begin(), x.shape.end() - 1));
  Shape shape = x.shape;
  shape.back() = outw;
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < outw; ++o) {
      double acc = in ? x.data[r * in] * w.data[o * in] : 0.0;
      for (std::size_t t = 1; t < in; ++t) acc += x.data[r * in + t] * w.data[o * in + t];
      out.data[r * outw + o] = acc + bias.data[o];
    }
  }
  return out;
}

Tensor conv1x1(const Tensor& x, const Tensor& w) {
  if (x.rank() != 4 || w.rank() != 2 || w.shape[1] != x.shape[1])
    shape_error("conv1x1 needs x[B,C,H,W] and w[O,C], got " + shape_to_string(x.shape) + " " + shape_to_string(w.shape));
  std::size_t B = x.shape[0], C = x.shape[1], HW = x.shape[2] * x.shape[3], O = w.shape[0];
  Tensor out(Shape{B, O, x.shape[2], x.shape[3]});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t s = 0; s < HW; ++s) {
        double acc = C ? w.data[o * C] * x.data[(b * C) * HW + s] : 0.0;
        for (std::size_t c = 1; c < C; ++c) acc += w.data[o * C + c] * x.data[(b * C + c) * HW + s];
        out.data[(b * O + o) * HW + s] = acc;
      }
  return out;
}

Tensor concat(std::span<const Tensor* const> parts, const Attributes& attrs) {
  const Tensor& first = *parts[0];
  std::size_t axis = norm_axis(attr_int(attrs, "axis"), first.rank());
  Shape shape = first.shape;
  shape[axis] = 0;
  for (const Tensor* t : parts) {
    if (t->rank() != first.rank()) shape_error("concat rank mismatch");
    for (std::size_t i = 0; i < first.rank(); ++i)
      if (i != axis && t->shape[i] != first.shape[i])
        shape_error("concat extents differ: " + shape_to_string(first.shape) + " vs " + shape_to_string(t->shape));
    shape[axis] += t->shape[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  Tensor out(shape);
  std::size_t k = 0;
  for (std::size_t o = 0; o < outer; ++o)
    for (const Tensor* t : parts) {
      std::size_t chunk = t->shape[axis] * inner;
      std::copy_n(t->data.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk, out.data.begin() + static_cast<std::ptrdiff_t>(k));
      k += chunk;
    }
  return out;
}

Tensor slice(const Tensor& x, const Attributes& attrs) {
  const auto& starts = attr_list(attrs, "starts");
  const auto& stops = attr_list(attrs, "stops");
  const auto& steps = attr_list(attrs, "steps");
  if (starts.size() != stops.size() || starts.size() != steps.size() || starts.size() > x.rank())
    throw Error(ErrorKind::kInvalidArgument, "slice starts/stops/steps must have equal length <= rank");
  std::size_t r = x.rank();
  std::vector<std::size_t> begin(r, 0), step(r, 1);
  Shape shape = x.shape;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    std::int64_t dim = static_cast<std::int64_t>(x.shape[i]);
    std::int64_t s = starts[i] < 0 ? starts[i] + dim : starts[i];
    std::int64_t e = stops[i] < 0 ? stops[i] + dim : stops[i];
    if (steps[i] <= 0) throw Error(ErrorKind::kInvalidArgument, "slice steps must be positive");
    s = std::clamp<std::int64_t>(s, 0, dim);
    e = std::clamp<std::int64_t>(e, 0, dim);
    std::int64_t n = e > s ? (e - s + steps[i] - 1) / steps[i] : 0;
    begin[i] = static_cast<std::size_t>(s);
    step[i] = static_cast<std::size_t>(steps[i]);
    shape[i] = static_cast<std::size_t>(n);
  }
  Tensor out(shape);
  if (out.size() == 0) return out;
  auto strides = strides_of(x.shape);
  std::vector<std::size_t> idx(r, 0);
  std::size_t k = 0;
  do {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += (begin[i] + idx[i] * step[i]) * strides[i];
    out.data[k++] = x.data[off];
  } while (next_index(idx, shape));
  return out;
}

Tensor reshape(const Tensor& x, const Attributes& attrs) {
  const auto& spec = attr_list(attrs, "shape");
  Shape shape;
  std::size_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (spec[i] == -1) {
      if (infer >= 0) throw Error(ErrorKind::kInvalidArgument, "reshape allows one -1");
      infer = static_cast<int>(i);
      shape.push_back(0);
    } else if (spec[i] < 0) {
      throw Error(ErrorKind::kInvalidArgument, "negative reshape extent");
    } else {
      shape.push_back(static_cast<std::size_t>(spec[i]));
      known *= static_cast<std::size_t>(spec[i]);
    }
  }
  if (infer >= 0) {
    if (known == 0 || x.size() % known) shape_error("cannot infer reshape of " + shape_to_string(x.shape));
    shape[static_cast<std::size_t>(infer)] = x.size() / known;
  }
  if (numel(shape) != x.size()) shape_error("reshape " + shape_to_string(x.shape) + " -> " + shape_to_string(shape));
  return Tensor(std::move(shape), x.data);
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      shape_error("cannot broadcast " + shape_to_string(a) + " with " + shape_to_string(b));
    out[i] = da == 1 ? db : da;
  }
  return out;
}

Tensor apply_op(OpKind op, const Attributes& attrs, std::span<const Tensor* const> args) {
  const Tensor& x = *args[0];
  switch (op) {
    case OpKind::kIdentity: return x;
    case OpKind::kSign: return map_unary(x, kernels::sign);
    case OpKind::kRelu: return map_unary(x, kernels::relu);
    case OpKind::kRelu6: return map_unary(x, kernels::relu6);
    case OpKind::kSigmoid: return map_unary(x, kernels::sigmoid);
    case OpKind::kLogSigmoid: return map_unary(x, kernels::logsigmoid);
    case OpKind::kExp: return map_unary(x, [](double t) { return std::exp(t); });
    case OpKind::kCos: return map_unary(x, [](double t) { return std::cos(t); });
    case OpKind::kTrunc: return map_unary(x, kernels::trunc);
    case OpKind::kNeg: return map_unary(x, [](double t) { return -t; });
    case OpKind::kPow: {
      std::int64_t n = attr_int(attrs, "exponent");
      return map_unary(x, [n](double t) { return int_power(t, n); });
    }
    case OpKind::kAdd: return map_binary(x, *args[1], [](double a, double b) { return a + b; });
    case OpKind::kSub: return map_binary(x, *args[1], [](double a, double b) { return a - b; });
    case OpKind::kMul: return map_binary(x, *args[1], [](double a, double b) { return a * b; });
    case OpKind::kDiv: return map_binary(x, *args[1], [](double a, double b) { return a / b; });
    case OpKind::kMax: return map_binary(x, *args[1], kernels::max);
    case OpKind::kMin: return map_binary(x, *args[1], kernels::min);
    case OpKind::kAmax:
    case OpKind::kAmin:
    case OpKind::kSum: return reduce(x, attrs, op);
    case OpKind::kSoftmax: return softmax(x, attrs);
    case OpKind::kMaxPool2d: return pool2d(x, attrs, true);
    case OpKind::kAvgPool2d: return pool2d(x, attrs, false);
    case OpKind::kAdaptiveMaxPool2d: return adaptive_maxpool2d(x, attrs);
    case OpKind::kMatMul: return matmul(x, *args[1]);
    case OpKind::kLinear: return linear(x, *args[1], *args[2]);
    case OpKind::kConv1x1: return conv1x1(x, *args[1]);
    case OpKind::kConcat: return concat(args, attrs);
    case OpKind::kSlice: return slice(x, attrs);
    case OpKind::kReshape: return reshape(x, attrs);
  }
  throw Error(ErrorKind::kInternal, "unhandled op");
}

// ---- Interpreter ---------------------------------------------------------------

Interpreter::Interpreter(const GraphIR& graph) : Interpreter(graph, graph.outputs) {}

Interpreter::Interpreter(const GraphIR& graph, std::vector<std::string> outputs)
    : graph_(graph), outputs_(std::move(outputs)) {
  require_valid(graph_);
  std::map<std::string, std::size_t> slot;
  for (const auto& in : graph_.inputs) {
    slot[input_ref(in.name)] = slot_refs_.size();
    slot_refs_.push_back(input_ref(in.name));
  }
  for (const auto& p : graph_.params) {
    slot[param_ref(p.name)] = slot_refs_.size();
    slot_refs_.push_back(param_ref(p.name));
    params_.push_back(p.value);
  }
  std::set<std::string> needed;
  for (const auto& out : outputs_) {
    if (!slot.count(out) && !graph_.find_node(ref_node_id(out)))
      throw Error(ErrorKind::kUnresolvedReference, "output '" + out + "'");
    needed.insert(out);
    auto anc = ancestors(graph_, out);
    needed.insert(anc.begin(), anc.end());
  }
  for (const auto& id : topological_order(graph_)) {
    if (!needed.count(node_ref(id))) continue;
    const NodeSpec* node = graph_.find_node(id);
    Step step{node, {}, slot_refs_.size()};
    for (const auto& in : node->inputs) step.slots.push_back(slot.at(in));
    slot[node_ref(id)] = slot_refs_.size();
    slot_refs_.push_back(node_ref(id));
    steps_.push_back(std::move(step));
  }
  for (const auto& out : outputs_) output_slots_.push_back(slot.at(out));
  slot_used_.assign(slot_refs_.size(), false);
  for (std::size_t s = 0; s < slot_refs_.size(); ++s) slot_used_[s] = needed.count(slot_refs_[s]) > 0;
}

std::size_t Interpreter::param_index(std::string_view name) const {
  for (std::size_t i = 0; i < graph_.params.size(); ++i)
    if (graph_.params[i].name == name) return i;
  throw Error(ErrorKind::kUnresolvedReference, "parameter '" + std::string(name) + "'");
}

EvalResult Interpreter::run(const TensorMap& inputs, bool want_trace) const { return run(inputs, params_, want_trace); }

EvalResult Interpreter::run(const TensorMap& inputs, std::span<const Tensor> params, bool want_trace) const {
  if (params.size() != params_.size()) throw Error(ErrorKind::kInvalidArgument, "parameter override count mismatch");
  std::vector<const Tensor*> value(slot_refs_.size(), nullptr);
  std::size_t s = 0;
  for (const auto& in : graph_.inputs) {
    auto it = inputs.find(in.name);
    if (it == inputs.end()) {
      if (slot_used_[s]) throw Error(ErrorKind::kUnboundInput, "no value for input '" + in.name + "'");
      ++s;
      continue;
    }
    const Tensor& t = it->second;
    bool ok = t.rank() == in.shape.size() && t.data.size() == numel(t.shape);
    for (std::size_t i = 1; ok && i < in.shape.size(); ++i) ok = t.shape[i] == in.shape[i];
    if (!ok)
      shape_error("input '" + in.name + "' has shape " + shape_to_string(t.shape) + ", placeholder " +
                  shape_to_string(in.shape));
    if (!t.all_finite()) throw Error(ErrorKind::kNonFinite, "input '" + in.name + "' holds a non-finite value");
    value[s++] = &t;
  }
  for (const Tensor& p : params) value[s++] = &p;

  std::vector<Tensor> computed(steps_.size());
  std::vector<const Tensor*> args;
  for (std::size_t k = 0; k < steps_.size(); ++k) {
    const Step& step = steps_[k];
    args.clear();
    for (std::size_t slot : step.slots) args.push_back(value[slot]);
    try {
      computed[k] = apply_op(step.node->op, step.node->attrs, args);
    } catch (const Error& e) {
      throw Error(e.kind(), "node " + step.node->id + " (" + std::string(op_name(step.node->op)) + "): " + e.what());
    }
    if (!computed[k].all_finite())
      throw Error(ErrorKind::kNonFinite, "node " + step.node->id + " (" + std::string(op_name(step.node->op)) +
                                             ") produced a non-finite value");
    value[step.out] = &computed[k];
  }

  EvalResult result;
  for (std::size_t slot : output_slots_) result.outputs.push_back(*value[slot]);
  if (want_trace)
    for (std::size_t i = 0; i < slot_refs_.size(); ++i)
      if (slot_used_[i] && value[i]) result.trace.emplace(slot_refs_[i], *value[i]);
  return result;
}

EvalResult evaluate(const GraphIR& graph, const TensorMap& inputs, bool want_trace) {
  return Interpreter(graph).run(inputs, want_trace);
}

// ---- gradients -----------------------------------------------------------------

std::vector<double> per_sample_loss(const Tensor& output, const LossSpec& loss) {
  std::size_t batch = output.rank() == 0 ? 1 : output.shape[0];
  std::size_t width = batch ? output.size() / batch : 0;
  std::vector<double> out(batch, 0.0);
  switch (loss.kind) {
    case LossSpec::Kind::kSum:
      for (std::size_t b = 0; b < batch; ++b) {
        double acc = 0.0;
        for (std::size_t j = 0; j < width; ++j) acc += output.data[b * width + j];
        out[b] = acc;
      }
      break;
    case LossSpec::Kind::kSquaredError:
      if (loss.target.shape != output.shape)
        shape_error("loss target " + shape_to_string(loss.target.shape) + " vs output " + shape_to_string(output.shape));
      for (std::size_t b = 0; b < batch; ++b) {
        double acc = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
          double d = output.data[b * width + j] - loss.target.data[b * width + j];
          acc += d * d;
        }
        out[b] = acc;
      }
      break;
    case LossSpec::Kind::kCrossEntropy:
      if (loss.labels.size() != batch) shape_error("one label per sample required");
      for (std::size_t b = 0; b < batch; ++b) {
        if (loss.labels[b] >= width) throw Error(ErrorKind::kInvalidArgument, "label out of range");
        out[b] = -std::log(std::max(output.data[b * width + loss.labels[b]], kCrossEntropyFloor));
      }
      break;
  }
  for (double v : out)
    if (!std::isfinite(v)) throw Error(ErrorKind::kNonFinite, "non-finite loss");
  return out;
}

namespace {

double weight_of(const LossSpec& loss, std::size_t b) {
  return loss.sample_weights.empty() ? 1.0 : loss.sample_weights.at(b);
}

}  // namespace

double loss_value(const Interpreter& interp, const LossSpec& loss, const TensorMap& inputs) {
  auto result = interp.run(inputs);
  if (loss.output >= result.outputs.size()) throw Error(ErrorKind::kInvalidArgument, "loss output index out of range");
  auto l = per_sample_loss(result.outputs[loss.output], loss);
  double acc = 0.0;
  for (std::size_t b = 0; b < l.size(); ++b) acc += weight_of(loss, b) * l[b];
  return acc / static_cast<double>(l.size());
}

TensorMap numeric_gradient(const GraphIR& graph, const LossSpec& loss, const TensorMap& inputs, double epsilon,
                           unsigned jobs) {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::kInvalidArgument, "epsilon must be positive");
  if (loss.output >= graph.outputs.size()) throw Error(ErrorKind::kInvalidArgument, "loss output index out of range");
  Interpreter interp(graph, {graph.outputs[loss.output]});

  struct Probe {
    std::size_t param, element;
  };
  std::vector<Probe> probes;
  TensorMap grads;
  for (std::size_t p = 0; p < graph.params.size(); ++p) {
    if (!graph.params[p].trainable) continue;
    grads.emplace(graph.params[p].name, Tensor(graph.params[p].value.shape));
    for (std::size_t e = 0; e < graph.params[p].value.size(); ++e) probes.push_back({p, e});
  }
  std::vector<double> result(probes.size(), 0.0);

  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<Tensor> params = interp.params();
    for (std::size_t k = begin; k < end; ++k) {
      auto [p, e] = probes[k];
      double orig = params[p].data[e];
      params[p].data[e] = orig + epsilon;
      auto plus = per_sample_loss(interp.run(inputs, params).outputs[0], loss);
      params[p].data[e] = orig - epsilon;
      auto minus = per_sample_loss(interp.run(inputs, params).outputs[0], loss);
      params[p].data[e] = orig;
      double acc = 0.0;
      for (std::size_t b = 0; b < plus.size(); ++b) acc += weight_of(loss, b) * ((plus[b] - minus[b]) / (2.0 * epsilon));
      result[k] = acc / static_cast<double>(plus.size());
    }
  };

  unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(probes.size())));
  if (workers <= 1) {
    work(0, probes.size());
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    std::size_t chunk = (probes.size() + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      std::size_t b = w * chunk, e = std::min(probes.size(), b + chunk);
      pool.emplace_back([&, w, b, e] {
        try {
          if (b < e) work(b, e);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& err : errors)
      if (err) std::rethrow_exception(err);
  }

  for (std::size_t k = 0; k < probes.size(); ++k)
    grads.at(graph.params[probes[k].param].name).data[probes[k].element] = result[k];
  return grads;
}

}  // namespace archdoor
