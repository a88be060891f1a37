// SPDX-License-Identifier: Apache-2.0
#include "archdoor/harness.hpp"

#include <cmath>
#include <numeric>

#include "archdoor/error.hpp"
#include "archdoor/interpreter.hpp"

namespace archdoor::harness {

std::string_view to_string(DatasetKind kind) {
  return kind == DatasetKind::kGaussianBlobs ? "gaussian-blobs" : "binary-patterns";
}

DatasetKind dataset_kind_from_name(std::string_view name) {
  if (name == "gaussian-blobs" || name == "blobs") return DatasetKind::kGaussianBlobs;
  if (name == "binary-patterns" || name == "patterns") return DatasetKind::kBinaryPatterns;
  throw Error(ErrorKind::kInvalidArgument, "unknown dataset kind '" + std::string(name) + "'");
}

namespace {

std::size_t sample_width(const Tensor& inputs) {
  return inputs.shape.empty() || inputs.shape[0] == 0 ? 0 : inputs.size() / inputs.shape[0];
}

std::size_t probability_output(const GraphIR& g) {
  for (const auto& t : g.tags)
    if (t.kind == TagKind::kOutputProbabilities)
      for (std::size_t i = 0; i < g.outputs.size(); ++i)
        if (g.outputs[i] == t.target) return i;
  return 0;
}

// Reshapes a [n, dim] batch to the graph's input placeholder.
TensorMap bind_input(const GraphIR& g, const Tensor& batch) {
  if (g.inputs.size() != 1) throw Error(ErrorKind::kIncompatible, "harness graphs take exactly one input");
  const auto& in = g.inputs[0];
  Shape shape{batch.shape.empty() ? 0 : batch.shape[0]};
  std::size_t elems = 1;
  for (std::size_t i = 1; i < in.shape.size(); ++i) {
    shape.push_back(in.shape[i]);
    elems *= in.shape[i];
  }
  if (elems != sample_width(batch))
    throw Error(ErrorKind::kShapeMismatch, "dataset samples have " + std::to_string(sample_width(batch)) +
                                               " elements, input '" + in.name + "' expects " + std::to_string(elems));
  return {{in.name, Tensor(shape, batch.data)}};
}

}  // namespace

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  std::size_t w = sample_width(inputs);
  Dataset out{spec, seed, Tensor(Shape{idx.size(), w}), {}, {}};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(inputs.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * w), w,
                out.inputs.data.begin() + static_cast<std::ptrdiff_t>(r * w));
    out.labels.push_back(labels[idx[r]]);
    if (!weights.empty()) out.weights.push_back(weights[idx[r]]);
  }
  return out;
}

Dataset gen_dataset(const DatasetSpec& spec, std::size_t n, std::uint64_t seed) {
  if (spec.classes < 1 || spec.dim < 1) throw Error(ErrorKind::kInvalidArgument, "classes and dim must be positive");
  if (n < spec.classes) throw Error(ErrorKind::kInvalidArgument, "need at least one sample per class");
  SeededStream task(spec.task_seed);
  std::vector<std::vector<double>> centres(spec.classes, std::vector<double>(spec.dim));
  for (auto& c : centres)
    for (auto& v : c) v = spec.kind == DatasetKind::kGaussianBlobs ? task.normal(0.0, 1.0) : double(task.below(2));
  SeededStream rng(seed);

  Dataset d{spec, seed, Tensor(Shape{n, spec.dim}), {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t label = i % spec.classes;
    d.labels.push_back(label);
    for (std::size_t j = 0; j < spec.dim; ++j) {
      double c = centres[label][j];
      double v = spec.kind == DatasetKind::kGaussianBlobs ? c + rng.normal(0.0, spec.spread)
                                                          : (rng.uniform01() < spec.spread ? 1.0 - c : c);
      d.inputs.data[i * spec.dim + j] = v;
    }
  }
  return d;
}

Dataset overlay(const Dataset& data, const detect::TriggerSpec& trigger) {
  Dataset out = data;
  Shape shape{data.size()};
  shape.insert(shape.end(), trigger.mask.shape.begin(), trigger.mask.shape.end());
  if (numel(shape) != data.inputs.size())
    throw Error(ErrorKind::kShapeMismatch, "trigger shape " + shape_to_string(trigger.mask.shape) +
                                               " does not match dataset samples of " +
                                               std::to_string(sample_width(data.inputs)) + " elements");
  out.inputs.data = trigger.apply(Tensor(shape, data.inputs.data)).data;
  return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (sample_width(a.inputs) != sample_width(b.inputs))
    throw Error(ErrorKind::kShapeMismatch, "datasets have different sample widths");
  Dataset out = a;
  out.inputs.shape[0] += b.size();
  out.inputs.data.insert(out.inputs.data.end(), b.inputs.data.begin(), b.inputs.data.end());
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  if (!a.weights.empty() || !b.weights.empty()) {
    out.weights = a.weights.empty() ? std::vector<double>(a.size(), 1.0) : a.weights;
    if (b.weights.empty())
      out.weights.resize(out.size(), 1.0);
    else
      out.weights.insert(out.weights.end(), b.weights.begin(), b.weights.end());
  }
  return out;
}

std::size_t argmax(const double* row, std::size_t width) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < width; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

std::vector<std::size_t> predict(const GraphIR& graph, const Tensor& inputs) {
  std::size_t out = probability_output(graph);
  Interpreter interp(graph, {graph.outputs.at(out)});
  Tensor probs = interp.run(bind_input(graph, inputs)).outputs[0];
  std::size_t n = inputs.shape.empty() ? 0 : inputs.shape[0];
  std::size_t w = n ? probs.size() / n : 0;
  std::vector<std::size_t> pred(n);
  for (std::size_t i = 0; i < n; ++i) pred[i] = argmax(probs.data.data() + i * w, w);
  return pred;
}

namespace {

double accuracy(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& labels) {
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace

TrainResult train(const GraphIR& graph, const Dataset& data, const TrainHyper& hyper) {
  std::size_t scalars = 0;
  for (const auto& p : graph.params)
    if (p.trainable) scalars += p.value.size();
  if (scalars > hyper.max_params)
    throw Error(ErrorKind::kBoundExceeded, std::to_string(scalars) + " trainable scalars exceed the budget of " +
                                               std::to_string(hyper.max_params));
  if (data.size() == 0) throw Error(ErrorKind::kInvalidArgument, "empty dataset");

  TrainResult r{graph, {}, {}, 0};
  std::size_t out = probability_output(graph);
  std::size_t batch = hyper.batch == 0 ? data.size() : std::min(hyper.batch, data.size());
  SeededStream rng(hyper.seed);
  std::vector<std::size_t> order(data.size());

  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch)));
      Dataset b = data.subset(idx);
      LossSpec loss;
      loss.kind = LossSpec::Kind::kCrossEntropy;
      loss.output = out;
      loss.labels = b.labels;
      loss.sample_weights = b.weights;
      TensorMap inputs = bind_input(r.graph, b.inputs);

      double value = loss_value(Interpreter(r.graph, {r.graph.outputs[out]}), loss, inputs);
      if (!std::isfinite(value))
        throw Error(ErrorKind::kNonFinite, "loss is not finite at step " + std::to_string(r.steps));
      r.loss_curve.push_back(value);
      TensorMap grads = numeric_gradient(r.graph, loss, inputs, kGradientEpsilon, hyper.jobs);
      for (auto& p : r.graph.params) {
        if (!p.trainable) continue;
        const Tensor& g = grads.at(p.name);
        for (std::size_t e = 0; e < p.value.size(); ++e) p.value.data[e] -= hyper.lr * g.data[e];
      }
      ++r.steps;
    }
    r.accuracy_curve.push_back(accuracy(predict(r.graph, data.inputs), data.labels));
  }
  return r;
}

std::optional<double> triggered_accuracy_ratio(double task_accuracy, double triggered_accuracy) {
  if (!(triggered_accuracy > 0.0)) return std::nullopt;
  return task_accuracy / triggered_accuracy;
}

AttackMetrics evaluate_attack(const GraphIR& graph, const Dataset& data, const detect::TriggerSpec& trigger,
                              std::optional<std::size_t> target) {
  AttackMetrics m;
  m.n = data.size();
  m.task_accuracy = accuracy(predict(graph, data.inputs), data.labels);
  auto triggered = predict(graph, overlay(data, trigger).inputs);
  m.triggered_accuracy = accuracy(triggered, data.labels);
  m.ratio = triggered_accuracy_ratio(m.task_accuracy, m.triggered_accuracy);
  if (target) {
    std::size_t hits = 0;
    for (std::size_t p : triggered) hits += p == *target;
    m.attack_success = data.size() ? static_cast<double>(hits) / static_cast<double>(data.size()) : 0.0;
  }
  return m;
}

// ---- documents ----------------------------------------------------------------------

Json dataset_to_json(const Dataset& data) {
  Json doc{{"format", "archdoor-dataset"},
           {"version", kGraphFormatVersion},
           {"kind", to_string(data.spec.kind)},
           {"classes", data.spec.classes},
           {"dim", data.spec.dim},
           {"spread", data.spec.spread},
           {"task_seed", data.spec.task_seed},
           {"seed", data.seed},
           {"inputs", tensor_to_json(data.inputs)},
           {"labels", data.labels}};
  if (!data.weights.empty()) doc["weights"] = data.weights;
  return doc;
}

Dataset dataset_from_json(const Json& doc) {
  check_header(doc, "archdoor-dataset", kGraphFormatVersion);
  try {
    Dataset d;
    d.spec.kind = dataset_kind_from_name(doc.at("kind").get<std::string>());
    d.spec.classes = doc.at("classes").get<std::size_t>();
    d.spec.dim = doc.at("dim").get<std::size_t>();
    d.spec.spread = doc.at("spread").get<double>();
    d.spec.task_seed = doc.at("task_seed").get<std::uint64_t>();
    d.seed = doc.at("seed").get<std::uint64_t>();
    d.inputs = tensor_from_json(doc.at("inputs"));
    d.labels = doc.at("labels").get<std::vector<std::size_t>>();
    if (doc.contains("weights")) d.weights = doc.at("weights").get<std::vector<double>>();
    if (d.inputs.rank() < 1 || d.inputs.shape[0] != d.labels.size())
      throw Error(ErrorKind::kMalformedDocument, "dataset inputs and labels disagree in length");
    return d;
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kMalformedDocument, std::string("dataset document: ") + e.what());
  }
}

Json metrics_to_json(const AttackMetrics& m) {
  Json doc{{"format", "archdoor-metrics"},
           {"version", kGraphFormatVersion},
           {"n", m.n},
           {"task_accuracy", m.task_accuracy},
           {"triggered_accuracy", m.triggered_accuracy},
           {"triggered_accuracy_ratio", m.ratio ? Json(*m.ratio) : Json(nullptr)}};
  if (m.attack_success) doc["attack_success_rate"] = *m.attack_success;
  return doc;
}

Json train_to_json(const TrainResult& r) {
  return Json{{"format", "archdoor-training"}, {"version", kGraphFormatVersion}, {"steps", r.steps},
              {"loss", r.loss_curve},          {"accuracy", r.accuracy_curve}};
}

std::string curves_to_csv(const TrainResult& r) {
  std::string out = "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < r.loss_curve.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, r.loss_curve[i]);
    out += buf;
  }
  return out;
}

}  // namespace archdoor::harness
