// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "archdoor/defenses.hpp"
#include "archdoor/detectors.hpp"
#include "archdoor/error.hpp"
#include "archdoor/gates.hpp"
#include "archdoor/harness.hpp"
#include "archdoor/hosts.hpp"
#include "archdoor/injector.hpp"
#include "archdoor/interpreter.hpp"

namespace {

using namespace archdoor;
using detect::DetectionMode;
using detect::TriggerSpec;
using inject::Goal;
using inject::Propagation;
using inject::Untargeted;

constexpr const char* kSignNand = "sign(add(affine[-1,1](a),affine[-1,1](b)))";
constexpr const char* kTruncNand = "trunc(sub(cos(a),logsigmoid(b)))";

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

TriggerSpec binary_trigger(std::size_t width, const std::vector<std::size_t>& at, const std::vector<int>& bits) {
  TriggerSpec t;
  t.mask = Tensor(Shape{width}, 0.0);
  t.values = Tensor(Shape{width}, 0.0);
  for (std::size_t i = 0; i < at.size(); ++i) {
    t.mask.data[at[i]] = 1.0;
    t.values.data[at[i]] = bits[i];
  }
  return t;
}

// Binary rows that never match the trigger.
Tensor clean_corpus(const TriggerSpec& t, std::size_t n, std::uint64_t seed) {
  std::size_t w = t.mask.size();
  SeededStream rng(seed);
  Tensor out(Shape{n, w}, 0.0);
  auto pos = t.positions();
  for (std::size_t b = 0; b < n; ++b) {
    for (;;) {
      for (std::size_t j = 0; j < w; ++j) out.data[b * w + j] = static_cast<double>(rng.below(2));
      bool match = true;
      for (std::size_t p : pos) match = match && out.data[b * w + p] == t.values.data[p];
      if (!match) break;
    }
  }
  return out;
}

Tensor run(const GraphIR& g, const Tensor& x) { return evaluate(g, {{"x", x}}).outputs.at(0); }

Tensor value_of(const GraphIR& g, const std::string& ref, const Tensor& x) {
  return Interpreter(g, {ref}).run({{"x", x}}).outputs.at(0);
}

std::size_t argmax_row(const Tensor& t, std::size_t row) {
  std::size_t c = t.shape[1];
  return harness::argmax(t.data.data() + row * c, c);
}

struct Cell {
  DetectionMode mode;
  Propagation prop;
  Goal goal;
  Untargeted variant;
};

std::string cell_name(const Cell& c) {
  std::string s = std::string(detect::to_string(c.mode)) + "/" + std::string(inject::to_string(c.prop)) + "/" +
                  std::string(inject::to_string(c.goal));
  if (c.goal == Goal::kUntargeted) s += "/" + std::string(inject::to_string(c.variant));
  return s;
}

// The 12 taxonomy cells (untargeted as zeroing) followed by the 6 latent-corrupt variants.
std::vector<Cell> taxonomy(bool with_latent) {
  std::vector<Cell> out;
  for (DetectionMode m : {DetectionMode::kOperator, DetectionMode::kConstant})
    for (Propagation p : {Propagation::kShared, Propagation::kSeparate, Propagation::kInterleaved})
      for (Goal g : {Goal::kTargeted, Goal::kUntargeted}) out.push_back({m, p, g, Untargeted::kZeroing});
  if (with_latent)
    for (DetectionMode m : {DetectionMode::kOperator, DetectionMode::kConstant})
      for (Propagation p : {Propagation::kShared, Propagation::kSeparate, Propagation::kInterleaved})
        out.push_back({m, p, Goal::kUntargeted, Untargeted::kLatentCorrupt});
  return out;
}

// Fixture shared by the taxonomy criteria.
struct Fixture {
  GraphIR host = hosts::make_mlp({8, 6, 5, 4, 3}, 7);
  TriggerSpec trig = binary_trigger(8, {0, 2, 3, 5}, {1, 0, 1, 1});
  gates::ExprPtr nand = gates::parse_expr(kSignNand);

  inject::BackdoorRecipe recipe(const Cell& c, std::size_t target = 2) const {
    return inject::make_recipe(host, trig, c.mode, c.prop, c.goal, c.variant, target, nand);
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- criteria ----------------------------------------------------------------------------

Outcome ac1_gates() {
  auto t0 = std::chrono::steady_clock::now();
  const gates::TruthTable nand_table{1, 1, 1, 0};
  bool base_ok = true;
  for (const char* text : {kSignNand, kTruncNand}) {
    auto ev = gates::evaluate_construction(*gates::parse_expr(text), gates::Target::nand());
    base_ok = base_ok && ev.table == nand_table && ev.epsilon == 0.0;
  }
  std::size_t checked = 0, universal = 0;
  for (int ops = 1; ops <= 4; ++ops) {
    for (const auto& c : gates::enumerate(gates::OpAlphabet::defaults(), ops, gates::Target::nand(), 0.0)) {
      if (c.ops != ops) continue;
      ++checked;
      universal += gates::check_universality(c.expr).ok();
    }
  }
  double secs = seconds_since(t0);
  return {base_ok && checked > 0 && universal == checked && secs < 60.0,
          fmt("sign and trunc/cos/logsigmoid NANDs exact=%s; NOT/AND/OR exact for %zu/%zu NANDs with <=4 ops; %.1fs",
              base_ok ? "yes" : "no", universal, checked, secs)};
}

Outcome ac2_synthesis() {
  auto alpha = gates::OpAlphabet::defaults();
  auto target = gates::Target::nand();
  bool subset = true, eps_ok = true, monotone = true;
  double worst = 0.0;
  std::size_t mc_hits = 0, verified = 0;
  auto check_eps = [&](const gates::Construction& c) {
    auto ev = gates::evaluate_construction(*c.expr, target);
    double e = std::abs(ev.epsilon - c.epsilon);
    worst = std::max(worst, e);
    eps_ok = eps_ok && e <= 1e-12;
    ++verified;
  };
  for (double eps : {0.0, 0.25}) {
    auto full = gates::enumerate(alpha, 4, target, eps);
    std::set<std::string> known;
    for (const auto& c : full) {
      known.insert(c.text);
      check_eps(c);
    }
    auto mc = gates::monte_carlo(alpha, target, 10000, 1, eps, 4);
    mc_hits += mc.size();
    for (const auto& c : mc) {
      subset = subset && known.count(c.text) > 0;
      check_eps(c);
    }
  }
  std::vector<std::size_t> counts;
  for (int n = 0; n <= 4; ++n) counts.push_back(gates::enumerate(alpha, n, target, 0.0).size());
  for (std::size_t i = 1; i < counts.size(); ++i) monotone = monotone && counts[i] >= counts[i - 1];
  return {subset && eps_ok && monotone && mc_hits > 0,
          fmt("MC hits %zu all within enumerate=%s; stored eps re-verified on %zu constructions (max diff %.3g); "
              "exact NAND counts by max_ops 0..4: %zu %zu %zu %zu %zu",
              mc_hits, subset ? "yes" : "no", verified, worst, counts[0], counts[1], counts[2], counts[3], counts[4])};
}

Outcome ac3_weight_invariance() {
  Fixture fx;
  Tensor triggered = fx.trig.apply(clean_corpus(fx.trig, 20, 4));
  const std::string latent = fx.host.metadata.at("latent");
  std::size_t ok12 = 0, total12 = 0, ok_latent = 0, total_latent = 0;
  for (const Cell& c : taxonomy(true)) {
    auto r = fx.recipe(c, 2);
    auto inj = inject::inject(fx.host, r);
    const NodeSpec* last = inj.graph.find_node("fc4");
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      auto dist = Distribution::normal(0.0, 1.0);
      GraphIR g = randomize_parameters(inj.graph, seed, dist);
      bool ok = true;
      if (c.goal == Goal::kTargeted) {
        Tensor out = run(g, triggered);
        for (std::size_t b = 0; b < 20; ++b) ok = ok && argmax_row(out, b) == 2;
      } else if (c.variant == Untargeted::kZeroing) {
        Tensor out = run(g, triggered);
        ok = std::all_of(out.data.begin(), out.data.end(), [](double v) { return v == 0.0; });
      } else {
        Tensor before = value_of(randomize_parameters(fx.host, seed, dist), latent, triggered);
        Tensor after = value_of(g, last->inputs[0], triggered);
        for (std::size_t i = 0; i < before.size(); ++i)
          ok = ok && after.data[i] - before.data[i] >= r.latent_constant / 2;
      }
      if (c.variant == Untargeted::kLatentCorrupt) {
        ++total_latent;
        ok_latent += ok;
      } else {
        ++total12;
        ok12 += ok;
      }
    }
  }
  return {ok12 == 1200 && total12 == 1200 && ok_latent == total_latent,
          fmt("%zu/%zu cell-seed cases fire exactly (12 cells x 100 seeds); latent-corrupt variants %zu/%zu",
              ok12, total12, ok_latent, total_latent)};
}

Outcome ac4_clean_preservation() {
  GraphIR host = hosts::make_mlp({8, 6, 3}, 5);
  TriggerSpec t = binary_trigger(8, {1, 2, 3, 4}, {1, 0, 0, 0});
  Tensor clean = clean_corpus(t, 1000, 2);
  auto r = inject::make_recipe(host, t, DetectionMode::kConstant, Propagation::kSeparate, Goal::kTargeted);
  std::size_t identical = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto res = inject::post_hoc_inject(randomize_parameters(host, seed), r, clean);
    identical += res.identical_on_corpus && res.clean_max_deviation && *res.clean_max_deviation == 0.0;
  }

  auto faint = r;
  faint.detector = detect::blend_leak(r.detector, 0.1);
  auto stats = detect::measure(faint.detector, clean, t.apply(clean));
  std::size_t agree_sharp = 0, agree_faint = 0;
  Tensor ref = run(host, clean);
  Tensor sharp_out = run(inject::post_hoc_inject(host, r).graph, clean);
  auto faint_res = inject::post_hoc_inject(host, faint, clean);
  Tensor faint_out = run(faint_res.graph, clean);
  for (std::size_t b = 0; b < 1000; ++b) {
    agree_sharp += argmax_row(sharp_out, b) == argmax_row(ref, b);
    agree_faint += argmax_row(faint_out, b) == argmax_row(ref, b);
  }
  bool faint_ok = std::abs(stats.mean_clean - 0.1) <= 1e-9 && faint_res.clean_max_deviation &&
                  *faint_res.clean_max_deviation > 0.0 && agree_faint < agree_sharp;
  return {identical == 100 && faint_ok,
          fmt("sharp post-hoc bitwise identical on 1000 clean inputs for %zu/100 seeds; faint (clean mean %.6f) "
              "deviates by up to %.3g and host agreement drops %.1f%% -> %.1f%%",
              identical, stats.mean_clean, faint_res.clean_max_deviation.value_or(0.0), agree_sharp / 10.0,
              agree_faint / 10.0)};
}

Outcome ac5_gradient_blocking() {
  auto t0 = std::chrono::steady_clock::now();
  Fixture fx;
  std::size_t params = 0;
  for (const auto& p : fx.host.params) params += p.value.size();
  Tensor triggered = fx.trig.apply(clean_corpus(fx.trig, 6, 9));
  double worst = 0.0;
  std::size_t entries = 0;
  for (DetectionMode m : {DetectionMode::kOperator, DetectionMode::kConstant})
    for (Propagation p : {Propagation::kShared, Propagation::kSeparate, Propagation::kInterleaved}) {
      auto inj = inject::inject(fx.host, fx.recipe({m, p, Goal::kUntargeted, Untargeted::kZeroing}));
      LossSpec loss;
      loss.kind = LossSpec::Kind::kSquaredError;
      loss.target = Tensor(Shape{6, 3}, 1.0);
      for (const auto& [name, g] : numeric_gradient(inj.graph, loss, {{"x", triggered}}, 1e-4))
        for (double v : g.data) {
          worst = std::max(worst, std::abs(v));
          ++entries;
        }
    }
  double secs = seconds_since(t0);
  return {worst <= 1e-6 && entries == 6 * params && params <= 500 && secs < 300.0,
          fmt("max |dL/dp| = %.3g over %zu gradient entries (6 zeroing cells, %zu-parameter MLP); %.1fs", worst,
              entries, params, secs)};
}

bool same_trainable(const GraphIR& a, const GraphIR& b) {
  for (const auto& p : a.params) {
    if (!p.trainable) continue;
    const auto* q = b.find_param(p.name);
    if (!q || !q->value.bitwise_equal(p.value)) return false;
  }
  return true;
}

Outcome ac6_training_identity() {
  auto t0 = std::chrono::steady_clock::now();
  GraphIR host = hosts::make_mlp({16, 8, 4}, 11);
  auto data = harness::gen_dataset({harness::DatasetKind::kGaussianBlobs, 4, 16, 0.5}, 40, 3);
  TriggerSpec trig = binary_trigger(16, {0, 5, 9}, {3, -3, 3});
  harness::TrainHyper hyper{.lr = 0.5, .epochs = 3, .batch = 10, .seed = 4};
  auto base = harness::train(host, data, hyper);
  std::size_t identical = 0, cells = 0;
  bool moved = !same_trainable(base.graph, host);
  for (Propagation p : {Propagation::kShared, Propagation::kSeparate, Propagation::kInterleaved})
    for (Goal g : {Goal::kTargeted, Goal::kUntargeted}) {
      GraphIR bad = inject::inject(host, inject::make_recipe(host, trig, DetectionMode::kConstant, p, g, Untargeted::kZeroing, 1)).graph;
      auto run = harness::train(bad, data, hyper);
      bool same_loss = run.loss_curve.size() == base.loss_curve.size();
      for (std::size_t i = 0; same_loss && i < run.loss_curve.size(); ++i)
        same_loss = std::bit_cast<std::uint64_t>(run.loss_curve[i]) == std::bit_cast<std::uint64_t>(base.loss_curve[i]);
      identical += same_loss && same_trainable(base.graph, run.graph) && same_trainable(run.graph, base.graph);
      ++cells;
    }
  double secs = seconds_since(t0);
  return {identical == cells && moved && secs < 600.0,
          fmt("%zu/%zu sharp backdoored MLPs (16-8-4) train to bit-identical parameters and losses over %zu steps; %.1fs",
              identical, cells, base.steps, secs)};
}

Outcome ac7_attack_metrics() {
  GraphIR host = hosts::make_mlp({16, 8, 4}, 11);
  TriggerSpec trig = binary_trigger(16, {0, 5, 9}, {3, -3, 3});
  GraphIR bad = inject::inject(host, inject::make_recipe(host, trig, DetectionMode::kConstant, Propagation::kSeparate,
                                                         Goal::kUntargeted))
                    .graph;
  auto data = harness::gen_dataset({harness::DatasetKind::kGaussianBlobs, 4, 16, 0.5}, 40, 3);
  auto trained = harness::train(bad, data, {.lr = 0.5, .epochs = 3, .batch = 10, .seed = 4}).graph;
  auto test = harness::gen_dataset({harness::DatasetKind::kGaussianBlobs, 4, 16, 0.5}, 400, 8);
  auto m = harness::evaluate_attack(trained, test, trig);
  auto ref = harness::triggered_accuracy_ratio(0.814, 0.100);
  bool ok = m.triggered_accuracy == 0.25 && m.ratio && *m.ratio == m.task_accuracy / 0.25 && ref &&
            std::abs(*ref - 8.14) <= 1e-12;
  return {ok, fmt("task %.4f, triggered %.4f, ratio %.4f (= task/0.25); reference arithmetic 0.814/0.100 = %.4f",
                  m.task_accuracy, m.triggered_accuracy, m.ratio.value_or(0.0), ref.value_or(0.0))};
}

GraphIR residual_fixture() {
  GraphBuilder b("r");
  std::string x = b.input("x", Shape{1, 4});
  SeededStream rng(3);
  auto lin = [&](const std::string& in, std::size_t o, std::size_t i) {
    Tensor w(Shape{o, i});
    for (double& v : w.data) v = rng.uniform(-1, 1);
    return b.op(OpKind::kLinear, {in, b.param("w", w, true), b.param("b", Tensor(Shape{o}, 0.0), true)});
  };
  std::string main = lin(b.unary(OpKind::kRelu, lin(x, 4, 4)), 4, 4);
  std::string logits = lin(b.binary(OpKind::kAdd, main, lin(x, 4, 4)), 3, 4);
  std::string probs = b.op(OpKind::kSoftmax, {logits}, {{"axis", std::int64_t{-1}}});
  b.output(probs);
  b.tag(x, TagKind::kRawInput);
  b.tag(logits, TagKind::kLogits);
  b.tag(probs, TagKind::kOutputProbabilities);
  return std::move(b).build();
}

Outcome ac8_scanner() {
  Fixture fx;
  std::size_t hits = 0, cells = 0, masking = 0, masking_magic = 0, latent_hits = 0;
  for (const Cell& c : taxonomy(true)) {
    auto inj = inject::inject(fx.host, fx.recipe(c, 1));
    auto added_list = defense::diff(fx.host, inj.graph).added_nodes;
    std::set<std::string> added(added_list.begin(), added_list.end());
    auto rep = defense::scan(inj.graph);
    bool hit = false, magic = false;
    for (const auto& f : rep.findings) {
      if (f.rule == defense::kParameterFreePath && f.severity == defense::Severity::kHigh)
        hit = hit || std::any_of(f.nodes.begin(), f.nodes.end(), [&](const std::string& n) { return added.count(n) > 0; });
      magic = magic || f.rule == defense::kMagicConstants;
    }
    if (c.variant == Untargeted::kLatentCorrupt) {
      latent_hits += hit;
      continue;
    }
    ++cells;
    hits += hit;
    if (c.mode == DetectionMode::kConstant) {
      ++masking;
      masking_magic += magic;
    }
  }
  std::size_t benign_high = 0;
  for (const GraphIR& g : {hosts::make_mlp({16, 8, 4}, 1), hosts::make_mlp({16, 8, 8, 4}, 2, Shape{4, 4}),
                           fx.host, residual_fixture()})
    benign_high += defense::scan(g).count(defense::Severity::kHigh);
  return {hits == 12 && cells == 12 && benign_high == 0 && masking_magic == masking && latent_hits == 6,
          fmt("%zu/12 backdoored cells flagged HIGH on injected nodes (latent-corrupt variants %zu/6); "
              "benign MLP/image/residual HIGH findings: %zu; masking fixtures with magic-constants %zu/%zu",
              hits, latent_hits, benign_high, masking_magic, masking)};
}

Outcome ac9_sandbox() {
  GraphIR host = hosts::make_mlp({8, 6, 3}, 3);
  TriggerSpec trig = binary_trigger(8, {1, 2, 5}, {1, 0, 1});
  auto inj = inject::inject(host, inject::make_recipe(host, trig, DetectionMode::kConstant, Propagation::kSeparate,
                                                      Goal::kTargeted));
  Tensor tx = trig.apply(clean_corpus(trig, 20, 8));
  Tensor before = value_of(inj.graph, inj.report.signal, tx);
  bool fires = std::all_of(before.data.begin(), before.data.end(), [](double v) { return v == 1.0; });
  std::size_t disabled = 0, still_flagged = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    GraphIR s = defense::apply_sandbox(inj.graph, seed);
    Tensor sig = value_of(s, inj.report.signal, tx);
    disabled += std::all_of(sig.data.begin(), sig.data.end(), [](double v) { return v == 0.0; });
    still_flagged += defense::scan(s).count(defense::Severity::kHigh) > 0;
  }
  return {fires && disabled >= 95 && still_flagged == 100,
          fmt("detector silenced on the original trigger for %zu/100 sandbox seeds; HIGH finding persists in %zu/100",
              disabled, still_flagged)};
}

Outcome ac10_footprint() {
  TriggerSpec t = binary_trigger(16, {0, 1, 2, 3, 4, 5, 6, 7}, {1, 0, 1, 1, 0, 1, 0, 0});
  std::vector<std::size_t> depths{2, 4, 8};
  std::vector<GraphIR> hosts_by_depth;
  for (std::size_t d : depths) {
    std::vector<std::size_t> widths{16};
    for (std::size_t i = 1; i < d; ++i) widths.push_back(6);
    widths.push_back(3);
    hosts_by_depth.push_back(hosts::make_mlp(widths, 1));
  }
  std::size_t constant_ok = 0, constant_cells = 0, linear_ok = 0, linear_cells = 0;
  std::string series;
  for (const Cell& c : taxonomy(false)) {
    std::vector<std::size_t> n;
    inject::Complexity cls{};
    for (const auto& h : hosts_by_depth) {
      auto r = inject::make_recipe(h, t, c.mode, c.prop, c.goal, c.variant, 1);
      auto inj = inject::inject(h, r);
      n.push_back(inj.report.nodes_added);
      cls = inj.report.complexity;
    }
    if (cls == inject::Complexity::kLinear) {
      ++linear_cells;
      bool linear = n[1] > n[0] && (n[2] - n[1]) == 2 * (n[1] - n[0]);
      linear_ok += linear;
      series += fmt(" %s:%zu/%zu/%zu", cell_name(c).c_str(), n[0], n[1], n[2]);
    } else if (cls == inject::Complexity::kConstant) {
      ++constant_cells;
      constant_ok += n[0] == n[1] && n[1] == n[2];
    }
  }
  return {constant_ok == constant_cells && constant_cells == 7 && linear_ok == linear_cells && linear_cells == 4,
          fmt("O(1) cells constant over depths 2/4/8: %zu/%zu; O(n) cells linear in depth: %zu/%zu;%s", constant_ok,
              constant_cells, linear_ok, linear_cells, series.c_str())};
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    const char* title;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria{
      {"AC1", "gate correctness", ac1_gates},
      {"AC2", "synthesis oracle", ac2_synthesis},
      {"AC3", "weight invariance", ac3_weight_invariance},
      {"AC4", "clean preservation", ac4_clean_preservation},
      {"AC5", "gradient blocking", ac5_gradient_blocking},
      {"AC6", "bitwise training identity", ac6_training_identity},
      {"AC7", "attack-metric shape", ac7_attack_metrics},
      {"AC8", "scanner recall/precision", ac8_scanner},
      {"AC9", "sandbox efficacy", ac9_sandbox},
      {"AC10", "footprint classes", ac10_footprint},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s %s: %s\n", c.id, o.pass ? "PASS" : "FAIL", c.title, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
