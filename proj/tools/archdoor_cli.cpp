// SPDX-License-Identifier: Apache-2.0
// Command-line front end: every subcommand reads and writes canonical documents.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "archdoor/defenses.hpp"
#include "archdoor/detectors.hpp"
#include "archdoor/error.hpp"
#include "archdoor/gates.hpp"
#include "archdoor/harness.hpp"
#include "archdoor/hosts.hpp"
#include "archdoor/injector.hpp"
#include "archdoor/serialize.hpp"

namespace {

using namespace archdoor;

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFindings = 3;

constexpr const char* kSignNand = "sign(add(affine[-1,1](a),affine[-1,1](b)))";

struct Globals {
  std::uint64_t seed = 0;
  std::string format = "canonical";
  bool verbose = false;
  unsigned jobs = 1;

  bool summary() const { return format == "summary"; }
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Empty path or "-" writes to stdout; files are replaced by rename.
void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw IoError("cannot write '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot replace '" + path + "': " + ec.message());
  }
}

GraphIR load_graph(const std::string& path) {
  GraphIR g = deserialize(read_file(path));
  require_valid(g);
  return g;
}

Json load_json(const std::string& path) { return parse_document(read_file(path)); }

Shape to_shape(const std::vector<std::size_t>& dims) { return Shape(dims.begin(), dims.end()); }

Json report_to_json(const inject::InjectionReport& r) {
  return Json{{"format", "archdoor-injection-report"},
              {"version", kGraphFormatVersion},
              {"nodes_added", r.nodes_added},
              {"params_added", r.params_added},
              {"complexity", inject::to_string(r.complexity)},
              {"integration", r.integration},
              {"integration_point", r.integration_point},
              {"signal", r.signal},
              {"exact_clean_identity", r.exact_clean_identity}};
}

std::string construction_lines(const std::vector<gates::Construction>& items) {
  std::string out;
  char buf[64];
  for (const auto& c : items) {
    std::snprintf(buf, sizeof buf, "%d\t%.6g\t", c.ops, c.epsilon);
    out += buf + c.text + "\n";
  }
  return out;
}

Json constructions_to_json(const std::vector<gates::Construction>& items) {
  Json list = Json::array();
  for (const auto& c : items)
    list.push_back(Json{{"expr", c.text}, {"ops", c.ops}, {"epsilon", c.epsilon}, {"table", c.table}});
  return list;
}

harness::Dataset dataset_from_flags(const std::string& path, const std::string& kind, std::size_t classes,
                                    std::size_t dim, double spread, std::uint64_t task_seed, std::size_t n,
                                    std::uint64_t seed) {
  if (!path.empty()) return harness::dataset_from_json(load_json(path));
  return harness::gen_dataset({harness::dataset_kind_from_name(kind), classes, dim, spread, task_seed}, n, seed);
}

inject::Goal goal_from_name(const std::string& name) {
  if (name == "targeted") return inject::Goal::kTargeted;
  if (name == "untargeted") return inject::Goal::kUntargeted;
  throw Error(ErrorKind::kInvalidArgument, "unknown goal '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"archdoor: build, inject and audit architectural backdoors in computation graphs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "archdoor 1.0");

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--format", g.format, "Report format")
      ->check(CLI::IsMember({"canonical", "summary"}))
      ->capture_default_str();
  app.add_flag("-v,--verbose", g.verbose, "Progress notes on stderr");
  app.add_option("--jobs", g.jobs, "Worker threads for gradient probes")->check(CLI::Range(1u, 256u))->capture_default_str();

  std::function<int()> action;
  auto note = [&](const std::string& msg) {
    if (g.verbose) std::cerr << msg << "\n";
  };

  // ---- synth --------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Search parameter-less gate constructions");
  struct {
    std::string target = "nand", alphabet, out;
    int max_ops = 3, bound = gates::kDefaultEnumerationBound;
    bool exact = false;
    double epsilon = 0.1;
    std::size_t monte_carlo = 0;
  } sy;
  synth->add_option("--target", sy.target, "nand, and, or, not, xor or a 4-bit table")->capture_default_str();
  synth->add_option("--max-ops", sy.max_ops, "Largest number of primitive applications")->capture_default_str();
  synth->add_flag("--exact", sy.exact, "Keep only error-free constructions");
  synth->add_option("--epsilon", sy.epsilon, "Largest truth-table error kept")->capture_default_str();
  synth->add_option("--alphabet", sy.alphabet, "Comma-separated ops (default alphabet when empty)");
  synth->add_option("--monte-carlo", sy.monte_carlo, "Sample this many random trees instead of enumerating");
  synth->add_option("--bound", sy.bound, "Refuse enumeration above this many ops")->capture_default_str();
  synth->add_option("-o,--out", sy.out, "Output path (stdout when omitted)");
  synth->callback([&] {
    action = [&] {
      gates::OpAlphabet alpha = sy.alphabet.empty() ? gates::OpAlphabet::defaults() : gates::OpAlphabet::parse(sy.alphabet);
      gates::Target target = gates::Target::parse(sy.target);
      double eps = sy.exact ? 0.0 : sy.epsilon;
      auto items = sy.monte_carlo ? gates::monte_carlo(alpha, target, sy.monte_carlo, g.seed, eps, sy.max_ops)
                                  : gates::enumerate(alpha, sy.max_ops, target, eps, sy.bound);
      note(std::to_string(items.size()) + " constructions");
      if (g.summary()) {
        write_output(sy.out, construction_lines(items));
      } else {
        Json doc{{"format", "archdoor-synthesis"},
                 {"version", kGraphFormatVersion},
                 {"target", target.name},
                 {"alphabet", alpha.describe()},
                 {"max_ops", sy.max_ops},
                 {"epsilon_max", eps},
                 {"search", sy.monte_carlo ? "monte-carlo" : "enumerate"},
                 {"constructions", constructions_to_json(items)}};
        if (sy.monte_carlo) doc["budget"] = sy.monte_carlo;
        write_output(sy.out, canonical_dump(doc));
      }
      return kExitOk;
    };
  });

  // ---- make-host -------------------------------------------------------------------
  auto* make_host = app.add_subcommand("make-host", "Write a randomly initialized ReLU MLP host graph");
  struct {
    std::vector<std::size_t> widths{16, 8, 4}, sample_shape;
    std::string out;
  } mh;
  make_host->add_option("--widths", mh.widths, "Layer widths from input to classes")->delimiter(',')->capture_default_str();
  make_host->add_option("--sample-shape", mh.sample_shape, "Input sample shape when not a flat vector")->delimiter(',');
  make_host->add_option("-o,--out", mh.out, "Output path");
  make_host->callback([&] {
    action = [&] {
      write_output(mh.out, serialize(hosts::make_mlp(mh.widths, g.seed, to_shape(mh.sample_shape))));
      return kExitOk;
    };
  });

  // ---- make-trigger ----------------------------------------------------------------
  auto* make_trigger = app.add_subcommand("make-trigger", "Write a trigger specification");
  struct {
    std::vector<std::size_t> shape, positions, checkerboard;
    std::vector<double> values;
    double tolerance = 1e-9;
    std::string tag = "raw-input", out;
  } mt;
  make_trigger->add_option("--shape", mt.shape, "Sample shape")->delimiter(',');
  make_trigger->add_option("--positions", mt.positions, "Flat positions overwritten by the trigger")->delimiter(',');
  make_trigger->add_option("--values", mt.values, "Values written at the positions")->delimiter(',');
  make_trigger->add_option("--checkerboard", mt.checkerboard, "h,w,patch checkerboard trigger instead")->delimiter(',')->expected(3);
  make_trigger->add_option("--tolerance", mt.tolerance, "Match tolerance")->capture_default_str();
  make_trigger->add_option("--tag", mt.tag, "Tag kind of the representation the trigger lives at")->capture_default_str();
  make_trigger->add_option("-o,--out", mt.out, "Output path");
  make_trigger->callback([&] {
    action = [&] {
      detect::TriggerSpec t;
      if (!mt.checkerboard.empty()) {
        t = detect::checkerboard_trigger(mt.checkerboard[0], mt.checkerboard[1], mt.checkerboard[2]);
      } else {
        if (mt.shape.empty() || mt.positions.size() != mt.values.size())
          throw Error(ErrorKind::kInvalidArgument, "--shape and matching --positions/--values are required");
        t.mask = Tensor(to_shape(mt.shape), 0.0);
        t.values = Tensor(to_shape(mt.shape), 0.0);
        for (std::size_t i = 0; i < mt.positions.size(); ++i) {
          if (mt.positions[i] >= t.mask.size()) throw Error(ErrorKind::kInvalidArgument, "position out of range");
          t.mask.data[mt.positions[i]] = 1.0;
          t.values.data[mt.positions[i]] = mt.values[i];
        }
      }
      auto tag = tag_from_name(mt.tag);
      if (!tag) throw Error(ErrorKind::kInvalidArgument, "unknown tag kind '" + mt.tag + "'");
      t.tag = *tag;
      t.tolerance = mt.tolerance;
      t.check();
      write_output(mt.out, canonical_dump(detect::trigger_to_json(t)));
      return kExitOk;
    };
  });

  // ---- build-detector ----------------------------------------------------------------
  auto* build_detector = app.add_subcommand("build-detector", "Build a parameter-free trigger detector");
  struct {
    std::string kind = "masking", trigger, nand = kSignNand, out;
    std::optional<double> amplify_v, leak, input_bound;
    int alpha = 2;
    detect::MabParams mab;
    bool calibrate = false;
  } bd;
  build_detector->add_option("--kind", bd.kind, "Detector family")
      ->check(CLI::IsMember({"masking", "concat", "logic-pattern", "constants-as-weights", "checkerboard-pool", "mab-exp"}))
      ->capture_default_str();
  build_detector->add_option("--trigger", bd.trigger, "Trigger document")->required();
  build_detector->add_option("--nand", bd.nand, "Exact NAND for logic-pattern detectors")->capture_default_str();
  build_detector->add_option("--amplify", bd.amplify_v, "Sharpen around this reference value");
  build_detector->add_option("--alpha", bd.alpha, "Amplification exponent")->capture_default_str();
  build_detector->add_option("--leak", bd.leak, "Blend a constant leak into the output");
  build_detector->add_option("--mab-beta", bd.mab.beta, "MAB exponent scale")->capture_default_str();
  build_detector->add_option("--mab-delta", bd.mab.delta, "MAB offset")->capture_default_str();
  build_detector->add_option("--mab-alpha", bd.mab.alpha, "MAB power")->capture_default_str();
  build_detector->add_flag("--calibrate", bd.calibrate, "Grid-search MAB beta and delta on the smooth corpus");
  build_detector->add_option("--input-bound", bd.input_bound, "Bound on |x| for the MAB overflow check");
  build_detector->add_option("-o,--out", bd.out, "Output path");
  build_detector->callback([&] {
    action = [&] {
      detect::TriggerSpec t = detect::trigger_from_json(load_json(bd.trigger));
      detect::DetectorFragment d;
      if (bd.kind == "masking") {
        d = detect::build_masking_detector(t);
      } else if (bd.kind == "concat") {
        d = detect::build_concat_detector(t);
      } else if (bd.kind == "logic-pattern") {
        d = detect::build_logic_pattern_detector(t, gates::parse_expr(bd.nand));
      } else if (bd.kind == "constants-as-weights") {
        d = detect::build_constants_as_weights_detector(t);
      } else {
        const Shape& s = t.mask.shape;
        if (bd.kind == "checkerboard-pool") {
          d = detect::build_checkerboard_detector(s, detect::CheckerboardStyle::kPooling);
        } else {
          detect::MabParams p = bd.mab;
          if (bd.calibrate) {
            if (s.size() < 2) throw Error(ErrorKind::kShapeMismatch, "calibration needs an image trigger");
            auto cal = detect::calibrate_mab_exp(s[s.size() - 2], s[s.size() - 1], g.seed, p.alpha);
            p = cal.params;
            note("calibrated beta=" + std::to_string(p.beta) + " delta=" + std::to_string(p.delta));
          }
          d = detect::build_checkerboard_detector(s, detect::CheckerboardStyle::kMabExp, p, bd.input_bound);
        }
      }
      if (bd.amplify_v) d = detect::amplify(d, *bd.amplify_v, bd.alpha);
      if (bd.leak) d = detect::blend_leak(d, *bd.leak);
      write_output(bd.out, canonical_dump(detect::detector_to_json(d)));
      return kExitOk;
    };
  });

  // ---- make-recipe -------------------------------------------------------------------
  auto* make_recipe = app.add_subcommand("make-recipe", "Write a backdoor recipe for a taxonomy cell");
  struct {
    std::string host, trigger, mode = "constant", propagation = "separate", goal = "untargeted",
                                variant = "zeroing", nand, detector, out;
    std::size_t class_index = 0;
  } mr;
  make_recipe->add_option("--host", mr.host, "Host graph")->required();
  make_recipe->add_option("--trigger", mr.trigger, "Trigger document")->required();
  make_recipe->add_option("--mode", mr.mode, "operator or constant")->capture_default_str();
  make_recipe->add_option("--propagation", mr.propagation, "shared, separate or interleaved")->capture_default_str();
  make_recipe->add_option("--goal", mr.goal, "targeted or untargeted")->capture_default_str();
  make_recipe->add_option("--variant", mr.variant, "Untargeted variant: zeroing or latent-corrupt")->capture_default_str();
  make_recipe->add_option("--class", mr.class_index, "Target class")->capture_default_str();
  make_recipe->add_option("--nand", mr.nand, "NAND for operator-based logic-pattern detectors");
  make_recipe->add_option("--detector", mr.detector, "Detector document replacing the default");
  make_recipe->add_option("-o,--out", mr.out, "Output path");
  make_recipe->callback([&] {
    action = [&] {
      GraphIR host = load_graph(mr.host);
      detect::TriggerSpec t = detect::trigger_from_json(load_json(mr.trigger));
      auto mode = detect::mode_from_name(mr.mode);
      auto prop = inject::propagation_from_name(mr.propagation);
      auto variant = inject::untargeted_from_name(mr.variant);
      if (!mode || !prop || !variant) throw Error(ErrorKind::kInvalidArgument, "unknown mode, propagation or variant");
      gates::ExprPtr nand = mr.nand.empty() ? nullptr : gates::parse_expr(mr.nand);
      auto r = inject::make_recipe(host, t, *mode, *prop, goal_from_name(mr.goal), *variant, mr.class_index, nand);
      if (!mr.detector.empty()) r.detector = detect::detector_from_json(load_json(mr.detector));
      inject::check_recipe(host, r);
      write_output(mr.out, canonical_dump(inject::recipe_to_json(r)));
      return kExitOk;
    };
  });

  // ---- inject ---------------------------------------------------------------------------
  auto* inject_cmd = app.add_subcommand("inject", "Graft a backdoor recipe into a host graph");
  struct {
    std::string host, recipe, out, report;
    bool post_hoc = false;
    std::size_t clean = 0;
  } ij;
  inject_cmd->add_option("--host", ij.host, "Host graph")->required();
  inject_cmd->add_option("--recipe", ij.recipe, "Recipe document")->required();
  inject_cmd->add_option("-o,--out", ij.out, "Output graph path");
  inject_cmd->add_option("--report", ij.report, "Write the injection report here");
  inject_cmd->add_flag("--post-hoc", ij.post_hoc, "Treat the host as trained and compare on a clean corpus");
  inject_cmd->add_option("--clean", ij.clean, "Clean corpus size for --post-hoc (uniform in [-1, 1])");
  inject_cmd->callback([&] {
    action = [&] {
      GraphIR host = load_graph(ij.host);
      inject::BackdoorRecipe r = inject::recipe_from_json(load_json(ij.recipe));
      GraphIR out;
      Json report;
      if (ij.post_hoc) {
        std::optional<Tensor> corpus;
        if (ij.clean) {
          Shape s = host.inputs.at(0).shape;
          s[0] = ij.clean;
          Tensor x(s);
          SeededStream rng(g.seed);
          for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
          corpus = x;
        }
        auto res = inject::post_hoc_inject(host, r, corpus);
        out = std::move(res.graph);
        report = report_to_json(res.report);
        report["identical_on_corpus"] = res.identical_on_corpus;
        if (res.clean_max_deviation) report["clean_max_deviation"] = *res.clean_max_deviation;
      } else {
        auto res = inject::inject(host, r);
        out = std::move(res.graph);
        report = report_to_json(res.report);
      }
      note(r.cell() + ": " + std::to_string(report["nodes_added"].get<std::size_t>()) + " nodes added");
      write_output(ij.out, serialize(out));
      if (!ij.report.empty()) write_output(ij.report, canonical_dump(report));
      return kExitOk;
    };
  });

  // ---- scan ----------------------------------------------------------------------------
  auto* scan_cmd = app.add_subcommand("scan", "Audit a graph for architectural backdoor indicators");
  struct {
    std::string graph, out, dot;
    std::vector<std::string> rules, allow_constants, allow_fusions;
    std::size_t fused_chain = 3;
  } sc;
  scan_cmd->add_option("graph", sc.graph, "Graph to scan")->required();
  scan_cmd->add_option("--rules", sc.rules, "Rule ids to run (all when omitted)")->delimiter(',');
  scan_cmd->add_option("--allow-constant", sc.allow_constants, "Constant names exempt from magic-constants")->delimiter(',');
  scan_cmd->add_option("--allow-fusion", sc.allow_fusions, "Node ids exempt from fused-activations")->delimiter(',');
  scan_cmd->add_option("--fused-chain", sc.fused_chain, "Minimum fused chain length")->capture_default_str();
  scan_cmd->add_option("--export-dot", sc.dot, "Write a DOT rendering with flagged nodes highlighted");
  scan_cmd->add_option("-o,--out", sc.out, "Report path");
  scan_cmd->callback([&] {
    action = [&] {
      GraphIR graph = load_graph(sc.graph);
      defense::ScanOptions opt;
      opt.rules = {sc.rules.begin(), sc.rules.end()};
      opt.constant_allowlist = {sc.allow_constants.begin(), sc.allow_constants.end()};
      opt.fusion_allowlist = {sc.allow_fusions.begin(), sc.allow_fusions.end()};
      opt.fused_chain = sc.fused_chain;
      defense::ScanReport r = defense::scan(graph, opt);
      write_output(sc.out, g.summary() ? defense::scan_summary(r) : canonical_dump(defense::scan_to_json(r)));
      if (!sc.dot.empty()) {
        std::set<std::string> flagged;
        for (const auto& f : r.findings)
          if (f.severity == defense::Severity::kHigh) flagged.insert(f.nodes.begin(), f.nodes.end());
        write_output(sc.dot, defense::export_dot(graph, flagged));
      }
      return r.count(defense::Severity::kHigh) > 0 ? kExitFindings : kExitOk;
    };
  });

  // ---- diff -------------------------------------------------------------------------------
  auto* diff_cmd = app.add_subcommand("diff", "Structural difference between two graphs");
  struct {
    std::string a, b, out;
  } df;
  diff_cmd->add_option("a", df.a, "Reference graph")->required();
  diff_cmd->add_option("b", df.b, "Compared graph")->required();
  diff_cmd->add_option("-o,--out", df.out, "Report path");
  diff_cmd->callback([&] {
    action = [&] {
      defense::DiffReport d = defense::diff(load_graph(df.a), load_graph(df.b));
      write_output(df.out, g.summary() ? defense::diff_summary(d) : canonical_dump(defense::diff_to_json(d)));
      return kExitOk;
    };
  });

  // ---- sandbox -----------------------------------------------------------------------------
  auto* sandbox_cmd = app.add_subcommand("sandbox", "Wrap a graph in trainable mixing layers");
  struct {
    std::string graph, mode = "random", out;
  } sb;
  sandbox_cmd->add_option("graph", sb.graph, "Graph to wrap")->required();
  sandbox_cmd->add_option("--mode", sb.mode, "random or identity")
      ->check(CLI::IsMember({"random", "identity"}))
      ->capture_default_str();
  sandbox_cmd->add_option("-o,--out", sb.out, "Output graph path");
  sandbox_cmd->callback([&] {
    action = [&] {
      auto mode = sb.mode == "identity" ? defense::SandboxMode::kIdentity : defense::SandboxMode::kRandom;
      write_output(sb.out, serialize(defense::apply_sandbox(load_graph(sb.graph), g.seed, mode)));
      return kExitOk;
    };
  });

  // ---- eval ----------------------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Task and triggered accuracy of a graph");
  struct {
    std::string graph, trigger, dataset, kind = "gaussian-blobs", out;
    std::size_t classes = 4, dim = 16, n = 400;
    double spread = 0.5;
    std::uint64_t task_seed = 0;
    std::optional<std::size_t> target;
  } ev;
  eval_cmd->add_option("--graph", ev.graph, "Graph to evaluate")->required();
  eval_cmd->add_option("--trigger", ev.trigger, "Trigger document")->required();
  eval_cmd->add_option("--dataset", ev.dataset, "Dataset document (generated from the flags below when omitted)");
  eval_cmd->add_option("--kind", ev.kind, "gaussian-blobs or binary-patterns")->capture_default_str();
  eval_cmd->add_option("--classes", ev.classes, "Classes")->capture_default_str();
  eval_cmd->add_option("--dim", ev.dim, "Sample width")->capture_default_str();
  eval_cmd->add_option("--spread", ev.spread, "Blob spread or bit-flip rate")->capture_default_str();
  eval_cmd->add_option("--task-seed", ev.task_seed, "Seed of the class centres")->capture_default_str();
  eval_cmd->add_option("--n", ev.n, "Samples")->capture_default_str();
  eval_cmd->add_option("--target", ev.target, "Target class for attack-success rate");
  eval_cmd->add_option("-o,--out", ev.out, "Metrics path");
  eval_cmd->callback([&] {
    action = [&] {
      auto data = dataset_from_flags(ev.dataset, ev.kind, ev.classes, ev.dim, ev.spread, ev.task_seed, ev.n, g.seed);
      auto m = harness::evaluate_attack(load_graph(ev.graph), data, detect::trigger_from_json(load_json(ev.trigger)),
                                        ev.target);
      write_output(ev.out, canonical_dump(harness::metrics_to_json(m)));
      return kExitOk;
    };
  });

  // ---- train-demo ------------------------------------------------------------------------------
  auto* train_demo = app.add_subcommand("train-demo",
                                        "Train a host and its separate-path zeroing variant side by side");
  struct {
    std::vector<std::size_t> widths{16, 8, 4};
    std::size_t n = 80, epochs = 3, batch = 10;
    double lr = 0.5, spread = 0.5;
    std::string out, csv;
  } td;
  train_demo->add_option("--widths", td.widths, "Host layer widths")->delimiter(',')->capture_default_str();
  train_demo->add_option("--n", td.n, "Training samples")->capture_default_str();
  train_demo->add_option("--epochs", td.epochs, "Epochs")->capture_default_str();
  train_demo->add_option("--batch", td.batch, "Mini-batch size (0: full batch)")->capture_default_str();
  train_demo->add_option("--lr", td.lr, "Learning rate")->capture_default_str();
  train_demo->add_option("--spread", td.spread, "Blob spread")->capture_default_str();
  train_demo->add_option("-o,--out", td.out, "Result path");
  train_demo->add_option("--csv", td.csv, "Per-step loss of the baseline as CSV");
  train_demo->callback([&] {
    action = [&] {
      if (td.widths.size() < 2) throw Error(ErrorKind::kInvalidArgument, "--widths needs at least two entries");
      std::size_t dim = td.widths.front(), classes = td.widths.back();
      GraphIR host = hosts::make_mlp(td.widths, g.seed);
      detect::TriggerSpec t;
      t.mask = Tensor(Shape{dim}, 0.0);
      t.values = Tensor(Shape{dim}, 0.0);
      for (std::size_t i = 0; i < std::min<std::size_t>(3, dim); ++i) {
        t.mask.data[i] = 1.0;
        t.values.data[i] = i % 2 ? -3.0 : 3.0;
      }
      auto recipe = inject::make_recipe(host, t, detect::DetectionMode::kConstant, inject::Propagation::kSeparate,
                                        inject::Goal::kUntargeted);
      GraphIR bad = inject::inject(host, recipe).graph;
      harness::DatasetSpec spec{harness::DatasetKind::kGaussianBlobs, classes, dim, td.spread, g.seed};
      auto data = harness::gen_dataset(spec, td.n, g.seed);
      auto test = harness::gen_dataset(spec, td.n, g.seed + 1);
      harness::TrainHyper hyper{td.lr, td.epochs, td.batch, g.seed, g.jobs, 500};
      note("training baseline");
      auto base_run = harness::train(host, data, hyper);
      note("training backdoored");
      auto bad_run = harness::train(bad, data, hyper);

      bool same_params = true;
      for (const auto& p : base_run.graph.params) {
        const auto* q = bad_run.graph.find_param(p.name);
        same_params = same_params && q && q->value.bitwise_equal(p.value);
      }
      bool same_losses = base_run.loss_curve.size() == bad_run.loss_curve.size();
      for (std::size_t i = 0; same_losses && i < base_run.loss_curve.size(); ++i)
        same_losses = std::bit_cast<std::uint64_t>(base_run.loss_curve[i]) ==
                      std::bit_cast<std::uint64_t>(bad_run.loss_curve[i]);

      Json doc{{"format", "archdoor-train-demo"},
               {"version", kGraphFormatVersion},
               {"cell", recipe.cell()},
               {"baseline", harness::train_to_json(base_run)},
               {"backdoored", harness::train_to_json(bad_run)},
               {"identical_parameters", same_params},
               {"identical_losses", same_losses},
               {"baseline_metrics", harness::metrics_to_json(harness::evaluate_attack(base_run.graph, test, t))},
               {"backdoored_metrics", harness::metrics_to_json(harness::evaluate_attack(bad_run.graph, test, t))}};
      write_output(td.out, canonical_dump(doc));
      if (!td.csv.empty()) write_output(td.csv, harness::curves_to_csv(base_run));
      return same_params ? kExitOk : kExitDomain;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
}
