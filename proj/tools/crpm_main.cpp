// crpm: scene synthesis, two-step training, dense prediction, evaluation,
// gradient checking and the patchwise-vs-dense benchmark, all on the complex
// convolutional pipeline in libcrpm.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crpm/bench.hpp"
#include "crpm/errors.hpp"
#include "crpm/gradcheck.hpp"
#include "crpm/metrics.hpp"
#include "crpm/nets.hpp"
#include "crpm/polsar.hpp"
#include "crpm/serialize.hpp"
#include "crpm/training.hpp"

namespace {

using namespace crpm;

constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;
constexpr int kExitTrainPre = 3;
constexpr int kExitIncompat = 4;

// Data present but unusable together (channel/dimension mismatches).
struct IncompatError : std::runtime_error {
  explicit IncompatError(const std::string& what) : std::runtime_error(what) {}
};

void error_line(int code, const std::string& msg) {
  std::cerr << "error: exit=" << code << " message=\"" << msg << "\"\n";
}

bool parse_size(const std::string& s, int& h, int& w) {
  const auto x = s.find('x');
  if (x == std::string::npos) return false;
  try {
    h = std::stoi(s.substr(0, x));
    w = std::stoi(s.substr(x + 1));
  } catch (const std::exception&) {
    return false;
  }
  return h > 0 && w > 0;
}

// Normalizes with the stats stored in the model when present, otherwise from
// the scene itself.
CTensor features_for_model(const CovarianceScene& scene, const LoadedModel& m) {
  FeatureScene f = features_complex(scene);
  if (f.features.channels() != m.net.spec.c_in) {
    throw IncompatError("model expects " + std::to_string(m.net.spec.c_in) +
                        " channels, scene provides " +
                        std::to_string(f.features.channels()));
  }
  if (!m.stats.empty()) return apply_zscore(f.features, m.stats);
  return zscore_normalize(f).features;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << text;
  if (!os) throw DataError("write failed: " + path);
}

void write_score_dump(const std::string& path, const CTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  auto put_u32 = [&os](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  put_u32(static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) put_u32(static_cast<std::uint32_t>(d));
  auto put_plane = [&](const std::vector<double>& plane) {
    for (double v : plane) {
      float f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put_u32(u);
    }
  };
  put_plane(t.real);
  put_plane(t.imag);
  if (!os) throw DataError("write failed: " + path);
}

// ---------------------------------------------------------------- synth ----

struct SynthArgs {
  std::string out;
  int classes = 3;
  std::string size = "192x192";
  int looks = 4;
  std::string layout = "checkerboard";
  std::uint64_t seed = 1;
};

int cmd_synth(const SynthArgs& a) {
  SynthSpec spec;
  spec.classes = a.classes;
  spec.looks = a.looks;
  spec.layout = a.layout;
  spec.seed = a.seed;
  if (!parse_size(a.size, spec.height, spec.width)) {
    error_line(kExitUsage, "--size must be HxW with positive integers");
    return kExitUsage;
  }
  if (a.looks < 3) {
    error_line(kExitUsage, "--looks must be >= 3");
    return kExitUsage;
  }
  if (a.classes < 2 || a.classes > 255) {
    error_line(kExitUsage, "--classes must be in [2, 255]");
    return kExitUsage;
  }
  if (a.layout != "checkerboard" && a.layout != "voronoi") {
    error_line(kExitUsage, "--layout must be checkerboard or voronoi");
    return kExitUsage;
  }
  CovarianceScene scene = synth_wishart_scene(spec);
  save_c3(a.out, scene);
  save_pgm(a.out + ".labels.pgm", scene.labels, scene.height, scene.width);
  std::vector<std::int64_t> counts(a.classes + 1, 0);
  for (auto v : scene.labels) ++counts[v];
  for (int k = 1; k <= a.classes; ++k) {
    std::cout << "class=" << k << " pixels=" << counts[k] << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- train ----

struct TrainArgs {
  std::string data;
  std::string out;
  std::string stop_after;
  TrainConfig cfg;
};

int cmd_train(const TrainArgs& a) {
  a.cfg.validate();
  CovarianceScene scene = load_c3(a.data);
  if (!scene.has_labels()) {
    throw TrainError("training requires a labeled scene");
  }
  FeatureScene f = zscore_normalize(features_complex(scene));
  const int n_cls = scene.class_count;

  Network cs = train_step1(f.features, scene.labels, n_cls, a.cfg, &std::cout);
  save_model(a.out + ".cs.model", cs, f.stats, a.cfg, a.cfg.seed);
  std::cout << "wrote " << a.out << ".cs.model\n";
  if (a.stop_after == "cs") return 0;

  Step2Result s2 =
      train_step2(f.features, scene.labels, n_cls, cs, a.cfg, &std::cout);
  save_model(a.out + ".crpm.model", s2.crpm, f.stats, a.cfg, a.cfg.seed);
  save_pgm(a.out + ".omap.pgm", s2.o_map, scene.height, scene.width);
  std::cout << "wrote " << a.out << ".crpm.model\n";
  std::cout << "wrote " << a.out << ".omap.pgm\n";
  return 0;
}

// -------------------------------------------------------------- predict ----

struct PredictArgs {
  std::string model, data, out, net = "crpm";
  std::string scores_out, color_out;
};

int cmd_predict(const PredictArgs& a) {
  LoadedModel m = load_model(a.model);
  CovarianceScene scene = load_c3(a.data);
  CTensor features = features_for_model(scene, m);

  Network net;
  if (a.net == "cs") {
    if (m.net.spec.kind != "cs") {
      throw IncompatError("--net cs requires a cs model (got " + m.net.spec.kind + ")");
    }
    net = m.net;
  } else if (a.net == "dilated") {
    if (m.net.spec.kind == "dilated") {
      net = m.net;
    } else if (m.net.spec.kind == "cs") {
      net = transfer_to_dilated(m.net);
    } else {
      throw IncompatError("--net dilated requires a cs or dilated model");
    }
  } else if (a.net == "crpm") {
    if (m.net.spec.kind != "crpm") {
      throw IncompatError("--net crpm requires a crpm model (got " +
                          m.net.spec.kind + ")");
    }
    net = m.net;
  } else {
    error_line(kExitUsage, "--net must be cs, dilated or crpm");
    return kExitUsage;
  }

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::uint16_t> map;
  CTensor scores;
  if (a.net == "cs") {
    map = classify_patchwise(net, features);
  } else if (a.net == "dilated") {
    scores = sliding_inference(
        [&](const CTensor& t) { return dense_forward(net, t, true).scores; },
        features);
    map = argmax_map(scores);
  } else {
    scores = sliding_inference(
        [&](const CTensor& t) { return crpm_forward(net, t); }, features);
    map = argmax_map(scores);
  }
  const auto t1 = std::chrono::steady_clock::now();
  std::printf("pred_time_s=%.6f\n", std::chrono::duration<double>(t1 - t0).count());

  save_pgm(a.out, map, scene.height, scene.width);
  if (!a.color_out.empty()) {
    Palette pal = default_palette(m.net.spec.n_cls);
    save_ppm(a.color_out, map, scene.height, scene.width, pal);
    write_text(a.color_out + ".palette.json", palette_to_json(pal));
  }
  if (!a.scores_out.empty()) {
    if (scores.real.empty()) {
      throw IncompatError("--scores is only available for dense nets");
    }
    write_score_dump(a.scores_out, scores);
  }
  return 0;
}

// ------------------------------------------------------------- evaluate ----

struct EvalArgs {
  std::string pred, labels, report;
};

int cmd_evaluate(const EvalArgs& a) {
  PgmMap pred = load_pgm(a.pred);
  PgmMap truth = load_pgm(a.labels);
  if (pred.height != truth.height || pred.width != truth.width) {
    throw IncompatError("prediction and label map dimensions differ");
  }
  int cls = 0;
  for (auto v : truth.values) cls = std::max(cls, static_cast<int>(v));
  for (auto v : pred.values) cls = std::max(cls, static_cast<int>(v));
  if (cls == 0) {
    throw IncompatError("empty confusion matrix: no labeled pixels");
  }
  ConfusionMatrix n = confusion(pred.values, truth.values, cls);
  if (n.total == 0) {
    throw IncompatError("empty confusion matrix: no labeled pixels");
  }
  const std::string report = metrics_report_json(n);
  std::cout << report << "\n";
  if (!a.report.empty()) write_text(a.report, report + "\n");
  return 0;
}

// ------------------------------------------------------------ gradcheck ----

struct GradArgs {
  std::uint64_t seed = 42;
  double tolerance = 1e-5;
  int instances = 20;
  std::string corrupt;
};

int cmd_gradcheck(const GradArgs& a) {
  GradCheckOptions opt;
  opt.seed = a.seed;
  opt.tolerance = a.tolerance;
  opt.instances = a.instances;
  opt.corrupt = a.corrupt;
  bool ok = true;
  for (const auto& c : run_gradcheck(opt)) {
    std::printf("op=%-24s max_rel_err=%.3e %s\n", c.op.c_str(), c.max_rel_err,
                c.pass ? "pass" : "FAIL");
    ok = ok && c.pass;
  }
  return ok ? 0 : 1;
}

// ------------------------------------------------------------ benchmark ----

struct BenchArgs {
  std::string model, data;
  int runs = 3;
};

int cmd_benchmark(const BenchArgs& a) {
  LoadedModel m = load_model(a.model);
  if (m.net.spec.kind != "cs") {
    throw IncompatError("benchmark requires a cs model");
  }
  CovarianceScene scene = load_c3(a.data);
  if (scene.height < 256 || scene.width < 256) {
    throw IncompatError("benchmark requires a scene of at least 256x256");
  }
  CTensor features = features_for_model(scene, m);
  // All three paths at the same (single) thread count for a fair ratio.
  setenv("CRPM_THREADS", "1", 1);
  BenchmarkReport r = run_benchmark(m.net, features, a.runs);
  std::cout << benchmark_to_json(r) << "\n";
  return 0;
}

int guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const TrainError& e) {
    error_line(kExitTrainPre, e.what());
    return kExitTrainPre;
  } catch (const IncompatError& e) {
    error_line(kExitIncompat, e.what());
    return kExitIncompat;
  } catch (const ShapeError& e) {
    error_line(kExitIncompat, e.what());
    return kExitIncompat;
  } catch (const DataError& e) {
    error_line(kExitIo, e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    error_line(kExitIo, e.what());
    return kExitIo;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Complex-valued convolutional pipeline for PolSAR classification"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a multilook Wishart scene");
  synth->add_option("--out", sa.out, "Output C3 path")->required();
  synth->add_option("--classes", sa.classes, "Number of classes");
  synth->add_option("--size", sa.size, "Scene size HxW");
  synth->add_option("--looks", sa.looks, "Multilook count (>= 3)");
  synth->add_option("--layout", sa.layout, "checkerboard | voronoi");
  synth->add_option("--seed", sa.seed, "RNG seed");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Two-step training on a labeled scene");
  train->add_option("--data", ta.data, "Input C3 path")->required();
  train->add_option("--out", ta.out, "Output prefix")->required();
  train->add_option("--stop-after", ta.stop_after, "cs: halt after step 1");
  train->add_option("--lr1", ta.cfg.lr_step1, "Step-1 learning rate");
  train->add_option("--lr2", ta.cfg.lr_step2, "Step-2 learning rate");
  train->add_option("--batch1", ta.cfg.batch_step1, "Step-1 batch size");
  train->add_option("--batch2", ta.cfg.batch_step2, "Step-2 batch size (tiles)");
  train->add_option("--epochs1", ta.cfg.epochs_step1, "Step-1 epochs");
  train->add_option("--epochs2", ta.cfg.epochs_step2, "Step-2 epochs");
  train->add_option("--alpha", ta.cfg.focal_alpha, "Focal alpha");
  train->add_option("--gamma", ta.cfg.focal_gamma, "Focal gamma");
  train->add_option("--w-train", ta.cfg.w_train, "Refined weight: correct pixels");
  train->add_option("--w-error", ta.cfg.w_error, "Refined weight: error pixels");
  train->add_option("--w-else", ta.cfg.w_else, "Refined weight: elsewhere");
  train->add_option("--per-class", ta.cfg.per_class_count, "Training pixels per class");
  train->add_option("--max-rate", ta.cfg.max_rate, "Max fraction sampled per class");
  train->add_option("--seed", ta.cfg.seed, "RNG seed");

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Whole-scene classification");
  predict->add_option("--model", pa.model, "Model file")->required();
  predict->add_option("--data", pa.data, "Input C3 path")->required();
  predict->add_option("--net", pa.net, "cs | dilated | crpm");
  predict->add_option("--out", pa.out, "Output PGM map")->required();
  predict->add_option("--scores", pa.scores_out, "Raw score tensor dump");
  predict->add_option("--color", pa.color_out, "Color PPM rendering");

  EvalArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "Score a prediction map");
  evaluate->add_option("--pred", ea.pred, "Prediction PGM")->required();
  evaluate->add_option("--labels", ea.labels, "Ground-truth PGM")->required();
  evaluate->add_option("--report", ea.report, "Metrics JSON output path");

  GradArgs ga;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
  gradcheck->add_option("--seed", ga.seed, "RNG seed");
  gradcheck->add_option("--tolerance", ga.tolerance, "Max relative error");
  gradcheck->add_option("--instances", ga.instances, "Instances per op");
  gradcheck->add_option("--corrupt", ga.corrupt, "Fault-injection hook: op name");

  BenchArgs ba;
  auto* benchmark = app.add_subcommand("benchmark", "Patchwise vs dense timing");
  benchmark->add_option("--model", ba.model, "Cs-CNN model file")->required();
  benchmark->add_option("--data", ba.data, "Input C3 path (>= 256x256)")->required();
  benchmark->add_option("--runs", ba.runs, "Timed runs per path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    error_line(kExitUsage, e.what());
    return kExitUsage;
  }

  if (synth->parsed()) return guarded([&] { return cmd_synth(sa); });
  if (train->parsed()) return guarded([&] { return cmd_train(ta); });
  if (predict->parsed()) return guarded([&] { return cmd_predict(pa); });
  if (evaluate->parsed()) return guarded([&] { return cmd_evaluate(ea); });
  if (gradcheck->parsed()) return guarded([&] { return cmd_gradcheck(ga); });
  if (benchmark->parsed()) return guarded([&] { return cmd_benchmark(ba); });
  return kExitUsage;
}
