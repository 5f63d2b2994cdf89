#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <iomanip>
#include <optional>
#include <sstream>

#include "mssp/checkpoint.hpp"
#include "mssp/errors.hpp"
#include "mssp/image.hpp"
#include "mssp/infer.hpp"
#include "mssp/metrics.hpp"
#include "mssp/optim.hpp"
#include "mssp/sampling.hpp"
#include "mssp/scene.hpp"
#include "mssp/synth.hpp"
#include "mssp/xval.hpp"

namespace mssp::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// ---- shared option groups --------------------------------------------------

struct ModelFlags {
  std::string sp_pool = "avg";
  bool conv_bn = false;

  void attach(CLI::App& app) {
    app.add_option("--sp-pool", sp_pool, "Pooling in the multi-scale branches (avg|max)")->capture_default_str();
    app.add_flag("--conv-bn", conv_bn, "Batch norm after every 3x3 convolution");
  }
  ModelConfig config() const {
    ModelConfig m;
    m.sp_pool = parse_sp_pool(sp_pool);
    m.conv_bn = conv_bn;
    return m;
  }
};

struct TrainFlags {
  std::size_t steps = 3000;
  std::size_t batch = 8;
  double lr = 0.005;
  double fraction = 0.20;
  double boundary_share = 0.50;
  std::size_t boundary_band = 2;
  std::size_t di_window = 3;

  void attach(CLI::App& app) {
    app.add_option("--steps", steps, "Training steps")->capture_default_str();
    app.add_option("--batch", batch, "Patches per step")->capture_default_str();
    app.add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    app.add_option("--fraction", fraction, "Share of pixel positions drawn as patch centers")->capture_default_str();
    app.add_option("--boundary-share", boundary_share, "Share of centers drawn from the boundary band")
        ->capture_default_str();
    app.add_option("--boundary-band", boundary_band, "Half-width of the boundary band in pixels")
        ->capture_default_str();
    app.add_option("--di-window", di_window, "Window of the log-ratio difference image (odd)")->capture_default_str();
  }
  PipelineConfig pipeline(std::uint64_t seed, const ModelConfig& model) const {
    PipelineConfig p;
    p.sampling = SampleSpec{fraction, boundary_share, boundary_band, seed};
    p.train = TrainConfig{steps, batch, lr, seed};
    p.model = model;
    p.sampling.validate();
    if (batch == 0) throw ConfigError("--batch must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("--lr must be > 0");
    if (di_window % 2 == 0) throw ConfigError("--di-window must be odd");
    return p;
  }
};

// ---- config files ----------------------------------------------------------

// Values from a JSON config fill every option the command line left unset.
void apply_config(CLI::App& sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config '" + path + "' must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const std::string name = key.starts_with("-") ? key : (key.size() == 1 ? "-" : "--") + key;
    CLI::Option* opt = sub.get_option_no_throw(name);
    if (!opt) opt = sub.get_option_no_throw(key);  // positionals
    if (!opt || key == "config" || key == "help") {
      throw ConfigError("config '" + path + "': unknown key '" + key + "' for command " + sub.get_name());
    }
    if (opt->count() > 0) continue;
    std::vector<std::string> values;
    auto push = [&](const Json& v) {
      if (v.is_string()) values.push_back(v.get<std::string>());
      else if (v.is_boolean()) values.push_back(v.get<bool>() ? "true" : "false");
      else if (v.is_number()) values.push_back(v.dump());
      else throw ConfigError("config '" + path + "': unsupported value for '" + key + "'");
    };
    if (value.is_array()) {
      for (const auto& v : value) push(v);
    } else {
      push(value);
    }
    for (const auto& v : values) opt->add_result(v);
    opt->run_callback();
  }
}

void require(const CLI::App& sub, const std::string& name) {
  if (sub.get_option(name)->count() == 0) throw ConfigError(sub.get_name() + ": " + name + " is required");
}

// ---- helpers ---------------------------------------------------------------

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string loss_line(std::size_t step, double loss) {
  Json j;
  j["step"] = step;
  j["loss"] = loss;
  return j.dump() + "\n";
}

void write_loss_log(const fs::path& path, const std::vector<double>& losses) {
  std::string text;
  for (std::size_t i = 0; i < losses.size(); ++i) text += loss_line(i + 1, losses[i]);
  write_text(path, text);
}

std::vector<ScenePair> load_prepared(const std::vector<std::string>& manifests, std::size_t di_window,
                                     bool need_reference) {
  std::vector<ScenePair> scenes;
  for (const auto& m : manifests) {
    ScenePair s = load_scene(m);
    if (need_reference && !s.reference) throw ConfigError("manifest '" + m + "' has no reference mask");
    prepare_scene(s, di_window);
    scenes.push_back(std::move(s));
  }
  return scenes;
}

Json report_json(const EvalReport& r) { return Json::parse(to_json(r)); }

// ---- commands --------------------------------------------------------------

struct SynthCommand {
  SynthSpec spec;
  std::string name;
  std::string out;

  void attach(CLI::App& app) {
    app.add_option("--out", out, "Output directory");
    app.add_option("--height", spec.height)->capture_default_str();
    app.add_option("--width", spec.width)->capture_default_str();
    app.add_option("--looks", spec.looks, "Speckle looks (gamma shape)")->capture_default_str();
    app.add_option("--regions", spec.n_regions, "Number of changed discs")->capture_default_str();
    app.add_option("--radius-min", spec.radius_min)->capture_default_str();
    app.add_option("--radius-max", spec.radius_max)->capture_default_str();
    app.add_option("--contrast", spec.contrast, "Intensity factor inside changed discs")->capture_default_str();
    app.add_option("--name", name, "Scene name (default synth-<seed>)");
  }

  int execute(std::uint64_t seed, std::ostream& stdout_) {
    spec.seed = seed;
    spec.validate();
    const fs::path dir(out);
    ensure_dir(dir);
    const SynthScene s = synth_scene(spec);
    const std::string scene_name = name.empty() ? s.scene.name : name;

    // Both acquisitions share one scale so their ratio survives quantization.
    float peak = 0.0f;
    for (const Image* im : {&s.scene.im1, &s.scene.im2}) {
      for (float v : im->data()) peak = std::max(peak, v);
    }
    if (!(peak > 0.0f)) peak = 1.0f;
    for (auto [plane, file] : {std::pair{&s.scene.im1, "im1.pgm"}, std::pair{&s.scene.im2, "im2.pgm"}}) {
      Image scaled = *plane;
      for (float& v : scaled.data()) v /= peak;
      save_image(scaled, dir / file, 16);
    }
    save_mask(*s.scene.reference, dir / "reference.pgm");
    write_manifest(dir / "manifest.json", scene_name, "im1.pgm", "im2.pgm", fs::path("reference.pgm"));

    Json meta;
    meta["name"] = scene_name;
    meta["seed"] = seed;
    meta["height"] = spec.height;
    meta["width"] = spec.width;
    meta["looks"] = spec.looks;
    meta["contrast"] = spec.contrast;
    meta["n_regions"] = spec.n_regions;
    meta["radius_min"] = spec.radius_min;
    meta["radius_max"] = spec.radius_max;
    meta["intensity_scale"] = peak;
    std::size_t changed = 0;
    for (auto v : s.scene.reference->data()) changed += v;
    meta["changed_pixels"] = changed;
    meta["changed_fraction"] = s.changed_fraction;
    Json discs = Json::array();
    for (const auto& d : s.discs) {
      discs.push_back(Json{{"cy", d.cy}, {"cx", d.cx}, {"radius", d.radius}, {"pixels", d.pixels}});
    }
    meta["discs"] = discs;
    write_text(dir / "synth.json", meta.dump(2) + "\n");
    stdout_ << meta.dump() << "\n";
    return kOk;
  }
};

struct TrainCommand {
  std::vector<std::string> manifests;
  std::string out;
  bool score = false;
  TrainFlags train;
  ModelFlags model;

  void attach(CLI::App& app) {
    app.add_option("manifests", manifests, "Scene manifests to train on");
    app.add_option("--out", out, "Output directory (model.ckpt, loss.jsonl, train.json)");
    app.add_flag("--score", score, "Also report eval-mode loss and pixel accuracy on the training patches");
    train.attach(app);
    model.attach(app);
  }

  int execute(std::uint64_t seed, std::ostream& stdout_) {
    const ModelConfig m = model.config();
    const PipelineConfig cfg = train.pipeline(seed, m);
    if (manifests.empty()) throw ConfigError("train: at least one manifest is required");
    const fs::path dir(out);
    ensure_dir(dir);
    const std::vector<ScenePair> scenes = load_prepared(manifests, train.di_window, true);
    std::vector<const ScenePair*> ptrs;
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      ptrs.push_back(&scenes[i]);
      ids.push_back(i);
    }
    const TrainingSet set = pool_training_patches(ptrs, ids, cfg.sampling);

    std::ofstream log(dir / "loss.jsonl");
    if (!log) throw IoError("cannot open '" + (dir / "loss.jsonl").string() + "' for writing");
    const TrainResult result = train_loop(init_params(seed, m), m, set.patches, cfg.train,
                                          [&](std::size_t step, double loss) { log << loss_line(step, loss) << std::flush; });
    save_checkpoint(result.params, dir / "model.ckpt", m);

    Json summary;
    summary["steps"] = cfg.train.steps;
    summary["batch"] = cfg.train.batch;
    summary["lr"] = cfg.train.lr;
    summary["seed"] = seed;
    summary["training_patches"] = set.patches.size();
    summary["final_loss"] = result.losses.empty() ? Json(nullptr) : Json(result.losses.back());
    if (score) {
      const BatchScore s = score_batch(result.params, m, set.patches);
      summary["train_loss"] = s.loss;
      summary["train_accuracy"] = s.accuracy;
    }
    write_text(dir / "train.json", summary.dump(2) + "\n");
    stdout_ << summary.dump() << "\n";
    return kOk;
  }
};

struct InferCommand {
  std::string manifest;
  std::string checkpoint;
  std::string out;
  std::size_t stride = 16;
  std::size_t di_window = 3;
  ModelFlags model;

  void attach(CLI::App& app) {
    app.add_option("manifest", manifest, "Scene manifest");
    app.add_option("--checkpoint", checkpoint, "Trained model");
    app.add_option("--out", out, "Output directory (change.pgm, prob.pgm, infer.json)");
    app.add_option("--stride", stride, "Tile stride in pixels (1..32)")->capture_default_str();
    app.add_option("--di-window", di_window)->capture_default_str();
    model.attach(app);
  }

  int execute(std::ostream& stdout_) {
    const ModelConfig m = model.config();
    if (stride < 1 || stride > kPatchSize) throw ConfigError("--stride must be in 1..32");
    if (di_window % 2 == 0) throw ConfigError("--di-window must be odd");
    const ModelParams<float> params = load_checkpoint(checkpoint, m);
    ScenePair scene = load_scene(manifest);
    prepare_scene(scene, di_window);
    const fs::path dir(out);
    ensure_dir(dir);
    InferStats stats;
    const ChangeMap map = infer_scene(params, m, scene, stride, &stats);
    save_mask(map.labels, dir / "change.pgm");
    save_image(map.prob, dir / "prob.pgm", 16);
    Json summary;
    summary["scene"] = scene.name;
    summary["height"] = scene.height();
    summary["width"] = scene.width();
    summary["stride"] = stride;
    summary["tiles"] = stats.tiles;
    std::size_t changed = 0;
    for (auto v : map.labels.data()) changed += v;
    summary["changed_pixels"] = changed;
    write_text(dir / "infer.json", summary.dump(2) + "\n");
    stdout_ << summary.dump() << "\n";
    return kOk;
  }
};

struct EvalCommand {
  std::string map;
  std::string reference;
  std::string exclude;
  std::string out;
  bool pma_over_unchanged = false;

  void attach(CLI::App& app) {
    app.add_option("map", map, "Binary change map (PGM)");
    app.add_option("reference", reference, "Binary reference mask (PGM)");
    app.add_option("--exclude", exclude, "Mask of pixels left out of every count");
    app.add_option("--out", out, "Also write the report to this file");
    app.add_flag("--pma-over-unchanged", pma_over_unchanged, "Divide missed alarms by the unchanged-pixel count");
  }

  int execute(std::ostream& stdout_) {
    const Mask pred = load_mask(map);
    const Mask ref = load_mask(reference);
    std::optional<Mask> skip;
    if (!exclude.empty()) skip = load_mask(exclude);
    const EvalReport r = evaluate(pred, ref, skip ? &*skip : nullptr, EvalOptions{pma_over_unchanged});
    const std::string text = to_json(r);
    if (!out.empty()) write_text(out, text + "\n");
    stdout_ << text << "\n";
    return kOk;
  }
};

struct XvalCommand {
  std::vector<std::string> manifests;
  std::string out;
  std::size_t stride = 16;
  TrainFlags train;
  ModelFlags model;

  void attach(CLI::App& app) {
    app.add_option("manifests", manifests, "Scene manifests; each is held out once");
    app.add_option("--out", out, "Output directory (fold_<k>/..., summary.json)");
    app.add_option("--stride", stride, "Inference tile stride (1..32)")->capture_default_str();
    train.attach(app);
    model.attach(app);
  }

  int execute(std::uint64_t seed, std::ostream& stdout_) {
    const ModelConfig m = model.config();
    PipelineConfig cfg = train.pipeline(seed, m);
    if (stride < 1 || stride > kPatchSize) throw ConfigError("--stride must be in 1..32");
    cfg.infer_stride = stride;
    if (manifests.size() < 2) throw ConfigError("xval: at least two manifests are required");
    const fs::path dir(out);
    ensure_dir(dir);
    const std::vector<ScenePair> scenes = load_prepared(manifests, train.di_window, true);
    const std::vector<FoldResult> folds = leave_one_out(scenes, cfg, dir);

    Json rows = Json::array();
    double kappa = 0.0, pfa = 0.0, pma = 0.0, accuracy = 0.0;
    for (std::size_t k = 0; k < folds.size(); ++k) {
      const FoldResult& f = folds[k];
      const fs::path fold_dir = f.checkpoint.parent_path();
      write_loss_log(fold_dir / "loss.jsonl", f.losses);
      write_text(fold_dir / "report.json", to_json(f.report, 2) + "\n");
      Json row;
      row["fold"] = k;
      row["scene"] = f.test_scene;
      row["manifest"] = manifests[k];
      row["audit_passed"] = f.audit_passed;
      row["training_patches"] = f.training_patches;
      row["final_loss"] = f.losses.empty() ? Json(nullptr) : Json(f.losses.back());
      row["report"] = report_json(f.report);
      rows.push_back(row);
      kappa += f.report.kappa;
      pfa += f.report.pfa;
      pma += f.report.pma;
      accuracy += f.report.accuracy;
    }
    const double n = static_cast<double>(folds.size());
    Json summary;
    summary["folds"] = rows;
    summary["mean"] = Json{{"pfa", pfa / n}, {"pma", pma / n}, {"accuracy", accuracy / n}, {"kappa", kappa / n}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");

    std::ostringstream table;
    table << std::left << std::setw(20) << "held-out" << std::right << std::setw(10) << "pfa" << std::setw(10)
          << "pma" << std::setw(10) << "accuracy" << std::setw(10) << "kappa" << std::setw(8) << "audit" << "\n";
    table << std::fixed << std::setprecision(4);
    for (const FoldResult& f : folds) {
      table << std::left << std::setw(20) << f.test_scene << std::right << std::setw(10) << f.report.pfa
            << std::setw(10) << f.report.pma << std::setw(10) << f.report.accuracy << std::setw(10) << f.report.kappa
            << std::setw(8) << (f.audit_passed ? "ok" : "FAIL") << "\n";
    }
    table << std::left << std::setw(20) << "mean" << std::right << std::setw(10) << pfa / n << std::setw(10)
          << pma / n << std::setw(10) << accuracy / n << std::setw(10) << kappa / n << "\n";
    stdout_ << table.str();
    bool audits = true;
    for (const FoldResult& f : folds) audits = audits && f.audit_passed;
    if (!audits) throw EvaluationError("xval: a held-out scene contributed training patches");
    return kOk;
  }
};

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  std::replace(text.begin(), text.end(), '\r', ' ');
  return text;
}

}  // namespace

std::pair<int, std::string> classify(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    const std::string kind = err->kind();
    if (dynamic_cast<const ConfigError*>(err)) return {kConfigFailure, kind};
    if (dynamic_cast<const NumericalError*>(err)) return {kNumericalFailure, kind};
    return {kDataFailure, kind};
  }
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return {kDataFailure, "io"};
  if (dynamic_cast<const CLI::Error*>(&e)) return {kConfigFailure, "config"};
  return {kInternal, "internal"};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Change detection on bitemporal SAR scenes with a multi-scale spatial pooling network."};
  app.name(args.empty() ? "mssp" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::uint64_t seed = 0;
  std::string config;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Master seed for every random substream")->capture_default_str();
    sub->add_option("--config", config, "JSON file of option defaults; command-line flags win");
  };

  SynthCommand synth;
  TrainCommand train;
  InferCommand infer;
  EvalCommand eval;
  XvalCommand xval;
  CLI::App* s_synth = app.add_subcommand("synth", "Generate a synthetic speckled scene pair with known changes");
  CLI::App* s_train = app.add_subcommand("train", "Train a model on one or more scenes");
  CLI::App* s_infer = app.add_subcommand("infer", "Produce a change map for a scene");
  CLI::App* s_eval = app.add_subcommand("eval", "Score a change map against a reference");
  CLI::App* s_xval = app.add_subcommand("xval", "Leave-one-out cross-dataset evaluation");
  synth.attach(*s_synth);
  train.attach(*s_train);
  infer.attach(*s_infer);
  eval.attach(*s_eval);
  xval.attach(*s_xval);
  for (CLI::App* sub : {s_synth, s_train, s_infer, s_eval, s_xval}) common(sub);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("mssp");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: config: " << one_line(e.what()) << "\n";
    return kConfigFailure;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (!config.empty()) apply_config(*sub, config);
    if (sub == s_synth) {
      require(*sub, "--out");
      return synth.execute(seed, out);
    }
    if (sub == s_train) {
      require(*sub, "--out");
      return train.execute(seed, out);
    }
    if (sub == s_infer) {
      require(*sub, "manifest");
      require(*sub, "--checkpoint");
      require(*sub, "--out");
      return infer.execute(out);
    }
    if (sub == s_eval) {
      require(*sub, "map");
      require(*sub, "reference");
      return eval.execute(out);
    }
    require(*sub, "--out");
    return xval.execute(seed, out);
  } catch (const std::exception& e) {
    const auto [code, kind] = classify(e);
    err << "error: " << kind << ": " << one_line(e.what()) << "\n";
    return code;
  }
}

}  // namespace mssp::cli
