#include "lpcdet/commands.hpp"

#include "lpcdet/report.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <random>
#include <sstream>
#include <cctype>

namespace lpcdet {

namespace fs = std::filesystem;

namespace {

const char* const kModelPrefixes[] = {"extent.", "grid.", "model."};

bool model_key(const std::string& key) {
  if (key == "seed") return true;
  for (const char* p : kModelPrefixes) {
    if (key.rfind(p, 0) == 0) return true;
  }
  return false;
}

fs::path split_dir(const fs::path& data_dir, const char* split) {
  const fs::path sub = data_dir / split;
  return fs::is_directory(sub) ? sub : data_dir;
}

std::vector<Scene> load_split(const fs::path& data_dir, const char* split) {
  if (!fs::is_directory(data_dir)) throw std::runtime_error("data directory not found: " + data_dir.string());
  std::vector<Scene> scenes = load_scene_dir(split_dir(data_dir, split));
  if (scenes.empty()) throw std::runtime_error("no scene files in " + split_dir(data_dir, split).string());
  return scenes;
}

Checkpoint load_checked(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  return read_checkpoint(path);
}

/// Detector from a checkpoint, with the checkpoint's model config.
Detector restore(const Checkpoint& ckpt, const RunConfig& run) {
  Detector det(run.detector_config());
  load_detector(det, ckpt);
  return det;
}

Detector clone(const Detector& src, const std::set<int>& refine) {
  DetectorConfig cfg = src.config;
  cfg.decoder.refine_layers = refine;
  Detector out(cfg);
  load_detector(out, make_checkpoint(src));
  return out;
}

void note(std::ostream* out, const std::string& msg) {
  if (out) *out << msg << std::endl;
}

std::string seconds_since(std::chrono::steady_clock::time_point t0) {
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1fs", s);
  return buf;
}

}  // namespace

RunLayout RunLayout::create(const fs::path& root, const RunConfig& config) {
  RunLayout l{root, root / "checkpoints", root / "logs", root / "reports"};
  fs::create_directories(l.checkpoints);
  fs::create_directories(l.logs);
  fs::create_directories(l.reports);
  write_text(root / "config.echo", config.echo());
  return l;
}

std::uint64_t scene_seed(std::uint64_t seed, int split, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(split), static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  return rng();
}

std::vector<Scene> generate_scenes(const RunConfig& config, int split, int count) {
  const SceneConfig sc = config.scene_config();
  std::vector<Scene> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(generate_scene(sc, scene_seed(sc.seed, split, i)));
  return out;
}

Checkpoint checkpoint_with_config(const Detector& detector, const RunConfig& config) {
  Checkpoint ckpt = make_checkpoint(detector);
  RunConfig c = config;
  c.set("model.refine", format_refine_spec(detector.config.decoder.refine_layers));
  for (const auto& [k, v] : c.values()) {
    if (model_key(k)) ckpt.meta["config." + k] = v;
  }
  return ckpt;
}

RunConfig config_from_checkpoint(const Checkpoint& ckpt, const RunConfig& base) {
  RunConfig c = base;
  for (const auto& [k, v] : ckpt.meta) {
    if (k.rfind("config.", 0) != 0) continue;
    const std::string key = k.substr(7);
    const bool shaping = key.starts_with("extent.") || key.starts_with("grid.") || key.starts_with("model.");
    if (shaping && key != "model.detach_refined_anchors") c.set(key, v);
  }
  return c;
}

std::vector<std::vector<Detection>> detect_all(const Detector& detector, std::span<const Scene> scenes) {
  std::vector<std::vector<Detection>> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(detect(detector, s));
  return out;
}

EvalAccumulator evaluate(std::span<const std::vector<Detection>> detections,
                         std::span<const Scene> scenes, std::optional<double> nms_overlap) {
  if (detections.size() != scenes.size()) throw std::invalid_argument("evaluate: size mismatch");
  EvalAccumulator acc;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (nms_overlap) {
      const std::vector<Detection> kept = nms(detections[i], *nms_overlap);
      acc.add(kept, scenes[i].boxes);
    } else {
      acc.add(detections[i], scenes[i].boxes);
    }
  }
  return acc;
}

std::vector<Variant> schedule_variants(int layers) {
  std::set<int> every_second, after_each;
  for (int k = 1; k < layers; ++k) {
    after_each.insert(k);
    if (k % 2 == 1) every_second.insert(k);
  }
  std::vector<Variant> v{{"Propagation", {}}};
  if (layers > 1) {
    v.push_back({"Once", {1}});
    v.push_back({"Every 2nd", every_second});
    v.push_back({"After each", after_each});
  }
  return v;
}

StudyResult run_study(const RunConfig& config, std::span<const Scene> train,
                      std::span<const Scene> eval, const StudyOptions& options) {
  config.validate();
  if (train.empty() || eval.empty()) throw std::invalid_argument("run_study: empty split");
  const auto t0 = std::chrono::steady_clock::now();
  std::ostream* log = options.progress;
  StudyResult result;

  DetectorConfig base = config.detector_config();
  base.decoder.refine_layers.clear();
  Detector stage1(base);
  const TrainConfig tc1 = config.train_config(1);
  note(log, "stage 1: " + std::to_string(tc1.epochs) + " epochs on " + std::to_string(train.size()) + " scenes");
  result.stage1_log = train_detector(stage1, train, tc1, 1, [&](const EpochLog& e) {
    if (log && (e.epoch % 10 == 0 || e.epoch + 1 == tc1.epochs)) {
      *log << "  epoch " << e.epoch << " loss " << e.loss_total << " (" << seconds_since(t0) << ")" << std::endl;
    }
  }).log;
  result.stage1_metrics = compute_metrics(evaluate(detect_all(stage1, eval), eval));
  note(log, "stage 1 AP " + std::to_string(result.stage1_metrics.ap));

  std::vector<Variant> variants = options.variants.empty() ? schedule_variants(base.decoder.layers) : options.variants;
  std::set<int> all_refine;
  for (const auto& v : variants) all_refine.insert(v.refine.begin(), v.refine.end());
  if (!all_refine.empty()) {
    const auto holdout = static_cast<std::size_t>(std::ceil(options.aam_holdout * static_cast<double>(train.size())));
    const std::size_t fit = train.size() > holdout ? train.size() - holdout : train.size();
    const std::set<int> source = aam_source_layers(all_refine);
    const ad::Matrix fit_tokens = collect_aam_tokens(stage1, train.first(fit), source);
    const ad::Matrix held_tokens = collect_aam_tokens(stage1, train.subspan(fit), source);
    result.aam_curve = train_aam(stage1, fit_tokens, config.aam_config()).loss_curve;
    result.aam_train = evaluate_aam(stage1, fit_tokens);
    result.aam_heldout = evaluate_aam(stage1, held_tokens.rows() > 0 ? held_tokens : fit_tokens);
    note(log, "AAM held-out deltas " + std::to_string(result.aam_heldout.delta_before) + " -> " +
                  std::to_string(result.aam_heldout.delta_after) + ", drift " +
                  std::to_string(result.aam_heldout.other_drift) + " / " +
                  std::to_string(result.aam_heldout.other_magnitude));
  }
  if (options.layout) {
    write_checkpoint(checkpoint_with_config(stage1, config), options.layout->checkpoints / "stage1.ckpt");
    write_checkpoint(make_aam_checkpoint(stage1), options.layout->checkpoints / "aam.ckpt");
    write_text(options.layout->logs / "train_stage1.csv", format_train_log(result.stage1_log));
  }

  const TrainConfig tc2 = config.train_config(2);
  const std::uint64_t aam_print = nn::fingerprint(stage1.aam_parameters());
  for (const Variant& v : variants) {
    Detector det = clone(stage1, v.refine);
    VariantResult vr;
    vr.variant = v;
    note(log, "stage 2 '" + v.name + "' refine " + format_refine_spec(v.refine) + " (" + seconds_since(t0) + ")");
    vr.log = train_detector(det, train, tc2, 2).log;
    if (nn::fingerprint(det.aam_parameters()) != aam_print) {
      throw std::logic_error("AAM parameters changed during stage 2");
    }
    const auto dets = detect_all(det, eval);
    const EvalAccumulator acc = evaluate(dets, eval);
    vr.metrics = compute_metrics(acc);
    vr.metrics_nms_01 = compute_metrics(evaluate(dets, eval, 0.1));
    vr.metrics_nms_02 = compute_metrics(evaluate(dets, eval, 0.2));
    vr.records = acc.records();
    vr.travel = travel_length_stats(vr.records, config.number("eval.travel_bin"));
    note(log, "  AP " + std::to_string(vr.metrics.ap) + " (NMS 0.1: " + std::to_string(vr.metrics_nms_01.ap) + ")");
    if (options.layout) {
      std::string slug = v.name;
      for (char& c : slug) c = c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      write_checkpoint(checkpoint_with_config(det, config), options.layout->checkpoints / (slug + ".ckpt"));
      write_text(options.layout->logs / ("train_" + slug + ".csv"), format_train_log(vr.log));
    }
    result.variants.push_back(std::move(vr));
  }
  note(log, "study done in " + seconds_since(t0));
  return result;
}

void cmd_gen_data(const RunConfig& config, int count, int eval_count, const fs::path& out, std::ostream& log) {
  config.validate();
  if (count < 0 || eval_count < 0) throw std::invalid_argument("scene counts must be >= 0");
  auto write_split = [&](int split, int n, const fs::path& dir) {
    fs::create_directories(dir);
    const std::vector<Scene> scenes = generate_scenes(config, split, n);
    for (int i = 0; i < n; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "scene_%05d.scene", i);
      save_scene(scenes[static_cast<std::size_t>(i)], dir / name);
    }
    log << "wrote " << n << " scenes to " << dir.string() << std::endl;
  };
  if (eval_count > 0) {
    write_split(0, count, out / "train");
    write_split(1, eval_count, out / "eval");
  } else {
    write_split(0, count, out);
  }
  write_text(out / "config.echo", config.echo());
}

void cmd_train(const RunConfig& config, const fs::path& data_dir, const fs::path& out,
               const TrainOptions& options, std::ostream& log) {
  RunConfig run = config;
  if (options.refine) {
    if (!options.init || !options.aam) {
      throw std::invalid_argument("--refine needs a stage-1 checkpoint (--init) and an AAM checkpoint (--aam)");
    }
    run = config_from_checkpoint(load_checked(*options.init), config);
    run.set("model.refine", *options.refine);
  } else if (!run.refine_layers().empty()) {
    throw std::invalid_argument("stage 1 trains without refinement; pass --refine for stage 2");
  }
  run.validate();
  const std::vector<Scene> scenes = load_split(data_dir, "train");
  const RunLayout layout = RunLayout::create(out, run);

  Detector det(run.detector_config());
  int stage = 1;
  if (options.refine) {
    stage = 2;
    load_detector(det, load_checked(*options.init));
    load_aam(det, load_checked(*options.aam));
  } else if (options.init) {
    load_detector(det, load_checked(*options.init));
  }
  const std::uint64_t aam_print = nn::fingerprint(det.aam_parameters());
  const TrainConfig tc = run.train_config(stage);
  std::vector<EpochLog> rows;
  train_detector(det, scenes, tc, stage, [&](const EpochLog& e) {
    rows.push_back(e);
    log << "stage " << stage << " epoch " << e.epoch << " lr " << e.lr << " loss " << e.loss_total << std::endl;
    write_text(layout.logs / "train.csv", format_train_log(rows));
  });
  if (nn::fingerprint(det.aam_parameters()) != aam_print) throw std::logic_error("AAM parameters changed during training");
  write_text(layout.logs / "train.csv", format_train_log(rows));
  write_checkpoint(checkpoint_with_config(det, run), layout.checkpoints / "detector.ckpt");
  log << "saved " << (layout.checkpoints / "detector.ckpt").string() << std::endl;
}

void cmd_train_aam(const RunConfig& config, const fs::path& checkpoint, const fs::path& data_dir,
                   const fs::path& out, std::ostream& log) {
  const Checkpoint ckpt = load_checked(checkpoint);
  RunConfig run = config_from_checkpoint(ckpt, config);
  run.validate();
  Detector det = restore(ckpt, run);
  if (!det.config.decoder.refine_layers.empty()) {
    throw std::invalid_argument("train-aam expects a stage-1 (propagation) checkpoint");
  }
  std::set<int> refine = config.refine_layers();
  if (refine.empty()) refine = parse_refine_spec("all", det.config.decoder.layers);
  const std::vector<Scene> scenes = load_split(data_dir, "train");
  const RunLayout layout = RunLayout::create(out, run);

  const std::size_t held = std::max<std::size_t>(1, scenes.size() / 5);
  const std::size_t fit = scenes.size() > held ? scenes.size() - held : scenes.size();
  const std::span<const Scene> all(scenes);
  const std::set<int> source = aam_source_layers(refine);
  const ad::Matrix fit_tokens = collect_aam_tokens(det, all.first(fit), source);
  const ad::Matrix held_tokens = collect_aam_tokens(det, all.subspan(fit), source);
  const AamTrainResult r = train_aam(det, fit_tokens, run.aam_config());
  const AamReport rep = evaluate_aam(det, held_tokens.rows() > 0 ? held_tokens : fit_tokens);

  std::ostringstream csv;
  csv << "epoch, objective\n";
  for (std::size_t i = 0; i < r.loss_curve.size(); ++i) csv << i << ", " << r.loss_curve[i] << '\n';
  write_text(layout.logs / "train_aam.csv", csv.str());
  std::ostringstream summary;
  summary << "delta_before, delta_after, other_magnitude, other_drift\n"
          << rep.delta_before << ", " << rep.delta_after << ", " << rep.other_magnitude << ", "
          << rep.other_drift << '\n';
  write_text(layout.reports / "aam_heldout.csv", summary.str());
  write_checkpoint(make_aam_checkpoint(det), layout.checkpoints / "aam.ckpt");
  log << "AAM held-out location deltas " << rep.delta_before << " -> " << rep.delta_after << ", drift "
      << rep.other_drift << " of " << rep.other_magnitude << std::endl;
}

void cmd_eval(const RunConfig& config, const fs::path& checkpoint, const fs::path& data_dir,
              const fs::path& out, std::optional<double> nms_overlap,
              const std::optional<std::string>& refine, std::ostream& log) {
  const Checkpoint ckpt = load_checked(checkpoint);
  RunConfig run = config_from_checkpoint(ckpt, config);
  if (refine) run.set("model.refine", *refine);
  run.validate();
  if (nms_overlap && !(*nms_overlap >= 0.0 && *nms_overlap <= 1.0)) {
    throw std::invalid_argument("--nms overlap must lie in [0, 1]");
  }
  const Detector det = restore(ckpt, run);
  const std::vector<Scene> scenes = load_split(data_dir, "eval");
  const RunLayout layout = RunLayout::create(out, run);
  const auto dets = detect_all(det, scenes);
  std::vector<MethodMetrics> rows{{"no NMS", compute_metrics(evaluate(dets, scenes))}};
  if (nms_overlap) {
    char name[32];
    std::snprintf(name, sizeof name, "NMS %g", *nms_overlap);
    rows.emplace_back(name, compute_metrics(evaluate(dets, scenes, nms_overlap)));
  }
  write_text(layout.reports / "metrics.csv", format_metrics_csv(rows));
  write_text(layout.reports / "metrics.svg", metrics_svg(rows));
  log << format_metrics_csv(rows);
}

void cmd_ablate(const RunConfig& config, const fs::path& data_dir, const fs::path& out, std::ostream& log) {
  config.validate();
  const std::vector<Scene> train = load_split(data_dir, "train");
  const std::vector<Scene> eval = load_split(data_dir, "eval");
  StudyOptions opts;
  opts.progress = &log;
  opts.layout = RunLayout::create(out, config);
  const StudyResult r = run_study(config, train, eval, opts);
  std::vector<MethodMetrics> rows;
  for (const auto& v : r.variants) rows.emplace_back(v.variant.name, v.metrics);
  write_text(opts.layout->reports / "ablation.csv", format_metrics_csv(rows));
  write_text(opts.layout->reports / "ablation.svg", metrics_svg(rows));
  log << format_metrics_csv(rows);
}

void cmd_analyze_travel(const RunConfig& config, const fs::path& checkpoint, const fs::path& data_dir,
                        const fs::path& out, std::ostream& log) {
  const Checkpoint ckpt = load_checked(checkpoint);
  RunConfig run = config_from_checkpoint(ckpt, config);
  run.validate();
  const Detector det = restore(ckpt, run);
  const std::vector<Scene> scenes = load_split(data_dir, "eval");
  const RunLayout layout = RunLayout::create(out, run);
  const EvalAccumulator acc = evaluate(detect_all(det, scenes), scenes);
  const TravelStats stats = travel_length_stats(acc.records(), run.number("eval.travel_bin"));
  write_text(layout.reports / "travel.csv", format_travel_csv(stats));
  write_text(layout.reports / "travel.svg", travel_svg(stats));
  log << format_travel_csv(stats) << "median FQ " << stats.median_fq << " m, median LQ " << stats.median_lq
      << " m, LQ in first bin " << stats.lq_first_bin_fraction << std::endl;
}

void cmd_dump_attention(const RunConfig& config, const fs::path& checkpoint, const fs::path& scene_file,
                        int query, const fs::path& out, std::ostream& log) {
  const Checkpoint ckpt = load_checked(checkpoint);
  RunConfig run = config_from_checkpoint(ckpt, config);
  run.validate();
  const Detector det = restore(ckpt, run);
  if (!fs::exists(scene_file)) throw std::runtime_error("scene file not found: " + scene_file.string());
  const Scene scene = load_scene(scene_file);
  if (query < 0 || query >= det.config.decoder.queries) {
    throw std::invalid_argument("query index " + std::to_string(query) + " outside [0, " +
                                std::to_string(det.config.decoder.queries - 1) + "]");
  }
  const RunLayout layout = RunLayout::create(out, run);
  ad::NoGradGuard guard;
  const ForwardResult fr = forward(det, prepare_scene(scene, det.config), DecoderOptions{true});
  for (const AttentionDump& d : attention_dumps(fr, query)) {
    const std::string stem = "attention_layer" + std::to_string(d.layer) + "_query" + std::to_string(query);
    write_text(layout.reports / (stem + ".txt"), format_attention(d));
    write_text(layout.reports / (stem + ".svg"), attention_svg(d, det.config.grid));
    log << "wrote " << (layout.reports / (stem + ".txt")).string() << std::endl;
  }
}

}  // namespace lpcdet
