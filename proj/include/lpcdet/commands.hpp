#pragma once

#include "lpcdet/checkpoint.hpp"
#include "lpcdet/config.hpp"
#include "lpcdet/metrics.hpp"
#include "lpcdet/training.hpp"
#include "lpcdet/travel.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace lpcdet {

/// out/{config.echo, checkpoints/, logs/, reports/}
struct RunLayout {
  std::filesystem::path root;
  std::filesystem::path checkpoints;
  std::filesystem::path logs;
  std::filesystem::path reports;

  /// Creates the directories and writes config.echo.
  static RunLayout create(const std::filesystem::path& root, const RunConfig& config);
};

/// Seed of scene `index` in a split (0 = train, 1 = eval) of a run seeded with `seed`.
std::uint64_t scene_seed(std::uint64_t seed, int split, int index);
std::vector<Scene> generate_scenes(const RunConfig& config, int split, int count);

/// Model settings travel with a checkpoint as META config.<key> entries.
Checkpoint checkpoint_with_config(const Detector& detector, const RunConfig& config);
/// `base` with every model-shaping key (extent.*, grid.*, model.* except
/// model.detach_refined_anchors) replaced by the checkpoint's.
RunConfig config_from_checkpoint(const Checkpoint& ckpt, const RunConfig& base);

std::vector<std::vector<Detection>> detect_all(const Detector& detector, std::span<const Scene> scenes);
EvalAccumulator evaluate(std::span<const std::vector<Detection>> detections,
                         std::span<const Scene> scenes, std::optional<double> nms_overlap = {});

// ---- the shared train / align / refine / evaluate pipeline ------------------

struct Variant {
  std::string name;
  std::set<int> refine;
};

/// Propagation / Once / Every 2nd / After each for a K-layer decoder.
std::vector<Variant> schedule_variants(int layers);

struct VariantResult {
  Variant variant;
  std::vector<EpochLog> log;
  MetricsReport metrics;
  MetricsReport metrics_nms_01;
  MetricsReport metrics_nms_02;
  TravelStats travel;
  std::vector<DetectionRecord> records;
};

struct StudyResult {
  std::vector<EpochLog> stage1_log;
  MetricsReport stage1_metrics;
  AamReport aam_train;
  AamReport aam_heldout;
  std::vector<double> aam_curve;
  std::vector<VariantResult> variants;
};

struct StudyOptions {
  std::vector<Variant> variants;  // empty = schedule_variants(K)
  /// Fraction of training scenes whose tokens are held out from AAM training.
  double aam_holdout = 0.2;
  std::ostream* progress = nullptr;
  /// Optional run directory for checkpoints, logs and reports.
  std::optional<RunLayout> layout;
};

/// Stage 1 without refinement, AAM training on its tokens, then every variant
/// continues from the stage-1 model with the frozen AAM (the propagation
/// variant for the same number of epochs with an empty refinement set).
StudyResult run_study(const RunConfig& config, std::span<const Scene> train,
                      std::span<const Scene> eval, const StudyOptions& options);

// ---- command entry points (throw on any validation failure) -----------------

struct TrainOptions {
  std::optional<std::string> refine;  // stage 2 when set
  std::optional<std::filesystem::path> init;
  std::optional<std::filesystem::path> aam;
};

void cmd_gen_data(const RunConfig& config, int count, int eval_count, const std::filesystem::path& out,
                  std::ostream& log);
void cmd_train(const RunConfig& config, const std::filesystem::path& data_dir,
               const std::filesystem::path& out, const TrainOptions& options, std::ostream& log);
void cmd_train_aam(const RunConfig& config, const std::filesystem::path& checkpoint,
                   const std::filesystem::path& data_dir, const std::filesystem::path& out,
                   std::ostream& log);
void cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint,
              const std::filesystem::path& data_dir, const std::filesystem::path& out,
              std::optional<double> nms_overlap, const std::optional<std::string>& refine,
              std::ostream& log);
void cmd_ablate(const RunConfig& config, const std::filesystem::path& data_dir,
                const std::filesystem::path& out, std::ostream& log);
void cmd_analyze_travel(const RunConfig& config, const std::filesystem::path& checkpoint,
                        const std::filesystem::path& data_dir, const std::filesystem::path& out,
                        std::ostream& log);
void cmd_dump_attention(const RunConfig& config, const std::filesystem::path& checkpoint,
                        const std::filesystem::path& scene_file, int query,
                        const std::filesystem::path& out, std::ostream& log);

}  // namespace lpcdet
