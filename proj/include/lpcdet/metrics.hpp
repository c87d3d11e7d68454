#pragma once

#include "lpcdet/detector.hpp"
#include "lpcdet/scene.hpp"

#include <array>
#include <span>
#include <vector>

namespace lpcdet {

inline constexpr std::array<double, 4> kDistanceThresholds{0.5, 1.0, 2.0, 4.0};
inline constexpr double kTpErrorThreshold = 2.0;
inline constexpr double kMinRecall = 0.1;
inline constexpr double kMinPrecision = 0.1;

/// One detection of an evaluated scene, with its matching outcome.
struct DetectionRecord {
  int scene = 0;
  Box box;
  int class_id = 0;
  double score = 0.0;
  /// Matched gt index per threshold of kDistanceThresholds, -1 if none.
  std::array<int, kDistanceThresholds.size()> matched_gt{-1, -1, -1, -1};
  double fq_length = 0.0;  // BEV distance first anchor -> box center
  double lq_length = 0.0;  // BEV distance latest anchor -> box center
  /// BEV center distance to the gt matched at the TP-error threshold; -1 if none.
  double location_error = -1.0;

  bool true_positive(std::size_t threshold_index) const { return matched_gt[threshold_index] >= 0; }
};

/// Greedy matching by descending score: each detection takes the nearest
/// unmatched gt of the same class within the BEV center distance threshold
/// (ties by lowest gt index). Returns, per threshold, the matched gt index of
/// every detection or -1. Detections must be sorted by descending score.
std::vector<std::vector<int>> match_detections(std::span<const Detection> detections,
                                               std::span<const GroundTruthBox> gt,
                                               std::span<const double> thresholds);

struct PrCurve {
  std::vector<double> precision;
  std::vector<double> recall;
};

struct MetricsReport {
  double ap = 0.0;
  double ate = 0.0;
  double ase = 0.0;
  double aoe = 0.0;
  std::array<double, kDistanceThresholds.size()> ap_per_threshold{};
  std::array<PrCurve, kDistanceThresholds.size()> curves;
  int true_positives = 0;  // at the TP-error threshold
  int detections = 0;
  int ground_truth = 0;
};

/// Normalised area under the precision/recall curve over 101 recall points,
/// ignoring recall below kMinRecall and subtracting kMinPrecision. The
/// precision at recall r is the precision at the first operating point whose
/// recall reaches r (0 if none does).
double average_precision(const PrCurve& curve);

/// Precision/recall operating points of score-ranked true-positive flags.
PrCurve precision_recall(const std::vector<bool>& ranked_tp, int num_gt);

/// Collects detections and ground truth over many scenes.
class EvalAccumulator {
 public:
  /// Matches one scene's detections (score-sorted) against its gt and stores
  /// the records. Returns the records added.
  std::span<const DetectionRecord> add(std::span<const Detection> detections,
                                       std::span<const GroundTruthBox> gt);

  const std::vector<DetectionRecord>& records() const { return records_; }
  const std::vector<std::vector<GroundTruthBox>>& ground_truth() const { return gt_; }
  int scenes() const { return static_cast<int>(gt_.size()); }

 private:
  std::vector<DetectionRecord> records_;
  std::vector<std::vector<GroundTruthBox>> gt_;
};

/// AP averaged over thresholds (and over classes that have ground truth);
/// TP errors at kTpErrorThreshold. Without true positives ATE is reported as
/// the threshold and ASE, AOE as 1.
MetricsReport compute_metrics(const EvalAccumulator& acc);

/// Greedy suppression: keeps the highest-scoring detection, drops same-class
/// detections whose oriented BEV IoU with it exceeds min_overlap, repeats.
/// Input must be score-sorted; the output keeps the input order.
std::vector<Detection> nms(std::span<const Detection> detections, double min_overlap);

}  // namespace lpcdet
