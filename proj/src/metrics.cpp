#include "lpcdet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace lpcdet {

std::vector<std::vector<int>> match_detections(std::span<const Detection> detections,
                                               std::span<const GroundTruthBox> gt,
                                               std::span<const double> thresholds) {
  std::vector<std::vector<int>> out;
  out.reserve(thresholds.size());
  for (double threshold : thresholds) {
    std::vector<int> matched(detections.size(), -1);
    std::vector<bool> taken(gt.size(), false);
    for (std::size_t i = 0; i < detections.size(); ++i) {
      int best = -1;
      double best_dist = std::numeric_limits<double>::infinity();
      for (std::size_t g = 0; g < gt.size(); ++g) {
        if (taken[g] || gt[g].class_id != detections[i].class_id) continue;
        const double dist = bev_distance(detections[i].box.center, gt[g].box.center);
        if (dist < best_dist) {
          best_dist = dist;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0 && best_dist <= threshold) {
        taken[static_cast<std::size_t>(best)] = true;
        matched[i] = best;
      }
    }
    out.push_back(std::move(matched));
  }
  return out;
}

PrCurve precision_recall(const std::vector<bool>& ranked_tp, int num_gt) {
  PrCurve c;
  c.precision.reserve(ranked_tp.size());
  c.recall.reserve(ranked_tp.size());
  int tp = 0;
  for (std::size_t i = 0; i < ranked_tp.size(); ++i) {
    tp += ranked_tp[i] ? 1 : 0;
    c.precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    c.recall.push_back(num_gt > 0 ? static_cast<double>(tp) / num_gt : 0.0);
  }
  return c;
}

double average_precision(const PrCurve& curve) {
  constexpr int kPoints = 101;
  const int first = static_cast<int>(std::lround(100.0 * kMinRecall)) + 1;
  double acc = 0.0;
  std::size_t at = 0;
  for (int i = first; i < kPoints; ++i) {
    const double r = i / 100.0;
    while (at < curve.recall.size() && curve.recall[at] < r - 1e-12) ++at;
    const double p = at < curve.recall.size() ? curve.precision[at] : 0.0;
    acc += std::max(p - kMinPrecision, 0.0);
  }
  return acc / (kPoints - first) / (1.0 - kMinPrecision);
}

std::span<const DetectionRecord> EvalAccumulator::add(std::span<const Detection> detections,
                                                      std::span<const GroundTruthBox> gt) {
  const int scene = static_cast<int>(gt_.size());
  gt_.emplace_back(gt.begin(), gt.end());
  const auto matches = match_detections(detections, gt, kDistanceThresholds);
  const std::size_t tp_index = static_cast<std::size_t>(
      std::find(kDistanceThresholds.begin(), kDistanceThresholds.end(), kTpErrorThreshold) -
      kDistanceThresholds.begin());
  const std::size_t begin = records_.size();
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const Detection& d = detections[i];
    DetectionRecord r;
    r.scene = scene;
    r.box = d.box;
    r.class_id = d.class_id;
    r.score = d.score;
    for (std::size_t t = 0; t < kDistanceThresholds.size(); ++t) r.matched_gt[t] = matches[t][i];
    r.fq_length = bev_distance(d.first_anchor, d.box.center);
    r.lq_length = bev_distance(d.latest_anchor, d.box.center);
    if (r.matched_gt[tp_index] >= 0) {
      r.location_error =
          bev_distance(d.box.center, gt[static_cast<std::size_t>(r.matched_gt[tp_index])].box.center);
    }
    records_.push_back(r);
  }
  return std::span<const DetectionRecord>(records_).subspan(begin);
}

MetricsReport compute_metrics(const EvalAccumulator& acc) {
  MetricsReport rep;
  const auto& recs = acc.records();
  rep.detections = static_cast<int>(recs.size());

  std::set<int> classes;
  std::vector<int> gt_per_class;
  for (const auto& scene : acc.ground_truth()) {
    for (const auto& g : scene) {
      classes.insert(g.class_id);
      if (g.class_id >= static_cast<int>(gt_per_class.size())) gt_per_class.resize(g.class_id + 1, 0);
      ++gt_per_class[static_cast<std::size_t>(g.class_id)];
      ++rep.ground_truth;
    }
  }

  std::vector<std::size_t> order(recs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return recs[a].score > recs[b].score; });

  for (std::size_t t = 0; t < kDistanceThresholds.size(); ++t) {
    double ap_sum = 0.0;
    for (int cls : classes) {
      std::vector<bool> ranked;
      for (std::size_t i : order) {
        if (recs[i].class_id == cls) ranked.push_back(recs[i].true_positive(t));
      }
      const PrCurve curve = precision_recall(ranked, gt_per_class[static_cast<std::size_t>(cls)]);
      ap_sum += average_precision(curve);
      if (classes.size() == 1) rep.curves[t] = curve;
    }
    rep.ap_per_threshold[t] = classes.empty() ? 0.0 : ap_sum / static_cast<double>(classes.size());
  }
  rep.ap = std::accumulate(rep.ap_per_threshold.begin(), rep.ap_per_threshold.end(), 0.0) /
           static_cast<double>(kDistanceThresholds.size());

  const std::size_t tp_index = static_cast<std::size_t>(
      std::find(kDistanceThresholds.begin(), kDistanceThresholds.end(), kTpErrorThreshold) -
      kDistanceThresholds.begin());
  double ate = 0.0, ase = 0.0, aoe = 0.0;
  for (const auto& r : recs) {
    if (!r.true_positive(tp_index)) continue;
    const Box& g = acc.ground_truth()[static_cast<std::size_t>(r.scene)]
                       [static_cast<std::size_t>(r.matched_gt[tp_index])].box;
    ate += bev_distance(r.box.center, g.center);
    ase += 1.0 - aligned_iou(r.box, g);
    aoe += yaw_difference(r.box.yaw, g.yaw);
    ++rep.true_positives;
  }
  if (rep.true_positives > 0) {
    rep.ate = ate / rep.true_positives;
    rep.ase = ase / rep.true_positives;
    rep.aoe = aoe / rep.true_positives;
  } else {
    rep.ate = kTpErrorThreshold;
    rep.ase = 1.0;
    rep.aoe = 1.0;
  }
  return rep;
}

std::vector<Detection> nms(std::span<const Detection> detections, double min_overlap) {
  std::vector<bool> removed(detections.size(), false);
  std::vector<Detection> kept;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (removed[i]) continue;
    kept.push_back(detections[i]);
    for (std::size_t j = i + 1; j < detections.size(); ++j) {
      if (removed[j] || detections[j].class_id != detections[i].class_id) continue;
      if (oriented_bev_iou(detections[i].box, detections[j].box) > min_overlap) removed[j] = true;
    }
  }
  return kept;
}

}  // namespace lpcdet
