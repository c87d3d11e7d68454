#pragma once

#include "lpcdet/autograd.hpp"
#include "lpcdet/decoder.hpp"
#include "lpcdet/matching.hpp"
#include "lpcdet/scene.hpp"

#include <span>
#include <vector>

namespace lpcdet {

struct CostWeights {
  double regression = 1.0;
  double classification = 1.0;
};

struct LossWeights {
  double regression = 1.0;
  double classification = 1.0;
  double no_object = 0.1;  // cross-entropy weight of unmatched queries
};

/// (x, y, z, w, l, h, sin yaw, cos yaw, vx, vy) of a ground-truth box.
Eigen::Matrix<double, 1, kBoxOutputs> target_vector(const GroundTruthBox& gt);

/// cost(g, q) = w_reg * |abs_box(q) - target(g)|_1 + w_cls * (1 - p_q(class of g)).
/// abs_boxes: M x 10 in scene coordinates; logits: M x (C+1).
Eigen::MatrixXd build_cost_matrix(std::span<const GroundTruthBox> gt, const ad::Matrix& abs_boxes,
                                  const ad::Matrix& logits, const CostWeights& weights);

struct LayerLoss {
  double regression = 0.0;      // already multiplied by LossWeights::regression
  double classification = 0.0;  // already multiplied by LossWeights::classification
};

/// layers[0] is the auxiliary estimate on Y_0, layers[k+1] decoder layer k.
/// total is the sum of every component.
struct LossBreakdown {
  std::vector<LayerLoss> layers;
  double total = 0.0;
  double regression() const;
  double classification() const;
};

struct EstimateLoss {
  ad::Var regression;      // weighted, normalised by max(G, 1)
  ad::Var classification;  // weighted mean cross-entropy
};

/// Loss of one head estimate under a fixed matching: L1 on matched boxes and
/// cross-entropy to the gt class, 'no-object' (down-weighted) elsewhere.
EstimateLoss estimate_loss(std::span<const GroundTruthBox> gt, const HeadEstimate& estimate,
                           const MatchResult& match, const LossWeights& weights, int no_object_class);

struct SetLoss {
  ad::Var total;
  LossBreakdown breakdown;
  std::vector<MatchResult> matches;  // one per estimate, same indexing as breakdown
};

/// Matches every estimate independently and sums all auxiliary terms.
SetLoss set_loss(std::span<const GroundTruthBox> gt, const DecoderOutput& out,
                 const LossWeights& weights, const CostWeights& cost, int no_object_class);

}  // namespace lpcdet
