#include "lpcdet/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace lpcdet {

Eigen::Matrix<double, 1, kBoxOutputs> target_vector(const GroundTruthBox& gt) {
  const Box& b = gt.box;
  Eigen::Matrix<double, 1, kBoxOutputs> t;
  t << b.center.x, b.center.y, b.center.z, b.width, b.length, b.height, std::sin(b.yaw),
      std::cos(b.yaw), b.vx, b.vy;
  return t;
}

Eigen::MatrixXd build_cost_matrix(std::span<const GroundTruthBox> gt, const ad::Matrix& abs_boxes,
                                  const ad::Matrix& logits, const CostWeights& weights) {
  if (abs_boxes.cols() != kBoxOutputs || logits.rows() != abs_boxes.rows()) {
    throw std::invalid_argument("build_cost_matrix: shape mismatch");
  }
  const ad::Matrix probs = ad::softmax_rows(logits);
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(gt.size()), abs_boxes.rows());
  for (std::size_t g = 0; g < gt.size(); ++g) {
    const auto t = target_vector(gt[g]);
    const int cls = gt[g].class_id;
    if (cls < 0 || cls >= logits.cols() - 1) throw std::invalid_argument("gt class out of range");
    for (Eigen::Index q = 0; q < abs_boxes.rows(); ++q) {
      const double l1 = (abs_boxes.row(q) - t).cwiseAbs().sum();
      cost(static_cast<Eigen::Index>(g), q) =
          weights.regression * l1 + weights.classification * (1.0 - probs(q, cls));
    }
  }
  return cost;
}

double LossBreakdown::regression() const {
  double s = 0.0;
  for (const auto& l : layers) s += l.regression;
  return s;
}

double LossBreakdown::classification() const {
  double s = 0.0;
  for (const auto& l : layers) s += l.classification;
  return s;
}

EstimateLoss estimate_loss(std::span<const GroundTruthBox> gt, const HeadEstimate& estimate,
                           const MatchResult& match, const LossWeights& weights,
                           int no_object_class) {
  const auto m = static_cast<int>(estimate.box.rows());
  std::vector<int> targets(static_cast<std::size_t>(m), no_object_class);
  std::vector<double> w(static_cast<std::size_t>(m), weights.no_object);
  for (const auto& [g, q] : match.pairs) {
    targets[static_cast<std::size_t>(q)] = gt[static_cast<std::size_t>(g)].class_id;
    w[static_cast<std::size_t>(q)] = 1.0;
  }
  double wsum = 0.0;
  for (double x : w) wsum += x;

  EstimateLoss out;
  ad::Var ce = ad::cross_entropy(estimate.logits, targets, w);
  out.classification = ad::scale(ce, wsum > 0.0 ? weights.classification / wsum : 0.0);

  if (match.pairs.empty()) {
    out.regression = ad::constant(ad::Matrix::Zero(1, 1));
    return out;
  }
  std::vector<int> rows;
  ad::Matrix target(static_cast<Eigen::Index>(match.pairs.size()), kBoxOutputs);
  for (std::size_t i = 0; i < match.pairs.size(); ++i) {
    rows.push_back(match.pairs[i].second);
    target.row(static_cast<Eigen::Index>(i)) =
        target_vector(gt[static_cast<std::size_t>(match.pairs[i].first)]);
  }
  ad::Var pred = ad::gather_rows(estimate.absolute_vector(), rows);
  out.regression = ad::scale(ad::l1_loss(pred, target),
                             weights.regression / static_cast<double>(match.pairs.size()));
  return out;
}

SetLoss set_loss(std::span<const GroundTruthBox> gt, const DecoderOutput& out,
                 const LossWeights& weights, const CostWeights& cost, int no_object_class) {
  std::vector<const HeadEstimate*> estimates{&out.initial};
  for (const auto& l : out.layers) estimates.push_back(&l.estimate);

  SetLoss result;
  std::vector<ad::Var> terms;
  for (const HeadEstimate* e : estimates) {
    const ad::Matrix abs = e->absolute_vector().value();
    const Eigen::MatrixXd c = build_cost_matrix(gt, abs, e->logits.value(), cost);
    MatchResult match = hungarian_match(c);
    EstimateLoss l = estimate_loss(gt, *e, match, weights, no_object_class);
    result.breakdown.layers.push_back({l.regression.scalar(), l.classification.scalar()});
    terms.push_back(l.regression);
    terms.push_back(l.classification);
    result.matches.push_back(std::move(match));
  }
  ad::Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  result.total = total;
  result.breakdown.total = total.scalar();
  return result;
}

}  // namespace lpcdet
