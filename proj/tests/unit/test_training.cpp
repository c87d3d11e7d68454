#include "lpcdet/loss.hpp"
#include "lpcdet/matching.hpp"
#include "lpcdet/training.hpp"

#include "../support/micro.hpp"
#include "../support/oracles.hpp"

#include <doctest.h>

#include <random>

using namespace lpcdet;
using ad::Matrix;
using ad::Var;

namespace {

Eigen::MatrixXd random_cost(int g, int m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  Eigen::MatrixXd c(g, m);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
  return c;
}

double assignment_cost(const Eigen::MatrixXd& c, const MatchResult& r) {
  double s = 0.0;
  for (const auto& [g, q] : r.pairs) s += c(g, q);
  return s;
}

std::vector<GroundTruthBox> random_gt(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-10.0, 10.0), s(1.0, 4.0), yaw(-3.0, 3.0);
  std::vector<GroundTruthBox> out;
  for (int i = 0; i < n; ++i) {
    GroundTruthBox g;
    g.box.center = {u(rng), u(rng), 0.8};
    g.box.width = s(rng);
    g.box.length = s(rng);
    g.box.height = s(rng);
    g.box.yaw = yaw(rng);
    out.push_back(g);
  }
  return out;
}

HeadEstimate random_estimate(int m, std::uint64_t seed) {
  nn::Rng rng(seed);
  return {ad::parameter(nn::normal_matrix(m, kBoxOutputs, 2.0, rng)),
          ad::parameter(nn::normal_matrix(m, 2, 1.0, rng)),
          ad::constant(nn::normal_matrix(m, 3, 5.0, rng))};
}

DecoderOutput random_output(int m, int layers, std::uint64_t seed) {
  DecoderOutput out;
  out.initial = random_estimate(m, seed);
  out.anchor_history.push_back(out.initial.anchors.value());
  for (int k = 0; k < layers; ++k) {
    LayerOutput lo;
    lo.estimate = random_estimate(m, seed + 1 + static_cast<std::uint64_t>(k));
    out.layers.push_back(lo);
  }
  return out;
}

HeadEstimate permuted(const HeadEstimate& e, const std::vector<int>& perm) {
  return {ad::constant(ad::gather_rows(e.box, perm).value()),
          ad::constant(ad::gather_rows(e.logits, perm).value()),
          ad::constant(ad::gather_rows(e.anchors, perm).value())};
}

TrainConfig quick_config(int epochs, double lr) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.learning_rate = lr;
  cfg.lr_decay_period = 0;
  cfg.batch_size = 4;
  cfg.grad_clip = 1.0;
  return cfg;
}

}  // namespace

TEST_CASE("hungarian matching worked examples") {
  Eigen::MatrixXd a(2, 2);
  a << 1, 2, 2, 1;
  auto r = hungarian_match(a);
  CHECK(r.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
  CHECK(r.total_cost == 2.0);
  CHECK(r.unmatched_queries.empty());

  Eigen::MatrixXd b(2, 2);
  b << 4, 1, 2, 3;
  r = hungarian_match(b);
  CHECK(r.pairs == std::vector<std::pair<int, int>>{{0, 1}, {1, 0}});
  CHECK(r.total_cost == 3.0);

  Eigen::MatrixXd row(1, 5);
  row << 3, 2, 0.5, 7, 0.5;
  r = hungarian_match(row);
  CHECK(r.pairs == std::vector<std::pair<int, int>>{{0, 2}});
  CHECK(r.unmatched_queries == std::vector<int>{0, 1, 3, 4});
  CHECK(r.query_of_gt() == std::vector<int>{2});
  CHECK(r.gt_of_query(5) == std::vector<int>{-1, -1, 0, -1, -1});
}

TEST_CASE("ties resolve to the lexicographically first assignment") {
  const auto r = hungarian_match(Eigen::MatrixXd::Zero(2, 3));
  CHECK(r.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
  CHECK(r.unmatched_queries == std::vector<int>{2});
}

TEST_CASE("hungarian matching equals brute force on small instances") {
  std::mt19937_64 rng(1);
  for (int g = 1; g <= 7; ++g) {
    for (int m = g; m <= std::min(g + 2, 9); ++m) {
      for (int t = 0; t < 10; ++t) {
        const auto c = random_cost(g, m, rng);
        const auto r = hungarian_match(c);
        CHECK(r.pairs.size() == static_cast<std::size_t>(g));
        CHECK(r.total_cost == doctest::Approx(oracle::brute_force_assignment(c)).epsilon(1e-12));
        CHECK(assignment_cost(c, r) == doctest::Approx(r.total_cost).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("an empty ground truth set leaves every query unmatched") {
  const auto r = hungarian_match(Eigen::MatrixXd(0, 4));
  CHECK(r.pairs.empty());
  CHECK(r.unmatched_queries == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("invalid cost matrices are rejected") {
  CHECK_THROWS_AS(hungarian_match(Eigen::MatrixXd::Zero(3, 2)), std::invalid_argument);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(2, 2);
  c(1, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(hungarian_match(c), std::invalid_argument);
}

TEST_CASE("cost is zero for an exact confident prediction") {
  const auto gt = random_gt(1, 2);
  Matrix boxes = target_vector(gt[0]);
  Matrix logits(1, 2);
  logits << 60.0, 0.0;
  const auto c = build_cost_matrix(gt, boxes, logits, {});
  CHECK(c(0, 0) < 1e-12);

  Matrix two = boxes.replicate(2, 1);
  two(0, 0) += 1.0;
  two(1, 0) += 1.0;
  const auto d = build_cost_matrix(gt, two, logits.replicate(2, 1), {2.0, 3.0});
  CHECK(d(0, 0) == d(0, 1));
  CHECK(d(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("matching on the cost matrix is optimal for a random 3x5 case") {
  const auto gt = random_gt(3, 3);
  const auto e = random_estimate(5, 4);
  const auto c = build_cost_matrix(gt, e.absolute_vector().value(), e.logits.value(), {});
  CHECK(hungarian_match(c).total_cost == doctest::Approx(oracle::brute_force_assignment(c)).epsilon(1e-12));
}

TEST_CASE("perfect predictions have vanishing loss") {
  const auto gt = random_gt(2, 5);
  DecoderOutput out;
  Matrix anchors = nn::normal_matrix(4, 3, 3.0, *std::make_unique<nn::Rng>(6));
  Matrix box = Matrix::Zero(4, kBoxOutputs);
  Matrix logits(4, 2);
  logits.col(0).setConstant(-60.0);
  logits.col(1).setConstant(60.0);
  for (int g = 0; g < 2; ++g) {
    box.row(g) = target_vector(gt[static_cast<std::size_t>(g)]);
    box.row(g).leftCols(3) -= anchors.row(g);
    logits.row(g) << 60.0, -60.0;
  }
  out.initial = {ad::constant(box), ad::constant(logits), ad::constant(anchors)};
  out.layers.resize(2);
  for (auto& lo : out.layers) lo.estimate = out.initial;
  const auto loss = set_loss(gt, out, {}, {}, 1);
  CHECK(loss.breakdown.layers.size() == 3);
  CHECK(loss.breakdown.regression() < 1e-12);
  CHECK(loss.breakdown.classification() < 1e-12);
}

TEST_CASE("without ground truth the loss is no-object cross-entropy") {
  const auto out = random_output(5, 2, 7);
  const auto loss = set_loss({}, out, {}, {}, 1);
  double want = 0.0;
  std::vector<const HeadEstimate*> es{&out.initial, &out.layers[0].estimate, &out.layers[1].estimate};
  for (const auto* e : es) {
    const Matrix& l = e->logits.value();
    double ce = 0.0;
    for (Eigen::Index q = 0; q < l.rows(); ++q) {
      const double mx = l.row(q).maxCoeff();
      const double lse = mx + std::log((l.row(q).array() - mx).exp().sum());
      ce += lse - l(q, 1);
    }
    want += ce / static_cast<double>(l.rows());
  }
  CHECK(loss.breakdown.regression() == 0.0);
  CHECK(loss.breakdown.total == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("doubling the regression weight doubles only regression terms") {
  const auto gt = random_gt(3, 8);
  const auto out = random_output(6, 3, 9);
  LossWeights w;
  const auto a = set_loss(gt, out, w, {}, 1);
  w.regression = 2.0;
  const auto b = set_loss(gt, out, w, {}, 1);
  for (std::size_t k = 0; k < a.breakdown.layers.size(); ++k) {
    CHECK(b.breakdown.layers[k].regression == 2.0 * a.breakdown.layers[k].regression);
    CHECK(b.breakdown.layers[k].classification == a.breakdown.layers[k].classification);
  }
}

TEST_CASE("loss is invariant to ground-truth and query order") {
  const auto gt = random_gt(4, 10);
  const auto out = random_output(7, 2, 11);
  const double base = set_loss(gt, out, {}, {}, 1).breakdown.total;

  auto gt_perm = gt;
  std::reverse(gt_perm.begin(), gt_perm.end());
  CHECK(std::abs(set_loss(gt_perm, out, {}, {}, 1).breakdown.total - base) < 1e-9);

  const std::vector<int> perm{3, 6, 0, 5, 1, 4, 2};
  DecoderOutput q = out;
  q.initial = permuted(out.initial, perm);
  for (std::size_t k = 0; k < q.layers.size(); ++k) q.layers[k].estimate = permuted(out.layers[k].estimate, perm);
  CHECK(std::abs(set_loss(gt, q, {}, {}, 1).breakdown.total - base) < 1e-9);
}

TEST_CASE("each estimate is matched independently") {
  const auto gt = random_gt(3, 12);
  const auto out = random_output(6, 3, 13);
  const auto before = set_loss(gt, out, {}, {}, 1);
  DecoderOutput changed = out;
  changed.layers[1].estimate = random_estimate(6, 99);
  const auto after = set_loss(gt, changed, {}, {}, 1);
  REQUIRE(before.matches.size() == 4);
  for (std::size_t k : {0u, 1u, 3u}) {
    CHECK(before.matches[k].pairs == after.matches[k].pairs);
    CHECK(before.breakdown.layers[k].regression == after.breakdown.layers[k].regression);
  }
}

TEST_CASE("loss gradients match finite differences through the whole model") {
  auto cfg = micro::detector_config(3, {1});
  Detector det(cfg);
  nn::Rng rng(4);
  det.decoder.aam.ffn.fc2.weight.mutable_value() = nn::normal_matrix(8, 8, 0.3, rng);
  const auto scenes = micro::scenes(1, 5, 2, 2);
  const auto prep = prepare_scene(scenes[0], cfg);
  auto loss = [&] { return micro::scene_loss(det, prep, scenes[0]); };
  CHECK(oracle::max_gradient_gap(loss, det.parameters()) < 1e-3);
}

TEST_CASE("learning rate schedule decays stepwise") {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.lr_decay = 0.1;
  cfg.lr_decay_period = 10;
  CHECK(cfg.learning_rate_at(0) == doctest::Approx(1e-3));
  CHECK(cfg.learning_rate_at(9) == doctest::Approx(1e-3));
  CHECK(cfg.learning_rate_at(10) == doctest::Approx(1e-4));
  CHECK(cfg.learning_rate_at(25) == doctest::Approx(1e-5));
  cfg.lr_decay_period = 0;
  CHECK(cfg.learning_rate_at(1000) == doctest::Approx(1e-3));
}

TEST_CASE("a zero learning rate leaves parameters unchanged") {
  Detector det(micro::detector_config(1));
  const auto before = nn::fingerprint(det.parameters());
  train_detector(det, micro::scenes(8, 1), quick_config(2, 0.0), 1);
  CHECK(nn::fingerprint(det.parameters()) == before);
}

TEST_CASE("training lowers the loss on single-box scenes") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Detector det(micro::detector_config(seed));
    const auto scenes = micro::scenes(50, seed, 1, 1);
    auto cfg = quick_config(15, 3e-3);
    cfg.seed = seed;
    const double initial = evaluate_loss(det, scenes, cfg).total;
    const auto result = train_detector(det, scenes, cfg, 1);
    CHECK(result.log.size() == 15);
    CHECK(evaluate_loss(det, scenes, cfg).total < initial);
    CHECK(result.log.back().loss_total < result.log.front().loss_total);
  }
}

TEST_CASE("stage two keeps the alignment module frozen") {
  Detector det(micro::detector_config(4, {1}));
  nn::Rng rng(5);
  det.decoder.aam.ffn.fc2.weight.mutable_value() = nn::normal_matrix(8, 8, 0.3, rng);
  const auto aam_before = nn::fingerprint(det.aam_parameters());
  const auto rest_before = nn::fingerprint(det.detector_parameters());
  train_detector(det, micro::scenes(8, 2), quick_config(2, 1e-3), 2);
  CHECK(nn::fingerprint(det.aam_parameters()) == aam_before);
  CHECK(nn::fingerprint(det.detector_parameters()) != rest_before);
}

TEST_CASE("training rejects inconsistent inputs") {
  Detector refined(micro::detector_config(1, {1}));
  const auto scenes = micro::scenes(4, 3);
  CHECK_THROWS_AS(train_detector(refined, scenes, quick_config(1, 1e-3), 1), std::invalid_argument);

  Detector det(micro::detector_config(1));
  const auto crowded = micro::scenes(2, 4, 4, 4);
  CHECK_THROWS_AS(train_detector(det, crowded, quick_config(1, 1e-3), 1), std::invalid_argument);

  det.decoder.head.box.bias.mutable_value()(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train_detector(det, scenes, quick_config(1, 1e-3), 1), TrainingDiverged);
}

TEST_CASE("alignment objective starts at the raw delta magnitude") {
  Detector det(micro::detector_config(6));
  const auto scenes = micro::scenes(6, 6);
  const Matrix tokens = collect_aam_tokens(det, scenes, {0});
  CHECK(tokens.rows() == 18);
  CHECK(tokens.cols() == 8);
  const auto obj = aam_objective(det, tokens);
  const auto report = evaluate_aam(det, tokens);
  CHECK(obj.other == 0.0);
  CHECK(obj.location == doctest::Approx(report.delta_before).epsilon(1e-12));
  CHECK(report.delta_after == doctest::Approx(report.delta_before).epsilon(1e-12));
  CHECK(aam_source_layers({1, 3}) == std::set<int>{0, 2});
}

TEST_CASE("alignment training shrinks location deltas and touches only the module") {
  Detector det(micro::detector_config(7));
  const auto scenes = micro::scenes(40, 7);
  const Matrix tokens = collect_aam_tokens(det, scenes, {0, 1});
  const auto rest = nn::fingerprint(det.detector_parameters());
  AamTrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 32;
  const auto result = train_aam(det, tokens, cfg);
  CHECK(result.loss_curve.size() == 60);
  CHECK(nn::fingerprint(det.detector_parameters()) == rest);
  const auto report = evaluate_aam(det, tokens);
  CHECK(report.delta_after < 0.5 * report.delta_before);
  CHECK(result.loss_curve.back() < result.loss_curve.front());
}
