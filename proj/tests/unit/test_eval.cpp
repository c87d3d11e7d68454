#include "lpcdet/metrics.hpp"
#include "lpcdet/travel.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <numbers>
#include <random>

using namespace lpcdet;

namespace {

Box box_at(double x, double y, double yaw = 0.0, double w = 1.9, double l = 4.5, double h = 1.6) {
  Box b;
  b.center = {x, y, 0.5 * h};
  b.width = w;
  b.length = l;
  b.height = h;
  b.yaw = yaw;
  return b;
}

Detection det_at(const Box& b, double score, int cls = 0) {
  Detection d;
  d.box = b;
  d.score = score;
  d.class_id = cls;
  return d;
}

GroundTruthBox gt_at(const Box& b, int cls = 0) { return {b, cls}; }

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(-3.0, 3.0), s(0.5, 4.0), yaw(-3.1, 3.1);
  return box_at(c(rng), c(rng), yaw(rng), s(rng), s(rng), s(rng));
}

Box rigid(const Box& b, double dx, double dy, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Box out = b;
  out.center.x = c * b.center.x - s * b.center.y + dx;
  out.center.y = s * b.center.x + c * b.center.y + dy;
  out.yaw = wrap_angle(b.yaw + theta);
  return out;
}

}  // namespace

TEST_CASE("oriented IoU basic cases") {
  const Box a = box_at(0, 0);
  CHECK(oriented_bev_iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(oriented_bev_iou(a, box_at(10, 0)) == 0.0);
  Box flat = a;
  flat.width = 0.0;
  CHECK(oriented_bev_iou(flat, a) == 0.0);

  const Box sq = box_at(0, 0, 0.0, 1, 1, 1);
  const Box shifted = box_at(0.5, 0, 0.0, 1, 1, 1);
  CHECK(oriented_bev_iou(sq, shifted) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("oriented IoU of a 45 degree square matches the analytic value and sampling") {
  const Box a = box_at(0, 0, 0.0, 1, 1, 1);
  const Box b = box_at(0, 0, std::numbers::pi / 4, 1, 1, 1);
  const double inter = 2.0 * (std::sqrt(2.0) - 1.0);
  const double want = inter / (2.0 - inter);
  CHECK(oriented_bev_iou(a, b) == doctest::Approx(want).epsilon(1e-9));
  CHECK(std::abs(oriented_bev_iou(a, b) - oracle::monte_carlo_iou(a, b, 1000000, 1)) < 0.003);
}

TEST_CASE("oriented IoU agrees with a sampling oracle on random pairs") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    const Box a = random_box(rng), b = random_box(rng);
    CHECK(std::abs(oriented_bev_iou(a, b) - oracle::monte_carlo_iou(a, b, 200000, 10 + t)) < 0.006);
  }
}

TEST_CASE("oriented IoU is symmetric and invariant under rigid motion") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const Box a = random_box(rng), b = random_box(rng);
    const double iou = oriented_bev_iou(a, b);
    CHECK(iou >= 0.0);
    CHECK(iou <= 1.0);
    CHECK(std::abs(iou - oriented_bev_iou(b, a)) < 1e-9);
    CHECK(std::abs(iou - oriented_bev_iou(rigid(a, 3, -2, 0.7), rigid(b, 3, -2, 0.7))) < 1e-9);
  }
}

TEST_CASE("nms on the one-third overlap example") {
  const std::vector<Detection> dets{det_at(box_at(0, 0, 0, 1, 1, 1), 0.9),
                                    det_at(box_at(0.5, 0, 0, 1, 1, 1), 0.8)};
  CHECK(nms(dets, 0.1).size() == 1);
  CHECK(nms(dets, 0.2).size() == 1);
  CHECK(nms(dets, 0.5).size() == 2);
  const std::vector<Detection> same{det_at(box_at(1, 1), 0.9), det_at(box_at(1, 1), 0.8)};
  const auto kept = nms(same, 0.1);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);
}

TEST_CASE("nms keeps disjoint boxes and other classes") {
  const std::vector<Detection> dets{det_at(box_at(0, 0), 0.9), det_at(box_at(10, 0), 0.8),
                                    det_at(box_at(0, 0), 0.7, 1)};
  CHECK(nms(dets, 0.1).size() == 3);
}

TEST_CASE("nms output is a non-overlapping subset") {
  std::mt19937_64 rng(4);
  std::vector<Detection> dets;
  for (int i = 0; i < 40; ++i) dets.push_back(det_at(random_box(rng), 1.0 - 0.01 * i));
  for (double thr : {0.1, 0.2, 0.5}) {
    const auto kept = nms(dets, thr);
    std::size_t cursor = 0;
    for (const auto& k : kept) {
      while (cursor < dets.size() && dets[cursor].score != k.score) ++cursor;
      CHECK(cursor < dets.size());
    }
    for (std::size_t i = 0; i < kept.size(); ++i) {
      for (std::size_t j = i + 1; j < kept.size(); ++j) CHECK(oriented_bev_iou(kept[i].box, kept[j].box) <= thr);
    }
  }
}

TEST_CASE("matching worked examples") {
  const std::vector<GroundTruthBox> gt{gt_at(box_at(0, 0))};
  const std::vector<Detection> on{det_at(box_at(0, 0), 0.9)};
  CHECK(match_detections(on, gt, kDistanceThresholds) == std::vector<std::vector<int>>(4, {0}));

  const std::vector<Detection> two{det_at(box_at(0.1, 0), 0.9), det_at(box_at(0, 0), 0.8)};
  for (const auto& m : match_detections(two, gt, kDistanceThresholds)) CHECK(m == std::vector<int>{0, -1});

  const std::vector<Detection> far{det_at(box_at(3, 0), 0.9)};
  const auto m = match_detections(far, gt, kDistanceThresholds);
  CHECK(m[0][0] == -1);
  CHECK(m[1][0] == -1);
  CHECK(m[2][0] == -1);
  CHECK(m[3][0] == 0);

  const std::vector<Detection> wrong_class{det_at(box_at(0, 0), 0.9, 1)};
  CHECK(match_detections(wrong_class, gt, kDistanceThresholds)[3][0] == -1);

  const std::vector<GroundTruthBox> pair{gt_at(box_at(1.5, 0)), gt_at(box_at(0.5, 0))};
  const std::vector<Detection> mid{det_at(box_at(0, 0), 0.9)};
  CHECK(match_detections(mid, pair, kDistanceThresholds)[3][0] == 1);
}

TEST_CASE("perfect detections score AP 1 with zero errors") {
  EvalAccumulator acc;
  for (int s = 0; s < 3; ++s) {
    std::vector<GroundTruthBox> gt{gt_at(box_at(s, 0, 0.3)), gt_at(box_at(s + 10, 5, -1.0))};
    std::vector<Detection> dets{det_at(gt[0].box, 0.9), det_at(gt[1].box, 0.8)};
    acc.add(dets, gt);
  }
  const auto m = compute_metrics(acc);
  CHECK(m.ap == doctest::Approx(1.0));
  CHECK(m.ate == doctest::Approx(0.0));
  CHECK(m.ase == doctest::Approx(0.0));
  CHECK(m.aoe == doctest::Approx(0.0));
  CHECK(m.true_positives == 6);
  CHECK(m.ground_truth == 6);
}

TEST_CASE("yaw and size errors enter AOE and ASE") {
  EvalAccumulator acc;
  const Box g = box_at(0, 0, 0.2);
  Box d = g;
  d.yaw = g.yaw + std::numbers::pi / 4;
  acc.add(std::vector<Detection>{det_at(d, 0.9)}, std::vector<GroundTruthBox>{gt_at(g)});
  auto m = compute_metrics(acc);
  CHECK(m.aoe == doctest::Approx(std::numbers::pi / 4));
  CHECK(m.ase == doctest::Approx(0.0));

  EvalAccumulator acc2;
  Box big = g;
  big.width *= 2.0;
  big.center.x += 0.3;
  acc2.add(std::vector<Detection>{det_at(big, 0.9)}, std::vector<GroundTruthBox>{gt_at(g)});
  m = compute_metrics(acc2);
  CHECK(m.ase == doctest::Approx(0.5));
  CHECK(m.ate == doctest::Approx(0.3));
}

TEST_CASE("without true positives the errors take their worst values") {
  EvalAccumulator acc;
  acc.add(std::vector<Detection>{det_at(box_at(20, 20), 0.9)}, std::vector<GroundTruthBox>{gt_at(box_at(0, 0))});
  const auto m = compute_metrics(acc);
  CHECK(m.ap == 0.0);
  CHECK(m.ate == kTpErrorThreshold);
  CHECK(m.ase == 1.0);
  CHECK(m.aoe == 1.0);
}

TEST_CASE("precision recall points and AP on a ranked list") {
  const auto curve = precision_recall({true, false, true, false}, 4);
  CHECK(curve.precision == std::vector<double>{1.0, 0.5, 2.0 / 3.0, 0.5});
  CHECK(curve.recall == std::vector<double>{0.25, 0.25, 0.5, 0.5});
  double want = 0.0;
  int points = 0;
  for (int i = 0; i <= 100; ++i) {
    const double r = i / 100.0;
    if (r <= kMinRecall + 1e-12) continue;
    const double p = r <= 0.25 ? 1.0 : (r <= 0.5 ? 2.0 / 3.0 : 0.0);
    want += std::max(p - kMinPrecision, 0.0);
    ++points;
  }
  CHECK(points == 90);
  want /= points * (1.0 - kMinPrecision);
  CHECK(average_precision(curve) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("a lowest-scoring false positive never raises AP") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0), n(0.0, 1.5);
  for (int t = 0; t < 20; ++t) {
    std::vector<GroundTruthBox> gt;
    std::vector<Detection> dets;
    for (int i = 0; i < 6; ++i) {
      gt.push_back(gt_at(box_at(u(rng), u(rng))));
      const auto& c = gt.back().box.center;
      dets.push_back(det_at(box_at(c.x + n(rng), c.y + n(rng)), 0.9 - 0.1 * i));
    }
    EvalAccumulator a;
    a.add(dets, gt);
    dets.push_back(det_at(box_at(40, 40), 0.01));
    EvalAccumulator b;
    b.add(dets, gt);
    CHECK(compute_metrics(b).ap <= compute_metrics(a).ap + 1e-15);
  }
}

TEST_CASE("quartiles equal a sort oracle") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::vector<double> v(1000);
  for (double& x : v) x = u(rng);
  const auto q = quartiles(v);
  REQUIRE(q.has_value());
  CHECK(q->median == oracle::sort_quantile(v, 0.5));
  CHECK(q->q25 == oracle::sort_quantile(v, 0.25));
  CHECK(q->q75 == oracle::sort_quantile(v, 0.75));
  CHECK_FALSE(quartiles({}).has_value());
}

TEST_CASE("travel statistics of a single record") {
  DetectionRecord r;
  r.location_error = 0.4;
  r.fq_length = 2.0;
  r.lq_length = 0.5;
  const std::vector<DetectionRecord> one{r};
  const auto s = travel_length_stats(one, 4.0);
  REQUIRE(s.bins.size() == 1);
  CHECK(s.bins[0].lo == 0.0);
  CHECK(s.bins[0].hi == 4.0);
  REQUIRE(s.bins[0].fq_error.has_value());
  CHECK(s.bins[0].fq_error->median == 0.4);
  CHECK(s.records == 1);
}

TEST_CASE("travel statistics use only true positives and bin by length") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> len(0.0, 20.0), err(0.0, 2.0);
  std::vector<DetectionRecord> recs(1000);
  for (auto& r : recs) {
    r.fq_length = len(rng);
    r.lq_length = 0.0;
    r.location_error = err(rng);
  }
  recs[0].location_error = -1.0;
  const auto s = travel_length_stats(recs, 4.0);
  CHECK(s.records == 999);
  CHECK(s.lq_first_bin_fraction == 1.0);
  CHECK(s.median_lq == 0.0);
  int total = 0;
  for (const auto& b : s.bins) {
    std::vector<double> errors;
    for (std::size_t i = 1; i < recs.size(); ++i) {
      if (recs[i].fq_length >= b.lo && recs[i].fq_length < b.hi) errors.push_back(recs[i].location_error);
    }
    CHECK(b.fq_count == static_cast<int>(errors.size()));
    REQUIRE(b.fq_error.has_value());
    CHECK(b.fq_error->median == oracle::sort_quantile(errors, 0.5));
    CHECK(b.fq_error->q25 == oracle::sort_quantile(errors, 0.25));
    total += b.fq_count;
    CHECK(b.lq_count == (b.lo == 0.0 ? 999 : 0));
  }
  CHECK(total == 999);
  std::vector<double> fq;
  for (std::size_t i = 1; i < recs.size(); ++i) fq.push_back(recs[i].fq_length);
  CHECK(s.median_fq == oracle::sort_quantile(fq, 0.5));
}
