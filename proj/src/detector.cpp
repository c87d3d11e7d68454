#include "lpcdet/detector.hpp"

#include <algorithm>
#include <stdexcept>

namespace lpcdet {

void DetectorConfig::validate() const {
  grid.validate();
  decoder.validate();
  if (grid.feature_dim != decoder.d) throw std::invalid_argument("grid feature_dim must equal d");
  if (!(fourier_sigma > 0.0) || !(z_span > 0.0)) {
    throw std::invalid_argument("fourier_sigma and z_span must be positive");
  }
  if (fps_start < 0) throw std::invalid_argument("fps_start must be >= 0");
}

namespace {

DecoderParams make_decoder(const DetectorConfig& c, nn::Rng& rng) {
  c.validate();
  const Point3 origin{c.grid.extent.x_min, c.grid.extent.y_min, c.z_min};
  const Point3 span{c.grid.extent.width(), c.grid.extent.depth(), c.z_span};
  FourierBasis basis = FourierBasis::random(c.decoder.d, c.fourier_sigma, origin, span, rng);
  return DecoderParams(c.decoder, std::move(basis), rng);
}

nn::Rng seeded(std::uint64_t s) {
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32), 0x5eedu};
  return nn::Rng(seq);
}

}  // namespace

Detector::Detector(const DetectorConfig& c) : config(c) {
  nn::Rng rng = seeded(c.init_seed);
  decoder = make_decoder(c, rng);
  backbone = Backbone(c.grid, rng);
}

nn::ParamList Detector::parameters() const {
  nn::ParamList out = detector_parameters();
  decoder.collect_aam(out, "decoder");
  return out;
}

nn::ParamList Detector::detector_parameters() const {
  nn::ParamList out;
  backbone.collect(out, "backbone");
  decoder.collect_detector(out, "decoder");
  return out;
}

nn::ParamList Detector::aam_parameters() const {
  nn::ParamList out;
  decoder.collect_aam(out, "decoder");
  return out;
}

ScenePrep prepare_scene(const Scene& scene, const DetectorConfig& config) {
  if (scene.points.empty()) throw std::invalid_argument("prepare_scene: scene has no points");
  ScenePrep prep;
  prep.pillars = pillarize(scene, config.grid);
  const int start = std::min<int>(config.fps_start, static_cast<int>(scene.points.size()) - 1);
  prep.anchors = farthest_point_sample(scene.points, config.decoder.queries, start);
  return prep;
}

ForwardResult forward(const Detector& detector, const ScenePrep& prep,
                      const DecoderOptions& options) {
  ForwardResult r;
  r.tokens = backbone_forward(prep.pillars, detector.backbone);
  r.decoder = decoder_forward(r.tokens, prep.anchors, detector.decoder, detector.config.decoder,
                              options);
  return r;
}

std::vector<Detection> detections_from(const DecoderOutput& out, const DecoderConfig& cfg) {
  const HeadEstimate& est = out.final_estimate();
  const auto& first = out.anchor_history.front();
  std::vector<Detection> dets;
  for (Eigen::Index q = 0; q < est.box.rows(); ++q) {
    const BoxParams p = est.params(q);
    const int cls = p.argmax_class();
    if (cls == cfg.no_object_class()) continue;
    Detection d;
    d.latest_anchor = est.anchor(q);
    d.first_anchor = {first(q, 0), first(q, 1), first(q, 2)};
    d.box = p.absolute(d.latest_anchor);
    d.class_id = cls;
    d.score = p.score();
    d.query = static_cast<int>(q);
    dets.push_back(d);
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return dets;
}

std::vector<Detection> detect(const Detector& detector, const Scene& scene) {
  ad::NoGradGuard guard;
  const ScenePrep prep = prepare_scene(scene, detector.config);
  const ForwardResult r = forward(detector, prep);
  return detections_from(r.decoder, detector.config.decoder);
}

}  // namespace lpcdet
