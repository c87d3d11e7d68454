#pragma once

#include "lpcdet/backbone.hpp"
#include "lpcdet/decoder.hpp"
#include "lpcdet/nn.hpp"
#include "lpcdet/sampling.hpp"
#include "lpcdet/scene.hpp"

#include <cstdint>
#include <vector>

namespace lpcdet {

struct DetectorConfig {
  GridConfig grid;
  DecoderConfig decoder;
  double fourier_sigma = 1.0;
  double z_min = -1.0;   // anchor z normalisation range
  double z_span = 4.0;
  int fps_start = 0;
  std::uint64_t init_seed = 0;

  void validate() const;
};

/// All learnable state: pillar backbone plus decoder (anchor encoder, K
/// layers, shared estimation head, anchor alignment module).
class Detector {
 public:
  explicit Detector(const DetectorConfig& config);

  DetectorConfig config;
  Backbone backbone;
  DecoderParams decoder;

  nn::ParamList parameters() const;           // everything
  nn::ParamList detector_parameters() const;  // everything except the AAM
  nn::ParamList aam_parameters() const;
};

/// Parameter-independent per-scene inputs; cacheable across epochs.
struct ScenePrep {
  PillarTensor pillars;
  AnchorSet anchors;
};

ScenePrep prepare_scene(const Scene& scene, const DetectorConfig& config);

struct ForwardResult {
  TokenSequence tokens;
  DecoderOutput decoder;
};

ForwardResult forward(const Detector& detector, const ScenePrep& prep,
                      const DecoderOptions& options = {});

struct Detection {
  Box box;
  int class_id = 0;
  double score = 0.0;
  int query = 0;
  Point3 first_anchor;
  Point3 latest_anchor;
};

/// Detections from the final layer estimates: every query whose argmax
/// class is not 'no-object', sorted by descending score (ties by query).
std::vector<Detection> detections_from(const DecoderOutput& out, const DecoderConfig& cfg);

/// Backbone -> farthest point sampling -> decoder -> filtered boxes.
std::vector<Detection> detect(const Detector& detector, const Scene& scene);

}  // namespace lpcdet
