#pragma once

// Micro model and scene settings shared by the tests: N = 16, M = 3, d = 8, K = 2.

#include "lpcdet/detector.hpp"
#include "lpcdet/loss.hpp"
#include "lpcdet/scene.hpp"

#include <set>
#include <vector>

namespace micro {

inline lpcdet::Extent extent() { return {-4.0, 4.0, -4.0, 4.0}; }

inline lpcdet::DetectorConfig detector_config(std::uint64_t seed, std::set<int> refine = {}) {
  lpcdet::DetectorConfig c;
  c.grid = lpcdet::GridConfig::from_extent(extent(), 2.0, 8, 8);
  c.grid.pillar_seed = seed;
  c.decoder.layers = 2;
  c.decoder.d = 8;
  c.decoder.heads = 2;
  c.decoder.queries = 3;
  c.decoder.classes = 1;
  c.decoder.ffn_dim = 16;
  c.decoder.refine_layers = std::move(refine);
  c.fourier_sigma = 1.0;
  c.init_seed = seed;
  return c;
}

inline lpcdet::SceneConfig scene_config(int min_objects = 1, int max_objects = 2) {
  lpcdet::SceneConfig s;
  s.extent = extent();
  s.min_objects = min_objects;
  s.max_objects = max_objects;
  s.classes = {lpcdet::ClassSizePrior{1.0, 2.0, 1.5, 0.05}};
  s.surface_density = 2.0;
  s.min_points_per_box = 10;
  s.clutter_points = 20;
  s.min_gap = 0.3;
  return s;
}

inline std::vector<lpcdet::Scene> scenes(int count, std::uint64_t seed, int min_objects = 1,
                                         int max_objects = 2) {
  std::vector<lpcdet::Scene> out;
  const auto cfg = scene_config(min_objects, max_objects);
  for (int i = 0; i < count; ++i) out.push_back(lpcdet::generate_scene(cfg, seed * 1000 + static_cast<std::uint64_t>(i)));
  return out;
}

/// Set loss of one scene through the whole model.
inline lpcdet::ad::Var scene_loss(const lpcdet::Detector& det, const lpcdet::ScenePrep& prep,
                                  const lpcdet::Scene& scene) {
  const auto r = lpcdet::forward(det, prep);
  return lpcdet::set_loss(scene.boxes, r.decoder, {}, {}, det.config.decoder.no_object_class()).total;
}

}  // namespace micro
