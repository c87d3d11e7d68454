#pragma once

#include "lpcdet/autograd.hpp"
#include "lpcdet/nn.hpp"
#include "lpcdet/scene.hpp"

#include <cstdint>
#include <vector>

namespace lpcdet {

/// BEV pillar grid anchored at (extent.x_min, extent.y_min). Cell (row, col)
/// covers x in [x_min + col*cell, ...) and y in [y_min + row*cell, ...);
/// tokens are flattened row-major: index = row * width + col.
struct GridConfig {
  Extent extent;
  double cell_size = 1.25;
  int height = 32;
  int width = 32;
  int feature_dim = 64;
  int max_points_per_pillar = 32;
  std::uint64_t pillar_seed = 0;

  /// Derives height/width from the extent (rounded up to whole cells).
  static GridConfig from_extent(const Extent& extent, double cell_size, int feature_dim,
                                int max_points_per_pillar);

  int cells() const { return height * width; }
  int token_index(int row, int col) const { return row * width + col; }
  Vec2 cell_center(int row, int col) const;
  void validate() const;
};

inline constexpr int kPointFeatures = 6;

/// Points bucketed into pillars. Row i of point_features belongs to pillar
/// pillar_of_point[i]; features are (x, y, z, x - cx, y - cy, z - zbar).
struct PillarTensor {
  ad::Matrix point_features;
  std::vector<int> pillar_of_point;
  std::vector<bool> nonempty;
  int height = 0;
  int width = 0;
};

/// Keeps at most max_points_per_pillar points per cell; larger pillars are
/// subsampled with an RNG seeded by grid.pillar_seed (deterministic).
PillarTensor pillarize(const Scene& scene, const GridConfig& grid);

struct TokenSequence {
  ad::Var features;  // N x d
  std::vector<Vec2> cell_centers;
  std::vector<bool> nonempty;
  int height = 0;
  int width = 0;

  int size() const { return height * width; }
};

/// Pillar encoder (shared affine + ReLU, max-pool per pillar), one 3x3 BEV
/// convolution with ReLU, a learned vector for empty cells, then the grid
/// positional encoding.
struct Backbone {
  GridConfig grid;
  nn::Linear point_net;
  ad::Var empty;
  nn::Linear conv;
  ad::Matrix positional;

  Backbone() = default;
  Backbone(const GridConfig& grid, nn::Rng& rng);

  void collect(nn::ParamList& out, const std::string& prefix) const;
};

TokenSequence backbone_forward(const PillarTensor& pillars, const Backbone& backbone);

}  // namespace lpcdet
