#include "lpcdet/backbone.hpp"

#include "lpcdet/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace lpcdet {

namespace {

// Height span used to scale z features.
constexpr double kZSpan = 4.0;

int cells_along(double length, double cell) {
  const double n = length / cell;
  const double r = std::round(n);
  return static_cast<int>(std::abs(n - r) < 1e-9 ? r : std::ceil(n));
}

}  // namespace

GridConfig GridConfig::from_extent(const Extent& extent, double cell_size, int feature_dim,
                                   int max_points_per_pillar) {
  GridConfig g;
  g.extent = extent;
  g.cell_size = cell_size;
  g.feature_dim = feature_dim;
  g.max_points_per_pillar = max_points_per_pillar;
  g.width = cells_along(extent.width(), cell_size);
  g.height = cells_along(extent.depth(), cell_size);
  g.validate();
  return g;
}

Vec2 GridConfig::cell_center(int row, int col) const {
  return {extent.x_min + (col + 0.5) * cell_size, extent.y_min + (row + 0.5) * cell_size};
}

void GridConfig::validate() const {
  if (!(cell_size > 0.0)) throw std::invalid_argument("grid: cell_size must be positive");
  if (height < 1 || width < 1) throw std::invalid_argument("grid: empty grid");
  if (feature_dim < 4 || feature_dim % 4 != 0) {
    throw std::invalid_argument("grid: feature_dim must be a positive multiple of 4");
  }
  if (max_points_per_pillar < 1) throw std::invalid_argument("grid: max_points_per_pillar < 1");
}

PillarTensor pillarize(const Scene& scene, const GridConfig& grid) {
  PillarTensor out;
  out.height = grid.height;
  out.width = grid.width;
  const int n_cells = grid.cells();
  out.nonempty.assign(static_cast<std::size_t>(n_cells), false);

  std::vector<std::vector<int>> members(static_cast<std::size_t>(n_cells));
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    const auto& p = scene.points[i];
    int col = static_cast<int>(std::floor((p.x - grid.extent.x_min) / grid.cell_size));
    int row = static_cast<int>(std::floor((p.y - grid.extent.y_min) / grid.cell_size));
    if (col < 0 || row < 0 || col >= grid.width || row >= grid.height) {
      // points on the far boundary belong to the last cell
      if (col == grid.width) col = grid.width - 1;
      if (row == grid.height) row = grid.height - 1;
      if (col < 0 || row < 0 || col >= grid.width || row >= grid.height) continue;
    }
    members[static_cast<std::size_t>(grid.token_index(row, col))].push_back(static_cast<int>(i));
  }

  std::mt19937_64 rng(grid.pillar_seed);
  const auto cap = static_cast<std::size_t>(grid.max_points_per_pillar);
  std::size_t total = 0;
  for (auto& m : members) {
    if (m.size() > cap) {
      std::shuffle(m.begin(), m.end(), rng);
      m.resize(cap);
      std::sort(m.begin(), m.end());
    }
    total += m.size();
  }

  out.point_features.resize(static_cast<Eigen::Index>(total), kPointFeatures);
  out.pillar_of_point.reserve(total);
  Eigen::Index r = 0;
  for (int cell = 0; cell < n_cells; ++cell) {
    const auto& m = members[static_cast<std::size_t>(cell)];
    if (m.empty()) continue;
    out.nonempty[static_cast<std::size_t>(cell)] = true;
    const Vec2 c = grid.cell_center(cell / grid.width, cell % grid.width);
    double zbar = 0.0;
    for (int idx : m) zbar += scene.points[static_cast<std::size_t>(idx)].z;
    zbar /= static_cast<double>(m.size());
    for (int idx : m) {
      const auto& p = scene.points[static_cast<std::size_t>(idx)];
      out.point_features.row(r++) << p.x, p.y, p.z, p.x - c.x, p.y - c.y, p.z - zbar;
      out.pillar_of_point.push_back(cell);
    }
  }
  return out;
}

Backbone::Backbone(const GridConfig& g, nn::Rng& rng)
    : grid(g),
      point_net(kPointFeatures, g.feature_dim, rng),
      empty(ad::parameter(nn::normal_matrix(1, g.feature_dim, 0.02, rng))),
      conv(9 * static_cast<Eigen::Index>(g.feature_dim), g.feature_dim, rng),
      positional(grid_positional_encoding(g.height, g.width, g.cell_size, g.feature_dim)) {
  grid.validate();
}

void Backbone::collect(nn::ParamList& out, const std::string& prefix) const {
  point_net.collect(out, prefix + ".point_net");
  out.emplace_back(prefix + ".empty", empty);
  conv.collect(out, prefix + ".conv");
}

TokenSequence backbone_forward(const PillarTensor& pillars, const Backbone& backbone) {
  const GridConfig& g = backbone.grid;
  if (pillars.height != g.height || pillars.width != g.width) {
    throw std::invalid_argument("backbone_forward: pillar grid does not match backbone grid");
  }
  // Fixed input scaling: absolute coordinates to the unit square, offsets to cells.
  ad::RowVector offset(kPointFeatures), scale(kPointFeatures);
  offset << -g.extent.x_min, -g.extent.y_min, 0.0, 0.0, 0.0, 0.0;
  scale << 1.0 / g.extent.width(), 1.0 / g.extent.depth(), 1.0 / kZSpan, 1.0 / g.cell_size,
      1.0 / g.cell_size, 1.0 / kZSpan;

  ad::Var pts = ad::affine_cols(ad::constant(pillars.point_features), offset, scale);
  ad::Var per_point = ad::relu(backbone.point_net.forward(pts));
  ad::Var pooled = ad::segment_max(per_point, pillars.pillar_of_point, g.cells());
  std::vector<int> occupied;
  for (int i = 0; i < g.cells(); ++i) {
    if (pillars.nonempty[static_cast<std::size_t>(i)]) occupied.push_back(i);
  }
  // the convolution is only evaluated where a token keeps its value
  ad::Var local =
      ad::relu(backbone.conv.forward(ad::im2col3x3(pooled, g.height, g.width, occupied)));
  ad::Var filled = ad::scatter_rows(local, occupied, g.cells(), backbone.empty);

  TokenSequence out;
  out.features = ad::add(filled, ad::constant(backbone.positional));
  out.nonempty = pillars.nonempty;
  out.height = g.height;
  out.width = g.width;
  out.cell_centers.reserve(static_cast<std::size_t>(g.cells()));
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) out.cell_centers.push_back(g.cell_center(r, c));
  }
  return out;
}

}  // namespace lpcdet
