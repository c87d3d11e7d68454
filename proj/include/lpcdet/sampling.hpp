#pragma once

#include "lpcdet/geometry.hpp"

#include <span>
#include <vector>

namespace lpcdet {

struct AnchorSet {
  std::vector<Point3> locations;
  std::vector<int> source_indices;
  /// True when fewer distinct points than requested existed and trailing
  /// slots repeat the last selected point.
  bool padded = false;

  std::size_t size() const { return locations.size(); }
};

/// Greedy farthest point sampling in 3D. The first sample is
/// points[start_index]; each later sample maximises the minimum Euclidean
/// distance to those already chosen, ties going to the lowest index.
/// O(N*M) with an incremental min-distance array.
AnchorSet farthest_point_sample(std::span<const Point3> points, int count, int start_index = 0);

}  // namespace lpcdet
