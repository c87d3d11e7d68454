#include "lpcdet/sampling.hpp"

#include <limits>
#include <stdexcept>

namespace lpcdet {

namespace {

double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

AnchorSet farthest_point_sample(std::span<const Point3> points, int count, int start_index) {
  if (points.empty()) throw std::invalid_argument("farthest_point_sample: empty point list");
  if (count < 1) throw std::invalid_argument("farthest_point_sample: count must be >= 1");
  if (start_index < 0 || static_cast<std::size_t>(start_index) >= points.size()) {
    throw std::invalid_argument("farthest_point_sample: start index out of range");
  }

  const std::size_t n = points.size();
  AnchorSet out;
  out.locations.reserve(static_cast<std::size_t>(count));
  out.source_indices.reserve(static_cast<std::size_t>(count));

  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::vector<bool> taken(n, false);
  int current = start_index;
  const int distinct = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(count)));
  for (int k = 0; k < distinct; ++k) {
    out.locations.push_back(points[static_cast<std::size_t>(current)]);
    out.source_indices.push_back(current);
    taken[static_cast<std::size_t>(current)] = true;
    if (k + 1 == distinct) break;

    const Point3& last = points[static_cast<std::size_t>(current)];
    int best = -1;
    double best_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double d = squared_distance(points[i], last);
      if (d < min_dist[i]) min_dist[i] = d;
      if (min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = static_cast<int>(i);
      }
    }
    current = best;
  }

  while (static_cast<int>(out.locations.size()) < count) {
    out.locations.push_back(out.locations.back());
    out.source_indices.push_back(out.source_indices.back());
    out.padded = true;
  }
  return out;
}

}  // namespace lpcdet
