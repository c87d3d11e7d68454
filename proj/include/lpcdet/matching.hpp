#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace lpcdet {

struct MatchResult {
  /// (gt_index, query_index), ordered by gt_index.
  std::vector<std::pair<int, int>> pairs;
  /// Queries left for the 'no-object' class, ascending.
  std::vector<int> unmatched_queries;
  double total_cost = 0.0;

  /// query index matched to each gt (size G).
  std::vector<int> query_of_gt() const;
  /// gt index per query or -1 (size M).
  std::vector<int> gt_of_query(int queries) const;
};

/// Minimum-cost assignment of every row (ground truth) of a G x M cost matrix
/// to a distinct column (query), G <= M. Shortest augmenting path with
/// potentials, O(G^2 M). Columns are scanned in ascending order and only a
/// strictly smaller slack replaces the incumbent, so among equal-cost choices
/// lower indices win. Throws std::invalid_argument if G > M or a cost is not
/// finite.
MatchResult hungarian_match(const Eigen::MatrixXd& cost);

}  // namespace lpcdet
