#include "lpcdet/matching.hpp"

#include <limits>
#include <stdexcept>

namespace lpcdet {

std::vector<int> MatchResult::query_of_gt() const {
  std::vector<int> out(pairs.size(), -1);
  for (const auto& [g, q] : pairs) out[static_cast<std::size_t>(g)] = q;
  return out;
}

std::vector<int> MatchResult::gt_of_query(int queries) const {
  std::vector<int> out(static_cast<std::size_t>(queries), -1);
  for (const auto& [g, q] : pairs) out[static_cast<std::size_t>(q)] = g;
  return out;
}

MatchResult hungarian_match(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  if (n > m) throw std::invalid_argument("hungarian_match: more ground truths than queries");
  if (!cost.allFinite()) throw std::invalid_argument("hungarian_match: non-finite cost");

  MatchResult result;
  if (n == 0) {
    for (int j = 0; j < m; ++j) result.unmatched_queries.push_back(j);
    return result;
  }

  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is the virtual source.
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> row_of_col(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);

  for (int i = 1; i <= n; ++i) {
    row_of_col[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
    std::vector<bool> used(static_cast<std::size_t>(m) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = row_of_col[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        if (used[uj]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[uj];
        if (cur < minv[uj]) {
          minv[uj] = cur;
          way[uj] = j0;
        }
        if (minv[uj] < delta) {
          delta = minv[uj];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        if (used[uj]) {
          u[static_cast<std::size_t>(row_of_col[uj])] += delta;
          v[uj] -= delta;
        } else {
          minv[uj] -= delta;
        }
      }
      j0 = j1;
    } while (row_of_col[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      row_of_col[static_cast<std::size_t>(j0)] = row_of_col[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> col_of_row(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    const int r = row_of_col[static_cast<std::size_t>(j)];
    if (r != 0) col_of_row[static_cast<std::size_t>(r - 1)] = j - 1;
  }
  std::vector<bool> matched(static_cast<std::size_t>(m), false);
  for (int r = 0; r < n; ++r) {
    const int c = col_of_row[static_cast<std::size_t>(r)];
    result.pairs.emplace_back(r, c);
    result.total_cost += cost(r, c);
    matched[static_cast<std::size_t>(c)] = true;
  }
  for (int j = 0; j < m; ++j) {
    if (!matched[static_cast<std::size_t>(j)]) result.unmatched_queries.push_back(j);
  }
  return result;
}

}  // namespace lpcdet
