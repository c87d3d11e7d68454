#pragma once

// Independent reference implementations used by the tests.

#include "lpcdet/autograd.hpp"
#include "lpcdet/geometry.hpp"
#include "lpcdet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using lpcdet::ad::Matrix;
using lpcdet::ad::Var;

/// Central-difference gradient of `loss` with respect to one parameter.
inline Matrix numeric_gradient(const std::function<Var()>& loss, Var param, double step = 1e-6) {
  Matrix numeric(param.rows(), param.cols());
  Matrix& value = param.mutable_value();
  for (Eigen::Index i = 0; i < value.size(); ++i) {
    const double saved = value.data()[i];
    value.data()[i] = saved + step;
    const double up = loss().scalar();
    value.data()[i] = saved - step;
    const double down = loss().scalar();
    value.data()[i] = saved;
    numeric.data()[i] = (up - down) / (2.0 * step);
  }
  return numeric;
}

/// Relative gap between analytic and central-difference gradients of `loss`
/// for one parameter, measured as |a - n| / max(|a|, |n|, floor) over the
/// whole tensor (norm-wise).
inline double gradient_gap(const std::function<Var()>& loss, Var param, double step = 1e-6,
                           double floor = 1e-7) {
  param.zero_grad();
  Var out = loss();
  lpcdet::ad::backward(out);
  const Matrix analytic = param.grad();
  const Matrix numeric = numeric_gradient(loss, param, step);
  const double denom = std::max({analytic.norm(), numeric.norm(), floor});
  return (analytic - numeric).norm() / denom;
}

/// Largest gap over a parameter list; every parameter's gradient is cleared first.
inline double max_gradient_gap(const std::function<Var()>& loss, const lpcdet::nn::ParamList& params,
                               double step = 1e-6) {
  double worst = 0.0;
  for (const auto& [name, p] : params) {
    lpcdet::nn::zero_grad(params);
    worst = std::max(worst, gradient_gap(loss, p, step));
  }
  lpcdet::nn::zero_grad(params);
  return worst;
}

namespace detail {
inline void enumerate_assignments(const Eigen::MatrixXd& cost, int row, unsigned used, double acc, double& best) {
  if (row == cost.rows()) {
    best = std::min(best, acc);
    return;
  }
  for (int c = 0; c < cost.cols(); ++c) {
    if (used & (1u << c)) continue;
    enumerate_assignments(cost, row + 1, used | (1u << c), acc + cost(row, c), best);
  }
}
}  // namespace detail

/// Minimum assignment cost of rows to distinct columns, enumerating every
/// injective assignment (no pruning).
inline double brute_force_assignment(const Eigen::MatrixXd& cost) {
  double best = std::numeric_limits<double>::infinity();
  detail::enumerate_assignments(cost, 0, 0u, 0.0, best);
  return best;
}

inline bool inside_rect(const lpcdet::Box& b, double x, double y) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = x - b.center.x, dy = y - b.center.y;
  const double u = c * dx + s * dy, v = -s * dx + c * dy;
  return std::abs(u) <= 0.5 * b.length && std::abs(v) <= 0.5 * b.width;
}

/// Monte-Carlo BEV IoU: uniform samples over the joint bounding square.
inline double monte_carlo_iou(const lpcdet::Box& a, const lpcdet::Box& b, int samples, std::uint64_t seed) {
  const double ra = 0.5 * std::hypot(a.length, a.width), rb = 0.5 * std::hypot(b.length, b.width);
  const double x0 = std::min(a.center.x - ra, b.center.x - rb), x1 = std::max(a.center.x + ra, b.center.x + rb);
  const double y0 = std::min(a.center.y - ra, b.center.y - rb), y1 = std::max(a.center.y + ra, b.center.y + rb);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
  long inter = 0, uni = 0;
  for (int i = 0; i < samples; ++i) {
    const double x = ux(rng), y = uy(rng);
    const bool ia = inside_rect(a, x, y), ib = inside_rect(b, x, y);
    inter += (ia && ib) ? 1 : 0;
    uni += (ia || ib) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Linear-interpolation quantile by full sort (numpy's default rule).
inline double sort_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Naive single-head attention, explicit loops.
inline Matrix loop_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  Matrix out = Matrix::Zero(q.rows(), v.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<double> s(static_cast<std::size_t>(k.rows()));
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (Eigen::Index c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      s[static_cast<std::size_t>(j)] = dot * scale;
      mx = std::max(mx, dot * scale);
    }
    double z = 0.0;
    for (double& x : s) {
      x = std::exp(x - mx);
      z += x;
    }
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      for (Eigen::Index c = 0; c < v.cols(); ++c) out(i, c) += s[static_cast<std::size_t>(j)] / z * v(j, c);
    }
  }
  return out;
}

/// True when every selected sample after the first has a min-distance to the
/// earlier samples at least as large as any unselected point's.
inline bool fps_greedy_optimal(const std::vector<lpcdet::Point3>& points,
                               const std::vector<int>& selected) {
  std::vector<bool> taken(points.size(), false);
  if (!selected.empty()) taken[static_cast<std::size_t>(selected[0])] = true;
  for (std::size_t k = 1; k < selected.size(); ++k) {
    auto min_dist = [&](std::size_t i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        best = std::min(best, lpcdet::distance(points[i], points[static_cast<std::size_t>(selected[j])]));
      }
      return best;
    };
    const double chosen = min_dist(static_cast<std::size_t>(selected[k]));
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!taken[i] && min_dist(i) > chosen) return false;
    }
    taken[static_cast<std::size_t>(selected[k])] = true;
  }
  return true;
}

}  // namespace oracle
