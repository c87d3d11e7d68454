#pragma once

#include "lpcdet/autograd.hpp"
#include "lpcdet/geometry.hpp"
#include "lpcdet/nn.hpp"

#include <Eigen/Dense>

namespace lpcdet {

/// Fixed random Fourier projection. Coordinates are first mapped to
/// u = (p - origin) ./ span (the unit cube over the scene extent), then
/// projected with `matrix`, whose entries are N(0,1) * scale.
struct FourierBasis {
  ad::Matrix matrix;  // (d/2) x 3
  double scale = 1.0;
  Point3 origin;
  Point3 span{1.0, 1.0, 1.0};

  Eigen::Index dim() const { return 2 * matrix.rows(); }

  /// d must be even. scale = 2*pi*sigma.
  static FourierBasis random(Eigen::Index d, double sigma, const Point3& origin,
                             const Point3& span, nn::Rng& rng);
};

/// [sin(B u), cos(B u)] for one point.
Eigen::VectorXd fourier_features(const Point3& p, const FourierBasis& basis);
/// Batched form over an M x 3 anchor matrix; differentiable in the anchors.
ad::Var fourier_features(const ad::Var& anchors, const FourierBasis& basis);

/// The anchor encoder: a fixed Fourier basis followed by a trainable
/// two-layer FFN. One instance is shared by every (re-)encoding.
struct AnchorEncoder {
  FourierBasis basis;
  nn::FeedForward ffn;

  AnchorEncoder() = default;
  AnchorEncoder(FourierBasis b, nn::Rng& rng);

  ad::Var encode(const ad::Var& anchors) const;
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

Eigen::VectorXd encode_anchor(const Point3& p, const AnchorEncoder& encoder);

/// DETR-style two-axis sine encoding over metric cell centers of a
/// row-major H x W grid. Columns [0, d/2) encode x, [d/2, d) encode y.
/// Throws std::invalid_argument unless d % 4 == 0.
ad::Matrix grid_positional_encoding(int height, int width, double cell_size, int d,
                                    double temperature = 10000.0);

}  // namespace lpcdet
