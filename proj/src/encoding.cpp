#include "lpcdet/encoding.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lpcdet {

namespace {

ad::RowVector offset_row(const FourierBasis& b) {
  ad::RowVector r(3);
  r << -b.origin.x, -b.origin.y, -b.origin.z;
  return r;
}

ad::RowVector inv_span_row(const FourierBasis& b) {
  ad::RowVector r(3);
  r << 1.0 / b.span.x, 1.0 / b.span.y, 1.0 / b.span.z;
  return r;
}

}  // namespace

FourierBasis FourierBasis::random(Eigen::Index d, double sigma, const Point3& origin,
                                  const Point3& span, nn::Rng& rng) {
  if (d <= 0 || d % 2 != 0) throw std::invalid_argument("Fourier basis needs an even dimension");
  if (!(span.x > 0.0 && span.y > 0.0 && span.z > 0.0)) {
    throw std::invalid_argument("Fourier basis span must be positive");
  }
  FourierBasis b;
  b.scale = 2.0 * std::numbers::pi * sigma;
  b.matrix = nn::normal_matrix(d / 2, 3, 1.0, rng) * b.scale;
  b.origin = origin;
  b.span = span;
  return b;
}

Eigen::VectorXd fourier_features(const Point3& p, const FourierBasis& basis) {
  const Eigen::Vector3d u((p.x - basis.origin.x) / basis.span.x,
                          (p.y - basis.origin.y) / basis.span.y,
                          (p.z - basis.origin.z) / basis.span.z);
  const Eigen::VectorXd proj = basis.matrix * u;
  Eigen::VectorXd out(2 * proj.size());
  out.head(proj.size()) = proj.array().sin();
  out.tail(proj.size()) = proj.array().cos();
  return out;
}

ad::Var fourier_features(const ad::Var& anchors, const FourierBasis& basis) {
  if (anchors.cols() != 3) throw std::invalid_argument("anchors must be M x 3");
  ad::Var u = ad::affine_cols(anchors, offset_row(basis), inv_span_row(basis));
  ad::Var proj = ad::matmul(u, ad::constant(basis.matrix.transpose()));
  const ad::Var parts[] = {ad::sin(proj), ad::cos(proj)};
  return ad::concat_cols(parts);
}

AnchorEncoder::AnchorEncoder(FourierBasis b, nn::Rng& rng)
    : basis(std::move(b)), ffn(basis.dim(), basis.dim(), basis.dim(), rng) {}

ad::Var AnchorEncoder::encode(const ad::Var& anchors) const {
  return ffn.forward(fourier_features(anchors, basis));
}

void AnchorEncoder::collect(nn::ParamList& out, const std::string& prefix) const {
  ffn.collect(out, prefix + ".ffn");
}

Eigen::VectorXd encode_anchor(const Point3& p, const AnchorEncoder& encoder) {
  ad::NoGradGuard guard;
  ad::Matrix a(1, 3);
  a << p.x, p.y, p.z;
  return encoder.encode(ad::constant(a)).value().row(0).transpose();
}

ad::Matrix grid_positional_encoding(int height, int width, double cell_size, int d,
                                    double temperature) {
  if (d <= 0 || d % 4 != 0) {
    throw std::invalid_argument("grid positional encoding: d must be divisible by 4");
  }
  if (height <= 0 || width <= 0 || !(cell_size > 0.0)) {
    throw std::invalid_argument("grid positional encoding: bad grid");
  }
  const int half = d / 2;
  Eigen::VectorXd inv_freq(half);
  for (int i = 0; i < half; ++i) {
    inv_freq(i) = 1.0 / std::pow(temperature, 2.0 * (i / 2) / static_cast<double>(half));
  }
  ad::Matrix pe(static_cast<Eigen::Index>(height) * width, d);
  for (int r = 0; r < height; ++r) {
    const double y = (r + 0.5) * cell_size;
    for (int c = 0; c < width; ++c) {
      const double x = (c + 0.5) * cell_size;
      const Eigen::Index row = static_cast<Eigen::Index>(r) * width + c;
      for (int i = 0; i < half; ++i) {
        const double ax = x * inv_freq(i), ay = y * inv_freq(i);
        pe(row, i) = (i % 2 == 0) ? std::sin(ax) : std::cos(ax);
        pe(row, half + i) = (i % 2 == 0) ? std::sin(ay) : std::cos(ay);
      }
    }
  }
  return pe;
}

}  // namespace lpcdet
