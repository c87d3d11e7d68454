#include "lpcdet/nn.hpp"

#include <cmath>
#include <cstring>

namespace lpcdet::nn {

Matrix xavier_uniform(Eigen::Index in, Eigen::Index out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(in, out);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  }
  return m;
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  }
  return m;
}

Linear::Linear(Eigen::Index in, Eigen::Index out, Rng& rng)
    : weight(ad::parameter(xavier_uniform(in, out, rng))),
      bias(ad::parameter(Matrix::Zero(1, out))) {}

Var Linear::forward(const Var& x) const { return ad::add_row(ad::matmul(x, weight), bias); }

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(Eigen::Index dim)
    : gamma(ad::parameter(Matrix::Ones(1, dim))), beta(ad::parameter(Matrix::Zero(1, dim))) {}

Var LayerNorm::forward(const Var& x) const { return ad::layer_norm(x, gamma, beta); }

void LayerNorm::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

FeedForward::FeedForward(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Rng& rng)
    : fc1(in, hidden, rng), fc2(hidden, out, rng) {}

Var FeedForward::forward(const Var& x) const { return fc2.forward(ad::relu(fc1.forward(x))); }

void FeedForward::collect(ParamList& out, const std::string& prefix) const {
  fc1.collect(out, prefix + ".fc1");
  fc2.collect(out, prefix + ".fc2");
}

void zero_grad(const ParamList& params) {
  for (const auto& [name, p] : params) {
    Var v = p;
    v.zero_grad();
  }
}

double grad_norm(const ParamList& params) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (p.node()->has_grad()) sq += p.node()->grad.squaredNorm();
  }
  return std::sqrt(sq);
}

std::uint64_t fingerprint(const ParamList& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, p] : params) {
    mix(name.data(), name.size());
    const auto& m = p.value();
    mix(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  return h;
}

Adam::Adam(ParamList params) : Adam(std::move(params), Options{}) {}

Adam::Adam(ParamList params, Options opts) : params_(std::move(params)), opts_(opts) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, p] : params_) {
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void Adam::step(double lr) {
  ++t_;
  double clip = 1.0;
  if (opts_.clip_norm > 0.0) {
    const double norm = grad_norm(params_);
    if (norm > opts_.clip_norm) clip = opts_.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var p = params_[i].second;
    if (!p.node()->has_grad()) continue;
    const Matrix g = p.node()->grad * clip;
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * g;
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * g.cwiseAbs2();
    const Matrix mhat = m_[i] / bc1;
    const Matrix vhat = v_[i] / bc2;
    p.mutable_value().array() -= lr * mhat.array() / (vhat.array().sqrt() + opts_.eps);
  }
}

}  // namespace lpcdet::nn
