#pragma once

#include "lpcdet/autograd.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace lpcdet::nn {

using ad::Matrix;
using ad::Var;

/// Named handles to parameter leaves. Copies share the underlying storage.
using ParamList = std::vector<std::pair<std::string, Var>>;

using Rng = std::mt19937_64;

/// Xavier/Glorot uniform init for an in x out weight.
Matrix xavier_uniform(Eigen::Index in, Eigen::Index out, Rng& rng);
Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

/// y = x W + b with W stored in x out.
struct Linear {
  Var weight;
  Var bias;

  Linear() = default;
  Linear(Eigen::Index in, Eigen::Index out, Rng& rng);

  Var forward(const Var& x) const;
  Eigen::Index in_dim() const { return weight.rows(); }
  Eigen::Index out_dim() const { return weight.cols(); }
  void collect(ParamList& out, const std::string& prefix) const;
};

struct LayerNorm {
  Var gamma;
  Var beta;

  LayerNorm() = default;
  explicit LayerNorm(Eigen::Index dim);

  Var forward(const Var& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Two affine layers with a ReLU between: fc2(relu(fc1(x))).
struct FeedForward {
  Linear fc1;
  Linear fc2;

  FeedForward() = default;
  FeedForward(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Rng& rng);

  Var forward(const Var& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

void zero_grad(const ParamList& params);
double grad_norm(const ParamList& params);
/// Order-sensitive FNV-1a hash over parameter bytes, for identity checks.
std::uint64_t fingerprint(const ParamList& params);

/// Adam with optional global gradient-norm clipping.
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.0;  // 0 disables
  };

  explicit Adam(ParamList params);
  Adam(ParamList params, Options opts);

  /// Applies one update with learning rate lr from the accumulated gradients.
  void step(double lr);
  void zero_grad() { nn::zero_grad(params_); }
  const ParamList& params() const { return params_; }
  long steps() const { return t_; }

 private:
  ParamList params_;
  Options opts_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

}  // namespace lpcdet::nn
