#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Var is a shared handle to a graph node. Operations record a backward
// closure on the result node while gradient recording is enabled; a call to
// backward() on a 1x1 result propagates gradients to every reachable node
// that requires them. Parameters are leaf Vars created with parameter().

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace lpcdet::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
  bool has_grad() const { return grad.size() != 0; }
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  const Matrix& value() const { return node_->value; }
  /// Direct write access, for optimizers and checkpoint loading.
  Matrix& mutable_value() { return node_->value; }
  /// Gradient of the last backward pass; zeros if none reached this node.
  Matrix grad() const;
  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { node_->grad.resize(0, 0); }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }

  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }
  static Var from_node(std::shared_ptr<Node> n);

 private:
  std::shared_ptr<Node> node_;
};

Var parameter(Matrix init);
Var constant(Matrix value);

/// Gradient recording is on by default; NoGradGuard disables it for the
/// current thread, so inference builds no graph and frees intermediates.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Runs reverse accumulation from a 1x1 output (seed gradient 1).
void backward(const Var& loss);

// ---- elementwise / linear algebra -------------------------------------------
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Adds a 1 x cols row vector to every row of a.
Var add_row(const Var& a, const Var& row);
/// y = (a + offset_row) .* scale_row with constant rows.
Var affine_cols(const Var& a, const RowVector& offset, const RowVector& scale);
Var relu(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var detach(const Var& a);

// ---- shape manipulation -------------------------------------------------------
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(const Var& a, std::span<const int> rows);
/// Max over rows sharing a segment id; empty segments produce zeros.
Var segment_max(const Var& a, std::span<const int> segment, int num_segments);
/// 3x3 neighbourhood gather of a row-major H x W grid of C-dim rows into
/// (H*W) x 9C, zero padded. Block o = (dr+1)*3 + (dc+1).
Var im2col3x3(const Var& a, int height, int width);
/// Only the listed output cells (row-major indices), in the given order.
Var im2col3x3(const Var& a, int height, int width, std::span<const int> rows);
/// total x cols result whose row rows[i] is a.row(i); every other row is fill.
Var scatter_rows(const Var& a, std::span<const int> rows, Eigen::Index total, const Var& fill);

// ---- normalisation / attention -----------------------------------------------
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

/// Multi-head scaled dot-product attention. q: Mq x d, k and v: Nk x d.
/// key_mask (optional, length Nk) excludes keys whose entry is false; a row
/// whose keys are all masked falls back to attending every key.
/// If weights_out is given it receives one Mq x Nk matrix per head.
Var attention(const Var& q, const Var& k, const Var& v, int heads,
              const std::vector<bool>* key_mask = nullptr,
              std::vector<Matrix>* weights_out = nullptr);

// ---- reductions / losses -----------------------------------------------------
Var sum(const Var& a);
/// sum_ij w_ij |a_ij - target_ij|; weights optional (same shape).
Var l1_loss(const Var& a, const Matrix& target, const Matrix* weights = nullptr);
/// sum_i w_i * CE(softmax(logits_i), target_i).
Var cross_entropy(const Var& logits, std::span<const int> targets,
                  std::span<const double> weights);

/// Numerically stable row softmax (plain values, no graph).
Matrix softmax_rows(const Matrix& logits);

}  // namespace lpcdet::ad
