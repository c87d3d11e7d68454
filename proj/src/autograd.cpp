#include "lpcdet/autograd.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace lpcdet::ad {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("autograd: ") + what);
}

Var make_result(Matrix value, std::initializer_list<Var> inputs,
                std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (const auto& in : inputs) node->parents.push_back(in.node());
      node->backward = std::move(backward_fn);
    }
  }
  return Var::from_node(std::move(node));
}

Var make_result_n(Matrix value, std::span<const Var> inputs,
                  std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& in : inputs) node->parents.push_back(in.node());
      node->backward = std::move(backward_fn);
    }
  }
  return Var::from_node(std::move(node));
}

inline bool wants(const Node& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Matrix Var::grad() const {
  if (node_->has_grad()) return node_->grad;
  return Matrix::Zero(rows(), cols());
}

Var Var::from_node(std::shared_ptr<Node> n) {
  Var v;
  v.node_ = std::move(n);
  return v;
}

Var parameter(Matrix init) { return Var(std::move(init), true); }
Var constant(Matrix value) { return Var(std::move(value), false); }

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Var& loss) {
  require(loss.rows() == 1 && loss.cols() == 1, "backward needs a 1x1 output");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->has_grad()) n->backward(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul shape mismatch");
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    if (wants(self, 0)) self.parents[0]->accumulate(self.grad * B.transpose());
    if (wants(self, 1)) self.parents[1]->accumulate(A.transpose() * self.grad);
  });
}

Var add(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
  return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (wants(self, 1)) self.parents[1]->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub shape mismatch");
  return make_result(a.value() - b.value(), {a, b}, [](Node& self) {
    if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (wants(self, 1)) self.parents[1]->accumulate(-self.grad);
  });
}

Var hadamard(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard shape mismatch");
  return make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    if (wants(self, 0)) self.parents[0]->accumulate(self.grad.cwiseProduct(B));
    if (wants(self, 1)) self.parents[1]->accumulate(self.grad.cwiseProduct(A));
  });
}

Var scale(const Var& a, double s) {
  return make_result(a.value() * s, {a}, [s](Node& self) {
    self.parents[0]->accumulate(self.grad * s);
  });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(out), {a, row}, [](Node& self) {
    if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (wants(self, 1)) self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

Var affine_cols(const Var& a, const RowVector& offset, const RowVector& scale_row) {
  require(offset.size() == a.cols() && scale_row.size() == a.cols(),
          "affine_cols shape mismatch");
  Matrix out = (a.value().rowwise() + offset).array().rowwise() * scale_row.array();
  return make_result(std::move(out), {a}, [scale_row](Node& self) {
    Matrix g = self.grad.array().rowwise() * scale_row.array();
    self.parents[0]->accumulate(g);
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make_result(std::move(out), {a}, [](Node& self) {
    const auto& A = self.parents[0]->value;
    self.parents[0]->accumulate((A.array() > 0.0).select(self.grad, 0.0));
  });
}

Var sin(const Var& a) {
  return make_result(a.value().array().sin().matrix(), {a}, [](Node& self) {
    const auto& A = self.parents[0]->value;
    self.parents[0]->accumulate(self.grad.cwiseProduct(A.array().cos().matrix()));
  });
}

Var cos(const Var& a) {
  return make_result(a.value().array().cos().matrix(), {a}, [](Node& self) {
    const auto& A = self.parents[0]->value;
    self.parents[0]->accumulate(-self.grad.cwiseProduct(A.array().sin().matrix()));
  });
}

Var detach(const Var& a) { return constant(a.value()); }

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && start + count <= a.cols(), "slice_cols out of range");
  Matrix out = a.value().middleCols(start, count);
  return make_result(std::move(out), {a}, [start, count](Node& self) {
    auto& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleCols(start, count) = self.grad;
    p.accumulate(g);
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_result_n(std::move(out), parts, [](Node& self) {
    Eigen::Index at = 0;
    for (auto& p : self.parents) {
      const Eigen::Index c = p->value.cols();
      if (p->requires_grad) p->accumulate(self.grad.middleCols(at, c));
      at += c;
    }
  });
}

Var gather_rows(const Var& a, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < a.rows(), "gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return make_result(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    auto& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    }
    p.accumulate(g);
  });
}

Var segment_max(const Var& a, std::span<const int> segment, int num_segments) {
  require(static_cast<Eigen::Index>(segment.size()) == a.rows(), "segment_max ids size");
  const Eigen::Index cols = a.cols();
  Matrix out = Matrix::Zero(num_segments, cols);
  // argmax row per (segment, col); -1 means empty segment
  Eigen::MatrixXi arg = Eigen::MatrixXi::Constant(num_segments, cols, -1);
  const auto& A = a.value();
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    const int s = segment[static_cast<std::size_t>(r)];
    require(s >= 0 && s < num_segments, "segment_max id out of range");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (arg(s, c) < 0 || A(r, c) > out(s, c)) {
        out(s, c) = A(r, c);
        arg(s, c) = static_cast<int>(r);
      }
    }
  }
  return make_result(std::move(out), {a}, [arg = std::move(arg)](Node& self) {
    auto& p = *self.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (Eigen::Index s = 0; s < arg.rows(); ++s) {
      for (Eigen::Index c = 0; c < arg.cols(); ++c) {
        if (arg(s, c) >= 0) g(arg(s, c), c) += self.grad(s, c);
      }
    }
    p.accumulate(g);
  });
}

namespace {

template <typename Fn>
void for_each_tap(int height, int width, const std::vector<int>& rows, Fn&& fn) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i] / width, col = rows[i] % width;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int rr = r + dr, cc = col + dc;
        if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
        fn(static_cast<Eigen::Index>(i), (dr + 1) * 3 + (dc + 1), static_cast<Eigen::Index>(rr) * width + cc);
      }
    }
  }
}

}  // namespace

Var im2col3x3(const Var& a, int height, int width, std::span<const int> rows) {
  require(a.rows() == static_cast<Eigen::Index>(height) * width, "im2col grid size");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Index c = a.cols();
  std::vector<int> idx(rows.begin(), rows.end());
  for (int row : idx) require(row >= 0 && row < height * width, "im2col row out of range");
  const RowMajor A = a.value();
  RowMajor out = RowMajor::Zero(static_cast<Eigen::Index>(idx.size()), 9 * c);
  for_each_tap(height, width, idx,
               [&](Eigen::Index i, int o, Eigen::Index src) { out.block(i, o * c, 1, c) = A.row(src); });
  return make_result(Matrix(out), {a}, [height, width, c, idx = std::move(idx)](Node& self) {
    auto& p = *self.parents[0];
    const RowMajor G = self.grad;
    RowMajor g = RowMajor::Zero(p.value.rows(), c);
    for_each_tap(height, width, idx,
                 [&](Eigen::Index i, int o, Eigen::Index src) { g.row(src) += G.block(i, o * c, 1, c); });
    p.accumulate(Matrix(g));
  });
}

Var im2col3x3(const Var& a, int height, int width) {
  std::vector<int> rows(static_cast<std::size_t>(height) * static_cast<std::size_t>(width));
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
  return im2col3x3(a, height, width, rows);
}

Var scatter_rows(const Var& a, std::span<const int> rows, Eigen::Index total, const Var& fill) {
  require(static_cast<Eigen::Index>(rows.size()) == a.rows(), "scatter_rows index count");
  require(fill.rows() == 1 && fill.cols() == a.cols(), "scatter_rows fill shape");
  Matrix out = fill.value().replicate(total, 1);
  std::vector<bool> filled(static_cast<std::size_t>(total), true);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < total, "scatter_rows index out of range");
    require(filled[static_cast<std::size_t>(rows[i])], "scatter_rows duplicate index");
    filled[static_cast<std::size_t>(rows[i])] = false;
    out.row(rows[i]) = a.value().row(static_cast<Eigen::Index>(i));
  }
  return make_result(std::move(out), {a, fill},
                     [idx = std::vector<int>(rows.begin(), rows.end()), filled = std::move(filled)](Node& self) {
    const Matrix& G = self.grad;
    if (wants(self, 0)) {
      Matrix ga(static_cast<Eigen::Index>(idx.size()), G.cols());
      for (std::size_t i = 0; i < idx.size(); ++i) ga.row(static_cast<Eigen::Index>(i)) = G.row(idx[i]);
      self.parents[0]->accumulate(ga);
    }
    if (wants(self, 1)) {
      Matrix gf = Matrix::Zero(1, G.cols());
      for (Eigen::Index r = 0; r < G.rows(); ++r) {
        if (filled[static_cast<std::size_t>(r)]) gf += G.row(r);
      }
      self.parents[1]->accumulate(gf);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require(gamma.rows() == 1 && gamma.cols() == x.cols(), "layer_norm gamma shape");
  require(beta.rows() == 1 && beta.cols() == x.cols(), "layer_norm beta shape");
  const auto& X = x.value();
  const Eigen::Index n = X.cols();
  Eigen::VectorXd mean = X.rowwise().mean();
  Matrix centered = X.colwise() - mean;
  Eigen::VectorXd inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(n)) + eps).rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  return make_result(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
    const auto& G = self.grad;
    const auto& gam = self.parents[1]->value;
    if (wants(self, 1)) self.parents[1]->accumulate((G.cwiseProduct(xhat)).colwise().sum());
    if (wants(self, 2)) self.parents[2]->accumulate(G.colwise().sum());
    if (wants(self, 0)) {
      Matrix dxhat = G.array().rowwise() * gam.row(0).array();
      Eigen::VectorXd m1 = dxhat.rowwise().mean();
      Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
      Matrix dx = dxhat.colwise() - m1;
      dx.array() -= xhat.array().colwise() * m2.array();
      dx = dx.array().colwise() * inv_std.array();
      self.parents[0]->accumulate(dx);
    }
  });
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out = logits.colwise() - logits.rowwise().maxCoeff();
  out = out.array().exp();
  Eigen::VectorXd sums = out.rowwise().sum();
  out = out.array().colwise() / sums.array();
  return out;
}

Var attention(const Var& q, const Var& k, const Var& v, int heads,
              const std::vector<bool>* key_mask, std::vector<Matrix>* weights_out) {
  require(heads > 0, "attention needs at least one head");
  require(q.cols() == k.cols() && k.cols() == v.cols(), "attention width mismatch");
  require(k.rows() == v.rows(), "attention key/value count mismatch");
  require(q.cols() % heads == 0, "model dimension not divisible by heads");
  if (key_mask) {
    require(static_cast<Eigen::Index>(key_mask->size()) == k.rows(), "attention mask size");
  }
  const Eigen::Index dh = q.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();

  bool any_kept = true;
  if (key_mask) {
    any_kept = false;
    for (bool b : *key_mask) any_kept = any_kept || b;
  }
  const bool use_mask = key_mask && any_kept;

  Matrix out(Q.rows(), Q.cols());
  const bool record = g_grad_enabled &&
                      (q.requires_grad() || k.requires_grad() || v.requires_grad());
  std::vector<Matrix> probs;
  if (record) probs.reserve(static_cast<std::size_t>(heads));
  if (weights_out) weights_out->clear();

  for (int h = 0; h < heads; ++h) {
    Matrix s = Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose();
    s *= inv_sqrt;
    if (use_mask) {
      for (Eigen::Index j = 0; j < s.cols(); ++j) {
        if (!(*key_mask)[static_cast<std::size_t>(j)]) {
          s.col(j).setConstant(-std::numeric_limits<double>::infinity());
        }
      }
    }
    Matrix p = softmax_rows(s);
    if (use_mask) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        if (!(*key_mask)[static_cast<std::size_t>(j)]) p.col(j).setZero();
      }
    }
    out.middleCols(h * dh, dh) = p * V.middleCols(h * dh, dh);
    if (weights_out) weights_out->push_back(p);
    if (record) probs.push_back(std::move(p));
  }

  return make_result(std::move(out), {q, k, v},
                     [probs = std::move(probs), heads, dh, inv_sqrt](Node& self) {
    const auto& Qv = self.parents[0]->value;
    const auto& Kv = self.parents[1]->value;
    const auto& Vv = self.parents[2]->value;
    Matrix dQ = Matrix::Zero(Qv.rows(), Qv.cols());
    Matrix dK = Matrix::Zero(Kv.rows(), Kv.cols());
    Matrix dV = Matrix::Zero(Vv.rows(), Vv.cols());
    for (int h = 0; h < heads; ++h) {
      const Matrix& P = probs[static_cast<std::size_t>(h)];
      const auto dO = self.grad.middleCols(h * dh, dh);
      dV.middleCols(h * dh, dh).noalias() += P.transpose() * dO;
      Matrix dP = dO * Vv.middleCols(h * dh, dh).transpose();
      Eigen::VectorXd row_dot = dP.cwiseProduct(P).rowwise().sum();
      Matrix dS = P.cwiseProduct(dP.colwise() - row_dot) * inv_sqrt;
      dQ.middleCols(h * dh, dh).noalias() += dS * Kv.middleCols(h * dh, dh);
      dK.middleCols(h * dh, dh).noalias() += dS.transpose() * Qv.middleCols(h * dh, dh);
    }
    if (wants(self, 0)) self.parents[0]->accumulate(dQ);
    if (wants(self, 1)) self.parents[1]->accumulate(dK);
    if (wants(self, 2)) self.parents[2]->accumulate(dV);
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result(std::move(out), {a}, [](Node& self) {
    auto& p = *self.parents[0];
    p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Var l1_loss(const Var& a, const Matrix& target, const Matrix* weights) {
  require(a.rows() == target.rows() && a.cols() == target.cols(), "l1_loss shape mismatch");
  if (weights) {
    require(weights->rows() == a.rows() && weights->cols() == a.cols(), "l1_loss weight shape");
  }
  Matrix diff = a.value() - target;
  Matrix w = weights ? *weights : Matrix::Ones(a.rows(), a.cols());
  Matrix out(1, 1);
  out(0, 0) = diff.cwiseAbs().cwiseProduct(w).sum();
  Matrix sign = diff.unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
  return make_result(std::move(out), {a}, [sign = Matrix(sign.cwiseProduct(w))](Node& self) {
    self.parents[0]->accumulate(sign * self.grad(0, 0));
  });
}

Var cross_entropy(const Var& logits, std::span<const int> targets,
                  std::span<const double> weights) {
  require(static_cast<Eigen::Index>(targets.size()) == logits.rows(), "cross_entropy targets");
  require(weights.size() == targets.size(), "cross_entropy weights");
  Matrix p = softmax_rows(logits.value());
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    require(t >= 0 && t < p.cols(), "cross_entropy target out of range");
    const Eigen::Index ti = t;
    // log-softmax computed from shifted logits for stability
    const auto row = logits.value().row(i);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    total += weights[static_cast<std::size_t>(i)] * (lse - row(ti));
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  std::vector<int> t(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  return make_result(std::move(out), {logits},
                     [p = std::move(p), t = std::move(t), w = std::move(w)](Node& self) {
    Matrix g = p;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      g(i, t[static_cast<std::size_t>(i)]) -= 1.0;
      g.row(i) *= w[static_cast<std::size_t>(i)];
    }
    self.parents[0]->accumulate(g * self.grad(0, 0));
  });
}

}  // namespace lpcdet::ad
