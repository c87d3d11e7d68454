#pragma once

#include "lpcdet/autograd.hpp"
#include "lpcdet/backbone.hpp"
#include "lpcdet/encoding.hpp"
#include "lpcdet/geometry.hpp"
#include "lpcdet/nn.hpp"
#include "lpcdet/sampling.hpp"

#include <set>
#include <string>
#include <vector>

namespace lpcdet {

struct DecoderConfig {
  int layers = 4;
  int d = 64;
  int heads = 4;
  int queries = 25;
  int classes = 1;  // real classes; index `classes` is 'no-object'
  int ffn_dim = 128;
  /// Layer indices k in [1, layers) before which the queries are refined.
  std::set<int> refine_layers;
  bool mask_empty_cells = false;
  /// Stop gradients through refined anchor locations.
  bool detach_refined_anchors = false;

  int no_object_class() const { return classes; }
  /// Throws std::invalid_argument.
  void validate() const;
};

/// Column layout of the estimation head's box output.
enum BoxColumn : int { kDx = 0, kDy, kDz, kWidth, kLength, kHeight, kSinYaw, kCosYaw, kVx, kVy };
inline constexpr int kBoxOutputs = 10;

/// Decoded head output for one query. Deltas are relative to the anchor the
/// estimate was produced against.
struct BoxParams {
  double dx = 0, dy = 0, dz = 0;
  double w = 0, l = 0, h = 0;
  double sin_yaw = 0, cos_yaw = 1;
  double vx = 0, vy = 0;
  std::vector<double> class_logits;

  Point3 deltas() const { return {dx, dy, dz}; }
  /// atan2 of the unit-normalised (sin, cos) pair; 0 if both are zero.
  double yaw() const;
  Box absolute(const Point3& anchor) const;
  int argmax_class() const;
  /// Softmax probability of the argmax class.
  double score() const;
};

BoxParams box_params_from_rows(const ad::Matrix& box, const ad::Matrix& logits, Eigen::Index row);

struct QueryState {
  Eigen::VectorXd token;
  Point3 anchor;
  std::vector<Point3> anchor_history;
};

struct MultiHeadAttention {
  nn::Linear q, k, v, o;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(int d, int heads, nn::Rng& rng);
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

/// Projects queries/keys/values, runs per-head softmax(QK^T / sqrt(d_h)) V and
/// projects the concatenated heads back to d.
ad::Var multi_head_attention(const ad::Var& queries, const ad::Var& keys, const ad::Var& values,
                             const MultiHeadAttention& params,
                             const std::vector<bool>* key_mask = nullptr,
                             std::vector<ad::Matrix>* weights = nullptr);

struct DecoderLayer {
  nn::LayerNorm norm_self, norm_cross, norm_ffn;
  MultiHeadAttention self_attn, cross_attn;
  nn::FeedForward ffn;

  DecoderLayer() = default;
  DecoderLayer(const DecoderConfig& cfg, nn::Rng& rng);
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

struct LayerAttention {
  std::vector<ad::Matrix> self_weights;   // heads x (M x M)
  std::vector<ad::Matrix> cross_weights;  // heads x (M x N)
};

/// Pre-norm block: x += SelfAttn(LN(x)); x += CrossAttn(LN(x), tokens); x += FFN(LN(x)).
ad::Var decoder_layer_forward(const ad::Var& input, const TokenSequence& tokens,
                              const DecoderLayer& layer, const DecoderConfig& cfg,
                              LayerAttention* attention = nullptr);

/// One head shared by every layer and by the pre-layer-0 estimate:
/// hidden = relu(W LN(z) + b); box = hidden -> 10; logits = hidden -> C+1.
struct EstimationHead {
  nn::LayerNorm norm;
  nn::Linear hidden;
  nn::Linear box;
  nn::Linear cls;

  EstimationHead() = default;
  EstimationHead(const DecoderConfig& cfg, nn::Rng& rng);
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

struct HeadEstimate {
  ad::Var box;      // M x 10, deltas relative to `anchors`
  ad::Var logits;   // M x (C+1)
  ad::Var anchors;  // M x 3

  /// M x 10 rows (x, y, z, w, l, h, sin, cos, vx, vy) in scene coordinates.
  ad::Var absolute_vector() const;
  BoxParams params(Eigen::Index query) const { return box_params_from_rows(box.value(), logits.value(), query); }
  Point3 anchor(Eigen::Index query) const;
};

HeadEstimate apply_head(const ad::Var& z, const ad::Var& anchors, const EstimationHead& head);
BoxParams estimation_head(const Eigen::VectorXd& z, const Point3& anchor, const EstimationHead& head);

/// z + fc2(relu(fc1(z))). fc2 starts at zero so a fresh module is the identity.
struct AnchorAlignment {
  nn::FeedForward ffn;

  AnchorAlignment() = default;
  AnchorAlignment(int d, nn::Rng& rng);
  ad::Var forward(const ad::Var& z) const;
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

Eigen::VectorXd anchor_align(const Eigen::VectorXd& z, const AnchorAlignment& aam);

/// New anchors = head deltas of `outputs` + `anchors`.
ad::Var refine_anchors(const ad::Var& outputs, const ad::Var& anchors, const EstimationHead& head);
/// Value-level form: updates each query's anchor and extends its history.
void refine_anchors(std::vector<QueryState>& queries, const EstimationHead& head);

struct DecoderParams {
  AnchorEncoder encoder;
  std::vector<DecoderLayer> layers;
  EstimationHead head;
  AnchorAlignment aam;

  DecoderParams() = default;
  DecoderParams(const DecoderConfig& cfg, FourierBasis basis, nn::Rng& rng);

  /// Everything except the alignment module.
  void collect_detector(nn::ParamList& out, const std::string& prefix) const;
  void collect_aam(nn::ParamList& out, const std::string& prefix) const;
};

struct LayerOutput {
  ad::Var input;   // Y_k
  ad::Var output;  // z^(k)
  HeadEstimate estimate;
  /// j: the layer whose (refined) anchors were encoded into Y_k; 0 means
  /// the sampled anchors.
  int anchor_layer = 0;
  bool refined = false;
  ad::Matrix anchor_encoding;
  const AnchorEncoder* encoder = nullptr;
  LayerAttention attention;
};

struct DecoderOutput {
  HeadEstimate initial;  // head applied to Y_0 (auxiliary)
  std::vector<LayerOutput> layers;
  /// Anchor matrices (M x 3): the sampled anchors then one per refinement.
  std::vector<ad::Matrix> anchor_history;

  const HeadEstimate& final_estimate() const { return layers.back().estimate; }
  std::vector<QueryState> queries() const;
};

struct DecoderOptions {
  bool record_attention = false;
};

/// Runs the layer-input dispatch: Y_0 = E(rho0); for k in S_r the queries are
/// refined (anchors moved by the previous layer's deltas, tokens aligned by
/// the AAM) and the new anchor encoding added; otherwise the previous output
/// plus the latest anchor encoding is propagated.
DecoderOutput decoder_forward(const TokenSequence& tokens, const AnchorSet& anchors,
                              const DecoderParams& params, const DecoderConfig& cfg,
                              const DecoderOptions& options = {});

}  // namespace lpcdet
