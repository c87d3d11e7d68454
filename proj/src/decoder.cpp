#include "lpcdet/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lpcdet {

void DecoderConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("decoder config: " + m); };
  if (layers < 1) fail("need at least one layer");
  if (d < 4 || d % 4 != 0) fail("d must be a positive multiple of 4");
  if (heads < 1 || d % heads != 0) fail("d must be divisible by heads");
  if (queries < 1) fail("need at least one query");
  if (classes < 1) fail("need at least one real class");
  if (ffn_dim < 1) fail("ffn_dim must be positive");
  for (int k : refine_layers) {
    if (k <= 0 || k >= layers) {
      fail("refinement layer " + std::to_string(k) + " outside [1, " + std::to_string(layers - 1) +
           "]");
    }
  }
}

double BoxParams::yaw() const {
  const double n = std::hypot(sin_yaw, cos_yaw);
  if (n == 0.0) return 0.0;
  return std::atan2(sin_yaw / n, cos_yaw / n);
}

Box BoxParams::absolute(const Point3& anchor) const {
  Box b;
  b.center = anchor + deltas();
  b.width = w;
  b.length = l;
  b.height = h;
  b.yaw = yaw();
  b.vx = vx;
  b.vy = vy;
  return b;
}

int BoxParams::argmax_class() const {
  return static_cast<int>(std::max_element(class_logits.begin(), class_logits.end()) -
                          class_logits.begin());
}

double BoxParams::score() const {
  const double mx = *std::max_element(class_logits.begin(), class_logits.end());
  double z = 0.0;
  for (double v : class_logits) z += std::exp(v - mx);
  return 1.0 / z;
}

BoxParams box_params_from_rows(const ad::Matrix& box, const ad::Matrix& logits, Eigen::Index r) {
  BoxParams p;
  p.dx = box(r, kDx);
  p.dy = box(r, kDy);
  p.dz = box(r, kDz);
  p.w = box(r, kWidth);
  p.l = box(r, kLength);
  p.h = box(r, kHeight);
  p.sin_yaw = box(r, kSinYaw);
  p.cos_yaw = box(r, kCosYaw);
  p.vx = box(r, kVx);
  p.vy = box(r, kVy);
  p.class_logits.resize(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    p.class_logits[static_cast<std::size_t>(c)] = logits(r, c);
  }
  return p;
}

MultiHeadAttention::MultiHeadAttention(int d, int h, nn::Rng& rng)
    : q(d, d, rng), k(d, d, rng), v(d, d, rng), o(d, d, rng), heads(h) {}

void MultiHeadAttention::collect(nn::ParamList& out, const std::string& prefix) const {
  q.collect(out, prefix + ".q");
  k.collect(out, prefix + ".k");
  v.collect(out, prefix + ".v");
  o.collect(out, prefix + ".o");
}

ad::Var multi_head_attention(const ad::Var& queries, const ad::Var& keys, const ad::Var& values,
                             const MultiHeadAttention& p, const std::vector<bool>* key_mask,
                             std::vector<ad::Matrix>* weights) {
  if (queries.cols() != p.q.in_dim() || keys.cols() != p.k.in_dim() ||
      values.cols() != p.v.in_dim() || keys.rows() != values.rows()) {
    throw std::invalid_argument("multi_head_attention: shape mismatch");
  }
  ad::Var attended = ad::attention(p.q.forward(queries), p.k.forward(keys), p.v.forward(values),
                                   p.heads, key_mask, weights);
  return p.o.forward(attended);
}

DecoderLayer::DecoderLayer(const DecoderConfig& cfg, nn::Rng& rng)
    : norm_self(cfg.d),
      norm_cross(cfg.d),
      norm_ffn(cfg.d),
      self_attn(cfg.d, cfg.heads, rng),
      cross_attn(cfg.d, cfg.heads, rng),
      ffn(cfg.d, cfg.ffn_dim, cfg.d, rng) {}

void DecoderLayer::collect(nn::ParamList& out, const std::string& prefix) const {
  norm_self.collect(out, prefix + ".norm_self");
  norm_cross.collect(out, prefix + ".norm_cross");
  norm_ffn.collect(out, prefix + ".norm_ffn");
  self_attn.collect(out, prefix + ".self_attn");
  cross_attn.collect(out, prefix + ".cross_attn");
  ffn.collect(out, prefix + ".ffn");
}

ad::Var decoder_layer_forward(const ad::Var& input, const TokenSequence& tokens,
                              const DecoderLayer& layer, const DecoderConfig& cfg,
                              LayerAttention* attention) {
  const std::vector<bool>* mask = cfg.mask_empty_cells ? &tokens.nonempty : nullptr;
  ad::Var x = input;
  ad::Var h = layer.norm_self.forward(x);
  x = ad::add(x, multi_head_attention(h, h, h, layer.self_attn, nullptr,
                                      attention ? &attention->self_weights : nullptr));
  h = layer.norm_cross.forward(x);
  x = ad::add(x, multi_head_attention(h, tokens.features, tokens.features, layer.cross_attn, mask,
                                      attention ? &attention->cross_weights : nullptr));
  h = layer.norm_ffn.forward(x);
  x = ad::add(x, layer.ffn.forward(h));
  return x;
}

EstimationHead::EstimationHead(const DecoderConfig& cfg, nn::Rng& rng)
    : norm(cfg.d), hidden(cfg.d, cfg.d, rng), box(cfg.d, kBoxOutputs, rng),
      cls(cfg.d, cfg.classes + 1, rng) {}

void EstimationHead::collect(nn::ParamList& out, const std::string& prefix) const {
  norm.collect(out, prefix + ".norm");
  hidden.collect(out, prefix + ".hidden");
  box.collect(out, prefix + ".box");
  cls.collect(out, prefix + ".cls");
}

ad::Var HeadEstimate::absolute_vector() const {
  const ad::Var parts[] = {anchors, ad::constant(ad::Matrix::Zero(anchors.rows(), kBoxOutputs - 3))};
  return ad::add(box, ad::concat_cols(parts));
}

Point3 HeadEstimate::anchor(Eigen::Index query) const {
  const auto& a = anchors.value();
  return {a(query, 0), a(query, 1), a(query, 2)};
}

HeadEstimate apply_head(const ad::Var& z, const ad::Var& anchors, const EstimationHead& head) {
  if (anchors.rows() != z.rows() || anchors.cols() != 3) {
    throw std::invalid_argument("apply_head: anchors must be M x 3");
  }
  ad::Var hidden = ad::relu(head.hidden.forward(head.norm.forward(z)));
  return {head.box.forward(hidden), head.cls.forward(hidden), anchors};
}

namespace {

ad::Matrix point_row(const Point3& p) {
  ad::Matrix m(1, 3);
  m << p.x, p.y, p.z;
  return m;
}

ad::Matrix anchor_matrix(const std::vector<Point3>& pts) {
  ad::Matrix m(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) << pts[i].x, pts[i].y, pts[i].z;
  }
  return m;
}

}  // namespace

BoxParams estimation_head(const Eigen::VectorXd& z, const Point3& anchor, const EstimationHead& head) {
  ad::NoGradGuard guard;
  const HeadEstimate e =
      apply_head(ad::constant(z.transpose()), ad::constant(point_row(anchor)), head);
  return e.params(0);
}

AnchorAlignment::AnchorAlignment(int d, nn::Rng& rng) : ffn(d, d, d, rng) {
  ffn.fc2.weight.mutable_value().setZero();
}

ad::Var AnchorAlignment::forward(const ad::Var& z) const { return ad::add(z, ffn.forward(z)); }

void AnchorAlignment::collect(nn::ParamList& out, const std::string& prefix) const {
  ffn.collect(out, prefix + ".ffn");
}

Eigen::VectorXd anchor_align(const Eigen::VectorXd& z, const AnchorAlignment& aam) {
  ad::NoGradGuard guard;
  return aam.forward(ad::constant(z.transpose())).value().row(0).transpose();
}

ad::Var refine_anchors(const ad::Var& outputs, const ad::Var& anchors, const EstimationHead& head) {
  const HeadEstimate e = apply_head(outputs, anchors, head);
  return ad::add(anchors, ad::slice_cols(e.box, kDx, 3));
}

void refine_anchors(std::vector<QueryState>& queries, const EstimationHead& head) {
  for (auto& q : queries) {
    const BoxParams p = estimation_head(q.token, q.anchor, head);
    q.anchor = q.anchor + p.deltas();
    q.anchor_history.push_back(q.anchor);
  }
}

DecoderParams::DecoderParams(const DecoderConfig& cfg, FourierBasis basis, nn::Rng& rng)
    : encoder(std::move(basis), rng), head(cfg, rng), aam(cfg.d, rng) {
  cfg.validate();
  if (encoder.basis.dim() != cfg.d) throw std::invalid_argument("Fourier basis dimension != d");
  layers.reserve(static_cast<std::size_t>(cfg.layers));
  for (int k = 0; k < cfg.layers; ++k) layers.emplace_back(cfg, rng);
}

void DecoderParams::collect_detector(nn::ParamList& out, const std::string& prefix) const {
  encoder.collect(out, prefix + ".encoder");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    layers[k].collect(out, prefix + ".layer" + std::to_string(k));
  }
  head.collect(out, prefix + ".head");
}

void DecoderParams::collect_aam(nn::ParamList& out, const std::string& prefix) const {
  aam.collect(out, prefix + ".aam");
}

std::vector<QueryState> DecoderOutput::queries() const {
  const auto& z = layers.back().output.value();
  const auto& last = anchor_history.back();
  std::vector<QueryState> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    auto& q = out[static_cast<std::size_t>(i)];
    q.token = z.row(i).transpose();
    q.anchor = {last(i, 0), last(i, 1), last(i, 2)};
    for (const auto& a : anchor_history) q.anchor_history.push_back({a(i, 0), a(i, 1), a(i, 2)});
  }
  return out;
}

DecoderOutput decoder_forward(const TokenSequence& tokens, const AnchorSet& anchors,
                              const DecoderParams& params, const DecoderConfig& cfg,
                              const DecoderOptions& options) {
  cfg.validate();
  if (static_cast<int>(anchors.size()) != cfg.queries) {
    throw std::invalid_argument("decoder_forward: expected " + std::to_string(cfg.queries) +
                                " anchors, got " + std::to_string(anchors.size()));
  }
  if (tokens.features.cols() != cfg.d) {
    throw std::invalid_argument("decoder_forward: token width does not match d");
  }
  if (static_cast<int>(params.layers.size()) != cfg.layers) {
    throw std::invalid_argument("decoder_forward: parameter layer count does not match config");
  }

  DecoderOutput out;
  ad::Var latest = ad::constant(anchor_matrix(anchors.locations));
  out.anchor_history.push_back(latest.value());
  ad::Var latest_encoding = params.encoder.encode(latest);
  int latest_layer = 0;

  out.initial = apply_head(latest_encoding, latest, params.head);

  out.layers.reserve(static_cast<std::size_t>(cfg.layers));
  for (int k = 0; k < cfg.layers; ++k) {
    LayerOutput lo;
    if (k == 0) {
      lo.input = latest_encoding;
    } else if (cfg.refine_layers.contains(k)) {
      const LayerOutput& prev = out.layers.back();
      ad::Var moved = ad::add(latest, ad::slice_cols(prev.estimate.box, kDx, 3));
      latest = cfg.detach_refined_anchors ? ad::detach(moved) : moved;
      out.anchor_history.push_back(latest.value());
      latest_encoding = params.encoder.encode(latest);
      latest_layer = k;
      lo.refined = true;
      lo.input = ad::add(params.aam.forward(prev.output), latest_encoding);
    } else {
      lo.input = ad::add(out.layers.back().output, latest_encoding);
    }
    lo.anchor_layer = latest_layer;
    lo.anchor_encoding = latest_encoding.value();
    lo.encoder = &params.encoder;

    lo.output = decoder_layer_forward(lo.input, tokens, params.layers[static_cast<std::size_t>(k)],
                                      cfg, options.record_attention ? &lo.attention : nullptr);
    lo.estimate = apply_head(lo.output, latest, params.head);
    out.layers.push_back(std::move(lo));
  }
  return out;
}

}  // namespace lpcdet
