#include "lpcdet/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace lpcdet {

namespace {

nn::Rng make_rng(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  return nn::Rng(seq);
}

bool finite_estimates(const DecoderOutput& out) {
  auto finite = [](const HeadEstimate& e) {
    return e.box.value().allFinite() && e.logits.value().allFinite() && e.anchors.value().allFinite();
  };
  if (!finite(out.initial)) return false;
  return std::all_of(out.layers.begin(), out.layers.end(),
                     [&](const LayerOutput& l) { return finite(l.estimate); });
}

}  // namespace

double TrainConfig::learning_rate_at(int epoch) const {
  if (lr_decay_period <= 0) return learning_rate;
  return learning_rate * std::pow(lr_decay, epoch / lr_decay_period);
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train: epochs < 0");
  if (learning_rate < 0.0) throw std::invalid_argument("train: negative learning rate");
  if (!(lr_decay > 0.0) || lr_decay_period < 0) throw std::invalid_argument("train: bad lr schedule");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size < 1");
  if (loss.no_object < 0.0 || loss.regression < 0.0 || loss.classification < 0.0) {
    throw std::invalid_argument("train: negative loss weight");
  }
}

TrainResult train_detector(Detector& detector, std::span<const Scene> scenes,
                           const TrainConfig& cfg, int stage, const EpochCallback& on_epoch) {
  cfg.validate();
  if (stage != 1 && stage != 2) throw std::invalid_argument("train: stage must be 1 or 2");
  if (stage == 1 && !detector.config.decoder.refine_layers.empty()) {
    throw std::invalid_argument("train: stage 1 runs without query refinement");
  }
  if (scenes.empty()) throw std::invalid_argument("train: no scenes");
  const DecoderConfig& dcfg = detector.config.decoder;
  for (const auto& s : scenes) {
    if (static_cast<int>(s.boxes.size()) > dcfg.queries) {
      throw std::invalid_argument("train: scene has more objects than queries");
    }
  }

  std::vector<ScenePrep> preps;
  preps.reserve(scenes.size());
  for (const auto& s : scenes) preps.push_back(prepare_scene(s, detector.config));

  nn::Adam::Options opts;
  opts.clip_norm = cfg.grad_clip;
  nn::Adam adam(detector.detector_parameters(), opts);
  nn::Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(stage));

  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate_at(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double sum_total = 0.0, sum_reg = 0.0, sum_cls = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      adam.zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        auto diverged = [&](const char* what) {
          std::ostringstream msg;
          msg << "training diverged: non-finite " << what << " at stage " << stage << " epoch "
              << epoch << " scene " << idx << " (lr " << lr << ")";
          return TrainingDiverged(msg.str());
        };
        const ForwardResult fr = forward(detector, preps[idx]);
        if (!finite_estimates(fr.decoder)) throw diverged("outputs");
        const SetLoss loss = set_loss(scenes[idx].boxes, fr.decoder, cfg.loss, cfg.cost,
                                      dcfg.no_object_class());
        if (!std::isfinite(loss.breakdown.total)) throw diverged("loss");
        ad::backward(ad::scale(loss.total, 1.0 / static_cast<double>(end - start)));
        sum_total += loss.breakdown.total;
        sum_reg += loss.breakdown.regression();
        sum_cls += loss.breakdown.classification();
      }
      adam.step(lr);
    }
    const double n = static_cast<double>(scenes.size());
    EpochLog row{epoch, lr, sum_total / n, sum_reg / n, sum_cls / n, stage};
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  adam.zero_grad();
  return result;
}

LossBreakdown evaluate_loss(const Detector& detector, std::span<const Scene> scenes,
                            const TrainConfig& cfg) {
  ad::NoGradGuard guard;
  LossBreakdown mean;
  for (const auto& s : scenes) {
    const ForwardResult fr = forward(detector, prepare_scene(s, detector.config));
    const SetLoss l = set_loss(s.boxes, fr.decoder, cfg.loss, cfg.cost,
                               detector.config.decoder.no_object_class());
    if (mean.layers.empty()) mean.layers.resize(l.breakdown.layers.size());
    for (std::size_t k = 0; k < l.breakdown.layers.size(); ++k) {
      mean.layers[k].regression += l.breakdown.layers[k].regression;
      mean.layers[k].classification += l.breakdown.layers[k].classification;
    }
    mean.total += l.breakdown.total;
  }
  const double n = static_cast<double>(std::max<std::size_t>(scenes.size(), 1));
  for (auto& l : mean.layers) {
    l.regression /= n;
    l.classification /= n;
  }
  mean.total /= n;
  return mean;
}

std::set<int> aam_source_layers(const std::set<int>& refine_layers) {
  std::set<int> out;
  for (int k : refine_layers) out.insert(k - 1);
  return out;
}

ad::Matrix collect_aam_tokens(const Detector& detector, std::span<const Scene> scenes,
                              const std::set<int>& layers) {
  ad::NoGradGuard guard;
  const int d = detector.config.decoder.d;
  for (int k : layers) {
    if (k < 0 || k >= detector.config.decoder.layers) {
      throw std::invalid_argument("collect_aam_tokens: layer out of range");
    }
  }
  std::vector<ad::Matrix> blocks;
  Eigen::Index rows = 0;
  for (const auto& s : scenes) {
    const ForwardResult fr = forward(detector, prepare_scene(s, detector.config));
    for (int k : layers) {
      blocks.push_back(fr.decoder.layers[static_cast<std::size_t>(k)].output.value());
      rows += blocks.back().rows();
    }
  }
  ad::Matrix out(rows, d);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  return out;
}

namespace {

struct HeadTargets {
  ad::Matrix box;     // head(z) with zeroed deltas
  ad::Matrix logits;  // head(z) logits
};

HeadTargets head_targets(const Detector& det, const ad::Matrix& tokens) {
  ad::NoGradGuard guard;
  const ad::Var anchors = ad::constant(ad::Matrix::Zero(tokens.rows(), 3));
  const HeadEstimate e = apply_head(ad::constant(tokens), anchors, det.decoder.head);
  HeadTargets t{e.box.value(), e.logits.value()};
  t.box.leftCols(3).setZero();
  return t;
}

struct AamTerms {
  ad::Var location;
  ad::Var other;
};

AamTerms aam_terms(const Detector& det, const ad::Matrix& tokens, const HeadTargets& t) {
  const ad::Var anchors = ad::constant(ad::Matrix::Zero(tokens.rows(), 3));
  const HeadEstimate e =
      apply_head(det.decoder.aam.forward(ad::constant(tokens)), anchors, det.decoder.head);
  const double n = static_cast<double>(tokens.rows());
  ad::Var loc = ad::l1_loss(ad::slice_cols(e.box, kDx, 3), t.box.leftCols(3));
  ad::Var rest = ad::add(ad::l1_loss(ad::slice_cols(e.box, kWidth, kBoxOutputs - 3),
                                     t.box.rightCols(kBoxOutputs - 3)),
                         ad::l1_loss(e.logits, t.logits));
  const double other_count = static_cast<double>(kBoxOutputs - 3 + t.logits.cols());
  return {ad::scale(loc, 1.0 / (3.0 * n)), ad::scale(rest, 1.0 / (other_count * n))};
}

}  // namespace

AamObjective aam_objective(const Detector& detector, const ad::Matrix& tokens,
                           double location_weight) {
  ad::NoGradGuard guard;
  const HeadTargets t = head_targets(detector, tokens);
  const AamTerms terms = aam_terms(detector, tokens, t);
  AamObjective o;
  o.location = terms.location.scalar();
  o.other = terms.other.scalar();
  o.total = location_weight * o.location + o.other;
  return o;
}

AamReport evaluate_aam(const Detector& detector, const ad::Matrix& tokens) {
  ad::NoGradGuard guard;
  const ad::Var anchors = ad::constant(ad::Matrix::Zero(tokens.rows(), 3));
  const HeadEstimate before = apply_head(ad::constant(tokens), anchors, detector.decoder.head);
  const HeadEstimate after = apply_head(detector.decoder.aam.forward(ad::constant(tokens)),
                                        anchors, detector.decoder.head);
  const Eigen::Index n = tokens.rows();
  const Eigen::Index others = kBoxOutputs - 3;
  AamReport r;
  if (n == 0) return r;
  r.delta_before = before.box.value().leftCols(3).cwiseAbs().mean();
  r.delta_after = after.box.value().leftCols(3).cwiseAbs().mean();
  const double count = static_cast<double>(n * (others + before.logits.cols()));
  r.other_magnitude = (before.box.value().rightCols(others).cwiseAbs().sum() +
                       before.logits.value().cwiseAbs().sum()) / count;
  r.other_drift = ((after.box.value().rightCols(others) - before.box.value().rightCols(others))
                       .cwiseAbs().sum() +
                   (after.logits.value() - before.logits.value()).cwiseAbs().sum()) / count;
  return r;
}

AamTrainResult train_aam(Detector& detector, const ad::Matrix& tokens, const AamTrainConfig& cfg) {
  if (tokens.rows() == 0) throw std::invalid_argument("train_aam: no tokens");
  if (tokens.cols() != detector.config.decoder.d) throw std::invalid_argument("train_aam: token width");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw std::invalid_argument("train_aam: bad config");

  const HeadTargets all = head_targets(detector, tokens);
  nn::Adam adam(detector.aam_parameters());
  nn::Rng rng = make_rng(cfg.seed, 0xAA);
  std::vector<int> order(static_cast<std::size_t>(tokens.rows()));
  std::iota(order.begin(), order.end(), 0);

  AamTrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    // cosine decay within the run
    const double lr = cfg.learning_rate * 0.5 *
                      (1.0 + std::cos(3.141592653589793 * epoch / std::max(cfg.epochs, 1)));
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto count = static_cast<Eigen::Index>(end - start);
      ad::Matrix batch(count, tokens.cols());
      HeadTargets t{ad::Matrix(count, kBoxOutputs), ad::Matrix(count, all.logits.cols())};
      for (Eigen::Index i = 0; i < count; ++i) {
        const int r = order[start + static_cast<std::size_t>(i)];
        batch.row(i) = tokens.row(r);
        t.box.row(i) = all.box.row(r);
        t.logits.row(i) = all.logits.row(r);
      }
      adam.zero_grad();
      // head parameters receive gradients here but are never stepped
      const AamTerms terms = aam_terms(detector, batch, t);
      ad::backward(ad::add(ad::scale(terms.location, cfg.location_weight), terms.other));
      adam.step(lr);
    }
    nn::zero_grad(detector.detector_parameters());
    result.loss_curve.push_back(aam_objective(detector, tokens, cfg.location_weight).total);
  }
  adam.zero_grad();
  return result;
}

}  // namespace lpcdet
