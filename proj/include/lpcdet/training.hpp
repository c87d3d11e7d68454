#pragma once

#include "lpcdet/detector.hpp"
#include "lpcdet/loss.hpp"
#include "lpcdet/scene.hpp"

#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

namespace lpcdet {

struct TrainConfig {
  int epochs = 80;
  double learning_rate = 1e-4;
  double lr_decay = 0.1;
  int lr_decay_period = 53;  // epochs
  int batch_size = 4;
  double grad_clip = 0.1;  // global norm; 0 disables
  LossWeights loss;
  CostWeights cost;
  std::uint64_t seed = 0;

  double learning_rate_at(int epoch) const;
  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_reg = 0.0;
  double loss_cls = 0.0;
  int stage = 1;
};

struct TrainResult {
  std::vector<EpochLog> log;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains every parameter except the AAM with Adam on the set loss, using the
/// detector's current refinement set. Stage 1 requires an empty set; stage 2
/// runs on top of a stage-1 model with a trained, frozen AAM.
TrainResult train_detector(Detector& detector, std::span<const Scene> scenes,
                           const TrainConfig& cfg, int stage, const EpochCallback& on_epoch = {});

/// Mean set loss over scenes without updating anything.
LossBreakdown evaluate_loss(const Detector& detector, std::span<const Scene> scenes,
                            const TrainConfig& cfg);

// ---- anchor alignment module ----------------------------------------------

struct AamTrainConfig {
  int epochs = 20;
  double learning_rate = 1e-3;
  int batch_size = 128;  // tokens per step
  double location_weight = 1.0;
  std::uint64_t seed = 0;
};

/// Decoder output tokens z^(k) for k in `layers`, one row per query.
ad::Matrix collect_aam_tokens(const Detector& detector, std::span<const Scene> scenes,
                              const std::set<int>& layers);

/// Layers whose outputs feed a refinement: {k - 1 | k in refine}.
std::set<int> aam_source_layers(const std::set<int>& refine_layers);

struct AamObjective {
  double location = 0.0;  // mean |deltas of head(AAM(z))|
  double other = 0.0;     // mean |other outputs of head(AAM(z)) - head(z)|
  double total = 0.0;     // location_weight * location + other
};

AamObjective aam_objective(const Detector& detector, const ad::Matrix& tokens,
                           double location_weight = 1.0);

struct AamReport {
  double delta_before = 0.0;      // mean |location deltas of head(z)|
  double delta_after = 0.0;       // mean |location deltas of head(AAM(z))|
  double other_magnitude = 0.0;   // mean |non-location outputs of head(z)|
  double other_drift = 0.0;       // mean |change of non-location outputs|
};

AamReport evaluate_aam(const Detector& detector, const ad::Matrix& tokens);

struct AamTrainResult {
  std::vector<double> loss_curve;  // objective after each epoch
};

/// Fits only the AAM so that head(AAM(z)) has zero location deltas and
/// otherwise equals head(z) (L1 in head-output space).
AamTrainResult train_aam(Detector& detector, const ad::Matrix& tokens, const AamTrainConfig& cfg);

}  // namespace lpcdet
