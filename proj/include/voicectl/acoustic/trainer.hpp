#pragma once

#include <memory>
#include <string>
#include <vector>

#include "voicectl/acoustic/losses.hpp"
#include "voicectl/acoustic/model.hpp"
#include "voicectl/autograd/optim.hpp"

namespace voicectl {

struct AcousticTrainConfig {
  long steps = 1500;
  int batch_size = 2;
  double learning_rate = 0.002;
  double lr_decay_per_epoch = 0.9975;
  long steps_per_epoch = 0;  // 0: one pass over the corpus
  double weight_decay = 0.01;
  double grad_clip_norm = 1.0;
  double vuv_weight = 1.0;
  double timbre_weight = 1.0;  // entangled ablation only
};

/// One utterance prepared for teacher-forced training: frozen style features
/// and backbone analysis targets, aligned to sum(durations) frames.
struct AcousticExample {
  std::string id;
  std::vector<int> symbols;
  std::vector<int> durations;
  LayerwiseFeatures style;
  AcousticTargets<float> targets;
  Eigen::RowVectorXf timbre;  // analyzer timbre, 1 x 192
};

AcousticExample prepare_acoustic_example(const Backbone& backbone, const AcousticModel& model, const Waveform& w,
                                         std::vector<int> symbols, std::vector<int> durations, std::string id = {});

struct AcousticLossReport {
  double linguistic = 0.0;
  double log_f0 = 0.0;
  double vuv = 0.0;
  double duration = 0.0;
  double timbre = 0.0;
  double total = 0.0;
};

class AcousticOptimizer {
 public:
  AcousticOptimizer(AcousticModel& model, const AcousticTrainConfig& cfg, long steps_per_epoch);
  ag::AdamW<float>& adam() { return *adam_; }
  double lr(long step) const { return sched_.lr(step); }

 private:
  std::unique_ptr<ag::AdamW<float>> adam_;
  ag::ExponentialDecay sched_;
};

/// Teacher-forced step (ground-truth durations drive the upsampling). Throws
/// TrainingDiverged on a non-finite loss.
AcousticLossReport train_acoustic_step(AcousticModel& model, const std::vector<const AcousticExample*>& batch,
                                       AcousticOptimizer& opt, const AcousticTrainConfig& cfg, long step);

/// Teacher-forced losses without an update.
AcousticLossReport evaluate_acoustic(const AcousticModel& model, const AcousticExample& ex,
                                     const AcousticTrainConfig& cfg);

}  // namespace voicectl
