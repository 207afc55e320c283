#pragma once

#include <memory>
#include <vector>

#include "voicectl/autograd/optim.hpp"
#include "voicectl/backbone/backbone.hpp"
#include "voicectl/core/rng.hpp"
#include "voicectl/signal/perturb.hpp"

namespace voicectl {

struct BackboneTrainConfig {
  long steps = 600;
  int batch_size = 4;
  double crop_min_seconds = 0.4;
  double crop_max_seconds = 0.5;
  double learning_rate = 0.002;
  double lr_decay_per_epoch = 0.96;
  long steps_per_epoch = 0;  // 0: one pass over the corpus
  double weight_decay = 0.01;
  double grad_clip_norm = 1.0;
  double contrastive_weight = 1.0;
  double temperature = 0.1;
  int negatives = 4;
  double adversarial_weight = 0.0;  // 0 disables the discriminator
  PerturbRanges perturb;
  // The timbre encoder sees a pitch-shifted copy (formants kept) so it cannot
  // rely on F0.
  double timbre_pitch_min = 0.7;
  double timbre_pitch_max = 1.45;
};

struct BackboneLossReport {
  double contrastive = 0.0;
  double stft = 0.0;
  double adversarial = 0.0;
  double total = 0.0;
};

/// Optimizer state for stage 1.
class BackboneOptimizer {
 public:
  BackboneOptimizer(Backbone& model, const BackboneTrainConfig& cfg, long steps_per_epoch);
  ag::AdamW<float>& generator() { return *gen_; }
  ag::AdamW<float>* discriminator() { return disc_opt_.get(); }
  double lr(long step) const { return sched_.lr(step); }

 private:
  std::unique_ptr<ag::AdamW<float>> gen_;
  std::unique_ptr<ag::AdamW<float>> disc_opt_;
  ag::ExponentialDecay sched_;
};

/// One optimization step on a batch. Each waveform is cropped to a random
/// block-aligned window, perturbed to form the contrastive positive, and
/// reconstructed. Deterministic given `seed`. Throws TrainingDiverged on a
/// non-finite loss.
BackboneLossReport train_backbone_step(Backbone& model, const std::vector<Waveform>& batch, BackboneOptimizer& opt,
                                       const BackboneTrainConfig& cfg, long step, const SeedTree& seed);

/// Mean analyze -> synthesize multi-resolution STFT loss over `utterances`.
double round_trip_loss(const Backbone& model, const std::vector<Waveform>& utterances);

}  // namespace voicectl
