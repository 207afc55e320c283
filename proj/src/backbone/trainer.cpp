#include "voicectl/backbone/trainer.hpp"

#include <cmath>

#include "voicectl/backbone/losses.hpp"
#include "voicectl/core/errors.hpp"
#include "voicectl/signal/stft_loss.hpp"

namespace voicectl {

namespace {

ag::Var<float> lsgan(const std::vector<ag::Var<float>>& scores, float target) {
  ag::Var<float> total;
  for (const auto& s : scores) {
    ag::Var<float> l = ag::mean(ag::square(ag::add_scalar(s, -target)));
    total = total.valid() ? ag::add(total, l) : l;
  }
  return total;
}

struct Crop {
  Waveform audio;
  std::vector<double> log_f0;
  std::vector<float> vuv;
};

}  // namespace

BackboneOptimizer::BackboneOptimizer(Backbone& model, const BackboneTrainConfig& cfg, long steps_per_epoch)
    : sched_{cfg.learning_rate, cfg.lr_decay_per_epoch, steps_per_epoch} {
  ag::AdamWConfig ac;
  ac.lr = cfg.learning_rate;
  ac.weight_decay = cfg.weight_decay;
  ac.grad_clip_norm = cfg.grad_clip_norm;
  std::vector<ag::Parameter<float>*> gen;
  for (auto* p : model.params().all()) {
    if (p->name.rfind("disc.", 0) != 0) gen.push_back(p);
  }
  gen_ = std::make_unique<ag::AdamW<float>>(gen, ac);
  if (cfg.adversarial_weight > 0.0) {
    if (model.discriminator() == nullptr) throw ConfigError("adversarial training needs a backbone built with a discriminator");
    disc_opt_ = std::make_unique<ag::AdamW<float>>(model.params().with_prefix("disc."), ac);
  }
}

BackboneLossReport train_backbone_step(Backbone& model, const std::vector<Waveform>& batch, BackboneOptimizer& opt,
                                       const BackboneTrainConfig& cfg, long step, const SeedTree& seed) {
  if (batch.empty()) throw InvalidInput("train_backbone_step: empty batch");
  const int hop = model.hop();
  const SeedTree step_seed = seed.child(static_cast<std::uint64_t>(step));
  const double lr = opt.lr(step);
  const float inv_b = 1.0f / static_cast<float>(batch.size());

  BackboneLossReport report;
  std::vector<Crop> crops;
  crops.reserve(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    auto rng = step_seed.child(i).child("crop").engine();
    const Waveform& w = batch[i];
    validate(w);
    if (w.sample_rate != model.config().sample_rate) throw InvalidInput("train_backbone_step: sample rate mismatch");
    const long total_frames = static_cast<long>(frame_count(w.size(), hop));
    std::uniform_real_distribution<double> len_dist(cfg.crop_min_seconds, cfg.crop_max_seconds);
    const long want = std::max<long>(1, std::lround(len_dist(rng) / model.config().hop_seconds));
    const long frames = std::min(want, total_frames);
    std::uniform_int_distribution<long> start_dist(0, total_frames - frames);
    const long start = start_dist(rng);
    Crop c;
    c.audio.sample_rate = w.sample_rate;
    c.audio.samples.assign(static_cast<size_t>(frames * hop), 0.0f);
    for (long j = 0; j < frames * hop; ++j) {
      const size_t src = static_cast<size_t>(start * hop + j);
      if (src < w.size()) c.audio.samples[static_cast<size_t>(j)] = w.samples[src];
    }
    const auto lf = model.analyze_pitch(c.audio);
    c.log_f0 = lf.log_f0;
    c.vuv = lf.vuv;
    crops.push_back(std::move(c));
  }

  // Generator pass.
  std::vector<ag::Mat> fakes;
  for (size_t i = 0; i < crops.size(); ++i) {
    const Crop& c = crops[i];
    const SeedTree s = step_seed.child(i);
    auto prng = s.child("perturb").engine();
    const PerturbParams pp = sample_perturb_params(prng, cfg.perturb);
    const Waveform positive_audio = perturb_information(c.audio, pp, s.child("perturb-apply").seed());

    auto trng = s.child("timbre").engine();
    PerturbParams tp;
    tp.pitch_shift_ratio = std::uniform_real_distribution<double>(cfg.timbre_pitch_min, cfg.timbre_pitch_max)(trng);
    const Waveform timbre_audio = perturb_information(c.audio, tp, s.child("timbre-apply").seed());

    ag::Tape<float> t;
    const ag::Var<float> anchor = model.linguistic_var(t, model.extract_content(c.audio).frames);
    const ag::Var<float> positive = model.linguistic_var(t, model.extract_content(positive_audio).frames);
    const Eigen::Index frames = anchor.rows();
    std::vector<ag::Var<float>> negatives;
    auto nrng = s.child("negatives").engine();
    for (int k = 0; k < cfg.negatives && frames > 1; ++k) {
      std::uniform_int_distribution<Eigen::Index> shift(1, frames - 1);
      const Eigen::Index sh = shift(nrng);
      std::vector<int> idx(static_cast<size_t>(frames));
      for (Eigen::Index r = 0; r < frames; ++r) idx[static_cast<size_t>(r)] = static_cast<int>((r + sh) % frames);
      negatives.push_back(ag::gather_rows(positive, std::move(idx)));
    }
    ag::Var<float> loss_c;
    if (!negatives.empty()) {
      loss_c = contrastive_loss<float>(anchor, positive, std::span<const ag::Var<float>>(negatives),
                                       static_cast<float>(cfg.temperature));
    }
    const ag::Var<float> timbre = model.timbre_var(t, model.mel(timbre_audio).frames);
    const ag::Var<float> wave = model.waveform_var(model.decoder_input_var(anchor, timbre, c.log_f0, c.vuv));
    const ag::Var<float> loss_s = stft_loss_op(wave, c.audio.samples);
    ag::Var<float> total = loss_s;
    if (loss_c.valid()) total = ag::add(total, ag::scale(loss_c, static_cast<float>(cfg.contrastive_weight)));
    double adv = 0.0;
    if (opt.discriminator() != nullptr) {
      const ag::Var<float> g_adv = lsgan((*model.discriminator())(wave), 1.0f);
      adv = g_adv.scalar();
      total = ag::add(total, ag::scale(g_adv, static_cast<float>(cfg.adversarial_weight)));
      fakes.push_back(wave.value());
    }
    const double tv = total.scalar();
    if (!std::isfinite(tv)) throw TrainingDiverged(step, "non-finite backbone loss");
    t.backward(total, inv_b);
    report.stft += loss_s.scalar() * inv_b;
    report.contrastive += (loss_c.valid() ? loss_c.scalar() : 0.0) * inv_b;
    report.adversarial += adv * inv_b;
  }
  // Discriminator gradients from the generator pass are discarded.
  if (opt.discriminator() != nullptr) opt.discriminator()->zero_grad();
  opt.generator().step(lr);
  opt.generator().zero_grad();

  if (opt.discriminator() != nullptr) {
    for (size_t i = 0; i < crops.size(); ++i) {
      ag::Tape<float> t;
      ag::Mat real(static_cast<Eigen::Index>(crops[i].audio.size()), 1);
      for (size_t j = 0; j < crops[i].audio.size(); ++j) real(static_cast<Eigen::Index>(j), 0) = crops[i].audio.samples[j];
      const ag::Var<float> d_loss = ag::add(lsgan((*model.discriminator())(t.constant(real)), 1.0f),
                                            lsgan((*model.discriminator())(t.constant(fakes[i])), 0.0f));
      if (!std::isfinite(d_loss.scalar())) throw TrainingDiverged(step, "non-finite discriminator loss");
      t.backward(d_loss, inv_b);
    }
    opt.discriminator()->step(lr);
    opt.discriminator()->zero_grad();
  }
  report.total = report.stft + cfg.contrastive_weight * report.contrastive + cfg.adversarial_weight * report.adversarial;
  return report;
}

double round_trip_loss(const Backbone& model, const std::vector<Waveform>& utterances) {
  if (utterances.empty()) throw InvalidInput("round_trip_loss: no utterances");
  double total = 0.0;
  for (const auto& w : utterances) {
    Waveform target = w;
    const auto d = model.analyze(w);
    const Waveform y = model.synthesize(d);
    target.samples.resize(y.size(), 0.0f);
    total += multires_stft_loss(y, target);
  }
  return total / static_cast<double>(utterances.size());
}

}  // namespace voicectl
