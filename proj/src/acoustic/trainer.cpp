#include "voicectl/acoustic/trainer.hpp"

#include <cmath>

#include "voicectl/core/errors.hpp"

namespace voicectl {

namespace {

// Rows [0, frames) of m, repeating the last row when m is short.
ag::Mat fit_rows(const ag::Mat& m, Eigen::Index frames) {
  ag::Mat out(frames, m.cols());
  for (Eigen::Index i = 0; i < frames; ++i) out.row(i) = m.row(std::min(i, m.rows() - 1));
  return out;
}

struct Forward {
  AcousticLossTerms<float> terms;
  ag::Var<float> timbre_loss;
  ag::Var<float> total;
};

Forward forward(ag::Tape<float>& t, const AcousticModel& model, const AcousticExample& ex,
                const AcousticTrainConfig& cfg) {
  Forward f;
  auto text = model.text_var(t, ex.symbols);
  auto style = model.style_vars(t, ex.style);
  auto log_d = model.log_duration_var(text, style[0]);
  auto frames = ag::gather_rows(text, upsample_index(text.rows(), ex.durations));
  auto ling = model.linguistic_var(frames, style[1]);
  auto pitch = model.pitch_var(frames, style[2]);
  auto dur_pred = ag::add_scalar(ag::exp(log_d), -1.0f);
  f.terms = acoustic_losses<float>(ling, ag::slice_cols(pitch, 0, 1), ag::slice_cols(pitch, 1, 1), dur_pred, ex.targets,
                                   static_cast<float>(cfg.vuv_weight));
  f.total = f.terms.total;
  if (model.config().timbre_from_style) {
    auto timbre = model.timbre_var(style[0], style[1], style[2]);
    f.timbre_loss = ag::mean(ag::abs(ag::sub(timbre, t.constant(ex.timbre))));
    f.total = ag::add(f.total, ag::scale(f.timbre_loss, static_cast<float>(cfg.timbre_weight)));
  }
  return f;
}

void accumulate(AcousticLossReport& r, const Forward& f, double w) {
  r.linguistic += w * f.terms.linguistic.scalar();
  r.log_f0 += w * f.terms.log_f0.scalar();
  r.vuv += w * f.terms.vuv.scalar();
  r.duration += w * f.terms.duration.scalar();
  if (f.timbre_loss.valid()) r.timbre += w * f.timbre_loss.scalar();
  r.total += w * f.total.scalar();
}

}  // namespace

AcousticExample prepare_acoustic_example(const Backbone& backbone, const AcousticModel& model, const Waveform& w,
                                         std::vector<int> symbols, std::vector<int> durations, std::string id) {
  model.check_symbols(symbols);
  if (durations.size() != symbols.size()) {
    throw InvalidInput("utterance " + id + ": durations length differs from symbols length");
  }
  long total = 0;
  for (int d : durations) {
    if (d < 0) throw InvalidInput("utterance " + id + ": negative duration");
    total += d;
  }
  if (total == 0) throw InvalidInput("utterance " + id + ": durations sum to zero");

  AcousticExample ex;
  ex.id = std::move(id);
  ex.symbols = std::move(symbols);
  ex.durations = std::move(durations);
  ex.style = model.style_backend().extract(w);
  const auto analysis = backbone.analyze(w);
  const auto frames = static_cast<Eigen::Index>(total);
  const Eigen::Index n = analysis.linguistic.frames.rows();
  ex.targets.linguistic = fit_rows(analysis.linguistic.frames, frames);
  ex.targets.log_f0.resize(frames, 1);
  ex.targets.vuv.resize(frames, 1);
  for (Eigen::Index i = 0; i < frames; ++i) {
    const auto j = static_cast<size_t>(std::min(i, n - 1));
    ex.targets.log_f0(i, 0) = static_cast<float>(analysis.log_f0.log_f0[j]);
    ex.targets.vuv(i, 0) = analysis.log_f0.vuv[j];
  }
  ex.targets.durations.resize(static_cast<Eigen::Index>(ex.durations.size()), 1);
  for (size_t i = 0; i < ex.durations.size(); ++i) ex.targets.durations(static_cast<Eigen::Index>(i), 0) = static_cast<float>(ex.durations[i]);
  ex.timbre = analysis.timbre.values;
  return ex;
}

AcousticOptimizer::AcousticOptimizer(AcousticModel& model, const AcousticTrainConfig& cfg, long steps_per_epoch)
    : sched_{cfg.learning_rate, cfg.lr_decay_per_epoch, steps_per_epoch} {
  ag::AdamWConfig ac;
  ac.lr = cfg.learning_rate;
  ac.weight_decay = cfg.weight_decay;
  ac.grad_clip_norm = cfg.grad_clip_norm;
  adam_ = std::make_unique<ag::AdamW<float>>(model.params().all(), ac);
}

AcousticLossReport train_acoustic_step(AcousticModel& model, const std::vector<const AcousticExample*>& batch,
                                       AcousticOptimizer& opt, const AcousticTrainConfig& cfg, long step) {
  if (batch.empty()) throw InvalidInput("train_acoustic_step: empty batch");
  AcousticLossReport report;
  const double w = 1.0 / static_cast<double>(batch.size());
  opt.adam().zero_grad();
  for (const auto* ex : batch) {
    ag::Tape<float> t;
    const Forward f = forward(t, model, *ex, cfg);
    if (!std::isfinite(f.total.scalar())) throw TrainingDiverged(step, "acoustic loss is not finite");
    accumulate(report, f, w);
    t.backward(f.total, static_cast<float>(w));
  }
  opt.adam().step(opt.lr(step));
  return report;
}

AcousticLossReport evaluate_acoustic(const AcousticModel& model, const AcousticExample& ex,
                                     const AcousticTrainConfig& cfg) {
  ag::Tape<float> t;
  AcousticLossReport r;
  accumulate(r, forward(t, model, ex, cfg), 1.0);
  return r;
}

}  // namespace voicectl
