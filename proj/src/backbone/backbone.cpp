#include "voicectl/backbone/backbone.hpp"

#include "voicectl/core/errors.hpp"
#include "voicectl/core/rng.hpp"

namespace voicectl {

namespace {

constexpr float kMelShift = 4.0f;
constexpr float kMelScale = 0.25f;
constexpr float kEnvBias = -3.5f;
constexpr float kNoiseBias = -5.0f;

}  // namespace

Backbone::Backbone(BackboneConfig cfg) : cfg_(std::move(cfg)) {
  content_ = make_content_encoder(cfg_.content_encoder, cfg_.content_dim, cfg_.content_cache_dir);
  if (cfg_.timbre_channels.empty()) throw ConfigError("timbre encoder needs at least one conv stage");
  auto rng = SeedTree(cfg_.init_seed).child("backbone-init").engine();
  ling1_ = ag::Conv1d<float>(store_, "ling.conv1", content_->dim(), 192, 3, rng);
  ling2_ = ag::Conv1d<float>(store_, "ling.conv2", 192, kLinguisticDim, 3, rng);
  Eigen::Index in = MelConfig{}.bins;
  for (size_t i = 0; i < cfg_.timbre_channels.size(); ++i) {
    timbre_convs_.emplace_back(store_, "timbre.conv" + std::to_string(i + 1), in, cfg_.timbre_channels[i],
                               cfg_.timbre_kernel, rng, 2);
    in = cfg_.timbre_channels[i];
  }
  timbre_out_ = ag::Linear<float>(store_, "timbre.out", in, kTimbreDim, rng);
  synth1_ = ag::Conv1d<float>(store_, "synth.conv1", kLinguisticDim + kTimbreDim, kSynthHiddenDim, 3, rng);
  synth2_ = ag::Conv1d<float>(store_, "synth.conv2", kSynthHiddenDim, kSynthHiddenDim, 3, rng);
  dec1_ = ag::Linear<float>(store_, "dec.fc1", kDecoderInputDim, cfg_.decoder_hidden, rng);
  dec2_ = ag::Linear<float>(store_, "dec.fc2", cfg_.decoder_hidden, cfg_.hn.n_env + cfg_.hn.n_noise, rng, 0.5f);
  dec2_.b->value.leftCols(cfg_.hn.n_env).setConstant(kEnvBias);
  dec2_.b->value.rightCols(cfg_.hn.n_noise).setConstant(kNoiseBias);
  if (cfg_.discriminator) {
    auto drng = SeedTree(cfg_.init_seed).child("discriminator").engine();
    disc_ = std::make_unique<Discriminator>(store_, drng);
  }
}

MelSpectrogram Backbone::mel(const Waveform& w) const {
  MelConfig mc;
  mc.hop_seconds = cfg_.hop_seconds;
  return mel_spectrogram(w, mc);
}

ContentFeatures Backbone::extract_content(const Waveform& w) const {
  return content_->extract(w, cfg_.hop_seconds);
}

ag::Var<float> Backbone::linguistic_var(ag::Tape<float>& t, const ag::Mat& content) const {
  if (content.cols() != content_->dim()) throw InvalidInput("encode_linguistic: content width mismatch");
  ag::Var<float> x = t.constant(content);
  return ling2_(ag::leaky_relu(ling1_(x)));
}

LinguisticFeatures Backbone::encode_linguistic(const ContentFeatures& c) const {
  ag::Tape<float> t;
  LinguisticFeatures out;
  if (c.frames.rows() == 0) {
    out.frames.resize(0, kLinguisticDim);
    return out;
  }
  out.frames = linguistic_var(t, c.frames).value();
  return out;
}

ag::Var<float> Backbone::timbre_var(ag::Tape<float>& t, const ag::Mat& mel) const {
  if (mel.rows() == 0) throw InvalidInput("encode_timbre: empty spectrogram");
  ag::Var<float> x = t.constant(((mel.array() + kMelShift) * kMelScale).matrix());
  for (const auto& conv : timbre_convs_) x = ag::leaky_relu(conv(x));
  return timbre_out_(ag::mean_rows(x));
}

TimbreEmbedding Backbone::encode_timbre(const MelSpectrogram& m) const {
  ag::Tape<float> t;
  TimbreEmbedding out;
  out.values = timbre_var(t, m.frames).value().row(0);
  return out;
}

ContinuousLogF0 Backbone::analyze_pitch(const Waveform& w) const {
  const auto track = estimate_f0(w, {cfg_.f0_min_hz, cfg_.f0_max_hz}, cfg_.hop_seconds);
  return to_continuous_logf0(track, cfg_.f0_floor_hz);
}

DisentangledFeatures Backbone::analyze(const Waveform& w) const {
  DisentangledFeatures d;
  d.linguistic = encode_linguistic(extract_content(w));
  d.log_f0 = analyze_pitch(w);
  d.timbre = encode_timbre(mel(w));
  if (static_cast<size_t>(d.linguistic.frames.rows()) != d.log_f0.log_f0.size()) {
    throw InvalidInput("analyze: content and pitch frame counts disagree");
  }
  return d;
}

ag::Var<float> Backbone::decoder_input_var(const ag::Var<float>& linguistic, const ag::Var<float>& timbre,
                                           const std::vector<double>& log_f0, const std::vector<float>& vuv) const {
  const Eigen::Index frames = linguistic.rows();
  if (static_cast<Eigen::Index>(log_f0.size()) != frames || static_cast<Eigen::Index>(vuv.size()) != frames) {
    throw InvalidInput("synthesize: linguistic and log-F0 frame counts differ");
  }
  if (timbre.rows() != 1 || timbre.cols() != kTimbreDim) throw InvalidInput("synthesize: timbre must be 1 x 192");
  ag::Tape<float>& t = *linguistic.tape();
  ag::Var<float> cond = ag::concat_cols<float>({linguistic, ag::repeat_rows(timbre, frames)});
  ag::Var<float> h = ag::leaky_relu(synth2_(ag::leaky_relu(synth1_(cond))));
  ag::Mat pitch(frames, 2);
  for (Eigen::Index i = 0; i < frames; ++i) {
    pitch(i, 0) = static_cast<float>(log_f0[static_cast<size_t>(i)]);
    pitch(i, 1) = vuv[static_cast<size_t>(i)];
  }
  return ag::concat_cols<float>({h, t.constant(std::move(pitch))});
}

ag::Var<float> Backbone::waveform_var(const ag::Var<float>& x) const {
  if (x.cols() != kDecoderInputDim) throw InvalidInput("waveform decoder expects 194-dim frames");
  const Eigen::Index frames = x.rows();
  std::vector<double> f0(static_cast<size_t>(frames));
  std::vector<float> vuv(static_cast<size_t>(frames));
  for (Eigen::Index i = 0; i < frames; ++i) {
    f0[static_cast<size_t>(i)] = std::exp(static_cast<double>(x.value()(i, kSynthHiddenDim)));
    vuv[static_cast<size_t>(i)] = std::clamp(x.value()(i, kSynthHiddenDim + 1), 0.0f, 1.0f);
  }
  ag::Var<float> ctrl = dec2_(ag::leaky_relu(dec1_(x)));
  return hn_decode(ag::slice_cols(ctrl, 0, cfg_.hn.n_env), ag::slice_cols(ctrl, cfg_.hn.n_env, cfg_.hn.n_noise),
                   std::move(f0), std::move(vuv), hop(), cfg_.sample_rate, cfg_.hn);
}

ag::Mat Backbone::decoder_input(const DisentangledFeatures& d) const {
  ag::Tape<float> t;
  ag::Var<float> ling = t.constant(d.linguistic.frames);
  ag::Var<float> timbre = t.constant(d.timbre.values);
  return decoder_input_var(ling, timbre, d.log_f0.log_f0, d.log_f0.vuv).value();
}

Waveform Backbone::synthesize(const DisentangledFeatures& d) const {
  if (d.linguistic.frames.cols() != kLinguisticDim) throw InvalidInput("synthesize: linguistic features must be 128-dim");
  Waveform out;
  out.sample_rate = cfg_.sample_rate;
  if (d.linguistic.frames.rows() == 0) {
    if (!d.log_f0.log_f0.empty()) throw InvalidInput("synthesize: linguistic and log-F0 frame counts differ");
    return out;
  }
  ag::Tape<float> t;
  ag::Var<float> x = decoder_input_var(t.constant(d.linguistic.frames), t.constant(d.timbre.values),
                                       d.log_f0.log_f0, d.log_f0.vuv);
  const ag::Mat& y = waveform_var(x).value();
  out.samples.assign(y.data(), y.data() + y.size());
  return out;
}

}  // namespace voicectl
