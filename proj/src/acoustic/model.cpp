#include "voicectl/acoustic/model.hpp"

#include <cmath>

#include "voicectl/core/errors.hpp"

namespace voicectl {

namespace {

using V = ag::Var<float>;

Eigen::RowVectorXf row_of(const V& v) { return v.value().row(0); }

void check_embedding(const Eigen::RowVectorXf& e, const char* what) {
  if (e.size() != kStyleDim) throw InvalidInput(std::string(what) + " embedding must have 192 values");
}

}  // namespace

std::vector<int> round_durations(const std::vector<float>& raw, int max_frames) {
  std::vector<int> out(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const double d = std::clamp(static_cast<double>(raw[i]), 0.0, static_cast<double>(max_frames));
    out[i] = static_cast<int>(std::floor(d + 0.5));
  }
  return out;
}

std::vector<int> upsample_index(Eigen::Index symbols, const std::vector<int>& durations) {
  if (static_cast<Eigen::Index>(durations.size()) != symbols) {
    throw InvalidInput("upsample: " + std::to_string(durations.size()) + " durations for " + std::to_string(symbols) +
                       " symbols");
  }
  std::vector<int> idx;
  for (size_t i = 0; i < durations.size(); ++i) {
    if (durations[i] < 0) throw InvalidInput("upsample: negative duration");
    idx.insert(idx.end(), static_cast<size_t>(durations[i]), static_cast<int>(i));
  }
  return idx;
}

ag::Mat upsample(const ag::Mat& hidden, const std::vector<int>& durations) {
  const auto idx = upsample_index(hidden.rows(), durations);
  ag::Mat out(static_cast<Eigen::Index>(idx.size()), hidden.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = hidden.row(idx[i]);
  return out;
}

AcousticModel::ConvStack AcousticModel::make_stack(const std::string& name, int in, int out, std::mt19937_64& rng) {
  ConvStack s;
  int width = in;
  for (size_t i = 0; i < cfg_.decoder_dilations.size(); ++i) {
    s.convs.emplace_back(store_, name + ".conv" + std::to_string(i), width, cfg_.decoder_hidden, cfg_.decoder_kernel, rng,
                         1, cfg_.decoder_dilations[i]);
    width = cfg_.decoder_hidden;
  }
  s.out = ag::Linear<float>(store_, name + ".out", width, out, rng);
  return s;
}

AcousticModel::AcousticModel(AcousticConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.n_symbols < 1) throw ConfigError("acoustic model needs a symbol table");
  if (cfg_.model_dim % cfg_.attention_heads != 0) throw ConfigError("model_dim must divide by attention_heads");
  if (cfg_.decoder_dilations.empty()) throw ConfigError("decoder needs at least one convolution");
  backend_ = make_style_backend(cfg_.style_backend, cfg_.style_cache_dir, cfg_.style_layers, cfg_.style_dim);
  auto rng = SeedTree(cfg_.init_seed).child("acoustic-init").engine();
  const int d = cfg_.model_dim;

  symbols_ = ag::Embedding<float>(store_, "text.symbols", cfg_.n_symbols, d, rng);
  for (int l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string n = "text.block" + std::to_string(l);
    ConformerBlock b;
    b.ln_ff1 = ag::LayerNorm<float>(store_, n + ".ln_ff1", d);
    b.ff1_in = ag::Linear<float>(store_, n + ".ff1_in", d, cfg_.ff_dim, rng);
    b.ff1_out = ag::Linear<float>(store_, n + ".ff1_out", cfg_.ff_dim, d, rng);
    b.ln_att = ag::LayerNorm<float>(store_, n + ".ln_att", d);
    b.att = ag::MultiHeadAttention<float>(store_, n + ".att", d, cfg_.attention_heads, rng);
    b.ln_conv = ag::LayerNorm<float>(store_, n + ".ln_conv", d);
    b.conv_in = ag::Linear<float>(store_, n + ".conv_in", d, 2 * d, rng);
    b.depthwise = &store_.create(n + ".conv_dw", ag::uniform_init<float>(cfg_.conv_kernel, d,
                                                                         std::sqrt(3.0f / static_cast<float>(cfg_.conv_kernel)), rng));
    b.conv_out = ag::Linear<float>(store_, n + ".conv_out", d, d, rng);
    b.ln_ff2 = ag::LayerNorm<float>(store_, n + ".ln_ff2", d);
    b.ff2_in = ag::Linear<float>(store_, n + ".ff2_in", d, cfg_.ff_dim, rng);
    b.ff2_out = ag::Linear<float>(store_, n + ".ff2_out", cfg_.ff_dim, d, rng);
    b.ln_out = ag::LayerNorm<float>(store_, n + ".ln_out", d);
    blocks_.push_back(std::move(b));
  }

  if (reference_mode()) {
    const int chans[] = {128, 128, kStyleDim};
    int width = backend_->dim();
    ref_ln_ = ag::LayerNorm<float>(store_, "style.ref.ln_in", width);
    for (int i = 0; i < 3; ++i) {
      ref_convs_.emplace_back(store_, "style.ref.conv" + std::to_string(i), width, chans[i], 3, rng, 2);
      width = chans[i];
    }
    const char* names[] = {"style.proj_duration", "style.proj_linguistic", "style.proj_pitch"};
    for (int i = 0; i < 3; ++i) ref_proj_[static_cast<size_t>(i)] = ag::Linear<float>(store_, names[i], kStyleDim, kStyleDim, rng);
  } else {
    const char* names[] = {"style.duration", "style.linguistic", "style.pitch"};
    for (int i = 0; i < 3; ++i) {
      aggregators_[static_cast<size_t>(i)] = Aggregator(store_, names[i], backend_->layers(), backend_->dim(), rng);
    }
  }

  dur1_ = ag::Conv1d<float>(store_, "dur.conv0", d + kStyleDim, d, 3, rng);
  dur2_ = ag::Conv1d<float>(store_, "dur.conv1", d, d, 3, rng);
  dur_out_ = ag::Linear<float>(store_, "dur.out", d, 1, rng, 0.1f);
  dur_out_.b->value(0, 0) = std::log(11.0f);

  ling_dec_ = make_stack("ling_dec", d + kStyleDim, kLinguisticDim, rng);
  pitch_dec_ = make_stack("pitch_dec", d + kStyleDim, 2, rng);
  pitch_dec_.out.b->value(0, 0) = std::log(160.0f);

  if (cfg_.timbre_from_style) timbre_head_ = ag::Linear<float>(store_, "timbre_head", 3 * kStyleDim, kTimbreDim, rng);
}

void AcousticModel::check_symbols(const std::vector<int>& symbols) const {
  if (symbols.empty()) throw InvalidInput("phoneme sequence is empty");
  for (size_t i = 0; i < symbols.size(); ++i) {
    if (symbols[i] < 0 || symbols[i] >= cfg_.n_symbols) {
      throw InvalidInput("unknown symbol id " + std::to_string(symbols[i]) + " at position " + std::to_string(i) +
                         " for language " + cfg_.language);
    }
  }
}

V AcousticModel::conformer(const ConformerBlock& b, const V& x_in) const {
  V x = x_in;
  auto ff = [](const ag::Linear<float>& in, const ag::Linear<float>& out, const V& h) { return out(ag::silu(in(h))); };
  x = ag::add(x, ag::scale(ff(b.ff1_in, b.ff1_out, b.ln_ff1(x)), 0.5f));
  x = ag::add(x, b.att(b.ln_att(x)));
  const auto d = x.cols();
  V gated = b.conv_in(b.ln_conv(x));
  V glu = ag::mul(ag::slice_cols(gated, 0, d), ag::sigmoid(ag::slice_cols(gated, d, d)));
  V conv = b.conv_out(ag::silu(ag::depthwise_conv1d(glu, x.tape()->param(*b.depthwise))));
  x = ag::add(x, conv);
  x = ag::add(x, ag::scale(ff(b.ff2_in, b.ff2_out, b.ln_ff2(x)), 0.5f));
  return b.ln_out(x);
}

V AcousticModel::text_var(ag::Tape<float>& t, const std::vector<int>& symbols) const {
  check_symbols(symbols);
  const auto len = static_cast<Eigen::Index>(symbols.size());
  V x = ag::scale(symbols_(t, symbols), std::sqrt(static_cast<float>(cfg_.model_dim)));
  x = ag::add(x, t.constant(ag::sinusoid_positions<float>(len, cfg_.model_dim)));
  for (const auto& b : blocks_) x = conformer(b, x);
  return x;
}

std::array<V, 3> AcousticModel::style_vars(ag::Tape<float>& t, const LayerwiseFeatures& lf) const {
  check_layerwise(lf);
  if (reference_mode()) {
    V h = ref_ln_(t.constant(lf.layers.front()));
    for (const auto& c : ref_convs_) h = ag::leaky_relu(c(h));
    V pooled = ag::tanh(ag::mean_rows(h));
    return {ref_proj_[0](pooled), ref_proj_[1](pooled), ref_proj_[2](pooled)};
  }
  return {aggregators_[0](t, lf), aggregators_[1](t, lf), aggregators_[2](t, lf)};
}

V AcousticModel::log_duration_var(const V& text_hidden, const V& duration_emb) const {
  V in = ag::concat_cols<float>({text_hidden, ag::repeat_rows(duration_emb, text_hidden.rows())});
  V h = ag::leaky_relu(dur2_(ag::leaky_relu(dur1_(in))));
  return dur_out_(h);
}

V AcousticModel::run_stack(const ConvStack& s, const V& frame_hidden, const V& emb) const {
  V h = ag::concat_cols<float>({frame_hidden, ag::repeat_rows(emb, frame_hidden.rows())});
  for (const auto& c : s.convs) h = ag::leaky_relu(c(h));
  return s.out(h);
}

V AcousticModel::linguistic_var(const V& frame_hidden, const V& linguistic_emb) const {
  return run_stack(ling_dec_, frame_hidden, linguistic_emb);
}

V AcousticModel::pitch_var(const V& frame_hidden, const V& pitch_emb) const {
  return run_stack(pitch_dec_, frame_hidden, pitch_emb);
}

V AcousticModel::timbre_var(const V& dur, const V& ling, const V& pitch) const {
  if (!cfg_.timbre_from_style) throw ConfigError("this acoustic model does not predict timbre");
  return timbre_head_(ag::concat_cols<float>({dur, ling, pitch}));
}

ag::Mat AcousticModel::encode_text(const std::vector<int>& symbols) const {
  ag::Tape<float> t;
  return text_var(t, symbols).value();
}

StyleEmbeddings AcousticModel::style_from_features(const LayerwiseFeatures& lf) const {
  ag::Tape<float> t;
  auto v = style_vars(t, lf);
  return {row_of(v[0]), row_of(v[1]), row_of(v[2])};
}

StyleEmbeddings AcousticModel::extract_style(const Waveform& w) const { return style_from_features(backend_->extract(w)); }

std::vector<int> AcousticModel::predict_durations(const ag::Mat& text_hidden, const Eigen::RowVectorXf& duration_emb,
                                                  std::vector<float>* raw) const {
  check_embedding(duration_emb, "duration");
  ag::Tape<float> t;
  const ag::Mat z = log_duration_var(t.constant(text_hidden), t.constant(duration_emb)).value();
  std::vector<float> r(static_cast<size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double d = std::exp(std::min(static_cast<double>(z(i, 0)), 20.0)) - 1.0;
    r[static_cast<size_t>(i)] = static_cast<float>(std::clamp(d, 0.0, static_cast<double>(cfg_.max_duration_frames)));
  }
  auto out = round_durations(r, cfg_.max_duration_frames);
  if (raw != nullptr) *raw = std::move(r);
  return out;
}

LinguisticFeatures AcousticModel::decode_linguistic(const ag::Mat& frame_hidden,
                                                    const Eigen::RowVectorXf& linguistic_emb) const {
  check_embedding(linguistic_emb, "linguistic");
  LinguisticFeatures out;
  if (frame_hidden.rows() == 0) {
    out.frames.resize(0, kLinguisticDim);
    return out;
  }
  ag::Tape<float> t;
  out.frames = linguistic_var(t.constant(frame_hidden), t.constant(linguistic_emb)).value();
  return out;
}

ContinuousLogF0 AcousticModel::decode_pitch(const ag::Mat& frame_hidden, const Eigen::RowVectorXf& pitch_emb,
                                            std::vector<float>* prob) const {
  check_embedding(pitch_emb, "pitch");
  ContinuousLogF0 out;
  std::vector<float> p;
  if (frame_hidden.rows() > 0) {
    ag::Tape<float> t;
    const ag::Mat y = pitch_var(t.constant(frame_hidden), t.constant(pitch_emb)).value();
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const float pr = 1.0f / (1.0f + std::exp(-y(i, 1)));
      p.push_back(pr);
      out.log_f0.push_back(y(i, 0));
      out.vuv.push_back(pr >= 0.5f ? 1.0f : 0.0f);
    }
  }
  if (prob != nullptr) *prob = std::move(p);
  return out;
}

TimbreEmbedding AcousticModel::timbre_from_style(const StyleEmbeddings& s) const {
  check_embedding(s.duration, "duration");
  check_embedding(s.linguistic, "linguistic");
  check_embedding(s.pitch, "pitch");
  ag::Tape<float> t;
  return {row_of(timbre_var(t.constant(s.duration), t.constant(s.linguistic), t.constant(s.pitch)))};
}

AcousticOutput AcousticModel::generate(const std::vector<int>& symbols, const StyleEmbeddings& style) const {
  AcousticOutput out;
  const ag::Mat text = encode_text(symbols);
  out.durations = predict_durations(text, style.duration, &out.raw_durations);
  const ag::Mat frames = upsample(text, out.durations);
  out.linguistic = decode_linguistic(frames, style.linguistic);
  out.log_f0 = decode_pitch(frames, style.pitch, &out.vuv_prob);
  return out;
}

void AcousticModel::adopt_style_encoder(const AcousticModel& other) {
  for (auto* p : store_.with_prefix("style.")) {
    const auto* src = other.params().find(p->name);
    if (src == nullptr || src->value.rows() != p->value.rows() || src->value.cols() != p->value.cols()) {
      throw ConfigError("shared style encoder is incompatible: parameter " + p->name);
    }
    p->value = src->value;
    p->frozen = true;
  }
}

}  // namespace voicectl
