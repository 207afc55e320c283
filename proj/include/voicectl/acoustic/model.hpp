#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "voicectl/acoustic/style.hpp"
#include "voicectl/backbone/backbone.hpp"

namespace voicectl {

struct AcousticConfig {
  std::string language = "A";
  int n_symbols = 0;
  std::string style_backend = "toy";  // toy | toy-rate-blind | mel | cached
  std::string style_cache_dir;
  int style_layers = 0;  // cached backend only
  int style_dim = 0;     // cached backend only
  int model_dim = 192;
  int encoder_layers = 4;
  int attention_heads = 4;
  int ff_dim = 784;
  int conv_kernel = 7;
  int decoder_hidden = 128;
  int decoder_kernel = 3;
  std::vector<int> decoder_dilations = {1, 2, 4, 8};
  int max_duration_frames = 200;
  /// Entangled ablation: predict the timbre embedding from the three style
  /// embeddings instead of taking it from the backbone analyzer.
  bool timbre_from_style = false;
  double hop_seconds = 0.01;
  std::uint64_t init_seed = 2;
};

struct StyleEmbeddings {
  Eigen::RowVectorXf duration, linguistic, pitch;  // 1 x 192 each
};

/// Output of one text-to-features pass.
struct AcousticOutput {
  std::vector<int> durations;
  std::vector<float> raw_durations;  // clamped to [0, max_duration_frames], before rounding
  LinguisticFeatures linguistic;
  ContinuousLogF0 log_f0;
  std::vector<float> vuv_prob;
};

/// Frames-per-symbol from raw predictions: clamp to [0, max], round half up.
std::vector<int> round_durations(const std::vector<float>& raw, int max_frames);

/// Row i of `hidden` repeated durations[i] times. Throws on length mismatch
/// or negative durations.
ag::Mat upsample(const ag::Mat& hidden, const std::vector<int>& durations);
/// Row indices that implement upsample(); usable with ag::gather_rows.
std::vector<int> upsample_index(Eigen::Index symbols, const std::vector<int>& durations);

/// Text encoder, style encoder, duration predictor and the linguistic and
/// pitch decoders. Parameter prefixes: "text.", "style.", "dur.", "ling_dec.",
/// "pitch_dec." and, for the entangled ablation, "timbre_head.".
class AcousticModel {
 public:
  explicit AcousticModel(AcousticConfig cfg);

  const AcousticConfig& config() const { return cfg_; }
  ag::ParamStore<float>& params() { return store_; }
  const ag::ParamStore<float>& params() const { return store_; }
  const StyleBackend& style_backend() const { return *backend_; }
  bool reference_mode() const { return cfg_.style_backend == "mel"; }

  /// Throws InvalidInput naming the position of the first unknown id.
  void check_symbols(const std::vector<int>& symbols) const;

  ag::Mat encode_text(const std::vector<int>& symbols) const;
  StyleEmbeddings extract_style(const Waveform& w) const;
  StyleEmbeddings style_from_features(const LayerwiseFeatures& lf) const;
  std::vector<int> predict_durations(const ag::Mat& text_hidden, const Eigen::RowVectorXf& duration_emb,
                                     std::vector<float>* raw = nullptr) const;
  LinguisticFeatures decode_linguistic(const ag::Mat& frame_hidden, const Eigen::RowVectorXf& linguistic_emb) const;
  /// Log-F0 per frame plus V/UV flags (probability >= 0.5); probabilities in `prob`.
  ContinuousLogF0 decode_pitch(const ag::Mat& frame_hidden, const Eigen::RowVectorXf& pitch_emb,
                               std::vector<float>* prob = nullptr) const;
  /// Entangled ablation only.
  TimbreEmbedding timbre_from_style(const StyleEmbeddings& s) const;

  AcousticOutput generate(const std::vector<int>& symbols, const StyleEmbeddings& style) const;

  // Tape-level pieces used by training.
  ag::Var<float> text_var(ag::Tape<float>& t, const std::vector<int>& symbols) const;
  std::array<ag::Var<float>, 3> style_vars(ag::Tape<float>& t, const LayerwiseFeatures& lf) const;
  /// ln(d + 1) per symbol, symbols x 1.
  ag::Var<float> log_duration_var(const ag::Var<float>& text_hidden, const ag::Var<float>& duration_emb) const;
  ag::Var<float> linguistic_var(const ag::Var<float>& frame_hidden, const ag::Var<float>& linguistic_emb) const;
  /// frames x 2: log-F0, V/UV logit.
  ag::Var<float> pitch_var(const ag::Var<float>& frame_hidden, const ag::Var<float>& pitch_emb) const;
  ag::Var<float> timbre_var(const ag::Var<float>& dur, const ag::Var<float>& ling, const ag::Var<float>& pitch) const;

  /// Copies every "style." parameter from `other` and marks them frozen.
  void adopt_style_encoder(const AcousticModel& other);

 private:
  struct ConformerBlock {
    ag::LayerNorm<float> ln_ff1, ln_att, ln_conv, ln_ff2, ln_out;
    ag::Linear<float> ff1_in, ff1_out, ff2_in, ff2_out;
    ag::MultiHeadAttention<float> att;
    ag::Linear<float> conv_in, conv_out;
    ag::Parameter<float>* depthwise = nullptr;
  };
  struct ConvStack {
    std::vector<ag::Conv1d<float>> convs;
    ag::Linear<float> out;
  };

  ag::Var<float> conformer(const ConformerBlock& b, const ag::Var<float>& x) const;
  ag::Var<float> run_stack(const ConvStack& s, const ag::Var<float>& frame_hidden, const ag::Var<float>& emb) const;
  ConvStack make_stack(const std::string& name, int in, int out, std::mt19937_64& rng);

  AcousticConfig cfg_;
  std::unique_ptr<StyleBackend> backend_;
  ag::ParamStore<float> store_;
  ag::Embedding<float> symbols_;
  std::vector<ConformerBlock> blocks_;
  // Aggregator mode.
  std::array<Aggregator, 3> aggregators_;
  // Reference-encoder mode.
  ag::LayerNorm<float> ref_ln_;
  std::vector<ag::Conv1d<float>> ref_convs_;
  std::array<ag::Linear<float>, 3> ref_proj_;
  ag::Conv1d<float> dur1_, dur2_;
  ag::Linear<float> dur_out_;
  ConvStack ling_dec_, pitch_dec_;
  ag::Linear<float> timbre_head_;
};

}  // namespace voicectl
