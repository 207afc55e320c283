#pragma once

#include <memory>
#include <string>
#include <vector>

#include "voicectl/autograd/nn.hpp"
#include "voicectl/backbone/content.hpp"
#include "voicectl/backbone/discriminator.hpp"
#include "voicectl/backbone/hn_synth.hpp"
#include "voicectl/signal/f0.hpp"
#include "voicectl/signal/mel.hpp"

namespace voicectl {

inline constexpr int kLinguisticDim = 128;
inline constexpr int kTimbreDim = 192;
inline constexpr int kSynthHiddenDim = 192;
inline constexpr int kDecoderInputDim = kSynthHiddenDim + 2;  // + log-F0 + V/UV

struct BackboneConfig {
  std::string content_encoder = "toy";  // toy | cached
  int content_dim = 64;
  std::string content_cache_dir;
  int sample_rate = kCorpusSampleRate;
  double hop_seconds = 0.01;
  std::vector<int> timbre_channels = {128, 128, 256, 256, 512, 512};
  int timbre_kernel = 3;
  int decoder_hidden = 256;
  HnConfig hn;
  double f0_min_hz = 50.0;
  double f0_max_hz = 800.0;
  double f0_floor_hz = 50.0;
  bool discriminator = false;  // build "disc.*" parameters for adversarial training
  std::uint64_t init_seed = 1;
};

struct TimbreEmbedding {
  Eigen::RowVectorXf values;  // 1 x 192
};

struct LinguisticFeatures {
  ag::Mat frames;  // frames x 128
};

struct DisentangledFeatures {
  LinguisticFeatures linguistic;
  ContinuousLogF0 log_f0;
  TimbreEmbedding timbre;
};

/// Analyzer + synthesizer. Parameter names are prefixed "ling.", "timbre.",
/// "synth." and "dec."; the optional discriminator lives under "disc.".
class Backbone {
 public:
  explicit Backbone(BackboneConfig cfg);

  const BackboneConfig& config() const { return cfg_; }
  ag::ParamStore<float>& params() { return store_; }
  const ag::ParamStore<float>& params() const { return store_; }
  const ContentEncoder& content_encoder() const { return *content_; }
  const Discriminator* discriminator() const { return disc_.get(); }
  int hop() const { return hop_samples(cfg_.sample_rate, cfg_.hop_seconds); }

  ContentFeatures extract_content(const Waveform& w) const;
  LinguisticFeatures encode_linguistic(const ContentFeatures& c) const;
  TimbreEmbedding encode_timbre(const MelSpectrogram& m) const;
  ContinuousLogF0 analyze_pitch(const Waveform& w) const;
  DisentangledFeatures analyze(const Waveform& w) const;
  Waveform synthesize(const DisentangledFeatures& d) const;

  /// frames x 194 decoder input; exposed so callers can check the width.
  ag::Mat decoder_input(const DisentangledFeatures& d) const;

  // Tape-level pieces used by training.
  ag::Var<float> linguistic_var(ag::Tape<float>& t, const ag::Mat& content) const;
  ag::Var<float> timbre_var(ag::Tape<float>& t, const ag::Mat& mel) const;
  ag::Var<float> decoder_input_var(const ag::Var<float>& linguistic, const ag::Var<float>& timbre,
                                   const std::vector<double>& log_f0, const std::vector<float>& vuv) const;
  /// Waveform column ((frames*hop) x 1) from a frames x 194 decoder input.
  ag::Var<float> waveform_var(const ag::Var<float>& decoder_input) const;

  MelSpectrogram mel(const Waveform& w) const;

 private:
  BackboneConfig cfg_;
  std::unique_ptr<ContentEncoder> content_;
  ag::ParamStore<float> store_;
  ag::Conv1d<float> ling1_, ling2_;
  std::vector<ag::Conv1d<float>> timbre_convs_;
  ag::Linear<float> timbre_out_;
  ag::Conv1d<float> synth1_, synth2_;
  ag::Linear<float> dec1_, dec2_;
  std::unique_ptr<Discriminator> disc_;
};

}  // namespace voicectl
