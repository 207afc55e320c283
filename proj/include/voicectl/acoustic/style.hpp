#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "voicectl/autograd/nn.hpp"
#include "voicectl/signal/waveform.hpp"

namespace voicectl {

inline constexpr int kStyleDim = 192;

/// Hidden activations of a style encoder: one frames x D matrix per layer.
struct LayerwiseFeatures {
  std::vector<ag::Mat> layers;
  double frame_seconds = 0.02;

  Eigen::Index num_frames() const { return layers.empty() ? 0 : layers.front().rows(); }
  Eigen::Index dim() const { return layers.empty() ? 0 : layers.front().cols(); }
};

/// Throws InvalidInput unless there is at least one layer and all layers share
/// a nonzero frame count and width.
void check_layerwise(const LayerwiseFeatures& lf);

/// Frozen frame-level feature source for the style encoder.
class StyleBackend {
 public:
  virtual ~StyleBackend() = default;
  virtual std::string id() const = 0;
  virtual int layers() const = 0;
  virtual int dim() const = 0;
  virtual double frame_seconds() const = 0;
  /// Throws InvalidInput for waveforms shorter than one frame.
  virtual LayerwiseFeatures extract(const Waveform& w) const = 0;
};

/// Hand-built features from signal statistics over 40 ms frames.
///
/// Channels: utterance-level median log-F0, local log-F0 deviation from it,
/// voiced fraction, log energy, and local speaking rate (unvoiced-to-voiced
/// onsets per second within +-0.5 s). Layer l smooths the channels over
/// 2l+1 frames and maps them through a frozen random projection and tanh.
/// With `rate_aware` false every timing-bearing channel is masked, leaving
/// only the utterance-level pitch.
class ToyStyleBackend final : public StyleBackend {
 public:
  static constexpr int kChannels = 5;
  static constexpr double kFrameSeconds = 0.04;

  explicit ToyStyleBackend(bool rate_aware = true, int layers = 4, int dim = 16, std::uint64_t seed = 0x5719e);
  std::string id() const override { return rate_aware_ ? "toy-style" : "toy-style-rate-blind"; }
  int layers() const override { return static_cast<int>(proj_.size()); }
  int dim() const override { return dim_; }
  double frame_seconds() const override { return kFrameSeconds; }
  LayerwiseFeatures extract(const Waveform& w) const override;

  /// frames x kChannels statistics before projection (masked channels are 0).
  Eigen::MatrixXd channels(const Waveform& w) const;

 private:
  bool rate_aware_;
  int dim_;
  std::vector<Eigen::MatrixXd> proj_;  // (kChannels + 1) x dim per layer
};

/// Log-mel frames as a single layer; feeds the reference-encoder mode.
class MelStyleBackend final : public StyleBackend {
 public:
  std::string id() const override { return "mel"; }
  int layers() const override { return 1; }
  int dim() const override { return 80; }
  double frame_seconds() const override { return 0.01; }
  LayerwiseFeatures extract(const Waveform& w) const override;
};

/// Precomputed activations of a pretrained speech model: <dir>/<fnv64(origin)>.bin
/// with one matrix per layer and a .json sidecar {"layers", "dim",
/// "frame_seconds", "backend"}.
class CachedStyleBackend final : public StyleBackend {
 public:
  CachedStyleBackend(std::filesystem::path dir, int layers, int dim, double frame_seconds = 0.02);
  std::string id() const override { return "cached:" + dir_.string(); }
  int layers() const override { return layers_; }
  int dim() const override { return dim_; }
  double frame_seconds() const override { return frame_seconds_; }
  LayerwiseFeatures extract(const Waveform& w) const override;

 private:
  std::filesystem::path dir_;
  int layers_, dim_;
  double frame_seconds_;
};

/// Atomically writes a cache entry readable by CachedStyleBackend.
void write_style_cache(const std::filesystem::path& dir, const std::string& origin, const LayerwiseFeatures& lf,
                       const std::string& backend_id);

/// kind: toy | toy-rate-blind | mel | cached.
std::unique_ptr<StyleBackend> make_style_backend(const std::string& kind, const std::filesystem::path& cache_dir = {},
                                                 int layers = 0, int dim = 0);

/// Softmax layer weighting -> BiLSTM (192 per direction, summed) ->
/// feed-forward attention pooling.
struct Aggregator {
  Aggregator() = default;
  Aggregator(ag::ParamStore<float>& store, const std::string& name, int layers, int dim, std::mt19937_64& rng);

  /// 1 x 192 embedding.
  ag::Var<float> operator()(ag::Tape<float>& t, const LayerwiseFeatures& lf) const;

  /// Intermediate values for inspection.
  struct Trace {
    ag::Mat layer_weights;   // 1 x L, softmax-normalized
    ag::Mat mixed;           // frames x D, input to the recurrence
    ag::Mat attention;       // frames x 1, pooling weights
    ag::Mat embedding;       // 1 x 192
  };
  Trace trace(const LayerwiseFeatures& lf) const;

  ag::Parameter<float>* layer_logits = nullptr;
  ag::BiLstm<float> lstm;
  ag::Linear<float> att_hidden, att_score;

 private:
  ag::Var<float> forward(ag::Tape<float>& t, const LayerwiseFeatures& lf, Trace* trace) const;
};

}  // namespace voicectl
