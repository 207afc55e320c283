#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "voicectl/autograd/nn.hpp"
#include "voicectl/signal/waveform.hpp"

namespace voicectl {

class SpeakerEmbedder {
 public:
  virtual ~SpeakerEmbedder() = default;
  virtual std::string id() const = 0;
  /// Throws EmbedderUnavailable when no embedding can be produced.
  virtual Eigen::VectorXd embed(const Waveform& w) const = 0;
};

/// Mean cosine between the embedding of `normal` and each of `others`.
/// Embedder failures surface as EmbedderUnavailable.
double speaker_similarity(const Waveform& normal, const std::vector<Waveform>& others,
                          const SpeakerEmbedder& embedder);

struct MelStatsEmbedderConfig {
  int hidden = 128;
  int dim = 64;
  long steps = 400;
  double learning_rate = 0.002;
  double weight_decay = 0.01;
  std::uint64_t init_seed = 11;
};

/// Built-in embedder: mean and standard deviation of the log-mel frames above
/// a -40 dB gate, standardized, then a two-layer MLP trained as a speaker
/// classifier; the penultimate layer is the embedding.
class MelStatsEmbedder : public SpeakerEmbedder {
 public:
  MelStatsEmbedder(MelStatsEmbedderConfig cfg, std::vector<std::string> speakers);

  std::string id() const override { return "mel-stats"; }
  Eigen::VectorXd embed(const Waveform& w) const override;

  /// 160-dim mel statistics before standardization.
  static Eigen::RowVectorXf statistics(const Waveform& w);

  const std::vector<std::string>& speakers() const { return speakers_; }
  ag::ParamStore<float>& params() { return store_; }
  const MelStatsEmbedderConfig& config() const { return cfg_; }

  ag::Var<float> embed_var(ag::Tape<float>& t, const ag::Mat& stats) const;
  ag::Var<float> logits_var(const ag::Var<float>& emb) const { return classifier_(emb); }

  void save(const std::filesystem::path& dir) const;
  static std::unique_ptr<MelStatsEmbedder> load(const std::filesystem::path& dir);

 private:
  MelStatsEmbedderConfig cfg_;
  std::vector<std::string> speakers_;
  ag::ParamStore<float> store_;
  ag::Parameter<float>* mean_ = nullptr;
  ag::Parameter<float>* std_ = nullptr;
  ag::Linear<float> hidden_, out_, classifier_;
};

struct EmbedderTrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double train_accuracy = 0.0;
};

/// Full-batch classifier training on labelled utterances.
std::unique_ptr<MelStatsEmbedder> train_mel_stats_embedder(const std::vector<Waveform>& audio,
                                                           const std::vector<std::string>& speaker_ids,
                                                           const MelStatsEmbedderConfig& cfg,
                                                           EmbedderTrainReport* report = nullptr);

/// Adapter for embeddings precomputed by an external verification model:
/// <dir>/<fnv64 of the little-endian float samples>.bin holding a 1 x D
/// matrix.
class CachedSpeakerEmbedder : public SpeakerEmbedder {
 public:
  explicit CachedSpeakerEmbedder(std::filesystem::path dir);
  std::string id() const override { return "cached:" + dir_.string(); }
  Eigen::VectorXd embed(const Waveform& w) const override;
  static std::filesystem::path cache_path(const std::filesystem::path& dir, const Waveform& w);

 private:
  std::filesystem::path dir_;
};

}  // namespace voicectl
