#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "voicectl/autograd/optim.hpp"
#include "voicectl/desc/mdn.hpp"

namespace voicectl {

/// Case-folded, whitespace-collapsed, trimmed. Throws InvalidInput when
/// nothing is left.
std::string normalize_description(const std::string& text);

/// Bag-of-keywords description features.
///
/// Channels: [bias, pitch_dir, pitch_intensity, pitch_mentioned, speed_dir,
/// speed_intensity, speed_mentioned, one-hot speaker adjective...]. Direction
/// is -1/0/+1 for low/normal/high (slow/normal/fast), intensity is 1 after
/// "very".
class KeywordTextBackend {
 public:
  static constexpr int kFixedChannels = 7;
  explicit KeywordTextBackend(std::vector<std::string> adjectives);
  int dim() const { return kFixedChannels + static_cast<int>(adjectives_.size()); }
  const std::vector<std::string>& adjectives() const { return adjectives_; }
  Eigen::RowVectorXf features(const std::string& text) const;

 private:
  std::vector<std::string> adjectives_;
};

/// Cached token activations of a pretrained masked language model, taken
/// before its last layer: <dir>/<fnv64(normalized text)>.bin holding one
/// tokens x D matrix.
class CachedTokenFeatures {
 public:
  CachedTokenFeatures(std::filesystem::path dir, int dim);
  int dim() const { return dim_; }
  ag::Mat tokens(const std::string& text) const;
  static std::filesystem::path cache_path(const std::filesystem::path& dir, const std::string& normalized);

 private:
  std::filesystem::path dir_;
  int dim_;
};

struct DescConfig {
  std::string text_backend = "keyword";  // keyword | mlm
  std::vector<std::string> adjectives;     // keyword backend; empty = toy speaker adjectives
  std::string mlm_cache_dir;
  int mlm_dim = 768;
  int mlm_heads = 12;
  int mdn_hidden = 256;
  int components = kMixtureComponents;
  int timbre_dim = 192;
  int style_dim = 192;
  std::uint64_t init_seed = 3;
};

inline constexpr std::array<const char*, 4> kControlHeads = {"timbre", "duration", "linguistic", "pitch"};

struct ControlEmbeddings {
  Eigen::RowVectorXf timbre, duration, linguistic, pitch;

  const Eigen::RowVectorXf& operator[](size_t head) const;
  Eigen::RowVectorXf& operator[](size_t head);
};

/// Description encoder plus four MDN heads. Parameter prefixes: "text." (the
/// language-model adapter; only "text.att" trains) and "mdn.<head>.".
class DescModel {
 public:
  explicit DescModel(DescConfig cfg);

  const DescConfig& config() const { return cfg_; }
  ag::ParamStore<float>& params() { return store_; }
  const ag::ParamStore<float>& params() const { return store_; }
  int pooled_dim() const;

  /// Pooled description vector (1 x pooled_dim).
  Eigen::RowVectorXf encode_description(const std::string& text) const;
  ag::Var<float> encode_var(ag::Tape<float>& t, const std::string& text) const;

  MixtureParams mdn_forward(const Eigen::RowVectorXf& h, size_t head) const;
  const MdnHead& head(size_t i) const { return heads_[i]; }

  ControlEmbeddings predict_embeddings(const std::string& text, const SampleStrategy& strategy,
                                       std::uint64_t seed) const;

 private:
  DescConfig cfg_;
  ag::ParamStore<float> store_;
  std::unique_ptr<KeywordTextBackend> keywords_;
  std::unique_ptr<CachedTokenFeatures> tokens_;
  ag::MultiHeadAttention<float> mlm_att_;
  ag::LayerNorm<float> mlm_ln1_, mlm_ln2_;
  ag::Linear<float> mlm_ff1_, mlm_ff2_;
  std::array<MdnHead, 4> heads_;
};

struct DescTrainConfig {
  long steps = 600;
  int batch_size = 8;
  double learning_rate = 0.002;
  double lr_decay_per_epoch = 0.9975;
  long steps_per_epoch = 0;
  double weight_decay = 0.01;
  double grad_clip_norm = 1.0;
};

struct DescPair {
  std::string text;
  ControlEmbeddings target;
};

struct DescLossReport {
  std::array<double, 4> nll{};  // timbre, duration, linguistic, pitch
  double total = 0.0;
};

/// Each head gets its own optimizer so one head's gradient scale cannot
/// affect another head's clipped update; the adapter shares the timbre one.
class DescOptimizer {
 public:
  DescOptimizer(DescModel& model, const DescTrainConfig& cfg, long steps_per_epoch);
  double lr(long step) const { return sched_.lr(step); }
  std::vector<std::unique_ptr<ag::AdamW<float>>>& groups() { return groups_; }

 private:
  std::vector<std::unique_ptr<ag::AdamW<float>>> groups_;
  ag::ExponentialDecay sched_;
};

/// `head_mask[i]` false drops that head's gradient for this step.
DescLossReport train_desc_step(DescModel& model, const std::vector<const DescPair*>& batch, DescOptimizer& opt,
                               long step, std::array<bool, 4> head_mask = {true, true, true, true});

DescLossReport evaluate_desc(const DescModel& model, const std::vector<const DescPair*>& batch);

}  // namespace voicectl
