#include "voicectl/desc/model.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "voicectl/core/fs.hpp"
#include "voicectl/core/rng.hpp"
#include "voicectl/core/tensor_io.hpp"
#include "voicectl/pipeline/toy_corpus.hpp"

namespace voicectl {

std::string normalize_description(const std::string& text) {
  std::istringstream in(text);
  std::string word, out;
  while (in >> word) {
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
    if (!out.empty()) out += ' ';
    out += word;
  }
  if (out.empty()) throw InvalidInput("description is empty");
  return out;
}

namespace {

std::vector<std::string> tokenize(const std::string& normalized) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : normalized) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-') {
      cur += c;
    } else if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

struct Cue {
  float dir = 0.0f, intensity = 0.0f, mentioned = 0.0f;
};

// Looks at the word in front of `noun` (and a "very" before that).
Cue parse_cue(const std::vector<std::string>& words, const std::string& noun, const std::string& up,
              const std::string& down) {
  Cue c;
  for (size_t i = 0; i < words.size(); ++i) {
    if (words[i] != noun) continue;
    c.mentioned = 1.0f;
    if (i == 0) continue;
    const std::string& m = words[i - 1];
    if (m == up) c.dir = 1.0f;
    if (m == down) c.dir = -1.0f;
    if (i >= 2 && words[i - 2] == "very") c.intensity = 1.0f;
  }
  return c;
}

std::vector<std::string> toy_adjectives() {
  std::vector<std::string> out;
  for (int i = 0; i < toy_max_speakers(); ++i) out.push_back(toy_speaker_adjective(i));
  return out;
}

}  // namespace

KeywordTextBackend::KeywordTextBackend(std::vector<std::string> adjectives) : adjectives_(std::move(adjectives)) {
  for (auto& a : adjectives_) a = normalize_description(a);
}

Eigen::RowVectorXf KeywordTextBackend::features(const std::string& text) const {
  const auto words = tokenize(normalize_description(text));
  Eigen::RowVectorXf f = Eigen::RowVectorXf::Zero(dim());
  f(0) = 1.0f;
  const Cue p = parse_cue(words, "pitch", "high", "low");
  const Cue s = parse_cue(words, "speed", "fast", "slow");
  f(1) = p.dir;
  f(2) = p.intensity;
  f(3) = p.mentioned;
  f(4) = s.dir;
  f(5) = s.intensity;
  f(6) = s.mentioned;
  for (size_t a = 0; a < adjectives_.size(); ++a) {
    if (std::find(words.begin(), words.end(), adjectives_[a]) != words.end()) f(kFixedChannels + static_cast<int>(a)) = 1.0f;
  }
  return f;
}

CachedTokenFeatures::CachedTokenFeatures(std::filesystem::path dir, int dim) : dir_(std::move(dir)), dim_(dim) {
  if (dim <= 0) throw ConfigError("token feature width must be positive");
}

std::filesystem::path CachedTokenFeatures::cache_path(const std::filesystem::path& dir, const std::string& normalized) {
  return dir / (hex64(fnv1a(normalized)) + ".bin");
}

ag::Mat CachedTokenFeatures::tokens(const std::string& text) const {
  const auto path = cache_path(dir_, normalize_description(text));
  if (!std::filesystem::exists(path)) throw EncoderUnavailable("no cached token features for \"" + text + "\"");
  std::vector<ag::Mat> mats;
  try {
    mats = read_tensors(path);
  } catch (const std::exception& e) {
    throw EncoderUnavailable(std::string("unreadable token cache: ") + e.what());
  }
  if (mats.size() != 1 || mats[0].rows() < 1 || mats[0].cols() != dim_) {
    throw EncoderUnavailable("token cache " + path.string() + " has the wrong shape");
  }
  return mats[0];
}

const Eigen::RowVectorXf& ControlEmbeddings::operator[](size_t head) const {
  switch (head) {
    case 0: return timbre;
    case 1: return duration;
    case 2: return linguistic;
    case 3: return pitch;
    default: throw InvalidInput("control head index out of range");
  }
}

Eigen::RowVectorXf& ControlEmbeddings::operator[](size_t head) {
  return const_cast<Eigen::RowVectorXf&>(std::as_const(*this)[head]);
}

DescModel::DescModel(DescConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.components < 1 || cfg_.mdn_hidden < 1 || cfg_.timbre_dim < 1 || cfg_.style_dim < 1) {
    throw ConfigError("description model sizes must be positive");
  }
  std::mt19937_64 rng = SeedTree(cfg_.init_seed).engine();
  if (cfg_.text_backend == "keyword") {
    keywords_ = std::make_unique<KeywordTextBackend>(cfg_.adjectives.empty() ? toy_adjectives() : cfg_.adjectives);
  } else if (cfg_.text_backend == "mlm") {
    if (cfg_.mlm_heads < 1 || cfg_.mlm_dim % cfg_.mlm_heads != 0) {
      throw ConfigError("mlm_dim must be divisible by mlm_heads");
    }
    tokens_ = std::make_unique<CachedTokenFeatures>(cfg_.mlm_cache_dir, cfg_.mlm_dim);
    // Last transformer block of the language model. Its feed-forward half
    // comes from the cache directory and stays frozen; only the attention
    // half trains.
    mlm_att_ = ag::MultiHeadAttention<float>(store_, "text.att", cfg_.mlm_dim, cfg_.mlm_heads, rng);
    mlm_ln1_ = ag::LayerNorm<float>(store_, "text.ln1", cfg_.mlm_dim);
    mlm_ff1_ = ag::Linear<float>(store_, "text.ff1", cfg_.mlm_dim, 4 * cfg_.mlm_dim, rng);
    mlm_ff2_ = ag::Linear<float>(store_, "text.ff2", 4 * cfg_.mlm_dim, cfg_.mlm_dim, rng);
    mlm_ln2_ = ag::LayerNorm<float>(store_, "text.ln2", cfg_.mlm_dim);
    const auto ff_path = std::filesystem::path(cfg_.mlm_cache_dir) / "last_ff.bin";
    if (std::filesystem::exists(ff_path)) {
      const auto mats = read_tensors(ff_path);
      ag::Parameter<float>* dst[] = {mlm_ff1_.w, mlm_ff1_.b, mlm_ff2_.w, mlm_ff2_.b, mlm_ln2_.gamma, mlm_ln2_.beta};
      if (mats.size() != std::size(dst)) throw ConfigError("last_ff.bin must hold 6 tensors");
      for (size_t i = 0; i < mats.size(); ++i) {
        if (mats[i].rows() != dst[i]->value.rows() || mats[i].cols() != dst[i]->value.cols()) {
          throw ConfigError("last_ff.bin tensor " + std::to_string(i) + " has the wrong shape");
        }
        dst[i]->value = mats[i];
      }
    }
    for (auto* p : {mlm_ff1_.w, mlm_ff1_.b, mlm_ff2_.w, mlm_ff2_.b, mlm_ln2_.gamma, mlm_ln2_.beta}) p->frozen = true;
  } else {
    throw ConfigError("unknown text backend '" + cfg_.text_backend + "'");
  }
  for (size_t h = 0; h < kControlHeads.size(); ++h) {
    const int d = h == 0 ? cfg_.timbre_dim : cfg_.style_dim;
    heads_[h] = MdnHead(store_, std::string("mdn.") + kControlHeads[h], pooled_dim(), cfg_.mdn_hidden,
                        cfg_.components, d, rng);
  }
}

int DescModel::pooled_dim() const { return keywords_ ? keywords_->dim() : cfg_.mlm_dim; }

ag::Var<float> DescModel::encode_var(ag::Tape<float>& t, const std::string& text) const {
  if (keywords_) return t.constant(keywords_->features(text));
  auto x = t.constant(tokens_->tokens(text));
  x = mlm_ln1_(ag::add(x, mlm_att_(x)));
  x = mlm_ln2_(ag::add(x, mlm_ff2_(ag::gelu(mlm_ff1_(x)))));
  return ag::mean_rows(x);
}

Eigen::RowVectorXf DescModel::encode_description(const std::string& text) const {
  ag::Tape<float> t;
  return encode_var(t, text).value();
}

MixtureParams DescModel::mdn_forward(const Eigen::RowVectorXf& h, size_t head) const {
  if (head >= heads_.size()) throw InvalidInput("control head index out of range");
  if (h.size() != pooled_dim()) throw InvalidInput("pooled description vector has the wrong width");
  ag::Tape<float> t;
  return to_mixture_params(heads_[head](t.constant(h)));
}

ControlEmbeddings DescModel::predict_embeddings(const std::string& text, const SampleStrategy& strategy,
                                                std::uint64_t seed) const {
  const Eigen::RowVectorXf h = encode_description(text);
  const SeedTree root(seed);
  ControlEmbeddings out;
  for (size_t k = 0; k < heads_.size(); ++k) {
    const auto p = mdn_forward(h, k);
    out[k] = mdn_sample(p, strategy, root.child(kControlHeads[k]).seed()).cast<float>();
  }
  return out;
}

DescOptimizer::DescOptimizer(DescModel& model, const DescTrainConfig& cfg, long steps_per_epoch)
    : sched_{cfg.learning_rate, cfg.lr_decay_per_epoch, std::max(1L, steps_per_epoch)} {
  ag::AdamWConfig ac;
  ac.lr = cfg.learning_rate;
  ac.weight_decay = cfg.weight_decay;
  ac.grad_clip_norm = cfg.grad_clip_norm;
  std::vector<std::vector<ag::Parameter<float>*>> sets(kControlHeads.size() + 1);
  for (auto* p : model.params().all()) {
    size_t g = kControlHeads.size();
    for (size_t h = 0; h < kControlHeads.size(); ++h) {
      if (p->name.starts_with(std::string("mdn.") + kControlHeads[h] + ".")) g = h;
    }
    sets[g].push_back(p);
  }
  for (auto& s : sets) groups_.push_back(std::make_unique<ag::AdamW<float>>(std::move(s), ac));
}

namespace {

DescLossReport run_batch(const DescModel& model, const std::vector<const DescPair*>& batch, bool backward,
                         std::array<bool, 4> mask, long step) {
  if (batch.empty()) throw InvalidInput("empty description batch");
  DescLossReport r;
  const float inv = 1.0f / static_cast<float>(batch.size());
  for (const DescPair* pair : batch) {
    ag::Tape<float> t;
    auto h = model.encode_var(t, pair->text);
    std::vector<ag::Var<float>> terms;
    for (size_t k = 0; k < kControlHeads.size(); ++k) {
      const auto& target = pair->target[k];
      if (target.size() != model.head(k).dim) {
        throw InvalidInput(std::string("target ") + kControlHeads[k] + " embedding has the wrong width");
      }
      auto nll = mdn_nll<float>(model.head(k)(h), target);
      r.nll[k] += static_cast<double>(nll.scalar()) * inv;
      if (mask[k]) terms.push_back(nll);
    }
    if (backward && !terms.empty()) {
      auto total = terms[0];
      for (size_t i = 1; i < terms.size(); ++i) total = ag::add(total, terms[i]);
      t.backward(total, inv);
    }
  }
  for (double v : r.nll) r.total += v;
  if (!std::isfinite(r.total)) throw TrainingDiverged(step, "description model loss is not finite");
  return r;
}

}  // namespace

DescLossReport train_desc_step(DescModel& model, const std::vector<const DescPair*>& batch, DescOptimizer& opt,
                               long step, std::array<bool, 4> head_mask) {
  for (auto& g : opt.groups()) g->zero_grad();
  const auto r = run_batch(model, batch, true, head_mask, step);
  const double lr = opt.lr(step);
  for (auto& g : opt.groups()) g->step(lr);
  return r;
}

DescLossReport evaluate_desc(const DescModel& model, const std::vector<const DescPair*>& batch) {
  return run_batch(model, batch, false, {true, true, true, true}, -1);
}

}  // namespace voicectl
