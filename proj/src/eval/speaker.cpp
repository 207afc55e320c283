#include "voicectl/eval/speaker.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "voicectl/autograd/optim.hpp"
#include "voicectl/core/errors.hpp"
#include "voicectl/core/fs.hpp"
#include "voicectl/core/rng.hpp"
#include "voicectl/core/tensor_io.hpp"
#include "voicectl/eval/metrics.hpp"
#include "voicectl/signal/mel.hpp"

namespace voicectl {

namespace {

constexpr int kStatsDim = 160;
constexpr double kGateLn = 4.6051701859880914;  // 40 dB in log magnitude

}  // namespace

double speaker_similarity(const Waveform& normal, const std::vector<Waveform>& others,
                          const SpeakerEmbedder& embedder) {
  Eigen::VectorXd n;
  std::vector<Eigen::VectorXd> o;
  try {
    n = embedder.embed(normal);
    for (const auto& w : others) o.push_back(embedder.embed(w));
  } catch (const EmbedderUnavailable&) {
    throw;
  } catch (const std::exception& e) {
    throw EmbedderUnavailable(embedder.id() + ": " + e.what());
  }
  return mean_cosine(n, o);
}

MelStatsEmbedder::MelStatsEmbedder(MelStatsEmbedderConfig cfg, std::vector<std::string> speakers)
    : cfg_(cfg), speakers_(std::move(speakers)) {
  if (speakers_.size() < 2) throw ConfigError("speaker embedder needs at least two speakers");
  if (cfg_.hidden < 1 || cfg_.dim < 1) throw ConfigError("speaker embedder sizes must be positive");
  auto rng = SeedTree(cfg_.init_seed).engine();
  mean_ = &store_.create("norm.mean", ag::Mat::Zero(1, kStatsDim));
  std_ = &store_.create("norm.std", ag::Mat::Ones(1, kStatsDim));
  mean_->frozen = true;
  std_->frozen = true;
  hidden_ = ag::Linear<float>(store_, "hidden", kStatsDim, cfg_.hidden, rng);
  out_ = ag::Linear<float>(store_, "embed", cfg_.hidden, cfg_.dim, rng);
  classifier_ = ag::Linear<float>(store_, "classifier", cfg_.dim, static_cast<Eigen::Index>(speakers_.size()), rng);
}

Eigen::RowVectorXf MelStatsEmbedder::statistics(const Waveform& w) {
  const MelSpectrogram m = mel_spectrogram(w);
  if (m.num_frames() == 0) throw InvalidInput("speaker embedder: empty audio");
  const Eigen::VectorXf peak = m.frames.rowwise().maxCoeff();
  const float gate = peak.maxCoeff() - static_cast<float>(kGateLn);
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < m.num_frames(); ++i) {
    if (peak(i) >= gate) active.push_back(i);
  }
  Eigen::MatrixXf sel(static_cast<Eigen::Index>(active.size()), m.bins);
  for (size_t i = 0; i < active.size(); ++i) sel.row(static_cast<Eigen::Index>(i)) = m.frames.row(active[i]);
  const Eigen::RowVectorXf mu = sel.colwise().mean();
  const Eigen::RowVectorXf sd = ((sel.rowwise() - mu).array().square().colwise().mean()).sqrt();
  Eigen::RowVectorXf out(kStatsDim);
  out << mu, sd;
  return out;
}

ag::Var<float> MelStatsEmbedder::embed_var(ag::Tape<float>& t, const ag::Mat& stats) const {
  ag::Mat z = (stats.rowwise() - mean_->value.row(0)).array().rowwise() / std_->value.row(0).array();
  return out_(ag::tanh(hidden_(t.constant(z))));
}

Eigen::VectorXd MelStatsEmbedder::embed(const Waveform& w) const {
  ag::Tape<float> t;
  return embed_var(t, statistics(w)).value().row(0).transpose().cast<double>();
}

void MelStatsEmbedder::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_params(store_, dir / "params.bin");
  const nlohmann::json j = {{"kind", "mel-stats"},
                            {"speakers", speakers_},
                            {"hidden", cfg_.hidden},
                            {"dim", cfg_.dim},
                            {"steps", cfg_.steps},
                            {"learning_rate", cfg_.learning_rate},
                            {"weight_decay", cfg_.weight_decay},
                            {"init_seed", cfg_.init_seed}};
  write_file_atomic(dir / "config.json", j.dump(2) + "\n");
}

std::unique_ptr<MelStatsEmbedder> MelStatsEmbedder::load(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "config.json") || !std::filesystem::exists(dir / "params.bin")) {
    throw EmbedderUnavailable("no speaker embedder at " + dir.string());
  }
  MelStatsEmbedderConfig cfg;
  std::vector<std::string> speakers;
  try {
    const auto j = nlohmann::json::parse(read_file(dir / "config.json"));
    speakers = j.at("speakers").get<std::vector<std::string>>();
    cfg.hidden = j.at("hidden").get<int>();
    cfg.dim = j.at("dim").get<int>();
    cfg.steps = j.value("steps", cfg.steps);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.init_seed = j.value("init_seed", cfg.init_seed);
  } catch (const nlohmann::json::exception& e) {
    throw EmbedderUnavailable("bad embedder config in " + dir.string() + ": " + e.what());
  }
  auto e = std::make_unique<MelStatsEmbedder>(cfg, speakers);
  load_params(e->params(), dir / "params.bin");
  return e;
}

std::unique_ptr<MelStatsEmbedder> train_mel_stats_embedder(const std::vector<Waveform>& audio,
                                                           const std::vector<std::string>& speaker_ids,
                                                           const MelStatsEmbedderConfig& cfg,
                                                           EmbedderTrainReport* report) {
  if (audio.size() != speaker_ids.size() || audio.empty()) {
    throw InvalidInput("embedder training needs one speaker id per utterance");
  }
  std::vector<std::string> speakers = speaker_ids;
  std::sort(speakers.begin(), speakers.end());
  speakers.erase(std::unique(speakers.begin(), speakers.end()), speakers.end());
  auto model = std::make_unique<MelStatsEmbedder>(cfg, speakers);

  const auto n = static_cast<Eigen::Index>(audio.size());
  ag::Mat stats(n, kStatsDim);
  ag::Mat onehot = ag::Mat::Zero(n, static_cast<Eigen::Index>(speakers.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    stats.row(i) = MelStatsEmbedder::statistics(audio[static_cast<size_t>(i)]);
    const auto it = std::lower_bound(speakers.begin(), speakers.end(), speaker_ids[static_cast<size_t>(i)]);
    onehot(i, it - speakers.begin()) = 1.0f;
  }
  const Eigen::RowVectorXf mu = stats.colwise().mean();
  Eigen::RowVectorXf sd = ((stats.rowwise() - mu).array().square().colwise().mean()).sqrt();
  sd = sd.cwiseMax(1e-3f);
  model->params().find("norm.mean")->value = mu;
  model->params().find("norm.std")->value = sd;

  ag::AdamWConfig ac;
  ac.lr = cfg.learning_rate;
  ac.weight_decay = cfg.weight_decay;
  ag::AdamW<float> opt(model->params().all(), ac);
  EmbedderTrainReport rep;
  for (long step = 0; step < cfg.steps; ++step) {
    ag::Tape<float> t;
    auto logits = model->logits_var(model->embed_var(t, stats));
    auto loss = ag::scale(ag::sum(ag::mul(ag::log_softmax_rows(logits), t.constant(onehot))),
                          -1.0f / static_cast<float>(n));
    if (step == 0) rep.initial_loss = loss.scalar();
    rep.final_loss = loss.scalar();
    if (!std::isfinite(rep.final_loss)) throw TrainingDiverged(step, "speaker embedder loss is not finite");
    t.backward(loss);
    opt.step(cfg.learning_rate);
    opt.zero_grad();
  }
  ag::Tape<float> t;
  const ag::Mat logits = model->logits_var(model->embed_var(t, stats)).value();
  long correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    correct += onehot(i, best) > 0.5f ? 1 : 0;
  }
  rep.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  if (report) *report = rep;
  return model;
}

CachedSpeakerEmbedder::CachedSpeakerEmbedder(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path CachedSpeakerEmbedder::cache_path(const std::filesystem::path& dir, const Waveform& w) {
  const std::string_view bytes(reinterpret_cast<const char*>(w.samples.data()), w.samples.size() * sizeof(float));
  return dir / (hex64(fnv1a(bytes)) + ".bin");
}

Eigen::VectorXd CachedSpeakerEmbedder::embed(const Waveform& w) const {
  const auto path = cache_path(dir_, w);
  if (!std::filesystem::exists(path)) throw EmbedderUnavailable("no cached embedding " + path.string());
  std::vector<ag::Mat> mats;
  try {
    mats = read_tensors(path);
  } catch (const std::exception& e) {
    throw EmbedderUnavailable(std::string("unreadable embedding cache: ") + e.what());
  }
  if (mats.size() != 1 || mats[0].rows() != 1) throw EmbedderUnavailable("embedding cache must hold one row");
  return mats[0].row(0).transpose().cast<double>();
}

}  // namespace voicectl
