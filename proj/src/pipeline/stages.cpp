#include "voicectl/pipeline/stages.hpp"

#include <algorithm>
#include <sstream>

#include "voicectl/core/fs.hpp"
#include "voicectl/core/tensor_io.hpp"
#include "voicectl/pipeline/toy_corpus.hpp"
#include "voicectl/signal/wav.hpp"

namespace voicectl {

namespace fs = std::filesystem;

namespace {

constexpr long kLogEvery = 50;

Waveform load_row_audio(const Manifest& m, const UtteranceRecord& r) {
  Waveform w = read_wav(m.audio_file(r));
  w.origin = m.audio_file(r).string();
  return w;
}

// Running mean of the last kLogEvery reports.
class LossWindow {
 public:
  void add(const std::map<std::string, double>& terms) {
    for (const auto& [k, v] : terms) sums_[k] += v;
    ++n_;
  }
  nlohmann::json mean() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : sums_) j[k] = n_ ? v / static_cast<double>(n_) : 0.0;
    return j;
  }
  std::string line(long step) const {
    std::ostringstream s;
    s << "step " << step;
    for (const auto& [k, v] : sums_) s << " " << k << "=" << (n_ ? v / static_cast<double>(n_) : 0.0);
    return s.str();
  }
  void reset() {
    sums_.clear();
    n_ = 0;
  }

 private:
  std::map<std::string, double> sums_;
  long n_ = 0;
};

std::vector<size_t> draw_batch(std::mt19937_64& rng, size_t pool, int batch) {
  std::uniform_int_distribution<size_t> pick(0, pool - 1);
  std::vector<size_t> idx(static_cast<size_t>(batch));
  for (auto& i : idx) i = pick(rng);
  return idx;
}

long epoch_steps(long configured, size_t pool, int batch) {
  if (configured > 0) return configured;
  return std::max<long>(1, static_cast<long>(pool) / std::max(1, batch));
}

}  // namespace

StageResult train_backbone_stage(const Manifest& manifest, const BackboneStageConfig& cfg, const fs::path& out,
                                 std::uint64_t seed, const ProgressFn& log) {
  if (manifest.rows.empty()) throw InvalidInput("backbone stage: manifest has no rows");
  if (cfg.train.batch_size < 1 || cfg.train.steps < 0) throw ConfigError("backbone stage: bad step or batch count");
  std::vector<Waveform> audio;
  for (const auto& r : manifest.rows) audio.push_back(load_row_audio(manifest, r));

  Backbone model(cfg.model);
  BackboneOptimizer opt(model, cfg.train, epoch_steps(cfg.train.steps_per_epoch, audio.size(), cfg.train.batch_size));
  const SeedTree root = SeedTree(seed).child("backbone");
  auto rng = root.child("batches").engine();
  LossWindow window, last;
  for (long step = 0; step < cfg.train.steps; ++step) {
    std::vector<Waveform> batch;
    for (size_t i : draw_batch(rng, audio.size(), cfg.train.batch_size)) batch.push_back(audio[i]);
    const auto r = train_backbone_step(model, batch, opt, cfg.train, step, root.child("step").child(step));
    const std::map<std::string, double> terms = {
        {"contrastive", r.contrastive}, {"stft", r.stft}, {"adversarial", r.adversarial}, {"total", r.total}};
    window.add(terms);
    if ((step + 1) % kLogEvery == 0 || step + 1 == cfg.train.steps) {
      if (log) log("backbone " + window.line(step + 1));
      last = window;
      window.reset();
    }
  }
  StageResult res;
  res.final_losses = last.mean();
  res.dir = out;
  res.id = write_checkpoint(out, "backbone", model.params(), cfg, {}, res.final_losses);
  return res;
}

StageResult train_acoustic_stage(const Manifest& manifest, const AcousticStageConfig& cfg, const fs::path& out,
                                 std::uint64_t seed, const ProgressFn& log) {
  const auto bb = load_backbone(cfg.backbone);
  AcousticStageConfig snapshot = cfg;
  const std::string& lang = cfg.model.language;
  const auto table = manifest.symbol_tables.find(lang);
  if (table == manifest.symbol_tables.end()) throw ConfigError("manifest has no symbol table for language " + lang);
  if (snapshot.model.n_symbols == 0) snapshot.model.n_symbols = table->second.size();
  if (snapshot.model.n_symbols != table->second.size()) {
    throw ConfigError("n_symbols does not match the " + lang + " symbol table");
  }
  if (cfg.train.batch_size < 1 || cfg.train.steps < 0) throw ConfigError("acoustic stage: bad step or batch count");

  AcousticModel model(snapshot.model);
  std::vector<CheckpointParent> parents = {{"backbone", bb.info.id, cfg.backbone}};
  if (!cfg.style_encoder_from.empty()) {
    const auto donor = load_acoustic(cfg.style_encoder_from);
    model.adopt_style_encoder(*donor.model);
    parents.push_back({"acoustic", donor.info.id, cfg.style_encoder_from});
  }

  std::vector<AcousticExample> examples;
  for (const auto* r : manifest.by_language(lang)) {
    if (!r->durations) continue;
    examples.push_back(
        prepare_acoustic_example(*bb.model, model, load_row_audio(manifest, *r), r->symbols, *r->durations, r->id));
  }
  if (examples.empty()) throw InvalidInput("acoustic stage: no " + lang + " rows with durations");
  if (log) log("acoustic " + lang + ": " + std::to_string(examples.size()) + " utterances prepared");

  AcousticOptimizer opt(model, cfg.train, epoch_steps(cfg.train.steps_per_epoch, examples.size(), cfg.train.batch_size));
  auto rng = SeedTree(seed).child("acoustic").child(lang).child("batches").engine();
  LossWindow window, last;
  for (long step = 0; step < cfg.train.steps; ++step) {
    std::vector<const AcousticExample*> batch;
    for (size_t i : draw_batch(rng, examples.size(), cfg.train.batch_size)) batch.push_back(&examples[i]);
    const auto r = train_acoustic_step(model, batch, opt, cfg.train, step);
    std::map<std::string, double> terms = {{"linguistic", r.linguistic}, {"log_f0", r.log_f0}, {"vuv", r.vuv},
                                           {"duration", r.duration},     {"total", r.total}};
    if (snapshot.model.timbre_from_style) terms["timbre"] = r.timbre;
    window.add(terms);
    if ((step + 1) % kLogEvery == 0 || step + 1 == cfg.train.steps) {
      if (log) log("acoustic " + lang + " " + window.line(step + 1));
      last = window;
      window.reset();
    }
  }
  StageResult res;
  res.final_losses = last.mean();
  res.dir = out;
  res.id = write_checkpoint(out, "acoustic", model.params(), snapshot, parents, res.final_losses, &table->second);
  return res;
}

ControlEmbeddings desc_targets(const Backbone& backbone, const AcousticModel& acoustic, const Waveform& w) {
  const StyleEmbeddings s = acoustic.extract_style(w);
  ControlEmbeddings t;
  t.timbre = backbone.analyze(w).timbre.values;
  t.duration = s.duration;
  t.linguistic = s.linguistic;
  t.pitch = s.pitch;
  return t;
}

ControlEmbeddings cached_desc_targets(const fs::path& cache_dir, const std::string& key,
                                      const std::function<ControlEmbeddings()>& compute) {
  if (cache_dir.empty()) return compute();
  const fs::path file = cache_dir / (hex64(fnv1a(key)) + ".bin");
  if (fs::exists(file)) {
    const auto mats = read_tensors(file);
    if (mats.size() == 4) {
      ControlEmbeddings t;
      for (size_t k = 0; k < 4; ++k) t[k] = mats[k].row(0);
      return t;
    }
  }
  ControlEmbeddings t = compute();
  std::error_code ec;
  fs::create_directories(cache_dir, ec);
  std::vector<ag::Mat> mats;
  for (size_t k = 0; k < 4; ++k) mats.emplace_back(t[k]);
  write_tensors(file, mats);
  return t;
}

StageResult train_desc_stage(const Manifest& manifest, const DescStageConfig& cfg, const fs::path& out,
                             std::uint64_t seed, const ProgressFn& log) {
  const auto bb = load_backbone(cfg.backbone);
  const auto am = load_acoustic(cfg.acoustic);
  if (cfg.model.timbre_dim != kTimbreDim || cfg.model.style_dim != kStyleDim) {
    throw ConfigError("desc heads must emit 192-dim timbre and style embeddings");
  }
  if (cfg.train.batch_size < 1 || cfg.train.steps < 0) throw ConfigError("desc stage: bad step or batch count");
  const std::string& lang = am.model->config().language;

  std::vector<DescPair> pairs;
  for (const auto* r : manifest.by_language(lang)) {
    if (!r->description) continue;
    const Waveform w = load_row_audio(manifest, *r);
    const std::string key = read_file(manifest.audio_file(*r)) + "|" + bb.info.id + "|" + am.info.id;
    pairs.push_back({*r->description, cached_desc_targets(cfg.target_cache_dir, key, [&] {
                       return desc_targets(*bb.model, *am.model, w);
                     })});
  }
  if (pairs.empty()) throw InvalidInput("desc stage: no " + lang + " rows with descriptions");
  if (log) log("desc: " + std::to_string(pairs.size()) + " description pairs");

  DescStageConfig snapshot = cfg;
  if (snapshot.model.text_backend == "keyword" && snapshot.model.adjectives.empty()) {
    // Keep only the toy adjectives the training descriptions actually use.
    for (int i = 0; i < toy_max_speakers(); ++i) {
      const std::string& adj = toy_speaker_adjective(i);
      const bool seen = std::any_of(pairs.begin(), pairs.end(), [&](const DescPair& p) {
        return KeywordTextBackend({adj}).features(p.text)(KeywordTextBackend::kFixedChannels) > 0.0f;
      });
      if (seen) snapshot.model.adjectives.push_back(adj);
    }
  }
  DescModel model(snapshot.model);
  DescOptimizer opt(model, cfg.train, epoch_steps(cfg.train.steps_per_epoch, pairs.size(), cfg.train.batch_size));
  auto rng = SeedTree(seed).child("desc").child("batches").engine();
  LossWindow window, last;
  for (long step = 0; step < cfg.train.steps; ++step) {
    std::vector<const DescPair*> batch;
    for (size_t i : draw_batch(rng, pairs.size(), cfg.train.batch_size)) batch.push_back(&pairs[i]);
    const auto r = train_desc_step(model, batch, opt, step);
    window.add({{"nll_timbre", r.nll[0]},
                {"nll_duration", r.nll[1]},
                {"nll_linguistic", r.nll[2]},
                {"nll_pitch", r.nll[3]},
                {"total", r.total}});
    if ((step + 1) % kLogEvery == 0 || step + 1 == cfg.train.steps) {
      if (log) log("desc " + window.line(step + 1));
      last = window;
      window.reset();
    }
  }
  StageResult res;
  res.final_losses = last.mean();
  res.dir = out;
  res.id = write_checkpoint(out, "desc", model.params(), snapshot,
                            {{"backbone", bb.info.id, cfg.backbone}, {"acoustic", am.info.id, cfg.acoustic}},
                            res.final_losses);
  return res;
}

StageResult train_stage(const std::string& stage, const fs::path& manifest_path, const nlohmann::json& config,
                        const fs::path& out, std::uint64_t seed, const ProgressFn& log) {
  if (stage != "backbone" && stage != "acoustic" && stage != "desc") {
    throw ConfigError("unknown stage '" + stage + "' (backbone | acoustic | desc)");
  }
  // Prerequisites are checked before touching the manifest so ordering
  // mistakes surface as dependency errors.
  if (stage == "acoustic") {
    const auto cfg = parse_config<AcousticStageConfig>(config);
    read_checkpoint_info(cfg.backbone, "backbone");
    return train_acoustic_stage(read_manifest(manifest_path), cfg, out, seed, log);
  }
  if (stage == "desc") {
    const auto cfg = parse_config<DescStageConfig>(config);
    read_checkpoint_info(cfg.backbone, "backbone");
    read_checkpoint_info(cfg.acoustic, "acoustic");
    return train_desc_stage(read_manifest(manifest_path), cfg, out, seed, log);
  }
  return train_backbone_stage(read_manifest(manifest_path), parse_config<BackboneStageConfig>(config), out, seed, log);
}

}  // namespace voicectl
