#include "voicectl/pipeline/bundle.hpp"

#include <sstream>

#include "voicectl/core/fs.hpp"

namespace voicectl {

namespace fs = std::filesystem;

SystemBundle SystemBundle::load(const fs::path& file) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bundle " + file.string() + " is not valid JSON: " + e.what());
  }
  const fs::path base = file.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  SystemBundle b;
  try {
    b.backbone = resolve(j.at("backbone").get<std::string>());
    for (const auto& [lang, p] : j.at("acoustic").items()) b.acoustic[lang] = resolve(p.get<std::string>());
    if (j.contains("desc") && !j.at("desc").is_null()) b.desc = resolve(j.at("desc").get<std::string>());
    const std::string strategy = j.value("strategy", "mode");
    const double temperature = j.value("temperature", 1.0);
    if (strategy == "mode") {
      b.strategy = SampleStrategy::mode();
    } else if (strategy == "sample") {
      b.strategy = SampleStrategy::sample(temperature);
    } else {
      throw ConfigError("bundle strategy must be mode or sample");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad bundle " + file.string() + ": " + e.what());
  }
  return b;
}

void SystemBundle::save(const fs::path& file) const {
  nlohmann::json j;
  j["backbone"] = backbone.string();
  j["acoustic"] = nlohmann::json::object();
  for (const auto& [lang, p] : acoustic) j["acoustic"][lang] = p.string();
  if (desc) j["desc"] = desc->string();
  j["strategy"] = strategy.kind == SampleStrategy::Kind::kMode ? "mode" : "sample";
  j["temperature"] = strategy.temperature;
  write_file_atomic(file, j.dump(2) + "\n");
}

VoiceSystem::VoiceSystem(SystemBundle bundle) : bundle_(std::move(bundle)), backbone_(load_backbone(bundle_.backbone)) {}

const LoadedAcoustic& VoiceSystem::acoustic(const std::string& language) const {
  auto it = acoustic_.find(language);
  if (it != acoustic_.end()) return it->second;
  const auto path = bundle_.acoustic.find(language);
  if (path == bundle_.acoustic.end()) {
    throw ConfigError("bundle has no acoustic checkpoint for language " + language);
  }
  LoadedAcoustic am = load_acoustic(path->second);
  if (am.model->config().language != language) {
    throw ConfigError("acoustic checkpoint " + path->second.string() + " was trained for language " +
                      am.model->config().language);
  }
  return acoustic_.emplace(language, std::move(am)).first->second;
}

const LoadedDesc& VoiceSystem::desc() const {
  if (!desc_) {
    if (!bundle_.desc) throw DependencyError("desc", "bundle names no description control checkpoint");
    LoadedDesc d = load_desc(*bundle_.desc);
    if (d.model->config().timbre_dim != kTimbreDim || d.model->config().style_dim != kStyleDim) {
      throw ConfigError("description control checkpoint has incompatible embedding sizes");
    }
    desc_ = std::move(d);
  }
  return *desc_;
}

PhonemeSequence VoiceSystem::parse_text(const std::string& language, const std::string& text) const {
  const auto& table = acoustic(language).symbols;
  PhonemeSequence seq{language, {}};
  std::istringstream in(text);
  std::string name;
  while (in >> name) {
    const int id = table.id(name);
    if (id < 0) throw InvalidInput("symbol '" + name + "' is not in the " + language + " symbol table");
    seq.symbols.push_back(id);
  }
  if (seq.symbols.empty()) throw InvalidInput("text has no symbols");
  return seq;
}

SynthResult synthesize_from_embeddings(const VoiceSystem& sys, const PhonemeSequence& text,
                                       const StyleEmbeddings& style, const Eigen::RowVectorXf& timbre) {
  const AcousticModel& am = *sys.acoustic(text.language).model;
  SynthResult r;
  r.style = style;
  r.acoustic = am.generate(text.symbols, style);
  r.timbre = am.config().timbre_from_style ? am.timbre_from_style(style).values : timbre;
  DisentangledFeatures d;
  d.linguistic = r.acoustic.linguistic;
  d.log_f0 = r.acoustic.log_f0;
  d.timbre.values = r.timbre;
  r.audio = sys.backbone().synthesize(d);
  return r;
}

SynthResult synth_description(const VoiceSystem& sys, const PhonemeSequence& text, const std::string& description,
                              const SampleStrategy& strategy, std::uint64_t seed) {
  sys.acoustic(text.language);  // fail on a missing language before touching the desc model
  const ControlEmbeddings e = sys.desc().model->predict_embeddings(description, strategy, seed);
  return synthesize_from_embeddings(sys, text, {e.duration, e.linguistic, e.pitch}, e.timbre);
}

SynthResult synth_description(const VoiceSystem& sys, const PhonemeSequence& text, const std::string& description,
                              std::uint64_t seed) {
  return synth_description(sys, text, description, sys.bundle().strategy, seed);
}

SynthResult synth_zero_shot(const VoiceSystem& sys, const PhonemeSequence& text, const Waveform& reference) {
  const AcousticModel& am = *sys.acoustic(text.language).model;
  const StyleEmbeddings style = am.extract_style(reference);
  return synthesize_from_embeddings(sys, text, style, sys.backbone().analyze(reference).timbre.values);
}

}  // namespace voicectl
