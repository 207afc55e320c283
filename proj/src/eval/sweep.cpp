#include "voicectl/eval/sweep.hpp"

#include <cstdio>
#include <set>

#include "voicectl/core/fs.hpp"
#include "voicectl/eval/metrics.hpp"
#include "voicectl/signal/wav.hpp"

namespace voicectl {

namespace fs = std::filesystem;

Attribute parse_attribute(const std::string& s) {
  if (s == "pitch") return Attribute::kPitch;
  if (s == "speed") return Attribute::kSpeed;
  throw InvalidInput("attribute must be pitch or speed, got '" + s + "'");
}

std::string attribute_name(Attribute a) { return a == Attribute::kPitch ? "pitch" : "speed"; }

int unit_count(const PhonemeSequence& text, const SymbolTable& table) {
  int n = 0;
  for (int id : text.symbols) n += is_pause_symbol(table.name(id)) ? 0 : 1;
  return n;
}

std::vector<SweepSample> synthesize_sweep(const VoiceSystem& sys, const std::vector<SweepText>& texts,
                                          Attribute attribute, std::uint64_t seed, const SweepOptions& opts) {
  if (opts.fixed_level < 1 || opts.fixed_level > 5) throw InvalidInput("fixed level must be in 1..5");
  std::vector<std::string> groups = opts.adjectives;
  if (groups.empty()) groups = sys.desc().model->config().adjectives;
  if (groups.empty()) throw InvalidInput("sweep needs at least one speaker adjective");
  const SeedTree root(seed);
  std::vector<SweepSample> out;
  for (const auto& t : texts) {
    const int units = unit_count(t.text, sys.acoustic(t.text.language).symbols);
    for (const auto& g : groups) {
      for (int level = 1; level <= 5; ++level) {
        SweepSample s;
        s.text_id = t.id;
        s.group = g;
        s.level = level;
        s.units = units;
        s.description = attribute == Attribute::kPitch ? opts.phrases.describe(g, level, opts.fixed_level)
                                                       : opts.phrases.describe(g, opts.fixed_level, level);
        const auto seed_k = root.child(t.id).child(g).child(static_cast<std::uint64_t>(level)).seed();
        s.audio = synth_description(sys, t.text, s.description, seed_k).audio;
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

namespace {

std::optional<double> try_pearson(const std::vector<double>& x, const std::vector<double>& y, const std::string& what,
                                  std::vector<std::string>& failures) {
  try {
    return pearson(x, y);
  } catch (const Error& e) {
    failures.push_back(what + ": " + e.what());
    return std::nullopt;
  }
}

}  // namespace

SweepReport measure_sweep(const std::vector<SweepSample>& samples, Attribute attribute, int normal_level,
                          const SpeakerEmbedder* embedder) {
  SweepReport r;
  r.attribute = attribute;
  r.embedder = embedder ? embedder->id() : "";
  std::vector<double> lv, val;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_text, by_group;
  for (const auto& s : samples) {
    SweepMeasurement m{s.text_id, s.group, s.level, s.description, s.units, std::nullopt, "", ""};
    try {
      m.value = attribute == Attribute::kPitch ? mean_f0(s.audio) : speaking_speed(s.units, s.audio);
    } catch (const Error& e) {
      m.error = e.what();
      r.failures.push_back(s.text_id + "/" + s.group + "/level " + std::to_string(s.level) + ": " + e.what());
    }
    if (m.value) {
      lv.push_back(s.level);
      val.push_back(*m.value);
      by_text[s.text_id].first.push_back(s.level);
      by_text[s.text_id].second.push_back(*m.value);
      by_group[s.group].first.push_back(s.level);
      by_group[s.group].second.push_back(*m.value);
    }
    r.measurements.push_back(std::move(m));
  }
  r.corr = try_pearson(lv, val, "pooled " + r.corr_name(), r.failures);
  for (const auto& [k, v] : by_text) {
    if (auto c = try_pearson(v.first, v.second, "text " + k, r.failures)) r.per_text_corr[k] = *c;
  }
  for (const auto& [k, v] : by_group) {
    if (auto c = try_pearson(v.first, v.second, "group " + k, r.failures)) r.per_group_corr[k] = *c;
  }

  if (embedder) {
    // One similarity per (text, group): the normal-level sample against the
    // other four levels.
    std::map<std::pair<std::string, std::string>, std::vector<const SweepSample*>> sets;
    for (const auto& s : samples) sets[{s.text_id, s.group}].push_back(&s);
    double total = 0.0;
    long count = 0;
    std::map<std::string, std::pair<double, long>> group_acc;
    for (const auto& [key, members] : sets) {
      const SweepSample* normal = nullptr;
      std::vector<Waveform> others;
      for (const auto* s : members) {
        if (s->level == normal_level) {
          normal = s;
        } else {
          others.push_back(s->audio);
        }
      }
      if (normal == nullptr || others.empty()) {
        r.failures.push_back(key.first + "/" + key.second + ": no normal-level sample for similarity");
        continue;
      }
      try {
        const double sim = speaker_similarity(normal->audio, others, *embedder);
        total += sim;
        ++count;
        group_acc[key.second].first += sim;
        group_acc[key.second].second += 1;
      } catch (const Error& e) {
        r.failures.push_back(key.first + "/" + key.second + ": " + e.what());
      }
    }
    if (count > 0) r.sim = total / static_cast<double>(count);
    for (const auto& [g, acc] : group_acc) r.per_group_sim[g] = acc.first / static_cast<double>(acc.second);
  }
  return r;
}

SweepReport run_sweep(const VoiceSystem& sys, const std::vector<SweepText>& texts, Attribute attribute,
                      std::uint64_t seed, const SpeakerEmbedder* embedder, const SweepOptions& opts) {
  return measure_sweep(synthesize_sweep(sys, texts, attribute, seed, opts), attribute, opts.fixed_level, embedder);
}

nlohmann::json SweepReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["attribute"] = attribute_name(attribute);
  j["corr_metric"] = corr_name();
  j["corr"] = opt(corr);
  j["sim_metric"] = sim_name();
  j["sim"] = opt(sim);
  j["embedder"] = embedder;
  j["per_text_corr"] = per_text_corr;
  j["per_group_corr"] = per_group_corr;
  j["per_group_sim"] = per_group_sim;
  j["measurements"] = nlohmann::json::array();
  for (const auto& m : measurements) {
    nlohmann::json e = {{"text_id", m.text_id}, {"group", m.group},     {"level", m.level},
                        {"description", m.description}, {"units", m.units}, {"value", opt(m.value)}};
    if (!m.error.empty()) e["error"] = m.error;
    if (!m.file.empty()) e["file"] = m.file;
    j["measurements"].push_back(e);
  }
  j["failures"] = failures;
  return j;
}

SweepReport SweepReport::from_json(const nlohmann::json& j) {
  auto opt = [](const nlohmann::json& v) { return v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()); };
  SweepReport r;
  try {
    r.attribute = parse_attribute(j.at("attribute").get<std::string>());
    r.corr = opt(j.at("corr"));
    r.sim = opt(j.at("sim"));
    r.embedder = j.value("embedder", "");
    r.per_text_corr = j.value("per_text_corr", std::map<std::string, double>{});
    r.per_group_corr = j.value("per_group_corr", std::map<std::string, double>{});
    r.per_group_sim = j.value("per_group_sim", std::map<std::string, double>{});
    for (const auto& e : j.at("measurements")) {
      SweepMeasurement m;
      m.text_id = e.at("text_id").get<std::string>();
      m.group = e.at("group").get<std::string>();
      m.level = e.at("level").get<int>();
      m.description = e.value("description", "");
      m.units = e.value("units", 0);
      m.value = opt(e.at("value"));
      m.error = e.value("error", "");
      m.file = e.value("file", "");
      r.measurements.push_back(m);
    }
    r.failures = j.value("failures", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad sweep report: ") + e.what());
  }
  return r;
}

void write_sweep_dir(const fs::path& dir, const std::vector<SweepSample>& samples) {
  fs::create_directories(dir);
  nlohmann::json map = nlohmann::json::array();
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    char name[64];
    std::snprintf(name, sizeof(name), "%04zu_L%d.wav", i, s.level);
    write_wav(dir / name, s.audio);
    map.push_back({{"file", name},
                   {"text_id", s.text_id},
                   {"group", s.group},
                   {"level", s.level},
                   {"description", s.description},
                   {"units", s.units}});
  }
  write_file_atomic(dir / "level_map.json", map.dump(2) + "\n");
}

std::vector<SweepSample> read_sweep_dir(const fs::path& dir) {
  nlohmann::json map;
  try {
    map = nlohmann::json::parse(read_file(dir / "level_map.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad level map in " + dir.string() + ": " + e.what());
  }
  std::vector<SweepSample> out;
  for (const auto& e : map) {
    SweepSample s;
    s.text_id = e.value("text_id", "");
    s.group = e.value("group", "");
    s.level = e.at("level").get<int>();
    if (s.level < 1 || s.level > 5) throw InvalidInput("level map entries need levels 1..5");
    s.description = e.value("description", "");
    s.units = e.value("units", 0);
    s.audio = read_wav(dir / e.at("file").get<std::string>());
    out.push_back(std::move(s));
  }
  return out;
}

std::string render_table(const std::vector<TableRow>& rows) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    char b[32];
    std::snprintf(b, sizeof(b), "%.3f", *v);
    return std::string(b);
  };
  size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.system.size());
  auto pad = [](std::string s, size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  std::string out = "| " + pad("System", width) + " | P-Corr | P-SIM  | S-Corr | S-SIM  |\n";
  out += "|" + std::string(width + 2, '-') + "|--------|--------|--------|--------|\n";
  for (const auto& r : rows) {
    out += "| " + pad(r.system, width) + " | " + pad(cell(r.pitch ? r.pitch->corr : std::nullopt), 6) + " | " +
           pad(cell(r.pitch ? r.pitch->sim : std::nullopt), 6) + " | " +
           pad(cell(r.speed ? r.speed->corr : std::nullopt), 6) + " | " +
           pad(cell(r.speed ? r.speed->sim : std::nullopt), 6) + " |\n";
  }
  return out;
}

}  // namespace voicectl
