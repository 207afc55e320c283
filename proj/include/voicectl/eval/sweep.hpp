#pragma once

#include <optional>

#include <nlohmann/json.hpp>

#include "voicectl/eval/level_phrases.hpp"
#include "voicectl/eval/speaker.hpp"
#include "voicectl/pipeline/bundle.hpp"

namespace voicectl {

enum class Attribute { kPitch, kSpeed };

Attribute parse_attribute(const std::string& s);
std::string attribute_name(Attribute a);

struct SweepText {
  std::string id;
  PhonemeSequence text;
};

/// Speech units of a text: symbols that are not pauses.
int unit_count(const PhonemeSequence& text, const SymbolTable& table);

/// One synthesized sweep sample. `group` is the speaker adjective held fixed
/// across the five levels.
struct SweepSample {
  std::string text_id;
  std::string group;
  int level = 0;
  std::string description;
  int units = 0;
  Waveform audio;
};

struct SweepOptions {
  std::vector<std::string> adjectives;  // empty: the description model's adjectives
  LevelPhrases phrases = default_level_phrases();
  int fixed_level = 3;  // level of the attribute not being swept
};

struct SweepMeasurement {
  std::string text_id;
  std::string group;
  int level = 0;
  std::string description;
  int units = 0;
  std::optional<double> value;  // mean F0 (Hz) or speaking speed (units/s)
  std::string error;
  std::string file;  // WAV name when written to a directory
};

/// Pooled correlation over every measured sample plus per-text and
/// per-group breakdowns. Fields are std::nullopt when undefined; the reason
/// is then listed in `failures`.
struct SweepReport {
  Attribute attribute = Attribute::kPitch;
  std::optional<double> corr;
  std::optional<double> sim;
  std::string embedder;
  std::map<std::string, double> per_text_corr;
  std::map<std::string, double> per_group_corr;
  std::map<std::string, double> per_group_sim;
  std::vector<SweepMeasurement> measurements;
  std::vector<std::string> failures;

  std::string corr_name() const { return attribute == Attribute::kPitch ? "P-Corr" : "S-Corr"; }
  std::string sim_name() const { return attribute == Attribute::kPitch ? "P-SIM" : "S-SIM"; }
  nlohmann::json to_json() const;
  static SweepReport from_json(const nlohmann::json& j);
};

/// Five levels x texts x adjectives; only the swept phrase changes.
std::vector<SweepSample> synthesize_sweep(const VoiceSystem& sys, const std::vector<SweepText>& texts,
                                          Attribute attribute, std::uint64_t seed, const SweepOptions& opts = {});

/// Measures samples and assembles the report. `embedder` may be null, which
/// leaves the similarity fields empty.
SweepReport measure_sweep(const std::vector<SweepSample>& samples, Attribute attribute, int normal_level,
                          const SpeakerEmbedder* embedder);

SweepReport run_sweep(const VoiceSystem& sys, const std::vector<SweepText>& texts, Attribute attribute,
                      std::uint64_t seed, const SpeakerEmbedder* embedder, const SweepOptions& opts = {});

/// WAV directory plus level_map.json: [{"file", "text_id", "group", "level",
/// "description", "units"}, ...].
void write_sweep_dir(const std::filesystem::path& dir, const std::vector<SweepSample>& samples);
std::vector<SweepSample> read_sweep_dir(const std::filesystem::path& dir);

/// Table with the columns System | P-Corr | P-SIM | S-Corr | S-SIM.
struct TableRow {
  std::string system;
  const SweepReport* pitch = nullptr;
  const SweepReport* speed = nullptr;
};
std::string render_table(const std::vector<TableRow>& rows);

}  // namespace voicectl
