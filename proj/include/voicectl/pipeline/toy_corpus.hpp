#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "voicectl/eval/level_phrases.hpp"
#include "voicectl/pipeline/manifest.hpp"
#include "voicectl/signal/waveform.hpp"

namespace voicectl {

/// Synthetic bilingual corpus. Rows = speakers x pitch levels x utterances x
/// languages; descriptions are attached to `described_language` only.
struct ToyCorpusSpec {
  int n_speakers = 4;
  int n_utterances = 2;  // per (speaker, pitch level, language)
  std::vector<double> pitch_levels_hz = {100.0, 130.0, 170.0, 220.0, 285.0};
  std::vector<double> speed_levels = {5.0, 6.6, 8.8, 11.7, 15.5};  // symbols per second
  std::vector<std::string> languages = {"A", "B"};
  std::string described_language = "A";
  int syllables = 6;
  int edge_silence_frames = 15;
  int sample_rate = kCorpusSampleRate;
  double hop_seconds = 0.01;
  int eval_texts = 3;  // held-out symbol sequences per language for sweeps
  std::uint64_t seed = 1234;

  /// Throws ConfigError on unordered levels or out-of-range counts.
  void check() const;
};

void to_json(nlohmann::json& j, const ToyCorpusSpec& s);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, ToyCorpusSpec& s);

/// Adjective used in descriptions of toy speaker `index`.
const std::string& toy_speaker_adjective(int index);
int toy_max_speakers();

/// Symbol inventory of a toy language ("pau" first, then consonants, vowels).
SymbolTable toy_symbol_table(const std::string& language);

/// Renders one utterance. `durations` are frames per symbol.
Waveform render_toy_utterance(const std::string& language, const std::vector<int>& symbols,
                              const std::vector<int>& durations, int speaker, double pitch_hz,
                              const ToyCorpusSpec& spec, std::uint64_t seed);

/// Frames per symbol for a CV syllable string at `rate` symbols per second.
std::vector<int> toy_durations(const std::string& language, const std::vector<int>& symbols, double rate,
                               const ToyCorpusSpec& spec);

/// Writes audio/, symbols/<lang>.txt, manifest.jsonl and texts.json into
/// `out_dir` and returns the manifest. Throws IoError when unwritable.
Manifest generate_toy_corpus(const ToyCorpusSpec& spec, const std::filesystem::path& out_dir,
                             const LevelPhrases& phrases = default_level_phrases());

/// Held-out evaluation texts: language -> list of symbol-id sequences.
struct EvalTexts {
  std::vector<std::pair<std::string, std::vector<std::vector<int>>>> by_language;
  const std::vector<std::vector<int>>& at(const std::string& language) const;
};
EvalTexts read_eval_texts(const std::filesystem::path& path);

}  // namespace voicectl
