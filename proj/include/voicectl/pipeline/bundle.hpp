#pragma once

#include <optional>

#include "voicectl/pipeline/checkpoint.hpp"

namespace voicectl {

/// Bundle file: {"backbone": DIR, "acoustic": {"A": DIR, ...}, "desc": DIR,
/// "strategy": "mode" | "sample", "temperature": 1.0}. Relative paths are
/// resolved against the bundle file's directory. "desc" may be omitted for
/// zero-shot-only systems.
struct SystemBundle {
  std::filesystem::path backbone;
  std::map<std::string, std::filesystem::path> acoustic;
  std::optional<std::filesystem::path> desc;
  SampleStrategy strategy;

  static SystemBundle load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;
};

/// A text to speak: symbol ids in `language`'s table.
struct PhonemeSequence {
  std::string language;
  std::vector<int> symbols;
};

/// Read-only loaded system. Acoustic models and the description model are
/// loaded on first use, so a zero-shot system works without a desc
/// checkpoint.
class VoiceSystem {
 public:
  explicit VoiceSystem(SystemBundle bundle);

  const SystemBundle& bundle() const { return bundle_; }
  const Backbone& backbone() const { return *backbone_.model; }
  const CheckpointInfo& backbone_info() const { return backbone_.info; }
  /// ConfigError when the bundle has no acoustic checkpoint for `language`.
  const LoadedAcoustic& acoustic(const std::string& language) const;
  const LoadedDesc& desc() const;

  /// Symbol names (space separated) to ids for `language`.
  PhonemeSequence parse_text(const std::string& language, const std::string& text) const;

 private:
  SystemBundle bundle_;
  LoadedBackbone backbone_;
  mutable std::map<std::string, LoadedAcoustic> acoustic_;
  mutable std::optional<LoadedDesc> desc_;
};

struct SynthResult {
  Waveform audio;
  StyleEmbeddings style;
  Eigen::RowVectorXf timbre;
  AcousticOutput acoustic;
};

/// Description -> four embeddings -> acoustic model of text.language ->
/// synthesizer. A timbre-from-style acoustic model (entangled ablation)
/// overrides the description timbre.
SynthResult synth_description(const VoiceSystem& sys, const PhonemeSequence& text, const std::string& description,
                              std::uint64_t seed);
SynthResult synth_description(const VoiceSystem& sys, const PhonemeSequence& text, const std::string& description,
                              const SampleStrategy& strategy, std::uint64_t seed);

/// Style from the reference through the acoustic model's style encoder,
/// timbre from the backbone analyzer; never touches the desc checkpoint.
SynthResult synth_zero_shot(const VoiceSystem& sys, const PhonemeSequence& text, const Waveform& reference);

/// Shared tail: style + timbre -> waveform.
SynthResult synthesize_from_embeddings(const VoiceSystem& sys, const PhonemeSequence& text,
                                       const StyleEmbeddings& style, const Eigen::RowVectorXf& timbre);

}  // namespace voicectl
