#pragma once

#include <nlohmann/json.hpp>

#include "voicectl/acoustic/trainer.hpp"
#include "voicectl/backbone/trainer.hpp"
#include "voicectl/desc/model.hpp"

namespace voicectl {

// JSON mappings for every model and training config. Missing keys keep their
// defaults, so `{}` is a valid config for each stage.
void to_json(nlohmann::json& j, const HnConfig& c);
void from_json(const nlohmann::json& j, HnConfig& c);
void to_json(nlohmann::json& j, const PerturbRanges& c);
void from_json(const nlohmann::json& j, PerturbRanges& c);
void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);
void to_json(nlohmann::json& j, const BackboneTrainConfig& c);
void from_json(const nlohmann::json& j, BackboneTrainConfig& c);
void to_json(nlohmann::json& j, const AcousticConfig& c);
void from_json(const nlohmann::json& j, AcousticConfig& c);
void to_json(nlohmann::json& j, const AcousticTrainConfig& c);
void from_json(const nlohmann::json& j, AcousticTrainConfig& c);
void to_json(nlohmann::json& j, const DescConfig& c);
void from_json(const nlohmann::json& j, DescConfig& c);
void to_json(nlohmann::json& j, const DescTrainConfig& c);
void from_json(const nlohmann::json& j, DescTrainConfig& c);

/// Stage 1 config file: {"model": {...}, "train": {...}}.
struct BackboneStageConfig {
  BackboneConfig model;
  BackboneTrainConfig train;
};

/// Stage 2 config file. `backbone` is the prerequisite checkpoint directory;
/// `style_encoder_from`, when set, names an acoustic checkpoint whose style
/// encoder is copied and frozen (cross-lingual systems share it).
struct AcousticStageConfig {
  std::string backbone;
  std::string style_encoder_from;
  AcousticConfig model;
  AcousticTrainConfig train;
};

/// Stage 3 config file. Targets come from the frozen `backbone` and
/// `acoustic` checkpoints and are cached under `target_cache_dir` when set.
struct DescStageConfig {
  std::string backbone;
  std::string acoustic;
  std::string target_cache_dir;
  DescConfig model;
  DescTrainConfig train;
};

void to_json(nlohmann::json& j, const BackboneStageConfig& c);
void from_json(const nlohmann::json& j, BackboneStageConfig& c);
void to_json(nlohmann::json& j, const AcousticStageConfig& c);
void from_json(const nlohmann::json& j, AcousticStageConfig& c);
void to_json(nlohmann::json& j, const DescStageConfig& c);
void from_json(const nlohmann::json& j, DescStageConfig& c);

/// Parses a config file; unknown or mistyped keys raise ConfigError.
nlohmann::json read_config_file(const std::filesystem::path& path);

template <typename T>
T parse_config(const nlohmann::json& j) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
}

}  // namespace voicectl
