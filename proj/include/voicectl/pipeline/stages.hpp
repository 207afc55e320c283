#pragma once

#include <functional>

#include "voicectl/pipeline/checkpoint.hpp"
#include "voicectl/pipeline/config.hpp"

namespace voicectl {

/// Receives one human-readable line per logging interval.
using ProgressFn = std::function<void(const std::string&)>;

struct StageResult {
  std::string id;
  std::filesystem::path dir;
  nlohmann::json final_losses;
};

/// Stage 1: analyzer + synthesizer on every manifest row's audio.
StageResult train_backbone_stage(const Manifest& manifest, const BackboneStageConfig& cfg,
                                 const std::filesystem::path& out, std::uint64_t seed, const ProgressFn& log = {});

/// Stage 2: acoustic model for cfg.model.language on rows that carry
/// durations. Needs the backbone checkpoint.
StageResult train_acoustic_stage(const Manifest& manifest, const AcousticStageConfig& cfg,
                                 const std::filesystem::path& out, std::uint64_t seed, const ProgressFn& log = {});

/// Stage 3: description control model on the rows of the acoustic model's
/// language that carry a description. Needs both earlier checkpoints.
StageResult train_desc_stage(const Manifest& manifest, const DescStageConfig& cfg, const std::filesystem::path& out,
                             std::uint64_t seed, const ProgressFn& log = {});

/// Dispatch on "backbone" | "acoustic" | "desc".
StageResult train_stage(const std::string& stage, const std::filesystem::path& manifest_path,
                        const nlohmann::json& config, const std::filesystem::path& out, std::uint64_t seed,
                        const ProgressFn& log = {});

/// Frozen stage-1/2 targets for one description pair, cached on disk under a
/// key made of the audio bytes and both checkpoint ids.
ControlEmbeddings desc_targets(const Backbone& backbone, const AcousticModel& acoustic, const Waveform& w);
ControlEmbeddings cached_desc_targets(const std::filesystem::path& cache_dir, const std::string& audio_bytes_key,
                                      const std::function<ControlEmbeddings()>& compute);

}  // namespace voicectl
