#pragma once

#include <filesystem>

#include "voicectl/signal/waveform.hpp"

namespace voicectl {

enum class WavFormat { kPcm16, kFloat32 };

/// Reads mono (or downmixes multi-channel) 16-bit PCM or 32-bit float WAV.
Waveform read_wav(const std::filesystem::path& path);

/// Reads a WAV and resamples it to `target_rate` when needed.
Waveform read_wav_at(const std::filesystem::path& path, int target_rate);

/// Writes atomically (temporary file, then rename). PCM16 output is clipped to
/// [-1, 1] and rounded to nearest.
void write_wav(const std::filesystem::path& path, const Waveform& w, WavFormat format = WavFormat::kPcm16);

}  // namespace voicectl
