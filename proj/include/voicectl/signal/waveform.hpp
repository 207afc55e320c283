#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace voicectl {

/// Canonical corpus rate.
inline constexpr int kCorpusSampleRate = 24000;

/// Mono audio. Samples are nominally in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = kCorpusSampleRate;
  /// Where the audio came from (file path), if anywhere. Used as a cache key.
  std::string origin;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Throws InvalidInput unless sample_rate > 0 and every sample is finite.
void validate(const Waveform& w);

/// Samples per hop for a hop given in seconds, rounded to the nearest sample.
int hop_samples(int sample_rate, double hop_seconds);

}  // namespace voicectl
