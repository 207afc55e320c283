#pragma once

#include <vector>

#include "voicectl/signal/waveform.hpp"

namespace voicectl {

struct F0Band {
  double f_min = 50.0;
  double f_max = 800.0;
};

/// Per-frame F0. Frame i describes samples [i*hop, (i+1)*hop).
struct F0Track {
  std::vector<double> f0_hz;  // 0 where unvoiced
  std::vector<bool> voiced;
  double hop_seconds = 0.01;

  std::size_t size() const { return f0_hz.size(); }
};

struct F0Options {
  /// Voiced when the cumulative-mean-normalized difference dips below this.
  double aperiodicity_threshold = 0.3;
  /// Frames whose RMS falls below this are unvoiced regardless of periodicity.
  double silence_rms = 1e-4;
};

/// YIN-style estimator: difference function via FFT, cumulative-mean
/// normalization, first dip below threshold, parabolic refinement.
/// Produces ceil(len / hop) frames.
F0Track estimate_f0(const Waveform& w, F0Band band = {}, double hop_seconds = 0.01, F0Options opts = {});

/// Log-F0 with unvoiced gaps filled, plus V/UV flags.
struct ContinuousLogF0 {
  std::vector<double> log_f0;
  std::vector<float> vuv;  // 0 or 1

  std::size_t size() const { return log_f0.size(); }
};

/// Interior gaps: linear in log domain between flanking voiced frames. Edges:
/// held at the nearest voiced value. No voiced frames: ln(floor_hz).
ContinuousLogF0 to_continuous_logf0(const F0Track& track, double floor_hz = 50.0);

}  // namespace voicectl
