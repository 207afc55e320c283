#pragma once

#include <cmath>
#include <vector>

#include "voicectl/autograd/tape.hpp"
#include "voicectl/signal/waveform.hpp"

namespace voicectl {

struct MelConfig {
  int bins = 80;
  int n_fft = 1024;
  int window = 1024;
  double hop_seconds = 0.01;  // 240 samples at 24 kHz
  double f_min = 0.0;
  double f_max = 0.0;  // 0 means Nyquist
  double log_floor = std::log(1e-5);
};

/// Log mel magnitudes, frames x bins. Frame i is centred on the middle of
/// samples [i*hop, (i+1)*hop).
struct MelSpectrogram {
  ag::Mat frames;
  int bins = 80;
  double hop_seconds = 0.01;

  Eigen::Index num_frames() const { return frames.rows(); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular HTK-scale filterbank, bins x (n_fft/2 + 1).
Eigen::MatrixXd mel_filterbank(int bins, int n_fft, int sample_rate, double f_min, double f_max);

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg = {});

/// Number of analysis frames for a signal of `len` samples.
inline Eigen::Index frame_count(std::size_t len, int hop) {
  return static_cast<Eigen::Index>((len + static_cast<std::size_t>(hop) - 1) / static_cast<std::size_t>(hop));
}

}  // namespace voicectl
