#pragma once

#include <vector>

#include "voicectl/autograd/ops.hpp"

namespace voicectl {

/// Harmonic-plus-noise waveform generator driven by frame-rate controls.
///
/// Per frame: a log-amplitude spectral envelope sampled on `n_env` points
/// spanning [0, Nyquist] sets the amplitude of every harmonic k*f0 below
/// `harmonic_limit` * Nyquist; `n_noise` log-gains scale a fixed bank of
/// mel-spaced band-limited noises. Controls are linearly interpolated between
/// frame centres (i*hop + hop/2). The harmonic part is gated by V/UV.
struct HnConfig {
  int n_env = 64;
  int n_noise = 16;
  double harmonic_limit = 0.95;
};

struct HnControls {
  ag::Mat log_env;    // frames x n_env
  ag::Mat log_noise;  // frames x n_noise
  std::vector<double> f0_hz;
  std::vector<float> vuv;
};

struct HnGrad {
  ag::Mat log_env;
  ag::Mat log_noise;
};

std::vector<float> hn_synthesize(const HnControls& c, int hop, int sample_rate, const HnConfig& cfg);

/// Gradient of sum(grad_out .* hn_synthesize(c)) w.r.t. the log controls.
HnGrad hn_backward(const HnControls& c, const std::vector<double>& grad_out, int hop, int sample_rate,
                   const HnConfig& cfg);

/// Tape op: returns the waveform as an (frames*hop) x 1 column.
ag::Var<float> hn_decode(const ag::Var<float>& log_env, const ag::Var<float>& log_noise, std::vector<double> f0_hz,
                         std::vector<float> vuv, int hop, int sample_rate, const HnConfig& cfg);

}  // namespace voicectl
