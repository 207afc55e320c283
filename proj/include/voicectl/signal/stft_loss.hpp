#pragma once

#include <vector>

#include "voicectl/signal/waveform.hpp"

namespace voicectl {

struct StftResolution {
  int fft = 1024;
  int hop = 240;
  int window = 960;
};

std::vector<StftResolution> default_stft_resolutions();

/// Magnitude STFT with zero "centre" padding of fft/2 on both sides.
/// Returns frames x (fft/2 + 1).
std::vector<std::vector<double>> stft_magnitude(const std::vector<float>& x, const StftResolution& r);

/// Spectral convergence + mean absolute log-magnitude difference at one
/// resolution.
struct StftTerms {
  double spectral_convergence = 0.0;
  double log_magnitude = 0.0;
  double total() const { return spectral_convergence + log_magnitude; }
};

StftTerms stft_loss_terms(const Waveform& pred, const Waveform& target, const StftResolution& r);

/// Sum over resolutions of spectral convergence plus log-magnitude L1.
double multires_stft_loss(const Waveform& pred, const Waveform& target,
                          const std::vector<StftResolution>& resolutions = default_stft_resolutions());

/// Loss together with its gradient w.r.t. every sample of `pred`.
struct StftLossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

StftLossGrad multires_stft_loss_grad(const std::vector<float>& pred, const std::vector<float>& target,
                                     const std::vector<StftResolution>& resolutions = default_stft_resolutions());

}  // namespace voicectl
