#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "voicectl/signal/waveform.hpp"

namespace voicectl {

/// Fixed peaking-EQ band centres (Hz); bands above Nyquist are ignored.
inline const std::vector<double>& peq_band_centers() {
  static const std::vector<double> centers = {125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0};
  return centers;
}

struct PerturbParams {
  double formant_shift_ratio = 1.0;
  double pitch_shift_ratio = 1.0;
  std::vector<double> peq_gains_db;  // one per band; missing bands are 0 dB

  bool is_identity() const;
};

struct PerturbRanges {
  double formant_min = 1.0 / 1.4, formant_max = 1.4;
  double pitch_min = 0.5, pitch_max = 2.0;
  double peq_gain_db = 12.0;  // gains drawn from [-g, g]
};

PerturbParams sample_perturb_params(std::mt19937_64& rng, const PerturbRanges& ranges = {});

/// Information perturbation: pitch shift (resample + WSOLA restoration),
/// formant shift (cepstral-envelope warp), parametric EQ (random Q from
/// `seed`), then per-block energy restoration so the 10 ms energy contour of
/// the input is kept. Output length and rate equal the input's.
Waveform perturb_information(const Waveform& w, const PerturbParams& p, std::uint64_t seed);

}  // namespace voicectl
