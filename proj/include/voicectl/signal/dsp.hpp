#pragma once

#include <complex>
#include <span>
#include <vector>

namespace voicectl::dsp {

/// Real FFT of `x` zero-padded (or truncated) to `n` points; returns n/2+1 bins.
std::vector<std::complex<double>> rfft(std::span<const double> x, int n);

/// Inverse of a full complex spectrum of length n, scaled by 1/n.
std::vector<std::complex<double>> ifft(std::span<const std::complex<double>> spectrum);

/// Inverse of a half spectrum (n/2+1 bins) of a real signal of length n.
std::vector<double> irfft(std::span<const std::complex<double>> half, int n);

/// Periodic Hann window of length n.
std::vector<double> hann(int n);

int next_pow2(int n);

/// Band-limited resampling by an arbitrary factor (output length is
/// round(len * factor)). Output sample k reads input time k / factor.
std::vector<float> resample(std::span<const float> x, double factor);

/// WSOLA time-scale modification to exactly `target_len` samples, preserving
/// pitch.
std::vector<float> time_stretch(std::span<const float> x, std::size_t target_len);

}  // namespace voicectl::dsp
