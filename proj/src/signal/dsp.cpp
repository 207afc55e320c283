#include "voicectl/signal/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace voicectl::dsp {

namespace {

Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine;
  return engine;
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

std::vector<std::complex<double>> rfft(std::span<const double> x, int n) {
  std::vector<double> buf(static_cast<size_t>(n), 0.0);
  std::copy_n(x.begin(), std::min<size_t>(x.size(), buf.size()), buf.begin());
  std::vector<std::complex<double>> out;
  auto& f = fft_engine();
  f.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  f.fwd(out, buf);
  out.resize(static_cast<size_t>(n / 2 + 1));
  return out;
}

std::vector<std::complex<double>> ifft(std::span<const std::complex<double>> spectrum) {
  std::vector<std::complex<double>> in(spectrum.begin(), spectrum.end());
  std::vector<std::complex<double>> out;
  auto& f = fft_engine();
  f.ClearFlag(Eigen::FFT<double>::HalfSpectrum);
  f.inv(out, in);
  return out;
}

std::vector<double> irfft(std::span<const std::complex<double>> half, int n) {
  std::vector<std::complex<double>> full(static_cast<size_t>(n));
  for (int k = 0; k <= n / 2; ++k) full[static_cast<size_t>(k)] = half[static_cast<size_t>(k)];
  for (int k = n / 2 + 1; k < n; ++k) full[static_cast<size_t>(k)] = std::conj(half[static_cast<size_t>(n - k)]);
  auto c = ifft(full);
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = c[static_cast<size_t>(i)].real();
  return out;
}

std::vector<double> hann(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  }
  return w;
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::vector<float> resample(std::span<const float> x, double factor) {
  if (factor <= 0.0) throw std::invalid_argument("resample: factor must be positive");
  const auto out_len = static_cast<size_t>(std::llround(static_cast<double>(x.size()) * factor));
  std::vector<float> out(out_len, 0.0f);
  if (x.empty()) return out;
  // Low-pass at the narrower of the two Nyquist limits.
  const double cutoff = std::min(1.0, factor) * 0.97;
  constexpr int kZeroCrossings = 16;
  const double half_width = kZeroCrossings / cutoff;
  const auto n_in = static_cast<long>(x.size());
  for (size_t k = 0; k < out_len; ++k) {
    const double t = static_cast<double>(k) / factor;
    const long lo = std::max<long>(0, static_cast<long>(std::ceil(t - half_width)));
    const long hi = std::min<long>(n_in - 1, static_cast<long>(std::floor(t + half_width)));
    double acc = 0.0;
    for (long j = lo; j <= hi; ++j) {
      const double d = t - static_cast<double>(j);
      const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * d / half_width);
      acc += x[static_cast<size_t>(j)] * cutoff * sinc(cutoff * d) * win;
    }
    out[k] = static_cast<float>(acc);
  }
  return out;
}

std::vector<float> time_stretch(std::span<const float> x, std::size_t target_len) {
  constexpr int kWin = 1024;
  constexpr int kSynHop = kWin / 2;
  constexpr int kTolerance = 256;
  constexpr int kCorrStride = 4;
  std::vector<float> out(target_len, 0.0f);
  if (x.empty() || target_len == 0) return out;
  const double rate = static_cast<double>(x.size()) / static_cast<double>(target_len);
  const auto w = hann(kWin);
  std::vector<double> acc(target_len + kWin, 0.0), norm(target_len + kWin, 0.0);
  const auto n_in = static_cast<long>(x.size());
  auto sample = [&](long i) -> double { return i >= 0 && i < n_in ? x[static_cast<size_t>(i)] : 0.0; };

  long prev = 0;
  const long frames = static_cast<long>(target_len / kSynHop) + 2;
  for (long f = 0; f < frames; ++f) {
    const long out_pos = f * kSynHop - kWin / 2;
    const long ideal = static_cast<long>(std::llround((out_pos + kWin / 2) * rate)) - kWin / 2;
    long best = ideal;
    if (f > 0) {
      const long natural = prev + kSynHop;
      double best_score = -1e300;
      for (long cand = ideal - kTolerance; cand <= ideal + kTolerance; ++cand) {
        double s = 0.0;
        for (int j = 0; j < kWin; j += kCorrStride) s += sample(natural + j) * sample(cand + j);
        if (s > best_score) {
          best_score = s;
          best = cand;
        }
      }
    }
    for (int j = 0; j < kWin; ++j) {
      const long o = out_pos + j;
      if (o < 0 || o >= static_cast<long>(target_len)) continue;
      acc[static_cast<size_t>(o)] += w[static_cast<size_t>(j)] * sample(best + j);
      norm[static_cast<size_t>(o)] += w[static_cast<size_t>(j)];
    }
    prev = best;
  }
  for (size_t i = 0; i < target_len; ++i) {
    out[i] = norm[i] > 1e-9 ? static_cast<float>(acc[i] / norm[i]) : 0.0f;
  }
  return out;
}

}  // namespace voicectl::dsp
