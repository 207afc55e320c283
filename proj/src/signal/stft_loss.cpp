#include "voicectl/signal/stft_loss.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "voicectl/core/errors.hpp"
#include "voicectl/signal/dsp.hpp"

namespace voicectl {

namespace {

constexpr double kMagFloor = 1e-7;

void check(const StftResolution& r) {
  if (r.fft <= 0 || r.hop <= 0 || r.window <= 0 || r.window > r.fft) {
    throw InvalidInput("STFT resolution needs positive sizes and window <= fft");
  }
}

// Hann window of length r.window centred inside an r.fft frame.
std::vector<double> padded_window(const StftResolution& r) {
  std::vector<double> w(static_cast<size_t>(r.fft), 0.0);
  const auto h = dsp::hann(r.window);
  const int off = (r.fft - r.window) / 2;
  std::copy(h.begin(), h.end(), w.begin() + off);
  return w;
}

long num_frames(size_t len, const StftResolution& r) { return static_cast<long>(len) / r.hop + 1; }

// Complex STFT of the centre-padded signal, frames x (fft/2 + 1).
std::vector<std::vector<std::complex<double>>> stft(const std::vector<float>& x, const StftResolution& r,
                                                    const std::vector<double>& win) {
  const long frames = num_frames(x.size(), r);
  const long pad = r.fft / 2;
  const auto n = static_cast<long>(x.size());
  std::vector<std::vector<std::complex<double>>> out(static_cast<size_t>(frames));
  std::vector<double> buf(static_cast<size_t>(r.fft));
  for (long t = 0; t < frames; ++t) {
    for (int i = 0; i < r.fft; ++i) {
      const long j = t * r.hop + i - pad;
      buf[static_cast<size_t>(i)] = j >= 0 && j < n ? x[static_cast<size_t>(j)] * win[static_cast<size_t>(i)] : 0.0;
    }
    out[static_cast<size_t>(t)] = dsp::rfft(buf, r.fft);
  }
  return out;
}

}  // namespace

std::vector<StftResolution> default_stft_resolutions() { return {{512, 120, 480}, {1024, 240, 960}, {2048, 480, 1920}}; }

std::vector<std::vector<double>> stft_magnitude(const std::vector<float>& x, const StftResolution& r) {
  check(r);
  const auto spec = stft(x, r, padded_window(r));
  std::vector<std::vector<double>> mag(spec.size());
  for (size_t t = 0; t < spec.size(); ++t) {
    mag[t].resize(spec[t].size());
    for (size_t k = 0; k < spec[t].size(); ++k) mag[t][k] = std::abs(spec[t][k]);
  }
  return mag;
}

StftTerms stft_loss_terms(const Waveform& pred, const Waveform& target, const StftResolution& r) {
  if (pred.size() != target.size()) throw InvalidInput("STFT loss: length mismatch");
  const auto mp = stft_magnitude(pred.samples, r);
  const auto mt = stft_magnitude(target.samples, r);
  double diff2 = 0.0, tgt2 = 0.0, logsum = 0.0;
  size_t count = 0;
  for (size_t t = 0; t < mp.size(); ++t) {
    for (size_t k = 0; k < mp[t].size(); ++k) {
      const double p = std::max(mp[t][k], kMagFloor), g = std::max(mt[t][k], kMagFloor);
      diff2 += (g - p) * (g - p);
      tgt2 += g * g;
      logsum += std::abs(std::log(g) - std::log(p));
      ++count;
    }
  }
  StftTerms terms;
  terms.spectral_convergence = std::sqrt(diff2) / std::sqrt(tgt2);
  terms.log_magnitude = logsum / static_cast<double>(count);
  return terms;
}

double multires_stft_loss(const Waveform& pred, const Waveform& target, const std::vector<StftResolution>& resolutions) {
  if (resolutions.empty()) throw InvalidInput("STFT loss: no resolutions");
  if (pred.sample_rate != target.sample_rate) throw InvalidInput("STFT loss: sample rate mismatch");
  double total = 0.0;
  for (const auto& r : resolutions) total += stft_loss_terms(pred, target, r).total();
  return total;
}

StftLossGrad multires_stft_loss_grad(const std::vector<float>& pred, const std::vector<float>& target,
                                     const std::vector<StftResolution>& resolutions) {
  if (pred.size() != target.size()) throw InvalidInput("STFT loss: length mismatch");
  if (resolutions.empty()) throw InvalidInput("STFT loss: no resolutions");
  StftLossGrad out;
  out.grad.assign(pred.size(), 0.0);
  const auto n = static_cast<long>(pred.size());
  for (const auto& r : resolutions) {
    check(r);
    const auto win = padded_window(r);
    const auto sp = stft(pred, r, win);
    const auto st = stft(target, r, win);
    const size_t bins = static_cast<size_t>(r.fft / 2 + 1);
    double diff2 = 0.0, tgt2 = 0.0, logsum = 0.0;
    for (size_t t = 0; t < sp.size(); ++t) {
      for (size_t k = 0; k < bins; ++k) {
        const double p = std::max(std::abs(sp[t][k]), kMagFloor), g = std::max(std::abs(st[t][k]), kMagFloor);
        diff2 += (g - p) * (g - p);
        tgt2 += g * g;
        logsum += std::abs(std::log(g) - std::log(p));
      }
    }
    const double count = static_cast<double>(sp.size() * bins);
    const double diff_norm = std::sqrt(diff2), tgt_norm = std::sqrt(tgt2);
    out.loss += diff_norm / tgt_norm + logsum / count;

    // dL/d|X| per bin, pushed through |X| = |sum_n a_n e^{-i w k n}| and the
    // window back to samples.
    const long pad = r.fft / 2;
    std::vector<std::complex<double>> z(static_cast<size_t>(r.fft));
    for (size_t t = 0; t < sp.size(); ++t) {
      std::fill(z.begin(), z.end(), std::complex<double>(0.0, 0.0));
      for (size_t k = 0; k < bins; ++k) {
        const double mag = std::abs(sp[t][k]);
        if (mag <= kMagFloor) continue;
        const double g = std::max(std::abs(st[t][k]), kMagFloor);
        double dm = 0.0;
        if (diff_norm > 0.0) dm += (mag - g) / (diff_norm * tgt_norm);
        const double lg = std::log(g) - std::log(mag);
        if (lg != 0.0) dm += (lg > 0.0 ? -1.0 : 1.0) / (count * mag);
        z[k] = dm * sp[t][k] / mag;
      }
      const auto back = dsp::ifft(z);
      for (int i = 0; i < r.fft; ++i) {
        const long j = static_cast<long>(t) * r.hop + i - pad;
        if (j < 0 || j >= n) continue;
        out.grad[static_cast<size_t>(j)] += win[static_cast<size_t>(i)] * back[static_cast<size_t>(i)].real() * r.fft;
      }
    }
  }
  return out;
}

}  // namespace voicectl
