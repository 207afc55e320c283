#include "voicectl/signal/mel.hpp"

#include <algorithm>
#include <cmath>

#include "voicectl/core/errors.hpp"
#include "voicectl/signal/dsp.hpp"

namespace voicectl {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Eigen::MatrixXd mel_filterbank(int bins, int n_fft, int sample_rate, double f_min, double f_max) {
  const int n_freq = n_fft / 2 + 1;
  if (f_max <= 0.0) f_max = sample_rate / 2.0;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(bins, n_freq);
  const double m_lo = hz_to_mel(f_min), m_hi = hz_to_mel(f_max);
  std::vector<double> edges(static_cast<size_t>(bins) + 2);
  for (int i = 0; i < bins + 2; ++i) edges[static_cast<size_t>(i)] = mel_to_hz(m_lo + (m_hi - m_lo) * i / (bins + 1));
  for (int b = 0; b < bins; ++b) {
    const double lo = edges[static_cast<size_t>(b)], c = edges[static_cast<size_t>(b) + 1],
                 hi = edges[static_cast<size_t>(b) + 2];
    for (int k = 0; k < n_freq; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      double v = 0.0;
      if (f > lo && f <= c) v = (f - lo) / (c - lo);
      else if (f > c && f < hi) v = (hi - f) / (hi - c);
      fb(b, k) = v;
    }
  }
  return fb;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  if (w.empty()) throw InvalidInput("mel_spectrogram: empty waveform");
  if (cfg.bins < 1) throw InvalidInput("mel_spectrogram: bins must be >= 1");
  const int hop = hop_samples(w.sample_rate, cfg.hop_seconds);
  if (cfg.window < hop || cfg.window > cfg.n_fft) throw InvalidInput("mel_spectrogram: need hop <= window <= n_fft");

  thread_local struct Cache {
    int bins = -1, n_fft = -1, rate = -1;
    double f_min = -1, f_max = -1;
    Eigen::MatrixXd fb;
  } cache;
  if (cache.bins != cfg.bins || cache.n_fft != cfg.n_fft || cache.rate != w.sample_rate || cache.f_min != cfg.f_min ||
      cache.f_max != cfg.f_max) {
    cache.fb = mel_filterbank(cfg.bins, cfg.n_fft, w.sample_rate, cfg.f_min, cfg.f_max);
    cache.bins = cfg.bins;
    cache.n_fft = cfg.n_fft;
    cache.rate = w.sample_rate;
    cache.f_min = cfg.f_min;
    cache.f_max = cfg.f_max;
  }

  const auto frames = frame_count(w.size(), hop);
  const auto window = dsp::hann(cfg.window);
  const int n_freq = cfg.n_fft / 2 + 1;
  MelSpectrogram out;
  out.bins = cfg.bins;
  out.hop_seconds = cfg.hop_seconds;
  out.frames.resize(frames, cfg.bins);
  std::vector<double> buf(static_cast<size_t>(cfg.n_fft));
  Eigen::VectorXd mag(n_freq);
  const auto n = static_cast<long>(w.size());
  const int pad = (cfg.n_fft - cfg.window) / 2;
  for (Eigen::Index f = 0; f < frames; ++f) {
    const long centre = f * hop + hop / 2;
    const long start = centre - cfg.window / 2;
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int i = 0; i < cfg.window; ++i) {
      const long j = start + i;
      if (j >= 0 && j < n) buf[static_cast<size_t>(pad + i)] = w.samples[static_cast<size_t>(j)] * window[static_cast<size_t>(i)];
    }
    const auto spec = dsp::rfft(buf, cfg.n_fft);
    for (int k = 0; k < n_freq; ++k) mag(k) = std::abs(spec[static_cast<size_t>(k)]);
    const Eigen::VectorXd m = cache.fb * mag;
    for (int b = 0; b < cfg.bins; ++b) {
      const double v = m(b) > 0.0 ? std::log(m(b)) : cfg.log_floor;
      out.frames(f, b) = static_cast<float>(std::max(v, cfg.log_floor));
    }
  }
  return out;
}

}  // namespace voicectl
