#include "voicectl/signal/f0.hpp"

#include <cmath>
#include <complex>

#include "voicectl/core/errors.hpp"
#include "voicectl/signal/dsp.hpp"
#include "voicectl/signal/mel.hpp"

namespace voicectl {

F0Track estimate_f0(const Waveform& w, F0Band band, double hop_seconds, F0Options opts) {
  if (w.empty()) throw InvalidInput("estimate_f0: empty waveform");
  validate(w);
  if (!(band.f_min > 0.0) || !(band.f_min < band.f_max)) throw InvalidInput("estimate_f0: need 0 < f_min < f_max");
  if (band.f_max > w.sample_rate / 2.0) throw InvalidInput("estimate_f0: f_max above Nyquist");
  const int hop = hop_samples(w.sample_rate, hop_seconds);
  const int max_lag = static_cast<int>(std::ceil(w.sample_rate / band.f_min)) + 1;
  const int min_lag = std::max(2, static_cast<int>(std::floor(w.sample_rate / band.f_max)));
  const int win = max_lag;
  const int seg = win + max_lag;
  if (static_cast<int>(w.size()) < seg / 2) throw InvalidInput("estimate_f0: waveform shorter than analysis window");
  const int nfft = dsp::next_pow2(seg + win);

  const auto frames = frame_count(w.size(), hop);
  F0Track track;
  track.hop_seconds = hop_seconds;
  track.f0_hz.assign(static_cast<size_t>(frames), 0.0);
  track.voiced.assign(static_cast<size_t>(frames), false);

  const auto n = static_cast<long>(w.size());
  std::vector<double> s(static_cast<size_t>(seg)), head(static_cast<size_t>(win));
  std::vector<double> cum(static_cast<size_t>(seg) + 1);
  std::vector<double> dprime(static_cast<size_t>(max_lag) + 1);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const long centre = f * hop + hop / 2;
    const long start = centre - seg / 2;
    for (int i = 0; i < seg; ++i) {
      const long j = start + i;
      s[static_cast<size_t>(i)] = j >= 0 && j < n ? w.samples[static_cast<size_t>(j)] : 0.0;
    }
    cum[0] = 0.0;
    for (int i = 0; i < seg; ++i) cum[static_cast<size_t>(i) + 1] = cum[static_cast<size_t>(i)] + s[static_cast<size_t>(i)] * s[static_cast<size_t>(i)];
    const double e0 = cum[static_cast<size_t>(win)];
    if (std::sqrt(e0 / win) < opts.silence_rms) continue;

    // r(tau) = sum_{j<win} s[j] s[j+tau], via FFT cross-correlation.
    std::copy_n(s.begin(), win, head.begin());
    auto fa = dsp::rfft(head, nfft);
    auto fs = dsp::rfft(s, nfft);
    for (size_t k = 0; k < fa.size(); ++k) fa[k] = std::conj(fa[k]) * fs[k];
    const auto r = dsp::irfft(fa, nfft);

    dprime[0] = 1.0;
    double running = 0.0;
    for (int tau = 1; tau <= max_lag; ++tau) {
      const double et = cum[static_cast<size_t>(tau + win)] - cum[static_cast<size_t>(tau)];
      const double d = std::max(0.0, e0 + et - 2.0 * r[static_cast<size_t>(tau)]);
      running += d;
      dprime[static_cast<size_t>(tau)] = running > 1e-12 ? d * tau / running : 1.0;
    }

    int best = -1;
    for (int tau = min_lag; tau <= max_lag - 1; ++tau) {
      if (dprime[static_cast<size_t>(tau)] < opts.aperiodicity_threshold) {
        while (tau + 1 <= max_lag - 1 && dprime[static_cast<size_t>(tau) + 1] < dprime[static_cast<size_t>(tau)]) ++tau;
        best = tau;
        break;
      }
    }
    if (best < 0) continue;

    double refined = best;
    {
      const double a = dprime[static_cast<size_t>(best) - 1], b = dprime[static_cast<size_t>(best)],
                   c = dprime[static_cast<size_t>(best) + 1];
      const double denom = a - 2.0 * b + c;
      if (std::abs(denom) > 1e-12) refined = best + 0.5 * (a - c) / denom;
    }
    const double f0 = w.sample_rate / refined;
    if (f0 < band.f_min || f0 > band.f_max) continue;
    track.f0_hz[static_cast<size_t>(f)] = f0;
    track.voiced[static_cast<size_t>(f)] = true;
  }
  return track;
}

ContinuousLogF0 to_continuous_logf0(const F0Track& track, double floor_hz) {
  if (!(floor_hz > 0.0)) throw InvalidInput("to_continuous_logf0: floor_hz must be positive");
  const size_t n = track.size();
  ContinuousLogF0 out;
  out.log_f0.assign(n, std::log(floor_hz));
  out.vuv.assign(n, 0.0f);
  long prev = -1;
  for (size_t i = 0; i < n; ++i) {
    if (!track.voiced[i]) continue;
    out.log_f0[i] = std::log(track.f0_hz[i]);
    out.vuv[i] = 1.0f;
    if (prev < 0) {
      for (size_t j = 0; j < i; ++j) out.log_f0[j] = out.log_f0[i];
    } else if (static_cast<long>(i) - prev > 1) {
      const double a = out.log_f0[static_cast<size_t>(prev)], b = out.log_f0[i];
      const double span = static_cast<double>(static_cast<long>(i) - prev);
      for (long j = prev + 1; j < static_cast<long>(i); ++j) {
        out.log_f0[static_cast<size_t>(j)] = a + (b - a) * static_cast<double>(j - prev) / span;
      }
    }
    prev = static_cast<long>(i);
  }
  if (prev >= 0) {
    for (size_t j = static_cast<size_t>(prev) + 1; j < n; ++j) out.log_f0[j] = out.log_f0[static_cast<size_t>(prev)];
  }
  return out;
}

}  // namespace voicectl
