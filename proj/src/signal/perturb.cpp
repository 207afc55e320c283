#include "voicectl/signal/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "voicectl/core/errors.hpp"
#include "voicectl/core/rng.hpp"
#include "voicectl/signal/dsp.hpp"

namespace voicectl {

namespace {

constexpr int kEnvFft = 1024;
constexpr int kEnvHop = 256;
constexpr int kLifter = 40;
constexpr double kBlockSeconds = 0.01;

std::vector<float> pitch_shift(const std::vector<float>& x, double ratio) {
  // Reading the input `ratio` times faster raises pitch by `ratio`; WSOLA then
  // restores the original duration.
  const auto squeezed = dsp::resample(x, 1.0 / ratio);
  return dsp::time_stretch(squeezed, x.size());
}

// Smooth log-magnitude envelope from a low-quefrency lifter.
std::vector<double> cepstral_envelope(const std::vector<std::complex<double>>& spec) {
  std::vector<std::complex<double>> logmag(spec.size());
  for (size_t k = 0; k < spec.size(); ++k) logmag[k] = std::log(std::abs(spec[k]) + 1e-9);
  auto cep = dsp::irfft(logmag, kEnvFft);
  for (int i = kLifter; i <= kEnvFft - kLifter; ++i) cep[static_cast<size_t>(i)] = 0.0;
  const auto env = dsp::rfft(cep, kEnvFft);
  std::vector<double> out(env.size());
  for (size_t k = 0; k < env.size(); ++k) out[k] = env[k].real();
  return out;
}

double interp(const std::vector<double>& v, double pos) {
  if (pos <= 0.0) return v.front();
  const double last = static_cast<double>(v.size() - 1);
  if (pos >= last) return v.back();
  const auto i = static_cast<size_t>(pos);
  const double t = pos - static_cast<double>(i);
  return v[i] * (1.0 - t) + v[i + 1] * t;
}

// Resamples the spectral envelope along frequency: new_env(f) = env(f * alpha).
std::vector<float> warp_envelope(const std::vector<float>& x, double alpha) {
  const auto w = dsp::hann(kEnvFft);
  const auto n = static_cast<long>(x.size());
  std::vector<double> acc(x.size(), 0.0), norm(x.size(), 0.0);
  std::vector<double> frame(kEnvFft);
  const long frames = (n + kEnvFft) / kEnvHop + 1;
  for (long f = 0; f < frames; ++f) {
    const long start = f * kEnvHop - kEnvFft / 2;
    for (int i = 0; i < kEnvFft; ++i) {
      const long j = start + i;
      frame[static_cast<size_t>(i)] = j >= 0 && j < n ? x[static_cast<size_t>(j)] * w[static_cast<size_t>(i)] : 0.0;
    }
    auto spec = dsp::rfft(frame, kEnvFft);
    const auto env = cepstral_envelope(spec);
    for (size_t k = 0; k < spec.size(); ++k) {
      const double gain = std::exp(interp(env, static_cast<double>(k) * alpha) - env[k]);
      spec[k] *= std::min(gain, 1e3);
    }
    const auto y = dsp::irfft(spec, kEnvFft);
    for (int i = 0; i < kEnvFft; ++i) {
      const long j = start + i;
      if (j < 0 || j >= n) continue;
      acc[static_cast<size_t>(j)] += y[static_cast<size_t>(i)] * w[static_cast<size_t>(i)];
      norm[static_cast<size_t>(j)] += w[static_cast<size_t>(i)] * w[static_cast<size_t>(i)];
    }
  }
  std::vector<float> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = norm[i] > 1e-9 ? static_cast<float>(acc[i] / norm[i]) : 0.0f;
  return out;
}

// RBJ peaking biquad, run in place.
void peaking_eq(std::vector<double>& x, double sample_rate, double centre, double gain_db, double q) {
  const double a = std::pow(10.0, gain_db / 40.0);
  const double w0 = 2.0 * std::numbers::pi * centre / sample_rate;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha / a;
  const double b0 = (1.0 + alpha * a) / a0, b1 = -2.0 * cw / a0, b2 = (1.0 - alpha * a) / a0;
  const double a1 = -2.0 * cw / a0, a2 = (1.0 - alpha / a) / a0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (double& s : x) {
    const double y = b0 * s + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = s;
    y2 = y1;
    y1 = y;
    s = y;
  }
}

}  // namespace

bool PerturbParams::is_identity() const {
  if (formant_shift_ratio != 1.0 || pitch_shift_ratio != 1.0) return false;
  return std::all_of(peq_gains_db.begin(), peq_gains_db.end(), [](double g) { return g == 0.0; });
}

PerturbParams sample_perturb_params(std::mt19937_64& rng, const PerturbRanges& ranges) {
  PerturbParams p;
  std::uniform_real_distribution<double> formant(ranges.formant_min, ranges.formant_max);
  std::uniform_real_distribution<double> pitch(ranges.pitch_min, ranges.pitch_max);
  std::uniform_real_distribution<double> gain(-ranges.peq_gain_db, ranges.peq_gain_db);
  p.formant_shift_ratio = formant(rng);
  p.pitch_shift_ratio = pitch(rng);
  p.peq_gains_db.resize(peq_band_centers().size());
  for (auto& g : p.peq_gains_db) g = gain(rng);
  return p;
}

Waveform perturb_information(const Waveform& w, const PerturbParams& p, std::uint64_t seed) {
  validate(w);
  if (!(p.formant_shift_ratio > 0.0) || !(p.pitch_shift_ratio > 0.0)) {
    throw InvalidInput("perturb_information: shift ratios must be positive");
  }
  if (p.peq_gains_db.size() > peq_band_centers().size()) {
    throw InvalidInput("perturb_information: more PEQ gains than bands");
  }
  Waveform out = w;
  if (w.empty() || p.is_identity()) return out;

  std::vector<float> x = w.samples;
  if (p.pitch_shift_ratio != 1.0) x = pitch_shift(x, p.pitch_shift_ratio);
  // After the pitch shift the envelope already moved by the pitch ratio.
  const double alpha = p.pitch_shift_ratio / p.formant_shift_ratio;
  if (std::abs(alpha - 1.0) > 1e-12) x = warp_envelope(x, alpha);

  std::vector<double> y(x.begin(), x.end());
  auto rng = SeedTree(seed).child("peq").engine();
  std::uniform_real_distribution<double> q_dist(0.5, 2.0);
  const auto& centres = peq_band_centers();
  for (size_t b = 0; b < centres.size(); ++b) {
    const double q = q_dist(rng);
    const double g = b < p.peq_gains_db.size() ? p.peq_gains_db[b] : 0.0;
    if (g == 0.0 || centres[b] >= 0.45 * w.sample_rate) continue;
    peaking_eq(y, w.sample_rate, centres[b], g, q);
  }

  // Restore the input's energy in every block.
  const int block = hop_samples(w.sample_rate, kBlockSeconds);
  for (size_t s = 0; s < y.size(); s += static_cast<size_t>(block)) {
    const size_t e = std::min(y.size(), s + static_cast<size_t>(block));
    double ein = 0.0, eout = 0.0;
    for (size_t i = s; i < e; ++i) {
      ein += static_cast<double>(w.samples[i]) * w.samples[i];
      eout += y[i] * y[i];
    }
    const double g = eout > 1e-20 ? std::sqrt(ein / eout) : 0.0;
    for (size_t i = s; i < e; ++i) y[i] = eout > 1e-20 ? y[i] * g : w.samples[i];
  }
  for (size_t i = 0; i < y.size(); ++i) out.samples[i] = static_cast<float>(y[i]);
  return out;
}

}  // namespace voicectl
