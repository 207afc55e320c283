#include "voicectl/backbone/hn_synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <random>

#include "voicectl/core/errors.hpp"
#include "voicectl/signal/dsp.hpp"
#include "voicectl/signal/mel.hpp"

namespace voicectl {

namespace {

constexpr double kLogMin = -20.0;
constexpr double kLogMax = 5.0;

double clamped_exp(double v) { return std::exp(std::clamp(v, kLogMin, kLogMax)); }
bool in_range(double v) { return v > kLogMin && v < kLogMax; }

// Unit-variance noise limited to mel-spaced bands, identical for every call of
// the same length.
const std::vector<std::vector<float>>& noise_bank(size_t n, int bands, int sample_rate) {
  thread_local std::map<std::tuple<size_t, int, int>, std::vector<std::vector<float>>> cache;
  const auto key = std::make_tuple(n, bands, sample_rate);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  if (cache.size() > 64) cache.clear();

  std::mt19937_64 rng(0x6e6f697365ULL);
  std::normal_distribution<double> d(0.0, 1.0);
  const int nfft = static_cast<int>(n);
  std::vector<double> white(n);
  for (auto& s : white) s = d(rng);
  const auto spec = dsp::rfft(white, nfft);
  const double nyq = sample_rate / 2.0;
  const double mel_top = hz_to_mel(nyq);
  std::vector<std::vector<float>> bank(static_cast<size_t>(bands));
  for (int b = 0; b < bands; ++b) {
    const double lo = mel_to_hz(mel_top * b / bands), hi = mel_to_hz(mel_top * (b + 1) / bands);
    std::vector<std::complex<double>> band(spec.size(), {0.0, 0.0});
    for (size_t k = 0; k < spec.size(); ++k) {
      const double f = static_cast<double>(k) * sample_rate / nfft;
      if (f >= lo && f < hi) band[k] = spec[k];
    }
    const auto y = dsp::irfft(band, nfft);
    double e = 0.0;
    for (double v : y) e += v * v;
    const double scale = e > 0.0 ? 1.0 / std::sqrt(e / static_cast<double>(n)) : 0.0;
    auto& out = bank[static_cast<size_t>(b)];
    out.resize(n);
    for (size_t i = 0; i < n; ++i) out[i] = static_cast<float>(y[i] * scale);
  }
  return cache.emplace(key, std::move(bank)).first->second;
}

struct Layout {
  Eigen::Index frames;
  size_t samples;
  int hop;
  // Interpolation position of sample n between frame f and f+1.
  void locate(size_t n, Eigen::Index& f, double& t) const {
    const double p = (static_cast<double>(n) - hop / 2.0) / hop;
    if (p <= 0.0) {
      f = 0;
      t = 0.0;
    } else if (p >= static_cast<double>(frames - 1)) {
      f = frames - 1;
      t = 0.0;
    } else {
      f = static_cast<Eigen::Index>(p);
      t = p - static_cast<double>(f);
    }
  }
};

struct Harmonics {
  // amp(f, k-1) = amplitude of harmonic k at frame f (0 above the limit).
  Eigen::MatrixXd amp;
  Eigen::MatrixXd env_pos;  // envelope grid position of harmonic k at frame f
  int k_max = 0;
};

Harmonics harmonic_amps(const HnControls& c, int sample_rate, const HnConfig& cfg) {
  const Eigen::Index frames = c.log_env.rows();
  const double nyq = sample_rate / 2.0;
  Harmonics h;
  for (Eigen::Index f = 0; f < frames; ++f) {
    h.k_max = std::max(h.k_max, static_cast<int>(cfg.harmonic_limit * nyq / c.f0_hz[static_cast<size_t>(f)]));
  }
  h.amp = Eigen::MatrixXd::Zero(frames, std::max(h.k_max, 1));
  h.env_pos = Eigen::MatrixXd::Zero(frames, std::max(h.k_max, 1));
  for (Eigen::Index f = 0; f < frames; ++f) {
    const double f0 = c.f0_hz[static_cast<size_t>(f)];
    const int kf = static_cast<int>(cfg.harmonic_limit * nyq / f0);
    for (int k = 1; k <= kf; ++k) {
      const double u = k * f0 / nyq * (cfg.n_env - 1);
      const auto j = std::min<Eigen::Index>(static_cast<Eigen::Index>(u), cfg.n_env - 2);
      const double s = u - static_cast<double>(j);
      const double v = (1.0 - s) * c.log_env(f, j) + s * c.log_env(f, j + 1);
      h.amp(f, k - 1) = clamped_exp(v);
      h.env_pos(f, k - 1) = u;
    }
  }
  return h;
}

void check_controls(const HnControls& c, const HnConfig& cfg) {
  const Eigen::Index frames = c.log_env.rows();
  if (frames == 0) throw InvalidInput("hn_synthesize: no frames");
  if (c.log_env.cols() != cfg.n_env || c.log_noise.cols() != cfg.n_noise || c.log_noise.rows() != frames ||
      static_cast<Eigen::Index>(c.f0_hz.size()) != frames || static_cast<Eigen::Index>(c.vuv.size()) != frames) {
    throw InvalidInput("hn_synthesize: control shapes disagree");
  }
  for (double f0 : c.f0_hz) {
    if (!(f0 > 0.0) || !std::isfinite(f0)) throw InvalidInput("hn_synthesize: f0 must be positive and finite");
  }
}

// Accumulated phase per sample.
std::vector<double> phases(const HnControls& c, const Layout& lay, int sample_rate) {
  std::vector<double> ph(lay.samples);
  double acc = 0.0;
  const double two_pi = 2.0 * std::numbers::pi;
  for (size_t n = 0; n < lay.samples; ++n) {
    Eigen::Index f;
    double t;
    lay.locate(n, f, t);
    const double f0 = f + 1 < lay.frames ? (1.0 - t) * c.f0_hz[static_cast<size_t>(f)] + t * c.f0_hz[static_cast<size_t>(f) + 1]
                                         : c.f0_hz[static_cast<size_t>(f)];
    ph[n] = acc;
    acc = std::fmod(acc + two_pi * f0 / sample_rate, two_pi);
  }
  return ph;
}

}  // namespace

std::vector<float> hn_synthesize(const HnControls& c, int hop, int sample_rate, const HnConfig& cfg) {
  check_controls(c, cfg);
  const Layout lay{c.log_env.rows(), static_cast<size_t>(c.log_env.rows()) * static_cast<size_t>(hop), hop};
  const auto h = harmonic_amps(c, sample_rate, cfg);
  const auto ph = phases(c, lay, sample_rate);
  const auto& bank = noise_bank(lay.samples, cfg.n_noise, sample_rate);
  const Eigen::MatrixXd gains = c.log_noise.cast<double>().unaryExpr([](double v) { return clamped_exp(v); });

  std::vector<float> y(lay.samples);
  for (size_t n = 0; n < lay.samples; ++n) {
    Eigen::Index f;
    double t;
    lay.locate(n, f, t);
    const Eigen::Index g = std::min(f + 1, lay.frames - 1);
    const double v = (1.0 - t) * c.vuv[static_cast<size_t>(f)] + t * c.vuv[static_cast<size_t>(g)];
    double harm = 0.0;
    if (v > 0.0) {
      const std::complex<double> step = std::polar(1.0, ph[n]);
      std::complex<double> z = step;
      for (int k = 0; k < h.k_max; ++k) {
        const double a = (1.0 - t) * h.amp(f, k) + t * h.amp(g, k);
        if (a != 0.0) harm += a * z.imag();
        z *= step;
      }
    }
    double noise = 0.0;
    for (int b = 0; b < cfg.n_noise; ++b) {
      noise += ((1.0 - t) * gains(f, b) + t * gains(g, b)) * bank[static_cast<size_t>(b)][n];
    }
    y[n] = static_cast<float>(v * harm + noise);
  }
  return y;
}

HnGrad hn_backward(const HnControls& c, const std::vector<double>& grad_out, int hop, int sample_rate,
                   const HnConfig& cfg) {
  check_controls(c, cfg);
  const Layout lay{c.log_env.rows(), static_cast<size_t>(c.log_env.rows()) * static_cast<size_t>(hop), hop};
  if (grad_out.size() != lay.samples) throw InvalidInput("hn_backward: gradient length mismatch");
  const auto h = harmonic_amps(c, sample_rate, cfg);
  const auto ph = phases(c, lay, sample_rate);
  const auto& bank = noise_bank(lay.samples, cfg.n_noise, sample_rate);

  Eigen::MatrixXd d_amp = Eigen::MatrixXd::Zero(h.amp.rows(), h.amp.cols());
  Eigen::MatrixXd d_gain = Eigen::MatrixXd::Zero(lay.frames, cfg.n_noise);
  for (size_t n = 0; n < lay.samples; ++n) {
    const double go = grad_out[n];
    if (go == 0.0) continue;
    Eigen::Index f;
    double t;
    lay.locate(n, f, t);
    const Eigen::Index g = std::min(f + 1, lay.frames - 1);
    const double v = (1.0 - t) * c.vuv[static_cast<size_t>(f)] + t * c.vuv[static_cast<size_t>(g)];
    if (v > 0.0) {
      const std::complex<double> step = std::polar(1.0, ph[n]);
      std::complex<double> z = step;
      const double wf = go * v * (1.0 - t), wg = go * v * t;
      for (int k = 0; k < h.k_max; ++k) {
        d_amp(f, k) += wf * z.imag();
        d_amp(g, k) += wg * z.imag();
        z *= step;
      }
    }
    for (int b = 0; b < cfg.n_noise; ++b) {
      const double s = go * bank[static_cast<size_t>(b)][n];
      d_gain(f, b) += (1.0 - t) * s;
      d_gain(g, b) += t * s;
    }
  }

  HnGrad out;
  out.log_env = ag::Mat::Zero(lay.frames, cfg.n_env);
  out.log_noise = ag::Mat::Zero(lay.frames, cfg.n_noise);
  for (Eigen::Index f = 0; f < lay.frames; ++f) {
    for (int k = 0; k < h.k_max; ++k) {
      const double a = h.amp(f, k);
      if (a == 0.0) continue;
      const double u = h.env_pos(f, k);
      const auto j = std::min<Eigen::Index>(static_cast<Eigen::Index>(u), cfg.n_env - 2);
      const double s = u - static_cast<double>(j);
      const double v = (1.0 - s) * c.log_env(f, j) + s * c.log_env(f, j + 1);
      if (!in_range(v)) continue;
      const double da = d_amp(f, k) * a;
      out.log_env(f, j) += static_cast<float>(da * (1.0 - s));
      out.log_env(f, j + 1) += static_cast<float>(da * s);
    }
    for (int b = 0; b < cfg.n_noise; ++b) {
      const double ln = c.log_noise(f, b);
      if (!in_range(ln)) continue;
      out.log_noise(f, b) = static_cast<float>(d_gain(f, b) * std::exp(ln));
    }
  }
  return out;
}

ag::Var<float> hn_decode(const ag::Var<float>& log_env, const ag::Var<float>& log_noise, std::vector<double> f0_hz,
                         std::vector<float> vuv, int hop, int sample_rate, const HnConfig& cfg) {
  auto controls = std::make_shared<HnControls>();
  controls->log_env = log_env.value();
  controls->log_noise = log_noise.value();
  controls->f0_hz = std::move(f0_hz);
  controls->vuv = std::move(vuv);
  const auto y = hn_synthesize(*controls, hop, sample_rate, cfg);
  ag::Mat value(static_cast<Eigen::Index>(y.size()), 1);
  for (size_t i = 0; i < y.size(); ++i) value(static_cast<Eigen::Index>(i), 0) = y[i];
  const std::vector<ag::Var<float>> inputs{log_env, log_noise};
  return ag::custom<float>(inputs, std::move(value), [controls, hop, sample_rate, cfg](const ag::Mat& g) {
    std::vector<double> go(static_cast<size_t>(g.rows()));
    for (Eigen::Index i = 0; i < g.rows(); ++i) go[static_cast<size_t>(i)] = g(i, 0);
    auto grads = hn_backward(*controls, go, hop, sample_rate, cfg);
    return std::vector<ag::Mat>{std::move(grads.log_env), std::move(grads.log_noise)};
  });
}

}  // namespace voicectl
