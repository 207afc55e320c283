#include <catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

#include "voicectl/core/errors.hpp"
#include "voicectl/signal/dsp.hpp"
#include "voicectl/signal/f0.hpp"
#include "voicectl/signal/mel.hpp"
#include "voicectl/signal/perturb.hpp"
#include "voicectl/signal/stft_loss.hpp"
#include "voicectl/signal/wav.hpp"

using namespace voicectl;

namespace {

constexpr double kPi = std::numbers::pi;

Waveform sine(double hz, double seconds, int sr = 24000, double amp = 0.5, double phase = 0.0) {
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(static_cast<size_t>(std::lround(seconds * sr)));
  for (size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = static_cast<float>(amp * std::sin(2.0 * kPi * hz * static_cast<double>(i) / sr + phase));
  }
  return w;
}

Waveform sawtooth(double hz, double seconds, int sr = 24000) {
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(static_cast<size_t>(std::lround(seconds * sr)));
  for (size_t i = 0; i < w.samples.size(); ++i) {
    const double ph = std::fmod(hz * static_cast<double>(i) / sr, 1.0);
    w.samples[i] = static_cast<float>(0.5 * (2.0 * ph - 1.0));
  }
  return w;
}

double mean_voiced(const F0Track& t) {
  double s = 0.0;
  int n = 0;
  for (size_t i = 0; i < t.size(); ++i) {
    if (t.voiced[i]) {
      s += t.f0_hz[i];
      ++n;
    }
  }
  return n > 0 ? s / n : 0.0;
}

size_t voiced_count(const F0Track& t) { return static_cast<size_t>(std::count(t.voiced.begin(), t.voiced.end(), true)); }

// Straight O(N^2) DFT magnitude of one frame.
std::vector<double> naive_dft_mag(const std::vector<double>& frame) {
  const size_t n = frame.size();
  std::vector<double> mag(n / 2 + 1);
  for (size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t i = 0; i < n; ++i) {
      acc += frame[i] * std::polar(1.0, -2.0 * kPi * static_cast<double>(k * i % n) / static_cast<double>(n));
    }
    mag[k] = std::abs(acc);
  }
  return mag;
}

// Independent single-resolution loss: centre padding, Hann window, direct DFT.
double oracle_stft_loss(const std::vector<float>& p, const std::vector<float>& t, int fft, int hop, int win) {
  const long n = static_cast<long>(p.size());
  const long frames = n / hop + 1;
  const int off = (fft - win) / 2;
  double diff2 = 0.0, tgt2 = 0.0, logsum = 0.0, count = 0.0;
  for (long f = 0; f < frames; ++f) {
    std::vector<double> fp(static_cast<size_t>(fft), 0.0), ft(static_cast<size_t>(fft), 0.0);
    for (int i = 0; i < win; ++i) {
      const long j = f * hop + off + i - fft / 2;
      if (j < 0 || j >= n) continue;
      const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * i / win);
      fp[static_cast<size_t>(off + i)] = p[static_cast<size_t>(j)] * w;
      ft[static_cast<size_t>(off + i)] = t[static_cast<size_t>(j)] * w;
    }
    const auto mp = naive_dft_mag(fp), mt = naive_dft_mag(ft);
    for (size_t k = 0; k < mp.size(); ++k) {
      const double a = std::max(mp[k], 1e-7), b = std::max(mt[k], 1e-7);
      diff2 += (a - b) * (a - b);
      tgt2 += b * b;
      logsum += std::abs(std::log(a) - std::log(b));
      count += 1.0;
    }
  }
  return std::sqrt(diff2) / std::sqrt(tgt2) + logsum / count;
}

Waveform noise(size_t n, std::uint64_t seed, double amp = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, amp);
  Waveform w;
  w.samples.resize(n);
  for (auto& s : w.samples) s = static_cast<float>(d(rng));
  return w;
}

}  // namespace

TEST_CASE("estimate_f0 recovers generator frequencies") {
  SECTION("220 Hz sine") {
    const auto t = estimate_f0(sine(220.0, 1.0), {});
    CHECK(t.size() == 100);
    const double m = mean_voiced(t);
    CHECK(m >= 215.6);
    CHECK(m <= 224.4);
  }
  SECTION("100 Hz sawtooth") {
    const double m = mean_voiced(estimate_f0(sawtooth(100.0, 0.5), {}));
    CHECK(m >= 98.0);
    CHECK(m <= 102.0);
  }
  SECTION("tones across the speech range") {
    for (double hz : {80.0, 110.0, 150.0, 200.0, 285.0, 350.0, 500.0}) {
      INFO(hz);
      const auto t = estimate_f0(sine(hz, 0.5), {});
      CHECK(voiced_count(t) > t.size() * 9 / 10);
      CHECK(std::abs(mean_voiced(t) / hz - 1.0) < 0.02);
    }
  }
}

TEST_CASE("estimate_f0 on silence is fully unvoiced") {
  Waveform w;
  w.samples.assign(24000, 0.0f);
  const auto t = estimate_f0(w, {});
  CHECK(voiced_count(t) == 0);
  for (double f : t.f0_hz) CHECK(f == 0.0);
}

TEST_CASE("estimate_f0 track invariants and errors") {
  const auto t = estimate_f0(sawtooth(180.0, 0.3), {70.0, 400.0});
  for (size_t i = 0; i < t.size(); ++i) {
    CHECK((t.f0_hz[i] > 0.0) == t.voiced[i]);
    if (t.voiced[i]) {
      CHECK(t.f0_hz[i] >= 70.0);
      CHECK(t.f0_hz[i] <= 400.0);
    }
  }
  CHECK_THROWS_AS(estimate_f0(Waveform{}, {}), InvalidInput);
  CHECK_THROWS_AS(estimate_f0(sine(200, 0.2), {300.0, 200.0}), InvalidInput);
  CHECK_THROWS_AS(estimate_f0(sine(200, 0.2, 8000), {50.0, 6000.0}), InvalidInput);
}

TEST_CASE("estimate_f0 is shift-equivariant on a stationary sine") {
  auto w = sine(173.0, 0.6);
  const double before = mean_voiced(estimate_f0(w, {}));
  std::rotate(w.samples.begin(), w.samples.begin() + 377, w.samples.end());
  const double after = mean_voiced(estimate_f0(w, {}));
  CHECK(std::abs(after / before - 1.0) < 0.005);
}

TEST_CASE("continuous log-F0 fill rules") {
  SECTION("all voiced") {
    F0Track t{{200, 200, 200}, {true, true, true}, 0.01};
    const auto c = to_continuous_logf0(t, 50.0);
    for (size_t i = 0; i < 3; ++i) {
      CHECK(c.log_f0[i] == std::log(200.0));
      CHECK(c.vuv[i] == 1.0f);
    }
  }
  SECTION("interior gap") {
    F0Track t{{200, 0, 400}, {true, false, true}, 0.01};
    const auto c = to_continuous_logf0(t, 50.0);
    CHECK(c.log_f0[1] == Catch::Approx((std::log(200.0) + std::log(400.0)) / 2).epsilon(1e-14));
    CHECK(c.vuv == std::vector<float>{1, 0, 1});
  }
  SECTION("edges are held") {
    F0Track t{{0, 0, 150, 0, 300, 0}, {false, false, true, false, true, false}, 0.01};
    const auto c = to_continuous_logf0(t, 50.0);
    CHECK(c.log_f0[0] == std::log(150.0));
    CHECK(c.log_f0[1] == std::log(150.0));
    CHECK(c.log_f0[5] == std::log(300.0));
  }
  SECTION("all unvoiced") {
    F0Track t{{0, 0, 0}, {false, false, false}, 0.01};
    const auto c = to_continuous_logf0(t, 50.0);
    for (size_t i = 0; i < 3; ++i) {
      CHECK(c.log_f0[i] == std::log(50.0));
      CHECK(c.vuv[i] == 0.0f);
    }
  }
  SECTION("masking by vuv recovers the voiced values exactly") {
    const auto t = estimate_f0(sawtooth(130.0, 0.4), {});
    const auto c = to_continuous_logf0(t, 50.0);
    REQUIRE(c.log_f0.size() == t.size());
    for (size_t i = 0; i < t.size(); ++i) {
      CHECK(std::isfinite(c.log_f0[i]));
      if (c.vuv[i] == 1.0f) CHECK(c.log_f0[i] == std::log(t.f0_hz[i]));
    }
  }
  CHECK_THROWS_AS(to_continuous_logf0(F0Track{}, 0.0), InvalidInput);
}

TEST_CASE("mel spectrogram shape and floor") {
  Waveform zero;
  zero.samples.assign(24000, 0.0f);
  const auto m = mel_spectrogram(zero);
  CHECK(m.num_frames() == 100);
  CHECK(m.frames.cols() == 80);
  CHECK((m.frames.array() == static_cast<float>(std::log(1e-5))).all());

  zero.samples.resize(24001);
  CHECK(mel_spectrogram(zero).num_frames() == 101);
  CHECK(frame_count(239, 240) == 1);
  CHECK(frame_count(480, 240) == 2);
  CHECK_THROWS_AS(mel_spectrogram(Waveform{}), InvalidInput);
  MelConfig bad;
  bad.window = 100;
  CHECK_THROWS_AS(mel_spectrogram(sine(200, 0.1), bad), InvalidInput);
}

TEST_CASE("mel peak lands in the filter containing the tone") {
  for (double hz : {300.0, 1000.0, 2500.0, 6000.0}) {
    INFO(hz);
    const auto m = mel_spectrogram(sine(hz, 0.3));
    Eigen::Index peak = 0;
    m.frames.row(15).maxCoeff(&peak);

    // Oracle: evaluate each triangle of an HTK-scale bank at the tone.
    const int bins = 80;
    const double top = 2595.0 * std::log10(1.0 + 12000.0 / 700.0);
    int expect = -1;
    double best = -1.0;
    for (int b = 0; b < bins; ++b) {
      auto edge = [&](int i) { return 700.0 * (std::pow(10.0, top * i / (bins + 1) / 2595.0) - 1.0); };
      const double lo = edge(b), c = edge(b + 1), hi = edge(b + 2);
      const double wgt = hz <= c ? (hz - lo) / (c - lo) : (hi - hz) / (hi - c);
      if (wgt > best) {
        best = wgt;
        expect = b;
      }
    }
    CHECK(peak == expect);
  }
}

TEST_CASE("mel values match a direct DFT through the filterbank") {
  const auto w = noise(4800, 7);
  const auto m = mel_spectrogram(w);
  const auto fb = mel_filterbank(80, 1024, 24000, 0.0, 0.0);
  for (int f : {0, 7, 19}) {
    std::vector<double> frame(1024, 0.0);
    const long centre = f * 240 + 120;
    for (int i = 0; i < 1024; ++i) {
      const long j = centre - 512 + i;
      if (j >= 0 && j < 4800) frame[static_cast<size_t>(i)] = w.samples[static_cast<size_t>(j)] * (0.5 - 0.5 * std::cos(2 * kPi * i / 1024));
    }
    const auto mag = naive_dft_mag(frame);
    for (int b = 0; b < 80; b += 9) {
      double e = 0.0;
      for (int k = 0; k < 513; ++k) e += fb(b, k) * mag[static_cast<size_t>(k)];
      CHECK(m.frames(f, b) == Catch::Approx(std::max(std::log(e), std::log(1e-5))).epsilon(1e-5));
    }
  }
}

TEST_CASE("perturbation contracts") {
  const auto w = sine(200.0, 0.5);
  SECTION("identity") {
    PerturbParams id;
    const auto out = perturb_information(w, id, 1);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
      num += std::pow(out.samples[i] - w.samples[i], 2);
      den += std::pow(w.samples[i], 2);
    }
    CHECK(std::sqrt(num / den) <= 1e-3);
  }
  SECTION("pitch shift by 1.5") {
    PerturbParams p;
    p.pitch_shift_ratio = 1.5;
    const auto out = perturb_information(w, p, 3);
    CHECK(out.size() == w.size());
    CHECK(out.sample_rate == w.sample_rate);
    const double m = mean_voiced(estimate_f0(out, {}));
    CHECK(std::abs(m / 300.0 - 1.0) <= 0.03);
  }
  SECTION("random parameters keep length and are seed-deterministic") {
    std::mt19937_64 rng(11);
    const auto speechlike = sawtooth(140.0, 0.37);
    for (int i = 0; i < 4; ++i) {
      const auto p = sample_perturb_params(rng);
      CHECK(p.formant_shift_ratio >= 1 / 1.4);
      CHECK(p.formant_shift_ratio <= 1.4);
      CHECK(p.pitch_shift_ratio >= 0.5);
      CHECK(p.pitch_shift_ratio <= 2.0);
      const auto a = perturb_information(speechlike, p, 42);
      const auto b = perturb_information(speechlike, p, 42);
      CHECK(a.size() == speechlike.size());
      CHECK(a.samples == b.samples);
      for (float s : a.samples) CHECK(std::isfinite(s));
    }
  }
  SECTION("errors") {
    PerturbParams p;
    p.pitch_shift_ratio = 0.0;
    CHECK_THROWS_AS(perturb_information(w, p, 0), InvalidInput);
    p.pitch_shift_ratio = 1.0;
    p.formant_shift_ratio = -1.0;
    CHECK_THROWS_AS(perturb_information(w, p, 0), InvalidInput);
  }
}

TEST_CASE("multi-resolution STFT loss values") {
  const auto target = noise(6000, 1);
  CHECK(multires_stft_loss(target, target) == 0.0);
  Waveform twice = target;
  for (auto& s : twice.samples) s *= 2.0f;
  CHECK(multires_stft_loss(twice, target) > 0.0);

  const auto pred = noise(6000, 2, 0.2);
  const auto res = default_stft_resolutions();
  double oracle = 0.0;
  for (const auto& r : res) oracle += oracle_stft_loss(pred.samples, target.samples, r.fft, r.hop, r.window);
  CHECK(multires_stft_loss(pred, target) == Catch::Approx(oracle).epsilon(1e-6));
  CHECK(multires_stft_loss_grad(pred.samples, target.samples).loss == Catch::Approx(oracle).epsilon(1e-9));

  CHECK_THROWS_AS(multires_stft_loss(pred, noise(5999, 3)), InvalidInput);
  CHECK_THROWS_AS(multires_stft_loss(pred, target, {}), InvalidInput);
}

TEST_CASE("STFT loss gradient matches central differences") {
  const std::vector<StftResolution> res = {{64, 16, 48}, {128, 32, 128}};
  auto pred = noise(300, 4, 0.3).samples;
  const auto target = noise(300, 5, 0.3).samples;
  const auto g = multires_stft_loss_grad(pred, target, res);
  std::vector<double> numeric;
  std::vector<double> analytic;
  for (size_t i = 3; i < pred.size(); i += 23) {
    // Finite differences in float inputs: use a step large enough for float
    // resolution and compare in aggregate.
    const float keep = pred[i];
    const float h = 1e-3f;
    pred[i] = keep + h;
    const double up = multires_stft_loss_grad(pred, target, res).loss;
    pred[i] = keep - h;
    const double down = multires_stft_loss_grad(pred, target, res).loss;
    pred[i] = keep;
    const double step = static_cast<double>(keep + h) - static_cast<double>(keep - h);
    numeric.push_back((up - down) / step);
    analytic.push_back(g.grad[i]);
  }
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < numeric.size(); ++i) {
    num += std::pow(numeric[i] - analytic[i], 2);
    den += std::pow(numeric[i], 2);
  }
  CHECK(std::sqrt(num / den) < 1e-2);
}

TEST_CASE("wav round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "voicectl_wav_test";
  const auto w = sine(440.0, 0.1);
  write_wav(dir / "a.wav", w);
  const auto r = read_wav(dir / "a.wav");
  REQUIRE(r.size() == w.size());
  CHECK(r.sample_rate == 24000);
  for (size_t i = 0; i < w.size(); ++i) CHECK(std::abs(r.samples[i] - w.samples[i]) < 1.0 / 16000);
  write_wav(dir / "b.wav", w, WavFormat::kFloat32);
  CHECK(read_wav(dir / "b.wav").samples == w.samples);

  const auto slow = sine(440.0, 0.1, 16000);
  write_wav(dir / "c.wav", slow, WavFormat::kFloat32);
  CHECK(read_wav_at(dir / "c.wav", 24000).size() == 2400);
  CHECK_THROWS_AS(read_wav(dir / "missing.wav"), IoError);
  std::filesystem::remove_all(dir);
}
