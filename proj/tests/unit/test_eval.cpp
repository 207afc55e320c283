#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "voicectl/core/tensor_io.hpp"
#include "voicectl/eval/metrics.hpp"
#include "voicectl/eval/speaker.hpp"
#include "voicectl/eval/sweep.hpp"
#include "voicectl/pipeline/toy_corpus.hpp"
#include "voicectl/signal/wav.hpp"

using namespace voicectl;

namespace {

Waveform sine(double hz, double seconds, double amp = 0.5, int sr = kCorpusSampleRate) {
  Waveform w;
  w.sample_rate = sr;
  const auto n = static_cast<size_t>(seconds * sr);
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    w.samples[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / sr));
  }
  return w;
}

Waveform concat(const Waveform& a, const Waveform& b) {
  Waveform w = a;
  w.samples.insert(w.samples.end(), b.samples.begin(), b.samples.end());
  return w;
}

Waveform silence(double seconds) {
  Waveform w;
  w.samples.assign(static_cast<size_t>(seconds * kCorpusSampleRate), 0.0f);
  return w;
}

// Computational formula n*Sxy - Sx*Sy over the root of the variance terms,
// kept apart from the centred two-pass form used by pearson().
double pearson_reference(const std::vector<double>& x, const std::vector<double>& y) {
  long double n = static_cast<long double>(x.size()), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    syy += static_cast<long double>(y[i]) * y[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  return static_cast<double>((n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy)));
}

// Embeds a waveform as (RMS, first-sample sign, 1); enough to drive the
// similarity plumbing with known cosines.
class FixedEmbedder : public SpeakerEmbedder {
 public:
  std::string id() const override { return "fixed"; }
  Eigen::VectorXd embed(const Waveform& w) const override {
    if (w.empty()) throw EmbedderUnavailable("empty");
    double rms = 0.0;
    for (float s : w.samples) rms += static_cast<double>(s) * s;
    return Eigen::Vector2d(std::sqrt(rms / static_cast<double>(w.size())), 0.2);
  }
};

class ThrowingEmbedder : public SpeakerEmbedder {
 public:
  std::string id() const override { return "broken"; }
  Eigen::VectorXd embed(const Waveform&) const override { throw std::runtime_error("model file missing"); }
};

std::vector<SweepSample> sine_sweep(const std::vector<double>& hz_by_level, const std::string& text,
                                    const std::string& group) {
  std::vector<SweepSample> out;
  for (int level = 1; level <= 5; ++level) {
    SweepSample s;
    s.text_id = text;
    s.group = group;
    s.level = level;
    s.description = group + " level " + std::to_string(level);
    s.units = 10;
    s.audio = sine(hz_by_level[static_cast<size_t>(level - 1)], 0.5, 0.2 + 0.05 * level);
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("mean F0 of pure tones") {
  CHECK(mean_f0(sine(220.0, 1.0)) == Catch::Approx(220.0).epsilon(0.02));
  CHECK(mean_f0(sine(120.0, 1.0)) == Catch::Approx(120.0).epsilon(0.02));
  // Equal halves at 200 and 400 Hz: the arithmetic mean is 300 Hz.
  CHECK(mean_f0(concat(sine(200.0, 1.0), sine(400.0, 1.0))) == Catch::Approx(300.0).epsilon(0.03));
  // Silence around the tone does not move the mean.
  CHECK(mean_f0(concat(concat(silence(0.5), sine(220.0, 1.0)), silence(0.5))) == Catch::Approx(220.0).epsilon(0.02));
  CHECK_THROWS_AS(mean_f0(silence(1.0)), NoVoicedFrames);
}

TEST_CASE("speaking speed over the active region") {
  const Waveform active = sine(200.0, 2.0);
  CHECK(speaking_speed(10, active) == Catch::Approx(5.0).epsilon(1e-9));
  const Waveform padded = concat(concat(silence(0.7), active), silence(1.3));
  CHECK(speaking_speed(10, padded) == Catch::Approx(5.0).epsilon(0.01));
  const auto [a, b] = active_region(padded);
  CHECK(a == Catch::Approx(0.7).margin(0.011));
  CHECK(b == Catch::Approx(2.7).margin(0.011));
  // Material 50 dB down is outside the -40 dB gate.
  const Waveform quiet_tail = concat(active, sine(200.0, 1.0, 0.5 * std::pow(10.0, -50.0 / 20.0)));
  CHECK(speaking_speed(10, quiet_tail) == Catch::Approx(5.0).epsilon(0.01));
  CHECK_THROWS_AS(speaking_speed(0, active), InvalidInput);
  CHECK_THROWS_AS(speaking_speed(10, silence(1.0)), InvalidInput);
}

TEST_CASE("speaking speed orders toy utterances by rate") {
  ToyCorpusSpec spec;
  const auto table = toy_symbol_table("A");
  std::vector<int> symbols;
  for (int i = 0; i < 6; ++i) {
    symbols.push_back(1 + i % 3);
    symbols.push_back(table.size() - 1 - i % 2);
  }
  PhonemeSequence text{"A", symbols};
  const int units = unit_count(text, table);
  CHECK(units == 12);
  double prev = 0.0;
  for (double rate : spec.speed_levels) {
    const auto w = render_toy_utterance("A", symbols, toy_durations("A", symbols, rate, spec), 0, 150.0, spec, 1);
    const double s = speaking_speed(units, w);
    INFO("rate " << rate << " measured " << s);
    CHECK(s > prev);
    prev = s;
  }
}

TEST_CASE("pearson correlation") {
  CHECK(pearson({1, 2, 3, 4}, {2, 4, 6, 8}) == Catch::Approx(1.0));
  CHECK(pearson({1, 2, 3, 4}, {8, 6, 4, 2}) == Catch::Approx(-1.0));
  CHECK(pearson({1, 2, 3}, {1, 3, 2}) == Catch::Approx(0.5));
  CHECK(pearson({1, 2, 3, 4, 5}, {2, 1, 4, 3, 5}) == Catch::Approx(0.8));
  // Positive affine maps on either side leave r unchanged.
  CHECK(pearson({10, 20, 30, 40, 50}, {-1, -3, 3, 1, 5}) == Catch::Approx(0.8));

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(20), y(20);
    for (size_t i = 0; i < x.size(); ++i) {
      x[i] = n(rng);
      y[i] = 0.5 * x[i] + n(rng);
    }
    CHECK(pearson(x, y) == Catch::Approx(pearson_reference(x, y)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), UndefinedCorrelation);
  CHECK_THROWS_AS(pearson({1, 2, 3}, {4, 4, 4}), UndefinedCorrelation);
  CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), InvalidInput);
  CHECK_THROWS_AS(pearson({1}, {1}), InvalidInput);
}

TEST_CASE("cosine similarity and its mean") {
  const Eigen::Vector2d x(1, 0), y(0, 1);
  CHECK(cosine_similarity(x, x) == Catch::Approx(1.0));
  CHECK(cosine_similarity(x, y) == Catch::Approx(0.0).margin(1e-12));
  CHECK(cosine_similarity(x, Eigen::Vector2d(-3, 0)) == Catch::Approx(-1.0));
  CHECK(mean_cosine(x, {x, y, y, y}) == Catch::Approx(0.25));
  const Eigen::Vector3d a(1, 2, 3), b(-2, 0.5, 4);
  CHECK(cosine_similarity(a * 7.0, b * 0.01) == Catch::Approx(cosine_similarity(a, b)));
  CHECK_THROWS_AS(cosine_similarity(x, Eigen::Vector3d(1, 0, 0)), InvalidInput);
  CHECK_THROWS_AS(cosine_similarity(x, Eigen::Vector2d::Zero()), InvalidInput);
}

TEST_CASE("speaker similarity wraps embedder failures") {
  const Waveform w = sine(200.0, 0.3);
  FixedEmbedder fixed;
  CHECK(speaker_similarity(w, {w, w}, fixed) == Catch::Approx(1.0));
  ThrowingEmbedder broken;
  CHECK_THROWS_AS(speaker_similarity(w, {w}, broken), EmbedderUnavailable);
  CachedSpeakerEmbedder missing(std::filesystem::temp_directory_path() / "voicectl_no_such_cache");
  CHECK_THROWS_AS(missing.embed(w), EmbedderUnavailable);
}

TEST_CASE("cached speaker embeddings are keyed by the audio samples") {
  const auto dir = std::filesystem::temp_directory_path() / "voicectl_spk_cache";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const Waveform w = sine(180.0, 0.2);
  ag::Mat e(1, 3);
  e << 1, 2, 3;
  write_tensors(CachedSpeakerEmbedder::cache_path(dir, w), {e});
  CachedSpeakerEmbedder cached(dir);
  CHECK(cached.embed(w).isApprox(Eigen::Vector3d(1, 2, 3)));
  CHECK_THROWS_AS(cached.embed(sine(181.0, 0.2)), EmbedderUnavailable);
  std::filesystem::remove_all(dir);
}

TEST_CASE("sweep report correlation equals an external recomputation") {
  auto samples = sine_sweep({110, 140, 175, 215, 260}, "t1", "warm");
  const auto more = sine_sweep({120, 125, 190, 180, 300}, "t2", "warm");
  samples.insert(samples.end(), more.begin(), more.end());
  FixedEmbedder emb;
  const SweepReport r = measure_sweep(samples, Attribute::kPitch, 3, &emb);
  REQUIRE(r.corr.has_value());
  REQUIRE(r.measurements.size() == 10);
  std::vector<double> levels, values;
  for (const auto& m : r.measurements) {
    REQUIRE(m.value.has_value());
    levels.push_back(m.level);
    values.push_back(*m.value);
  }
  CHECK(*r.corr == Catch::Approx(pearson_reference(levels, values)).epsilon(1e-9));
  CHECK(r.per_text_corr.size() == 2);
  CHECK(r.per_group_corr.count("warm") == 1);

  // Similarity: normal sample against the other four, averaged over texts.
  double expected = 0.0;
  for (const std::string t : {"t1", "t2"}) {
    const SweepSample* normal = nullptr;
    std::vector<Waveform> others;
    for (const auto& s : samples) {
      if (s.text_id != t) continue;
      if (s.level == 3) normal = &s;
      else others.push_back(s.audio);
    }
    expected += speaker_similarity(normal->audio, others, emb) / 2.0;
  }
  REQUIRE(r.sim.has_value());
  CHECK(*r.sim == Catch::Approx(expected));
  CHECK(r.corr_name() == "P-Corr");
  CHECK(r.sim_name() == "P-SIM");

  const SweepReport back = SweepReport::from_json(r.to_json());
  CHECK(back.corr == r.corr);
  CHECK(back.sim == r.sim);
  CHECK(back.measurements.size() == r.measurements.size());
  CHECK(back.per_text_corr == r.per_text_corr);
  CHECK(back.to_json() == r.to_json());
}

TEST_CASE("unmeasurable samples are reported, not fatal") {
  auto samples = sine_sweep({110, 140, 175, 215, 260}, "t1", "warm");
  samples[1].audio = silence(0.5);
  const SweepReport r = measure_sweep(samples, Attribute::kPitch, 3, nullptr);
  CHECK(r.corr.has_value());
  CHECK_FALSE(r.sim.has_value());
  CHECK_FALSE(r.measurements[1].value.has_value());
  CHECK_FALSE(r.measurements[1].error.empty());
  CHECK_FALSE(r.failures.empty());

  auto flat = sine_sweep({150, 150, 150, 150, 150}, "t1", "warm");
  const SweepReport u = measure_sweep(flat, Attribute::kSpeed, 3, nullptr);
  CHECK_FALSE(u.corr.has_value());
  CHECK_FALSE(u.failures.empty());

  ThrowingEmbedder broken;
  const SweepReport b = measure_sweep(sine_sweep({110, 140, 175, 215, 260}, "t1", "warm"), Attribute::kPitch, 3, &broken);
  CHECK(b.corr.has_value());
  CHECK_FALSE(b.sim.has_value());
  CHECK_FALSE(b.failures.empty());
}

TEST_CASE("sweep WAV directories round-trip the level map") {
  const auto dir = std::filesystem::temp_directory_path() / "voicectl_sweep_dir";
  std::filesystem::remove_all(dir);
  const auto samples = sine_sweep({110, 140, 175, 215, 260}, "t1", "warm");
  write_sweep_dir(dir, samples);
  CHECK(std::filesystem::exists(dir / "level_map.json"));
  const auto back = read_sweep_dir(dir);
  REQUIRE(back.size() == samples.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].level == samples[i].level);
    CHECK(back[i].text_id == samples[i].text_id);
    CHECK(back[i].group == samples[i].group);
    CHECK(back[i].units == samples[i].units);
    CHECK(back[i].audio.size() == samples[i].audio.size());
  }
  const auto direct = measure_sweep(samples, Attribute::kPitch, 3, nullptr);
  const auto from_dir = measure_sweep(back, Attribute::kPitch, 3, nullptr);
  CHECK(*from_dir.corr == Catch::Approx(*direct.corr).margin(1e-3));
  std::filesystem::remove_all(dir);
}

TEST_CASE("results table columns") {
  SweepReport p, s;
  p.attribute = Attribute::kPitch;
  p.corr = 0.91;
  p.sim = 0.8;
  s.attribute = Attribute::kSpeed;
  s.corr = 0.95;
  const std::string table = render_table({{"normal", &p, &s}, {"entangled", &p, nullptr}});
  const auto header = table.substr(0, table.find('\n'));
  CHECK(header.find("System") < header.find("P-Corr"));
  CHECK(header.find("P-Corr") < header.find("P-SIM"));
  CHECK(header.find("P-SIM") < header.find("S-Corr"));
  CHECK(header.find("S-Corr") < header.find("S-SIM"));
  CHECK(table.find("0.910") != std::string::npos);
  CHECK(table.find("entangled") != std::string::npos);
  CHECK(parse_attribute("pitch") == Attribute::kPitch);
  CHECK(attribute_name(Attribute::kSpeed) == "speed");
  CHECK_THROWS_AS(parse_attribute("loudness"), InvalidInput);
}

TEST_CASE("mel-statistics embedder separates toy speakers") {
  ToyCorpusSpec spec;
  const auto table = toy_symbol_table("A");
  std::vector<Waveform> audio;
  std::vector<std::string> ids;
  for (int spk = 0; spk < 3; ++spk) {
    for (int u = 0; u < 4; ++u) {
      std::vector<int> symbols;
      for (int i = 0; i < 4; ++i) {
        symbols.push_back(1 + (i + u) % 3);
        symbols.push_back(table.size() - 1 - (i + u) % 2);
      }
      const double pitch = spec.pitch_levels_hz[static_cast<size_t>(u % 5)];
      audio.push_back(render_toy_utterance("A", symbols, toy_durations("A", symbols, 8.0, spec), spk, pitch, spec,
                                           static_cast<std::uint64_t>(spk * 10 + u)));
      ids.push_back("s" + std::to_string(spk));
    }
  }
  MelStatsEmbedderConfig cfg;
  cfg.steps = 150;
  EmbedderTrainReport rep;
  const auto emb = train_mel_stats_embedder(audio, ids, cfg, &rep);
  CHECK(rep.final_loss < rep.initial_loss);
  CHECK(rep.train_accuracy > 0.9);
  double same = 0.0, diff = 0.0;
  int ns = 0, nd = 0;
  for (size_t i = 0; i < audio.size(); ++i) {
    for (size_t j = i + 1; j < audio.size(); ++j) {
      const double c = cosine_similarity(emb->embed(audio[i]), emb->embed(audio[j]));
      if (ids[i] == ids[j]) {
        same += c;
        ++ns;
      } else {
        diff += c;
        ++nd;
      }
    }
  }
  CHECK(same / ns > diff / nd);

  const auto dir = std::filesystem::temp_directory_path() / "voicectl_embedder";
  std::filesystem::remove_all(dir);
  emb->save(dir);
  const auto loaded = MelStatsEmbedder::load(dir);
  CHECK(loaded->embed(audio[0]) == emb->embed(audio[0]));
  CHECK(loaded->speakers() == emb->speakers());
  std::filesystem::remove_all(dir);
}
