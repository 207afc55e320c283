#include "voicectl/pipeline/toy_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "voicectl/core/errors.hpp"
#include "voicectl/core/fs.hpp"
#include "voicectl/core/rng.hpp"
#include "voicectl/signal/wav.hpp"

namespace voicectl {

namespace {

using nlohmann::json;

struct Formant {
  double hz, bandwidth, gain;  // gain in nepers
};

struct SpeakerVoice {
  std::string adjective;
  std::vector<Formant> formants;
  double tilt_np_per_octave;
  double breath;  // aspiration noise relative to harmonic RMS
};

const std::vector<SpeakerVoice>& voices() {
  static const std::vector<SpeakerVoice> v = {
      {"bright", {{800, 150, 2.0}, {2000, 250, 2.3}, {3400, 300, 2.0}}, -0.25, 0.02},
      {"warm", {{450, 120, 2.5}, {1100, 200, 1.8}, {2400, 300, 0.8}}, -1.0, 0.02},
      {"breathy", {{650, 200, 1.8}, {1500, 300, 1.5}, {2800, 350, 1.0}}, -0.75, 0.35},
      {"nasal", {{260, 80, 2.5}, {1000, 150, 1.6}, {2200, 200, 1.4}, {700, 120, -1.5}}, -0.55, 0.03},
      {"deep", {{350, 120, 2.2}, {900, 180, 1.6}, {2000, 300, 0.9}}, -0.9, 0.05},
      {"thin", {{1000, 200, 1.6}, {2600, 250, 2.2}, {4000, 300, 2.0}}, -0.35, 0.04},
  };
  return v;
}

struct ToyPhone {
  std::string name;
  bool voiced;
  double level;      // target RMS
  double band_hz;    // consonant noise centre
};

std::vector<ToyPhone> phones(const std::string& language) {
  if (language == "A") {
    return {{"p", false, 0.03, 1500}, {"t", false, 0.06, 3500}, {"k", false, 0.10, 2500},
            {"a", true, 0.22, 0},     {"i", true, 0.12, 0},     {"u", true, 0.17, 0}};
  }
  if (language == "B") {
    return {{"s", false, 0.04, 5000}, {"h", false, 0.08, 1200}, {"e", true, 0.14, 0},
            {"o", true, 0.20, 0},     {"y", true, 0.10, 0}};
  }
  // Further languages get a generic inventory with prefixed names.
  return {{language + "_c1", false, 0.05, 2000}, {language + "_c2", false, 0.09, 4000},
          {language + "_v1", true, 0.13, 0},     {language + "_v2", true, 0.19, 0}};
}

double log_envelope(const SpeakerVoice& v, double hz) {
  double e = v.tilt_np_per_octave * std::log2(std::max(hz, 50.0) / 100.0);
  for (const auto& f : v.formants) {
    const double d = (hz - f.hz) / f.bandwidth;
    e += f.gain * std::exp(-0.5 * d * d);
  }
  return e;
}

// Gain ramp so segment edges do not click: 4 ms raised cosine.
double edge_gain(long i, long start, long end, long ramp) {
  const long from_start = i - start, to_end = end - 1 - i;
  const long d = std::min(from_start, to_end);
  if (d >= ramp) return 1.0;
  return 0.5 - 0.5 * std::cos(std::numbers::pi * (static_cast<double>(d) + 0.5) / static_cast<double>(ramp));
}

// Second-order band-pass (RBJ, constant peak gain) run in place.
void bandpass(std::vector<double>& x, double sr, double centre, double q) {
  const double w0 = 2.0 * std::numbers::pi * centre / sr;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0, a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (double& s : x) {
    const double y = b0 * s + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = s;
    y2 = y1;
    y1 = y;
    s = y;
  }
}

double rms(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return x.empty() ? 0.0 : std::sqrt(e / static_cast<double>(x.size()));
}

}  // namespace

void ToyCorpusSpec::check() const {
  if (n_speakers < 1 || n_speakers > toy_max_speakers()) {
    throw ConfigError("toy corpus: n_speakers must be in 1.." + std::to_string(toy_max_speakers()));
  }
  if (n_utterances < 1) throw ConfigError("toy corpus: n_utterances must be >= 1");
  if (pitch_levels_hz.size() != 5 || speed_levels.size() != 5) {
    throw ConfigError("toy corpus: need exactly five pitch and five speed levels");
  }
  for (size_t i = 1; i < 5; ++i) {
    if (!(pitch_levels_hz[i] > pitch_levels_hz[i - 1]) || !(speed_levels[i] > speed_levels[i - 1])) {
      throw ConfigError("toy corpus: levels must be strictly increasing");
    }
  }
  if (pitch_levels_hz.front() <= 0.0 || speed_levels.front() <= 0.0) throw ConfigError("toy corpus: levels must be positive");
  if (languages.empty()) throw ConfigError("toy corpus: no languages");
  if (syllables < 1 || edge_silence_frames < 0 || sample_rate <= 0 || hop_seconds <= 0.0) {
    throw ConfigError("toy corpus: invalid sizes");
  }
}

void to_json(json& j, const ToyCorpusSpec& s) {
  j = json{{"n_speakers", s.n_speakers},
           {"n_utterances", s.n_utterances},
           {"pitch_levels_hz", s.pitch_levels_hz},
           {"speed_levels", s.speed_levels},
           {"languages", s.languages},
           {"described_language", s.described_language},
           {"syllables", s.syllables},
           {"edge_silence_frames", s.edge_silence_frames},
           {"sample_rate", s.sample_rate},
           {"hop_seconds", s.hop_seconds},
           {"eval_texts", s.eval_texts},
           {"seed", s.seed}};
}

void from_json(const json& j, ToyCorpusSpec& s) {
  s.n_speakers = j.value("n_speakers", s.n_speakers);
  s.n_utterances = j.value("n_utterances", s.n_utterances);
  s.pitch_levels_hz = j.value("pitch_levels_hz", s.pitch_levels_hz);
  s.speed_levels = j.value("speed_levels", s.speed_levels);
  s.languages = j.value("languages", s.languages);
  s.described_language = j.value("described_language", s.described_language);
  s.syllables = j.value("syllables", s.syllables);
  s.edge_silence_frames = j.value("edge_silence_frames", s.edge_silence_frames);
  s.sample_rate = j.value("sample_rate", s.sample_rate);
  s.hop_seconds = j.value("hop_seconds", s.hop_seconds);
  s.eval_texts = j.value("eval_texts", s.eval_texts);
  s.seed = j.value("seed", s.seed);
}

const std::string& toy_speaker_adjective(int index) { return voices().at(static_cast<size_t>(index)).adjective; }
int toy_max_speakers() { return static_cast<int>(voices().size()); }

SymbolTable toy_symbol_table(const std::string& language) {
  std::vector<std::string> names = {"pau"};
  for (const auto& p : phones(language)) names.push_back(p.name);
  return SymbolTable(std::move(names));
}

std::vector<int> toy_durations(const std::string& language, const std::vector<int>& symbols, double rate,
                               const ToyCorpusSpec& spec) {
  const auto inventory = phones(language);
  const double mean = 1.0 / (spec.hop_seconds * rate);
  std::vector<int> d;
  d.reserve(symbols.size());
  for (int id : symbols) {
    if (id == 0) {
      d.push_back(spec.edge_silence_frames);
      continue;
    }
    if (id < 0 || id > static_cast<int>(inventory.size())) throw InvalidInput("toy durations: unknown symbol id");
    // Consonants take 0.7 of the mean symbol duration, vowels 1.3.
    const bool voiced = inventory[static_cast<size_t>(id - 1)].voiced;
    d.push_back(std::max(1, static_cast<int>(std::lround((voiced ? 1.3 : 0.7) * mean))));
  }
  return d;
}

Waveform render_toy_utterance(const std::string& language, const std::vector<int>& symbols,
                              const std::vector<int>& durations, int speaker, double pitch_hz,
                              const ToyCorpusSpec& spec, std::uint64_t seed) {
  if (symbols.size() != durations.size()) throw InvalidInput("toy render: durations do not match symbols");
  if (speaker < 0 || speaker >= toy_max_speakers()) throw InvalidInput("toy render: unknown speaker");
  const auto inventory = phones(language);
  const auto& voice = voices()[static_cast<size_t>(speaker)];
  const double sr = spec.sample_rate;
  const long hop = hop_samples(spec.sample_rate, spec.hop_seconds);
  long total_frames = 0;
  for (int d : durations) total_frames += d;
  const long total = total_frames * hop;
  const long ramp = static_cast<long>(std::lround(0.004 * sr));

  auto rng = SeedTree(seed).engine();
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> out(static_cast<size_t>(total), 0.0);
  double phase = 0.0;
  long pos = 0;
  for (size_t s = 0; s < symbols.size(); ++s) {
    const long start = pos, end = pos + durations[s] * hop;
    pos = end;
    if (symbols[s] == 0 || end == start) {
      // Keep the oscillator running through pauses so phase is a pure function of time.
      for (long i = start; i < end; ++i) phase += 2.0 * std::numbers::pi * pitch_hz / sr;
      continue;
    }
    if (symbols[s] < 0 || symbols[s] > static_cast<int>(inventory.size())) throw InvalidInput("toy render: unknown symbol id");
    const auto& ph = inventory[static_cast<size_t>(symbols[s] - 1)];
    std::vector<double> seg(static_cast<size_t>(end - start), 0.0);
    if (ph.voiced) {
      std::vector<double> amps;
      for (long b = start; b < end; b += hop) {
        const long be = std::min(end, b + hop);
        // Gentle declination around the target level.
        const double t_mid = static_cast<double>(b + be) / 2.0 / static_cast<double>(total);
        const double f0 = pitch_hz * (1.04 - 0.08 * t_mid);
        const int n_harm = static_cast<int>(0.9 * (sr / 2.0) / f0);
        amps.assign(static_cast<size_t>(n_harm), 0.0);
        double power = 0.0;
        for (int k = 1; k <= n_harm; ++k) {
          const double a = std::exp(log_envelope(voice, k * f0));
          amps[static_cast<size_t>(k - 1)] = a;
          power += 0.5 * a * a;
        }
        const double scale = ph.level / std::sqrt(power);
        const double dphi = 2.0 * std::numbers::pi * f0 / sr;
        for (long i = b; i < be; ++i) {
          phase += dphi;
          // sin(k*phase) by the Chebyshev recurrence.
          const double c2 = 2.0 * std::cos(phase);
          double s_prev = 0.0, s_cur = std::sin(phase), acc = 0.0;
          for (int k = 1; k <= n_harm; ++k) {
            acc += amps[static_cast<size_t>(k - 1)] * s_cur;
            const double s_next = c2 * s_cur - s_prev;
            s_prev = s_cur;
            s_cur = s_next;
          }
          seg[static_cast<size_t>(i - start)] = acc * scale + voice.breath * ph.level * gauss(rng);
        }
      }
    } else {
      for (long i = start; i < end; ++i) phase += 2.0 * std::numbers::pi * pitch_hz / sr;
      for (auto& v : seg) v = gauss(rng);
      bandpass(seg, sr, ph.band_hz, 2.0);
      const double r = rms(seg);
      if (r > 0.0) {
        for (auto& v : seg) v *= ph.level / r;
      }
    }
    for (long i = start; i < end; ++i) out[static_cast<size_t>(i)] = seg[static_cast<size_t>(i - start)] * edge_gain(i, start, end, ramp);
  }

  Waveform w;
  w.sample_rate = spec.sample_rate;
  w.samples.resize(out.size());
  for (size_t i = 0; i < out.size(); ++i) w.samples[i] = static_cast<float>(std::clamp(out[i], -1.0, 1.0));
  return w;
}

namespace {

std::vector<int> random_text(const std::string& language, int syllables, std::mt19937_64 rng) {
  const auto inventory = phones(language);
  std::vector<int> consonants, vowels;
  for (size_t i = 0; i < inventory.size(); ++i) (inventory[i].voiced ? vowels : consonants).push_back(static_cast<int>(i) + 1);
  std::vector<int> out = {0};
  for (int s = 0; s < syllables; ++s) {
    out.push_back(consonants[static_cast<size_t>(rng() % consonants.size())]);
    out.push_back(vowels[static_cast<size_t>(rng() % vowels.size())]);
  }
  out.push_back(0);
  return out;
}

}  // namespace

Manifest generate_toy_corpus(const ToyCorpusSpec& spec, const std::filesystem::path& out_dir,
                             const LevelPhrases& phrases) {
  spec.check();
  try {
    std::filesystem::create_directories(out_dir / "audio");
    std::filesystem::create_directories(out_dir / "symbols");
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError(out_dir.string() + ": " + e.what());
  }
  const SeedTree root(spec.seed);
  Manifest m;
  m.path = out_dir / "manifest.jsonl";
  json texts = json::object();
  for (const auto& lang : spec.languages) {
    const auto table = toy_symbol_table(lang);
    table.save(out_dir / "symbols" / (lang + ".txt"));
    m.symbol_tables[lang] = table;
    json lang_texts = json::array();
    for (int i = 0; i < spec.eval_texts; ++i) {
      lang_texts.push_back(random_text(lang, spec.syllables, root.child("eval-texts").child(lang).child(static_cast<std::uint64_t>(i)).engine()));
    }
    texts[lang] = lang_texts;
    for (int spk = 0; spk < spec.n_speakers; ++spk) {
      for (int p = 0; p < 5; ++p) {
        for (int u = 0; u < spec.n_utterances; ++u) {
          UtteranceRecord r;
          r.id = lang + "_s" + std::to_string(spk) + "_p" + std::to_string(p + 1) + "_u" + std::to_string(u);
          r.language = lang;
          r.speaker_id = "spk" + std::to_string(spk);
          r.pitch_level = p + 1;
          r.speed_level = (u + spk + p) % 5 + 1;
          r.symbols = random_text(lang, spec.syllables, root.child("symbols").child(r.id).engine());
          r.durations = toy_durations(lang, r.symbols, spec.speed_levels[static_cast<size_t>(r.speed_level - 1)], spec);
          if (lang == spec.described_language) {
            r.description = phrases.describe(toy_speaker_adjective(spk), r.pitch_level, r.speed_level);
          }
          r.audio_path = "audio/" + r.id + ".wav";
          auto w = render_toy_utterance(lang, r.symbols, *r.durations, spk,
                                        spec.pitch_levels_hz[static_cast<size_t>(p)], spec,
                                        root.child("render").child(r.id).seed());
          write_wav(out_dir / r.audio_path, w);
          m.rows.push_back(std::move(r));
        }
      }
    }
  }
  write_manifest(m);
  write_file_atomic(out_dir / "texts.json", texts.dump(2) + "\n");
  json spec_json = spec;
  write_file_atomic(out_dir / "toy_spec.json", spec_json.dump(2) + "\n");
  return m;
}

const std::vector<std::vector<int>>& EvalTexts::at(const std::string& language) const {
  for (const auto& [lang, texts] : by_language) {
    if (lang == language) return texts;
  }
  throw ConfigError("no evaluation texts for language '" + language + "'");
}

EvalTexts read_eval_texts(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  EvalTexts t;
  for (auto it = j.begin(); it != j.end(); ++it) {
    t.by_language.emplace_back(it.key(), it.value().get<std::vector<std::vector<int>>>());
  }
  return t;
}

}  // namespace voicectl
