// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.
#include <CLI11.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support/gradcheck.hpp"
#include "voicectl/acoustic/losses.hpp"
#include "voicectl/acoustic/model.hpp"
#include "voicectl/backbone/backbone.hpp"
#include "voicectl/backbone/losses.hpp"
#include "voicectl/core/fs.hpp"
#include "voicectl/desc/model.hpp"
#include "voicectl/eval/metrics.hpp"
#include "voicectl/eval/sweep.hpp"
#include "voicectl/pipeline/config.hpp"
#include "voicectl/pipeline/toy_corpus.hpp"
#include "voicectl/signal/f0.hpp"
#include "voicectl/signal/stft_loss.hpp"

using namespace voicectl;
namespace fs = std::filesystem;
using nlohmann::json;
using testsupport::MatD;
using testsupport::random_matrix;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kPi = std::numbers::pi;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failed checks for one criterion.
struct Checks {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << std::fixed << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.precision(2);
  s << std::scientific << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> tree_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 1

double brute_force_nll(const MixtureParams& p, const Eigen::RowVectorXd& x) {
  long double total = 0.0L;
  for (int k = 0; k < p.components(); ++k) {
    long double dens = p.weights(k);
    for (int d = 0; d < p.dim(); ++d) {
      const long double s = p.scales(k, d);
      const long double z = (x(d) - p.means(k, d)) / s;
      dens *= std::exp(-0.5L * z * z) / (s * std::sqrt(2.0L * std::numbers::pi_v<long double>));
    }
    total += dens;
  }
  return static_cast<double>(-std::log(total));
}

Outcome criterion_mdn_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> kd(1, 10), dd(1, 8);
  std::uniform_real_distribution<double> u(0.05, 1.0), sc(0.3, 2.0), m(-1.5, 1.5);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int k = kd(rng), d = dd(rng);
    MixtureParams p;
    p.weights.resize(k);
    for (int i = 0; i < k; ++i) p.weights(i) = u(rng);
    p.weights /= p.weights.sum();
    p.means.resize(k, d);
    p.scales.resize(k, d);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < d; ++j) {
        p.means(i, j) = m(rng);
        p.scales(i, j) = sc(rng);
      }
    }
    Eigen::RowVectorXd x(d);
    for (int j = 0; j < d; ++j) x(j) = n(rng);
    const double oracle = brute_force_nll(p, x);
    // Plain path and tape path (weights passed as log-weights).
    ag::Tape<double> t;
    MixtureVars<double> v{t.constant(p.weights.transpose().array().log().matrix()), t.constant(p.means),
                          t.constant(p.scales)};
    for (double got : {mdn_nll(p, x), mdn_nll<double>(v, x).scalar()}) {
      worst = std::max(worst, std::abs(got - oracle) / std::max(std::abs(oracle), 1e-12));
    }
  }
  return {worst <= 1e-6, "max relative error " + sci(worst) + " over 200 instances"};
}

// ---------------------------------------------------------------------------
// Criterion 2

Outcome criterion_gradients() {
  std::mt19937_64 rng(202);
  std::vector<std::string> parts;
  bool ok = true;
  auto record = [&](const std::string& name, double err) {
    ok = ok && err <= 1e-4;
    parts.push_back(name + " " + sci(err));
  };

  const int k = 3, d = 4;
  const MatD target = random_matrix(1, d, rng);
  const MatD logits = random_matrix(1, k, rng), means = random_matrix(k, d, rng);
  const MatD scales = (random_matrix(k, d, rng).array().abs() + 0.4).matrix();
  record("mdn_nll", testsupport::gradcheck(
                        [&](ag::Tape<double>&, const std::vector<ag::Var<double>>& v) {
                          return mdn_nll<double>(MixtureVars<double>{v[0], v[1], v[2]}, target);
                        },
                        {logits, means, scales}));

  const MatD a = random_matrix(5, 6, rng), p = random_matrix(5, 6, rng), n1 = random_matrix(5, 6, rng),
             n2 = random_matrix(5, 6, rng);
  record("contrastive_loss", testsupport::gradcheck(
                                 [](ag::Tape<double>&, const std::vector<ag::Var<double>>& v) {
                                   const std::vector<ag::Var<double>> negs{v[2], v[3]};
                                   return contrastive_loss<double>(v[0], v[1], negs, 0.2);
                                 },
                                 {a, p, n1, n2}));

  AcousticTargets<double> tg;
  tg.linguistic = random_matrix(6, 4, rng);
  tg.log_f0 = random_matrix(6, 1, rng);
  tg.vuv = MatD(6, 1);
  tg.vuv << 1, 1, 0, 1, 0, 1;
  tg.durations = MatD(3, 1);
  tg.durations << 1, 3, 2;
  const MatD dur = (random_matrix(3, 1, rng).array().abs() + 0.5).matrix();
  record("acoustic_losses", testsupport::gradcheck(
                                [&](ag::Tape<double>&, const std::vector<ag::Var<double>>& v) {
                                  return acoustic_losses<double>(v[0], v[1], v[2], v[3], tg).total;
                                },
                                {random_matrix(6, 4, rng), random_matrix(6, 1, rng), random_matrix(6, 1, rng), dur}));
  std::string detail = "max relative error:";
  for (size_t i = 0; i < parts.size(); ++i) detail += (i ? ", " : " ") + parts[i];
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// Criterion 3

Waveform sine(double hz, double seconds, double amp = 0.5) {
  Waveform w;
  w.samples.resize(static_cast<size_t>(std::lround(seconds * w.sample_rate)));
  for (size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = static_cast<float>(amp * std::sin(2.0 * kPi * hz * static_cast<double>(i) / w.sample_rate));
  }
  return w;
}

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

// One resolution: centre padding, centred Hann window, direct DFT,
// spectral convergence plus mean |log| magnitude difference.
double stft_oracle(const std::vector<float>& p, const std::vector<float>& t, const StftResolution& r) {
  const long n = static_cast<long>(p.size());
  const long frames = n / r.hop + 1;
  const int off = (r.fft - r.window) / 2;
  double diff2 = 0.0, tgt2 = 0.0, logsum = 0.0, count = 0.0;
  for (long f = 0; f < frames; ++f) {
    std::vector<double> fp(static_cast<size_t>(r.fft), 0.0), ft(static_cast<size_t>(r.fft), 0.0);
    for (int i = 0; i < r.window; ++i) {
      const long j = f * r.hop + off + i - r.fft / 2;
      if (j < 0 || j >= n) continue;
      const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * i / r.window);
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

Outcome criterion_signal() {
  Checks c;
  double worst_f0 = 0.0;
  for (double hz = 80.0; hz <= 500.0; hz += 20.0) {
    const auto track = estimate_f0(sine(hz, 0.5));
    double s = 0.0;
    int v = 0;
    for (size_t i = 0; i < track.size(); ++i) {
      if (track.voiced[i]) {
        s += track.f0_hz[i];
        ++v;
      }
    }
    const double err = v > 0 ? std::abs(s / v / hz - 1.0) : 1.0;
    worst_f0 = std::max(worst_f0, err);
  }
  c.expect(worst_f0 <= 0.02, "estimate_f0 error " + fmt(worst_f0 * 100, 2) + "%");

  // Continuous log-F0 hand cases against the closed form.
  {
    const F0Track t{{0, 200, 0, 0, 400, 0}, {false, true, false, false, true, false}, 0.01};
    const auto got = to_continuous_logf0(t, 50.0);
    const double a = std::log(200.0), b = std::log(400.0);
    const std::vector<double> want = {a, a, a + (b - a) * 1.0 / 3.0, a + (b - a) * 2.0 / 3.0, b, b};
    c.expect(got.log_f0 == want, "continuous log-F0 interior/edge fill");
    c.expect(got.vuv == std::vector<float>{0, 1, 0, 0, 1, 0}, "continuous log-F0 V/UV flags");
    const F0Track silent{{0, 0}, {false, false}, 0.01};
    const auto s = to_continuous_logf0(silent, 50.0);
    c.expect(s.log_f0 == std::vector<double>{std::log(50.0), std::log(50.0)}, "continuous log-F0 floor");
  }

  const double r = pearson({1, 2, 3, 4, 5}, {2, 1, 4, 3, 5});
  c.expect(std::abs(r - 0.8) <= 1e-12, "pearson hand case gave " + fmt(r, 12));

  std::mt19937_64 rng(303);
  std::normal_distribution<double> nd(0.0, 0.3);
  Waveform pred = sine(190.0, 0.25), target = sine(210.0, 0.25, 0.4);
  for (auto& s : pred.samples) s += static_cast<float>(0.05 * nd(rng));
  double oracle = 0.0;
  double worst_res = 0.0;
  for (const auto& res : default_stft_resolutions()) {
    const double o = stft_oracle(pred.samples, target.samples, res);
    oracle += o;
    worst_res = std::max(worst_res, std::abs(stft_loss_terms(pred, target, res).total() - o) / o);
  }
  const double total_err = std::abs(multires_stft_loss(pred, target) - oracle) / oracle;
  c.expect(worst_res <= 1e-6 && total_err <= 1e-6, "multires_stft_loss relative error " + sci(total_err));

  std::string detail = "f0 max error " + fmt(worst_f0 * 100, 3) + "%, pearson " + fmt(r, 6) + ", stft rel error " +
                       sci(std::max(worst_res, total_err));
  for (const auto& f : c.failures) detail += "; FAILED " + f;
  return {c.failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// Criterion 4

Outcome criterion_shapes() {
  Checks c;
  const ag::Mat h = ag::Mat::Random(4, 3);
  const std::vector<int> durs = {3, 0, 1, 5};
  c.expect(upsample(h, durs).rows() == 9, "upsample frame count");
  c.expect(upsample_index(4, durs) == std::vector<int>{0, 0, 0, 2, 3, 3, 3, 3, 3}, "upsample index");
  c.expect(round_durations({0.5f, 2.49f, 1e9f}, 200) == std::vector<int>{1, 2, 200}, "duration rounding");

  ToyCorpusSpec spec;
  const auto table = toy_symbol_table("A");
  const std::vector<int> symbols = {1, table.size() - 1, 2, table.size() - 2};
  const Waveform w =
      render_toy_utterance("A", symbols, toy_durations("A", symbols, 8.0, spec), 0, 170.0, spec, 1);

  Backbone bb(BackboneConfig{});
  const auto feats = bb.analyze(w);
  c.expect(bb.decoder_input(feats).cols() == 194, "synthesizer input width 194");
  c.expect(feats.timbre.values.size() == 192, "timbre embedding 192");
  c.expect(feats.linguistic.frames.cols() == 128, "linguistic features 128");

  AcousticConfig ac;
  ac.n_symbols = table.size();
  ac.encoder_layers = 1;
  AcousticModel am(ac);
  const auto style = am.extract_style(w);
  c.expect(style.duration.size() == 192 && style.linguistic.size() == 192 && style.pitch.size() == 192,
           "style embeddings 192");
  AcousticConfig ent = ac;
  ent.style_backend = "mel";
  ent.timbre_from_style = true;
  AcousticModel em(ent);
  c.expect(em.timbre_from_style(em.extract_style(w)).values.size() == 192, "entangled timbre head 192");

  std::mt19937_64 rng(404);
  ag::ParamStore<float> store;
  Aggregator agg(store, "agg", 4, 16, rng);
  for (Eigen::Index frames : {1, 9, 120}) {
    LayerwiseFeatures lf;
    for (int l = 0; l < 4; ++l) lf.layers.push_back(random_matrix(frames, 16, rng).cast<float>());
    ag::Tape<float> t;
    const auto e = agg(t, lf);
    c.expect(e.rows() == 1 && e.cols() == 192, "aggregator output 1x192 for " + std::to_string(frames) + " frames");
  }

  DescModel dm(DescConfig{});
  const auto emb = dm.predict_embeddings("A warm voice with low pitch and fast speed.", SampleStrategy::mode(), 1);
  for (size_t i = 0; i < 4; ++i) c.expect(emb[i].size() == 192, std::string("desc head ") + kControlHeads[i] + " 192");
  for (size_t i = 0; i < 4; ++i) {
    c.expect(dm.head(i).components == 10, "K = 10");
    const auto p = dm.mdn_forward(dm.encode_description("a bright voice"), i);
    c.expect(p.components() == 10, "mixture has 10 components");
  }

  // Weight simplex and scale floor under extreme raw outputs.
  for (float v : {-1e6f, -50.0f, 0.0f, 50.0f, 1e6f}) {
    ag::Tape<float> t;
    ag::Mat raw(1, 10 * (1 + 2 * 3));
    for (Eigen::Index i = 0; i < raw.size(); ++i) raw(0, i) = i % 3 == 0 ? v : -v;
    const auto p = to_mixture_params(mixture_from_raw(t.constant(raw), 10, 3));
    c.expect(std::abs(p.weights.sum() - 1.0) < 1e-6 && (p.weights.array() >= 0.0).all(), "weights on the simplex");
    c.expect(p.scales.minCoeff() >= kScaleFloor && p.scales.allFinite(), "scales above the floor");
  }

  std::string detail = std::to_string(c.failures.size()) + " contract violations";
  for (const auto& f : c.failures) detail += "; " + f;
  return {c.failures.empty(), detail};
}

// ---------------------------------------------------------------------------
// Criteria 5-8 drive the command-line tool.

struct Cli {
  std::string exe;
  fs::path logs;
  int counter = 0;

  struct Result {
    int code = 0;
    std::string out;
  };

  Result run(const std::string& args) {
    const fs::path log = logs / ("cmd_" + std::to_string(++counter) + ".log");
    const std::string cmd = "\"" + exe + "\" " + args + " 2>\"" + log.string() + "\"";
    std::cerr << "  $ voicectl " << args << "\n";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (pipe == nullptr) {
      r.code = -1;
      return r;
    }
    std::array<char, 4096> buf{};
    while (fgets(buf.data(), static_cast<int>(buf.size()), pipe) != nullptr) r.out += buf.data();
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (r.code != 0) std::cerr << "    exit " << r.code << ", see " << log << "\n";
    return r;
  }
};

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

void write_json(const fs::path& p, const json& j) { write_file_atomic(p, j.dump(2) + "\n"); }

struct ToyRun {
  fs::path work;
  fs::path toy, ckpt;
  bool trained = false;
  std::string error;
  double train_seconds = 0.0;
  std::map<std::string, SweepReport> reports;  // "pitch_A", "speed_B", "pitch_A_entangled", ...
  std::map<std::string, std::string> report_bytes;
};

json backbone_stage(long steps) {
  BackboneStageConfig c;
  c.train.steps = steps;
  return c;
}

json acoustic_stage(const fs::path& backbone, const std::string& lang, long steps, const fs::path& style_from = {},
                    bool entangled = false) {
  AcousticStageConfig c;
  c.backbone = backbone.string();
  c.style_encoder_from = style_from.string();
  c.model.language = lang;
  if (entangled) {
    c.model.style_backend = "mel";
    c.model.timbre_from_style = true;
  }
  c.train.steps = steps;
  return c;
}

json desc_stage(const fs::path& backbone, const fs::path& acoustic, const fs::path& cache, long steps) {
  DescStageConfig c;
  c.backbone = backbone.string();
  c.acoustic = acoustic.string();
  c.target_cache_dir = cache.string();
  c.train.steps = steps;
  return c;
}

bool train(Cli& cli, const std::string& stage, const fs::path& manifest, const fs::path& config, const fs::path& out,
           ToyRun& run) {
  const auto r = cli.run("--seed 1 train --stage " + stage + " --manifest " + q(manifest) + " --config " + q(config) +
                         " --out " + q(out));
  if (r.code != 0) run.error = "training " + stage + " into " + out.string() + " failed";
  return r.code == 0;
}

void toy_pipeline(Cli& cli, ToyRun& run) {
  const fs::path cfg = run.work / "configs";
  fs::create_directories(cfg);
  run.toy = run.work / "toy";
  run.ckpt = run.work / "ckpt";
  const fs::path manifest = run.toy / "manifest.jsonl";

  if (cli.run("generate-toy --out " + q(run.toy)).code != 0) {
    run.error = "generate-toy failed";
    return;
  }
  if (cli.run("validate --manifest " + q(manifest)).code != 0) {
    run.error = "generated manifest does not validate";
    return;
  }
  const fs::path bb = run.ckpt / "backbone", am_a = run.ckpt / "acoustic_A", am_b = run.ckpt / "acoustic_B",
                 dm = run.ckpt / "desc", am_e = run.ckpt / "acoustic_A_entangled",
                 dm_e = run.ckpt / "desc_entangled";
  write_json(cfg / "backbone.json", backbone_stage(400));
  write_json(cfg / "acoustic_A.json", acoustic_stage(bb, "A", 300));
  write_json(cfg / "acoustic_B.json", acoustic_stage(bb, "B", 300, am_a));
  write_json(cfg / "desc.json", desc_stage(bb, am_a, run.work / "cache", 600));
  write_json(cfg / "acoustic_A_entangled.json", acoustic_stage(bb, "A", 300, {}, true));
  write_json(cfg / "desc_entangled.json", desc_stage(bb, am_e, run.work / "cache", 600));

  const auto t0 = Clock::now();
  // The main three-stage system first; its wall time is what the budget covers.
  if (!train(cli, "backbone", manifest, cfg / "backbone.json", bb, run)) return;
  if (!train(cli, "acoustic", manifest, cfg / "acoustic_A.json", am_a, run)) return;
  if (!train(cli, "desc", manifest, cfg / "desc.json", dm, run)) return;
  if (!train(cli, "acoustic", manifest, cfg / "acoustic_B.json", am_b, run)) return;
  run.train_seconds = seconds_since(t0);
  if (!train(cli, "acoustic", manifest, cfg / "acoustic_A_entangled.json", am_e, run)) return;
  if (!train(cli, "desc", manifest, cfg / "desc_entangled.json", dm_e, run)) return;
  if (cli.run("train-embedder --manifest " + q(manifest) + " --out " + q(run.work / "embedder")).code != 0) {
    run.error = "train-embedder failed";
    return;
  }
  run.trained = true;

  write_json(run.work / "bundle.json",
             {{"backbone", bb.string()},
              {"acoustic", {{"A", am_a.string()}, {"B", am_b.string()}}},
              {"desc", dm.string()},
              {"strategy", "mode"}});
  write_json(run.work / "bundle_entangled.json", {{"backbone", bb.string()},
                                                  {"acoustic", {{"A", am_e.string()}}},
                                                  {"desc", dm_e.string()},
                                                  {"strategy", "mode"}});

  struct Sweep {
    std::string key, bundle, attribute, language;
  };
  const std::vector<Sweep> sweeps = {{"pitch_A", "bundle.json", "pitch", "A"},
                                     {"speed_A", "bundle.json", "speed", "A"},
                                     {"pitch_B", "bundle.json", "pitch", "B"},
                                     {"speed_B", "bundle.json", "speed", "B"},
                                     {"pitch_A_entangled", "bundle_entangled.json", "pitch", "A"}};
  for (const auto& s : sweeps) {
    const fs::path out = run.work / "reports" / (s.key + ".json");
    const auto r = cli.run("--seed 7 evaluate --bundle " + q(run.work / s.bundle) + " --texts " +
                           q(run.toy / "texts.json") + " --attribute " + s.attribute + " --language " + s.language +
                           " --embedder " + q(run.work / "embedder") + " --out " + q(out) + " --wav-dir " +
                           q(run.work / "wavs" / s.key));
    if (r.code != 0) {
      run.error = "evaluate " + s.key + " failed";
      return;
    }
    run.report_bytes[s.key] = slurp(out);
    run.reports[s.key] = SweepReport::from_json(json::parse(run.report_bytes[s.key]));
  }
}

std::string opt_str(const std::optional<double>& v) { return v ? fmt(*v, 3) : std::string("n/a"); }

Outcome criterion_closed_loop(const ToyRun& run) {
  if (!run.trained || !run.reports.count("speed_A")) return {false, "toy pipeline did not complete: " + run.error};
  const auto& p = run.reports.at("pitch_A");
  const auto& s = run.reports.at("speed_A");
  const bool budget = run.train_seconds <= 2 * 3600.0;
  const bool ok = p.corr && *p.corr >= 0.9 && s.corr && *s.corr >= 0.9 && budget;
  return {ok, "language A P-Corr " + opt_str(p.corr) + " (>= 0.9), S-Corr " + opt_str(s.corr) +
                  " (>= 0.9), three-stage training " + fmt(run.train_seconds / 60.0, 1) + " min CPU (<= 120)"};
}

Outcome criterion_cross_lingual(const ToyRun& run) {
  if (!run.trained || !run.reports.count("speed_B")) return {false, "toy pipeline did not complete: " + run.error};
  const auto& p = run.reports.at("pitch_B");
  const auto& s = run.reports.at("speed_B");
  const bool ok = p.corr && *p.corr >= 0.8 && s.corr && *s.corr >= 0.8;
  return {ok, "language B (no descriptions) P-Corr " + opt_str(p.corr) + " (>= 0.8), S-Corr " + opt_str(s.corr) +
                  " (>= 0.8)"};
}

Outcome criterion_disentanglement(const ToyRun& run) {
  if (!run.trained || !run.reports.count("pitch_A_entangled")) {
    return {false, "toy pipeline did not complete: " + run.error};
  }
  const auto& normal = run.reports.at("pitch_A");
  const auto& ent = run.reports.at("pitch_A_entangled");
  const bool ok = normal.sim && ent.sim && *normal.sim > *ent.sim;
  return {ok, "P-SIM proposed " + opt_str(normal.sim) + " vs entangled " + opt_str(ent.sim) + " (" + normal.embedder +
                  " embedder); P-Corr proposed " + opt_str(normal.corr) + ", entangled " + opt_str(ent.corr)};
}

Outcome criterion_determinism(Cli& cli, const ToyRun& run) {
  Checks c;
  const fs::path d = run.work / "determinism";
  fs::create_directories(d);

  // generate-toy into a second directory.
  if (run.trained) {
    cli.run("generate-toy --out " + q(d / "toy"));
    c.expect(tree_bytes(d / "toy") == tree_bytes(run.toy), "generate-toy output differs");
  }
  const fs::path toy = run.trained ? run.toy : d / "toy";
  if (!run.trained) cli.run("generate-toy --out " + q(toy));
  const fs::path manifest = toy / "manifest.jsonl";

  // validate and print-config output.
  c.expect(cli.run("validate --manifest " + q(manifest)).out == cli.run("validate --manifest " + q(manifest)).out,
           "validate output differs");
  c.expect(cli.run("print-config --stage desc").out == cli.run("print-config --stage desc").out,
           "print-config output differs");

  // Every training stage twice on short schedules, with identical commands
  // into the same directories.
  const std::vector<std::string> subs = {"backbone", "acoustic_A", "desc", "embedder"};
  std::vector<decltype(tree_bytes(d))> first;
  const fs::path root = d / "train";
  for (int rep = 0; rep < 2; ++rep) {
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path bb = root / "backbone", am = root / "acoustic_A", dm = root / "desc";
    write_json(root / "backbone.json", backbone_stage(4));
    write_json(root / "acoustic.json", acoustic_stage(bb, "A", 4));
    write_json(root / "desc.json", desc_stage(bb, am, root / "cache", 6));
    ToyRun scratch;
    train(cli, "backbone", manifest, root / "backbone.json", bb, scratch);
    train(cli, "acoustic", manifest, root / "acoustic.json", am, scratch);
    train(cli, "desc", manifest, root / "desc.json", dm, scratch);
    cli.run("train-embedder --steps 20 --manifest " + q(manifest) + " --out " + q(root / "embedder"));
    for (size_t i = 0; i < subs.size(); ++i) {
      auto bytes = tree_bytes(root / subs[i]);
      if (rep == 0) {
        first.push_back(std::move(bytes));
      } else {
        c.expect(!bytes.empty() && bytes == first[i], subs[i] + " checkpoint differs between identical runs");
      }
    }
  }

  if (run.trained) {
    // Synthesis in both modes and both strategies.
    const auto texts = json::parse(slurp(run.toy / "texts.json"));
    const auto table = SymbolTable::load(run.toy / "symbols" / "A.txt");
    const auto ids = texts.at("A").at(0).get<std::vector<int>>();
    std::string text;
    for (int id : ids) text += (text.empty() ? "" : " ") + table.name(id);
    const Manifest m = read_manifest(manifest);
    const fs::path ref = m.audio_file(m.rows.front());
    const std::vector<std::string> modes = {
        "--mode desc --description \"A warm voice with high pitch and slow speed.\"",
        "--mode desc --strategy sample --temperature 0.7 --description \"A nasal voice with low pitch and fast speed.\"",
        "--mode zeroshot --reference " + q(ref)};
    for (size_t i = 0; i < modes.size(); ++i) {
      std::array<std::string, 2> bytes;
      for (int rep = 0; rep < 2; ++rep) {
        const fs::path out = d / ("synth" + std::to_string(i) + "_" + std::to_string(rep) + ".wav");
        cli.run("--seed 3 synth " + modes[i] + " --bundle " + q(run.work / "bundle.json") + " --language A --text \"" +
                text + "\" --out " + q(out));
        bytes[static_cast<size_t>(rep)] = slurp(out);
      }
      c.expect(!bytes[0].empty() && bytes[0] == bytes[1], "synth output differs (" + modes[i].substr(0, 20) + ")");
    }

    // evaluate again: report and WAVs must match the first run byte for byte.
    const fs::path out = d / "pitch_A.json";
    cli.run("--seed 7 evaluate --bundle " + q(run.work / "bundle.json") + " --texts " + q(run.toy / "texts.json") +
            " --attribute pitch --language A --embedder " + q(run.work / "embedder") + " --out " + q(out) +
            " --wav-dir " + q(d / "wavs_pitch_A"));
    c.expect(slurp(out) == run.report_bytes.at("pitch_A"), "evaluate report differs");
    c.expect(tree_bytes(d / "wavs_pitch_A") == tree_bytes(run.work / "wavs" / "pitch_A"), "evaluate WAVs differ");

    const std::string row = "--row proposed=" + (run.work / "reports" / "pitch_A.json").string() + "," +
                            (run.work / "reports" / "speed_A.json").string();
    c.expect(cli.run("table " + row).out == cli.run("table " + row).out, "table output differs");
  } else {
    c.expect(false, "toy pipeline did not complete, synth/evaluate not checked");
  }

  std::string detail = c.failures.empty() ? "all re-runs byte-identical" : std::to_string(c.failures.size()) + " differences";
  for (const auto& f : c.failures) detail += "; " + f;
  return {c.failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voicectl acceptance run"};
  std::string work_dir = (fs::temp_directory_path() / "voicectl_acceptance").string();
  std::string exe = VOICECTL_CLI;
  std::vector<int> only;
  app.add_option("--work-dir", work_dir, "Scratch directory (wiped at start)");
  app.add_option("--voicectl", exe, "Path to the voicectl executable");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };
  const fs::path work = fs::absolute(work_dir);
  fs::remove_all(work);
  fs::create_directories(work / "logs");
  Cli cli{exe, work / "logs"};

  struct Budgeted {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> fn;
  };
  const std::vector<Budgeted> quick = {
      {1, "MDN oracle equivalence", 10.0, criterion_mdn_oracle},
      {2, "gradient checks", 60.0, criterion_gradients},
      {3, "signal oracles", 30.0, criterion_signal},
      {4, "shape and contract suite", 30.0, criterion_shapes},
  };

  std::vector<std::pair<int, Outcome>> results;
  auto report = [&](int id, const std::string& name, Outcome o) {
    std::cout << "criterion " << id << " [" << name << "]: " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << std::endl;
    results.emplace_back(id, std::move(o));
  };
  auto guarded = [](const std::function<Outcome()>& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };

  for (const auto& b : quick) {
    if (!wanted(b.id)) continue;
    const auto t0 = Clock::now();
    Outcome o = guarded(b.fn);
    const double dt = seconds_since(t0);
    o.detail += "; " + fmt(dt, 2) + " s (budget " + fmt(b.budget_s, 0) + " s)";
    if (dt > b.budget_s) o.pass = false;
    report(b.id, b.name, std::move(o));
  }

  if (wanted(5) || wanted(6) || wanted(7) || wanted(8)) {
    ToyRun run;
    run.work = work;
    std::cerr << "toy pipeline in " << work << "\n";
    try {
      toy_pipeline(cli, run);
    } catch (const std::exception& e) {
      run.error = e.what();
    }
    if (wanted(5)) report(5, "toy closed loop", guarded([&] { return criterion_closed_loop(run); }));
    if (wanted(6)) report(6, "cross-lingual control", guarded([&] { return criterion_cross_lingual(run); }));
    if (wanted(7)) report(7, "disentanglement probe", guarded([&] { return criterion_disentanglement(run); }));
    if (wanted(8)) report(8, "determinism", guarded([&] { return criterion_determinism(cli, run); }));
  }

  const bool all = std::all_of(results.begin(), results.end(), [](const auto& r) { return r.second.pass; });
  std::cout << (all ? "ALL PASS" : "SOME CRITERIA FAILED") << std::endl;
  return all ? 0 : 1;
}
