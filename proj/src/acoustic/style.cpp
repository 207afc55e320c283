#include "voicectl/acoustic/style.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "voicectl/core/errors.hpp"
#include "voicectl/core/fs.hpp"
#include "voicectl/core/rng.hpp"
#include "voicectl/core/tensor_io.hpp"
#include "voicectl/signal/f0.hpp"
#include "voicectl/signal/mel.hpp"

namespace voicectl {

void check_layerwise(const LayerwiseFeatures& lf) {
  if (lf.layers.empty()) throw InvalidInput("layerwise features: no layers");
  const auto rows = lf.layers.front().rows(), cols = lf.layers.front().cols();
  if (rows == 0 || cols == 0) throw InvalidInput("layerwise features: empty layer");
  for (const auto& l : lf.layers) {
    if (l.rows() != rows || l.cols() != cols) throw InvalidInput("layerwise features: layers disagree in shape");
  }
}

ToyStyleBackend::ToyStyleBackend(bool rate_aware, int layers, int dim, std::uint64_t seed)
    : rate_aware_(rate_aware), dim_(dim) {
  if (layers < 1 || dim < 1) throw ConfigError("toy style backend needs positive layers and dim");
  const SeedTree root = SeedTree(seed).child("toy-style");
  for (int l = 0; l < layers; ++l) {
    auto rng = root.child(static_cast<std::uint64_t>(l)).engine();
    std::normal_distribution<double> d(0.0, 0.8);
    Eigen::MatrixXd p(kChannels + 1, dim);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) p(i, j) = d(rng);
    }
    proj_.push_back(std::move(p));
  }
}

Eigen::MatrixXd ToyStyleBackend::channels(const Waveform& w) const {
  validate(w);
  const int hop = hop_samples(w.sample_rate, kFrameSeconds);
  if (static_cast<long>(w.size()) < hop) throw InvalidInput("style backend: waveform shorter than one 40 ms frame");
  constexpr int kSub = 4;  // 10 ms analysis frames per style frame
  const auto track = estimate_f0(w, {}, kFrameSeconds / kSub);
  const auto lf0 = to_continuous_logf0(track);
  const auto n_sub = static_cast<long>(lf0.size());
  const Eigen::Index frames = frame_count(w.size(), hop);

  std::vector<double> voiced;
  for (long i = 0; i < n_sub; ++i) {
    if (lf0.vuv[static_cast<size_t>(i)] > 0.5f) voiced.push_back(lf0.log_f0[static_cast<size_t>(i)]);
  }
  double median = std::log(50.0);
  if (!voiced.empty()) {
    std::nth_element(voiced.begin(), voiced.begin() + static_cast<long>(voiced.size() / 2), voiced.end());
    median = voiced[voiced.size() / 2];
  }
  std::vector<long> onsets;
  for (long i = 1; i < n_sub; ++i) {
    if (lf0.vuv[static_cast<size_t>(i - 1)] < 0.5f && lf0.vuv[static_cast<size_t>(i)] > 0.5f) onsets.push_back(i);
  }

  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(frames, kChannels);
  const long half_window = static_cast<long>(std::lround(0.5 / (kFrameSeconds / kSub)));
  for (Eigen::Index f = 0; f < frames; ++f) {
    c(f, 0) = (median - std::log(160.0)) / 0.4;
    if (!rate_aware_) continue;
    const long s0 = f * kSub, s1 = std::min<long>(n_sub, s0 + kSub);
    double dev = 0.0, vf = 0.0;
    for (long s = s0; s < s1; ++s) {
      dev += lf0.log_f0[static_cast<size_t>(s)] - median;
      vf += lf0.vuv[static_cast<size_t>(s)];
    }
    const double count = static_cast<double>(std::max<long>(1, s1 - s0));
    const size_t a = static_cast<size_t>(f) * static_cast<size_t>(hop);
    const size_t b = std::min(w.size(), a + static_cast<size_t>(hop));
    double ms = 0.0;
    for (size_t i = a; i < b; ++i) ms += static_cast<double>(w.samples[i]) * w.samples[i];
    ms /= static_cast<double>(b - a);
    const long centre = s0 + kSub / 2;
    const long lo = std::max<long>(0, centre - half_window), hi = std::min<long>(n_sub, centre + half_window);
    const auto n_on = std::count_if(onsets.begin(), onsets.end(), [&](long i) { return i >= lo && i < hi; });
    const double rate = static_cast<double>(n_on) / (static_cast<double>(hi - lo) * kFrameSeconds / kSub);
    c(f, 1) = dev / count / 0.2;
    c(f, 2) = vf / count;
    c(f, 3) = (std::max(std::log(ms + 1e-12), -16.0) + 8.0) / 4.0;
    c(f, 4) = (rate - 4.0) / 3.0;
  }
  return c;
}

LayerwiseFeatures ToyStyleBackend::extract(const Waveform& w) const {
  const Eigen::MatrixXd c = channels(w);
  const Eigen::Index frames = c.rows();
  LayerwiseFeatures out;
  out.frame_seconds = kFrameSeconds;
  for (size_t l = 0; l < proj_.size(); ++l) {
    const auto radius = static_cast<Eigen::Index>(l);
    Eigen::MatrixXd in(frames, kChannels + 1);
    for (Eigen::Index f = 0; f < frames; ++f) {
      const Eigen::Index a = std::max<Eigen::Index>(0, f - radius), b = std::min(frames - 1, f + radius);
      in.block(f, 0, 1, kChannels) = c.middleRows(a, b - a + 1).colwise().mean();
      in(f, kChannels) = 1.0;
    }
    out.layers.push_back((in * proj_[l]).array().tanh().matrix().cast<float>());
  }
  return out;
}

LayerwiseFeatures MelStyleBackend::extract(const Waveform& w) const {
  validate(w);
  MelConfig cfg;
  cfg.hop_seconds = frame_seconds();
  if (static_cast<int>(w.size()) < hop_samples(w.sample_rate, cfg.hop_seconds)) {
    throw InvalidInput("style backend: waveform shorter than one mel frame");
  }
  LayerwiseFeatures out;
  out.frame_seconds = cfg.hop_seconds;
  // Same normalization the timbre encoder applies.
  out.layers.push_back(((mel_spectrogram(w, cfg).frames.array() + 4.0f) * 0.25f).matrix());
  return out;
}

CachedStyleBackend::CachedStyleBackend(std::filesystem::path dir, int layers, int dim, double frame_seconds)
    : dir_(std::move(dir)), layers_(layers), dim_(dim), frame_seconds_(frame_seconds) {}

namespace {

std::filesystem::path style_cache_path(const std::filesystem::path& dir, const std::string& origin) {
  return dir / (hex64(fnv1a(origin)) + ".bin");
}

}  // namespace

LayerwiseFeatures CachedStyleBackend::extract(const Waveform& w) const {
  if (w.origin.empty()) throw EncoderUnavailable("cached style features need the waveform's source path");
  const auto bin = style_cache_path(dir_, w.origin);
  auto sidecar = bin;
  sidecar.replace_extension(".json");
  if (!std::filesystem::exists(bin) || !std::filesystem::exists(sidecar)) {
    throw EncoderUnavailable("no cached style features for " + w.origin + " in " + dir_.string());
  }
  LayerwiseFeatures out;
  nlohmann::json meta;
  try {
    out.layers = read_tensors(bin);
    meta = nlohmann::json::parse(read_file(sidecar));
  } catch (const std::exception& e) {
    throw EncoderUnavailable(std::string("unreadable style cache: ") + e.what());
  }
  out.frame_seconds = meta.value("frame_seconds", frame_seconds_);
  check_layerwise(out);
  if (static_cast<int>(out.layers.size()) != layers_ || out.dim() != dim_) {
    throw EncoderUnavailable("style cache for " + w.origin + " has the wrong layer count or width");
  }
  return out;
}

void write_style_cache(const std::filesystem::path& dir, const std::string& origin, const LayerwiseFeatures& lf,
                       const std::string& backend_id) {
  check_layerwise(lf);
  std::filesystem::create_directories(dir);
  const auto bin = style_cache_path(dir, origin);
  auto sidecar = bin;
  sidecar.replace_extension(".json");
  write_tensors(bin, lf.layers);
  const nlohmann::json meta = {{"layers", lf.layers.size()},
                               {"dim", lf.dim()},
                               {"frame_seconds", lf.frame_seconds},
                               {"backend", backend_id},
                               {"origin", origin}};
  write_file_atomic(sidecar, meta.dump(2) + "\n");
}

std::unique_ptr<StyleBackend> make_style_backend(const std::string& kind, const std::filesystem::path& cache_dir,
                                                 int layers, int dim) {
  if (kind == "toy") return std::make_unique<ToyStyleBackend>(true);
  if (kind == "toy-rate-blind") return std::make_unique<ToyStyleBackend>(false);
  if (kind == "mel") return std::make_unique<MelStyleBackend>();
  if (kind == "cached") {
    if (layers < 1 || dim < 1) throw ConfigError("cached style backend needs layer count and width");
    return std::make_unique<CachedStyleBackend>(cache_dir, layers, dim);
  }
  throw ConfigError("unknown style backend '" + kind + "' (expected toy, toy-rate-blind, mel or cached)");
}

Aggregator::Aggregator(ag::ParamStore<float>& store, const std::string& name, int layers, int dim,
                       std::mt19937_64& rng) {
  layer_logits = &store.create(name + ".layer_logits", ag::Mat::Zero(1, layers));
  lstm = ag::BiLstm<float>(store, name + ".lstm", dim, kStyleDim, rng);
  att_hidden = ag::Linear<float>(store, name + ".att_hidden", kStyleDim, kStyleDim, rng);
  att_score = ag::Linear<float>(store, name + ".att_score", kStyleDim, 1, rng);
}

ag::Var<float> Aggregator::forward(ag::Tape<float>& t, const LayerwiseFeatures& lf, Trace* trace) const {
  check_layerwise(lf);
  const auto n_layers = static_cast<Eigen::Index>(lf.layers.size());
  if (n_layers != layer_logits->value.cols() || lf.dim() != lstm.w_in[0]->value.rows()) {
    throw InvalidInput("aggregator: feature shape does not match the aggregator");
  }
  const Eigen::Index frames = lf.num_frames();
  auto weights = ag::softmax_rows(t.param(*layer_logits));
  ag::Var<float> mixed;
  for (Eigen::Index l = 0; l < n_layers; ++l) {
    auto col = ag::repeat_rows(ag::slice_cols(weights, l, 1), frames);
    auto term = ag::mul_col(t.constant(lf.layers[static_cast<size_t>(l)]), col);
    mixed = l == 0 ? term : ag::add(mixed, term);
  }
  auto h = lstm(mixed);
  auto scores = att_score(ag::tanh(att_hidden(h)));          // frames x 1
  auto att = ag::softmax_rows(ag::transpose(scores));         // 1 x frames
  auto emb = ag::matmul(att, h);
  if (trace != nullptr) {
    trace->layer_weights = weights.value();
    trace->mixed = mixed.value();
    trace->attention = att.value().transpose();
    trace->embedding = emb.value();
  }
  return emb;
}

ag::Var<float> Aggregator::operator()(ag::Tape<float>& t, const LayerwiseFeatures& lf) const {
  return forward(t, lf, nullptr);
}

Aggregator::Trace Aggregator::trace(const LayerwiseFeatures& lf) const {
  ag::Tape<float> t;
  Trace tr;
  forward(t, lf, &tr);
  return tr;
}

}  // namespace voicectl
