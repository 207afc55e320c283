#include "voicectl/backbone/content.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "voicectl/core/errors.hpp"
#include "voicectl/core/fs.hpp"
#include "voicectl/core/rng.hpp"
#include "voicectl/core/tensor_io.hpp"
#include "voicectl/signal/mel.hpp"

namespace voicectl {

ToyContentEncoder::ToyContentEncoder(int dim, std::uint64_t seed) : dim_(dim) {
  if (dim < 1) throw ConfigError("toy content dim must be positive");
  auto rng = SeedTree(seed).child("toy-content").engine();
  std::normal_distribution<double> d(0.0, 1.0);
  proj_.resize(2 * kContext + 2, dim);
  for (Eigen::Index i = 0; i < proj_.size(); ++i) proj_.data()[i] = d(rng);
}

ContentFeatures ToyContentEncoder::extract(const Waveform& w, double hop_seconds) const {
  validate(w);
  if (w.empty()) throw InvalidInput("extract_content: empty waveform");
  const int hop = hop_samples(w.sample_rate, hop_seconds);
  const Eigen::Index frames = frame_count(w.size(), hop);
  std::vector<double> e(static_cast<size_t>(frames));
  double top = -1e300;
  for (Eigen::Index f = 0; f < frames; ++f) {
    const size_t s = static_cast<size_t>(f) * static_cast<size_t>(hop);
    const size_t end = std::min(w.size(), s + static_cast<size_t>(hop));
    double acc = 0.0;
    for (size_t i = s; i < end; ++i) acc += static_cast<double>(w.samples[i]) * w.samples[i];
    e[static_cast<size_t>(f)] = std::log(acc / static_cast<double>(end - s) + 1e-8);
    top = std::max(top, e[static_cast<size_t>(f)]);
  }
  ContentFeatures out;
  out.frames.resize(frames, dim_);
  Eigen::RowVectorXd in(2 * kContext + 2);
  for (Eigen::Index f = 0; f < frames; ++f) {
    for (int c = -kContext; c <= kContext; ++c) {
      const Eigen::Index j = std::clamp<Eigen::Index>(f + c, 0, frames - 1);
      in(c + kContext) = (e[static_cast<size_t>(j)] - top) / 5.0;
    }
    in(2 * kContext + 1) = 1.0;
    const Eigen::RowVectorXd y = (in * proj_).array().tanh();
    out.frames.row(f) = y.cast<float>();
  }
  return out;
}

CachedContentEncoder::CachedContentEncoder(std::filesystem::path dir, int dim) : dir_(std::move(dir)), dim_(dim) {}

std::filesystem::path CachedContentEncoder::cache_path(const std::filesystem::path& dir, const std::string& origin) {
  return dir / (hex64(fnv1a(origin)) + ".bin");
}

ContentFeatures CachedContentEncoder::extract(const Waveform& w, double hop_seconds) const {
  if (w.origin.empty()) throw EncoderUnavailable("cached content features need the waveform's source path");
  const auto bin = cache_path(dir_, w.origin);
  auto sidecar = bin;
  sidecar.replace_extension(".json");
  if (!std::filesystem::exists(bin) || !std::filesystem::exists(sidecar)) {
    throw EncoderUnavailable("no cached content features for " + w.origin + " in " + dir_.string());
  }
  std::vector<ag::Mat> mats;
  nlohmann::json meta;
  try {
    mats = read_tensors(bin);
    meta = nlohmann::json::parse(read_file(sidecar));
  } catch (const std::exception& e) {
    throw EncoderUnavailable(std::string("unreadable content cache: ") + e.what());
  }
  if (mats.size() != 1 || mats[0].cols() != dim_) {
    throw EncoderUnavailable("content cache for " + w.origin + " does not hold one " + std::to_string(dim_) +
                             "-dim matrix");
  }
  const double src_hop = meta.value("hop_seconds", 0.02);
  const int hop = hop_samples(w.sample_rate, hop_seconds);
  ContentFeatures out;
  out.frames = resample_frames(mats[0], src_hop, frame_count(w.size(), hop), hop_seconds);
  return out;
}

std::unique_ptr<ContentEncoder> make_content_encoder(const std::string& kind, int dim,
                                                     const std::filesystem::path& cache_dir) {
  if (kind == "toy") return std::make_unique<ToyContentEncoder>(dim);
  if (kind == "cached") return std::make_unique<CachedContentEncoder>(cache_dir, dim);
  throw ConfigError("unknown content encoder '" + kind + "' (expected toy or cached)");
}

ag::Mat resample_frames(const ag::Mat& src, double src_hop, Eigen::Index frames, double dst_hop) {
  if (src.rows() == 0) throw InvalidInput("resample_frames: no source frames");
  ag::Mat out(frames, src.cols());
  for (Eigen::Index i = 0; i < frames; ++i) {
    const double pos = (static_cast<double>(i) + 0.5) * dst_hop / src_hop - 0.5;
    if (pos <= 0.0) {
      out.row(i) = src.row(0);
    } else if (pos >= static_cast<double>(src.rows() - 1)) {
      out.row(i) = src.row(src.rows() - 1);
    } else {
      const auto j = static_cast<Eigen::Index>(pos);
      const float t = static_cast<float>(pos - static_cast<double>(j));
      out.row(i) = src.row(j) * (1.0f - t) + src.row(j + 1) * t;
    }
  }
  return out;
}

}  // namespace voicectl
