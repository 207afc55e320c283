#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "voicectl/autograd/tape.hpp"
#include "voicectl/signal/waveform.hpp"

namespace voicectl {

/// frames x D_content, one row per backbone hop.
struct ContentFeatures {
  ag::Mat frames;
  Eigen::Index num_frames() const { return frames.rows(); }
};

class ContentEncoder {
 public:
  virtual ~ContentEncoder() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  /// Features resampled to the given hop; frame count = ceil(len / hop).
  virtual ContentFeatures extract(const Waveform& w, double hop_seconds) const = 0;
};

/// Frozen-random encoder over 10 ms block log-energies (loudness-normalized,
/// with +-3 frames of context). Block energies are kept by
/// perturb_information, so its output ignores pitch and formant shifts.
class ToyContentEncoder final : public ContentEncoder {
 public:
  explicit ToyContentEncoder(int dim = 64, std::uint64_t seed = 0x5eedc0de);
  std::string id() const override { return "toy-energy-" + std::to_string(dim_); }
  int dim() const override { return dim_; }
  ContentFeatures extract(const Waveform& w, double hop_seconds) const override;

  static constexpr int kContext = 3;

 private:
  int dim_;
  Eigen::MatrixXd proj_;  // (2*kContext + 2) x dim
};

/// Precomputed features from an external content model, one file per audio
/// path: <dir>/<fnv64(origin)>.bin holding one frames x D matrix, plus a
/// .json sidecar with "hop_seconds". Frames are linearly interpolated onto the
/// backbone hop.
class CachedContentEncoder final : public ContentEncoder {
 public:
  CachedContentEncoder(std::filesystem::path dir, int dim = 768);
  std::string id() const override { return "cached:" + dir_.string(); }
  int dim() const override { return dim_; }
  ContentFeatures extract(const Waveform& w, double hop_seconds) const override;

  static std::filesystem::path cache_path(const std::filesystem::path& dir, const std::string& origin);

 private:
  std::filesystem::path dir_;
  int dim_;
};

std::unique_ptr<ContentEncoder> make_content_encoder(const std::string& kind, int dim,
                                                     const std::filesystem::path& cache_dir);

/// Linear interpolation of rows from one frame rate onto `frames` rows at
/// another; frame centres are at (i + 0.5) * hop.
ag::Mat resample_frames(const ag::Mat& src, double src_hop, Eigen::Index frames, double dst_hop);

}  // namespace voicectl
