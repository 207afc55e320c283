#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "voicectl/autograd/nn.hpp"
#include "voicectl/core/errors.hpp"

namespace voicectl {

inline constexpr int kMixtureComponents = 10;
inline constexpr double kScaleFloor = 1e-3;

/// Diagonal Gaussian mixture over a D-dim embedding.
struct MixtureParams {
  Eigen::VectorXd weights;  // K, on the simplex
  Eigen::MatrixXd means;    // K x D
  Eigen::MatrixXd scales;   // K x D, >= kScaleFloor

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(means.cols()); }
};

/// Tape form of the mixture: weight logits (1 x K), means and scales (K x D).
template <typename T>
struct MixtureVars {
  ag::Var<T> logits, means, scales;
};

/// Splits a raw 1 x (K + 2KD) head output into weight logits, means and
/// softplus-plus-floor scales.
template <typename T>
MixtureVars<T> mixture_from_raw(const ag::Var<T>& raw, int k, int d) {
  if (raw.rows() != 1 || raw.cols() != static_cast<Eigen::Index>(k) * (1 + 2 * d)) {
    throw InvalidInput("mixture head output has the wrong width");
  }
  MixtureVars<T> m;
  m.logits = ag::slice_cols(raw, 0, k);
  std::vector<ag::Var<T>> mu_rows, s_rows;
  for (int c = 0; c < k; ++c) {
    mu_rows.push_back(ag::slice_cols(raw, k + c * d, d));
    s_rows.push_back(ag::slice_cols(raw, k + k * d + c * d, d));
  }
  m.means = ag::concat_rows<T>(std::span<const ag::Var<T>>(mu_rows));
  m.scales = ag::add_scalar(ag::softplus(ag::concat_rows<T>(std::span<const ag::Var<T>>(s_rows))), T(kScaleFloor));
  return m;
}

/// -ln sum_k w_k N(target; mu_k, diag sigma_k^2) with w = softmax(logits),
/// evaluated by log-sum-exp. `target` is 1 x D.
template <typename T>
ag::Var<T> mdn_nll(const MixtureVars<T>& m, const ag::Matrix<T>& target) {
  const Eigen::Index k = m.means.rows(), d = m.means.cols();
  if (target.rows() != 1 || target.cols() != d || m.scales.rows() != k || m.scales.cols() != d ||
      m.logits.rows() != 1 || m.logits.cols() != k) {
    throw InvalidInput("mdn_nll: target dimension does not match the mixture");
  }
  ag::Tape<T>& t = *m.means.tape();
  auto log_s = ag::log(m.scales);
  auto z = ag::mul(ag::sub(m.means, t.constant(target.replicate(k, 1))), ag::exp(ag::scale(log_s, T(-1))));
  auto per_dim = ag::add(log_s, ag::scale(ag::square(z), T(0.5)));
  const T norm = static_cast<T>(0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi));
  auto log_n = ag::add_scalar(ag::scale(ag::sum_cols(per_dim), T(-1)), -norm);  // K x 1
  auto log_w = ag::transpose(ag::log_softmax_rows(m.logits));                      // K x 1
  return ag::scale(ag::logsumexp_rows(ag::transpose(ag::add(log_n, log_w))), T(-1));
}

/// Plain-value NLL of a MixtureParams.
double mdn_nll(const MixtureParams& p, const Eigen::RowVectorXd& target);

/// Normalized parameters from tape values.
MixtureParams to_mixture_params(const MixtureVars<float>& m);

struct SampleStrategy {
  enum class Kind { kMode, kSample } kind = Kind::kMode;
  double temperature = 1.0;

  static SampleStrategy mode() { return {}; }
  static SampleStrategy sample(double temperature) { return {Kind::kSample, temperature}; }
};

/// Mode: mean of the highest-weight component (ties go to the lowest index).
/// Sample: component drawn by weight, then mean + temperature * scale * N(0, 1).
Eigen::RowVectorXd mdn_sample(const MixtureParams& p, const SampleStrategy& strategy, std::uint64_t seed);

/// One MDN head: Linear -> tanh -> Linear to K + 2KD outputs.
struct MdnHead {
  MdnHead() = default;
  MdnHead(ag::ParamStore<float>& store, const std::string& name, int in, int hidden, int components, int dim,
          std::mt19937_64& rng);

  MixtureVars<float> operator()(const ag::Var<float>& h) const;

  ag::Linear<float> hidden, out;
  int components = kMixtureComponents;
  int dim = 0;
};

}  // namespace voicectl
