#pragma once

#include <span>
#include <vector>

#include "voicectl/autograd/ops.hpp"
#include "voicectl/core/errors.hpp"
#include "voicectl/signal/stft_loss.hpp"

namespace voicectl {

/// Frame-wise InfoNCE over cosine similarities, averaged over frames. Row t of
/// the anchor is pulled towards row t of the positive and pushed from row t of
/// every negative.
template <typename T>
ag::Var<T> contrastive_loss(const ag::Var<T>& anchor, const ag::Var<T>& positive,
                            std::span<const ag::Var<T>> negatives, T temperature, T eps = T(1e-8)) {
  if (!(temperature > T(0))) throw InvalidInput("contrastive_loss: temperature must be positive");
  if (negatives.empty()) throw InvalidInput("contrastive_loss: need at least one negative");
  auto same_shape = [&](const ag::Var<T>& v) { return v.rows() == anchor.rows() && v.cols() == anchor.cols(); };
  if (!same_shape(positive)) throw InvalidInput("contrastive_loss: positive shape differs from anchor");
  for (const auto& n : negatives) {
    if (!same_shape(n)) throw InvalidInput("contrastive_loss: negative shape differs from anchor");
  }
  const ag::Var<T> a = ag::normalize_rows(anchor, eps);
  std::vector<ag::Var<T>> sims;
  sims.push_back(ag::sum_cols(ag::mul(a, ag::normalize_rows(positive, eps))));
  for (const auto& n : negatives) sims.push_back(ag::sum_cols(ag::mul(a, ag::normalize_rows(n, eps))));
  const ag::Var<T> logits = ag::scale(ag::concat_cols<T>(std::span<const ag::Var<T>>(sims)), T(1) / temperature);
  return ag::mean(ag::sub(ag::logsumexp_rows(logits), ag::slice_cols(logits, 0, 1)));
}

/// Multi-resolution STFT loss of an (N x 1) waveform column against a fixed
/// target, with the analytic waveform gradient.
inline ag::Var<float> stft_loss_op(const ag::Var<float>& wave, const std::vector<float>& target,
                                   const std::vector<StftResolution>& resolutions = default_stft_resolutions()) {
  if (wave.cols() != 1 || static_cast<size_t>(wave.rows()) != target.size()) {
    throw InvalidInput("stft_loss_op: waveform and target lengths differ");
  }
  std::vector<float> pred(static_cast<size_t>(wave.rows()));
  for (Eigen::Index i = 0; i < wave.rows(); ++i) pred[static_cast<size_t>(i)] = wave.value()(i, 0);
  auto lg = multires_stft_loss_grad(pred, target, resolutions);
  ag::Mat value = ag::Mat::Constant(1, 1, static_cast<float>(lg.loss));
  ag::Mat grad(wave.rows(), 1);
  for (Eigen::Index i = 0; i < wave.rows(); ++i) grad(i, 0) = static_cast<float>(lg.grad[static_cast<size_t>(i)]);
  const std::vector<ag::Var<float>> in{wave};
  return ag::custom<float>(in, std::move(value), [grad = std::move(grad)](const ag::Mat& g) {
    return std::vector<ag::Mat>{grad * g(0, 0)};
  });
}

}  // namespace voicectl
