#pragma once

#include "voicectl/autograd/ops.hpp"
#include "voicectl/core/errors.hpp"

namespace voicectl {

template <typename T>
struct AcousticTargets {
  ag::Matrix<T> linguistic;  // frames x 128
  ag::Matrix<T> log_f0;      // frames x 1
  ag::Matrix<T> vuv;         // frames x 1, 0 or 1
  ag::Matrix<T> durations;   // symbols x 1, frames per symbol
};

template <typename T>
struct AcousticLossTerms {
  ag::Var<T> linguistic, log_f0, vuv, duration, total;
};

/// L1 on linguistic features, L1 on log-F0 over voiced frames, BCE on V/UV
/// (from logits) and mean |ln(pred + 1) - ln(target + 1)| on durations.
/// `duration_pred` holds raw (unrounded) durations, each > -1.
template <typename T>
AcousticLossTerms<T> acoustic_losses(const ag::Var<T>& linguistic, const ag::Var<T>& log_f0,
                                     const ag::Var<T>& vuv_logits, const ag::Var<T>& duration_pred,
                                     const AcousticTargets<T>& target, T vuv_weight = T(1)) {
  if (linguistic.rows() != target.linguistic.rows() || linguistic.cols() != target.linguistic.cols() ||
      log_f0.rows() != target.log_f0.rows() || log_f0.cols() != 1 || target.log_f0.cols() != 1 ||
      vuv_logits.rows() != target.vuv.rows() || vuv_logits.cols() != 1 || target.vuv.cols() != 1 ||
      log_f0.rows() != linguistic.rows() || vuv_logits.rows() != linguistic.rows() ||
      duration_pred.rows() != target.durations.rows() || duration_pred.cols() != 1 || target.durations.cols() != 1) {
    throw InvalidInput("acoustic_losses: prediction and target shapes differ");
  }
  ag::Tape<T>& t = *linguistic.tape();
  AcousticLossTerms<T> out;
  out.linguistic = ag::mean(ag::abs(ag::sub(linguistic, t.constant(target.linguistic))));

  const T voiced = target.vuv.sum();
  auto f0_err = ag::mul(ag::abs(ag::sub(log_f0, t.constant(target.log_f0))), t.constant(target.vuv));
  out.log_f0 = voiced > T(0) ? ag::scale(ag::sum(f0_err), T(1) / voiced) : ag::scale(ag::sum(f0_err), T(0));

  out.vuv = ag::bce_with_logits(vuv_logits, target.vuv);
  const ag::Matrix<T> log_target = (target.durations.array() + T(1)).log().matrix();
  out.duration = ag::mean(ag::abs(ag::sub(ag::log(ag::add_scalar(duration_pred, T(1))), t.constant(log_target))));
  out.total = ag::add(ag::add(out.linguistic, out.log_f0), ag::add(ag::scale(out.vuv, vuv_weight), out.duration));
  return out;
}

}  // namespace voicectl
