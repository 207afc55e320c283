#pragma once

#include <cmath>
#include <unordered_map>
#include <vector>

#include "voicectl/autograd/tape.hpp"

namespace voicectl::ag {

struct AdamWConfig {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip_norm = 1.0;  // <= 0 disables
};

/// Decoupled-weight-decay Adam. Frozen parameters are skipped entirely.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Parameter<T>*> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.emplace(p, Matrix<T>::Zero(p->value.rows(), p->value.cols()));
      v_.emplace(p, Matrix<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  /// Global L2 norm of the gradients of non-frozen parameters.
  double grad_norm() const {
    double s = 0.0;
    for (const auto* p : params_) {
      if (!p->frozen) s += static_cast<double>(p->grad.squaredNorm());
    }
    return std::sqrt(s);
  }

  void step(double lr) {
    ++t_;
    double clip = 1.0;
    if (cfg_.grad_clip_norm > 0) {
      const double n = grad_norm();
      if (n > cfg_.grad_clip_norm) clip = cfg_.grad_clip_norm / n;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto* p : params_) {
      if (p->frozen) continue;
      Matrix<T>& m = m_.at(p);
      Matrix<T>& v = v_.at(p);
      const Matrix<T> g = p->grad * static_cast<T>(clip);
      m = m * static_cast<T>(cfg_.beta1) + g * static_cast<T>(1.0 - cfg_.beta1);
      v = v * static_cast<T>(cfg_.beta2) + g.cwiseProduct(g) * static_cast<T>(1.0 - cfg_.beta2);
      p->value *= static_cast<T>(1.0 - lr * cfg_.weight_decay);
      const Matrix<T> update = (m.array() / static_cast<T>(bc1)) /
                               ((v.array() / static_cast<T>(bc2)).sqrt() + static_cast<T>(cfg_.eps));
      p->value -= update * static_cast<T>(lr);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  long steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

  /// Moment buffers, exposed for checkpointing the training state.
  const Matrix<T>& first_moment(const Parameter<T>* p) const { return m_.at(const_cast<Parameter<T>*>(p)); }
  const Matrix<T>& second_moment(const Parameter<T>* p) const { return v_.at(const_cast<Parameter<T>*>(p)); }

 private:
  std::vector<Parameter<T>*> params_;
  AdamWConfig cfg_;
  std::unordered_map<Parameter<T>*, Matrix<T>> m_, v_;
  long t_ = 0;
};

/// lr(step) = lr0 * decay^floor(step / steps_per_epoch)
struct ExponentialDecay {
  double initial_lr = 0.002;
  double decay_per_epoch = 0.9975;
  long steps_per_epoch = 1;

  double lr(long step) const {
    const long epoch = steps_per_epoch > 0 ? step / steps_per_epoch : 0;
    return initial_lr * std::pow(decay_per_epoch, static_cast<double>(epoch));
  }
};

}  // namespace voicectl::ag
