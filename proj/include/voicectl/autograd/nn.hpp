#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "voicectl/autograd/ops.hpp"
#include "voicectl/core/rng.hpp"

// Small layer library over the tape. Layers hold non-owning pointers into a
// ParamStore, so a model is a ParamStore plus a tree of these structs.

namespace voicectl::ag {

template <typename T>
Matrix<T> uniform_init(Eigen::Index rows, Eigen::Index cols, T bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

template <typename T>
struct Linear {
  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng,
         T gain = T(1)) {
    const T bound = gain * std::sqrt(T(3) / static_cast<T>(in));
    w = &store.create(name + ".w", uniform_init<T>(in, out, bound, rng));
    b = &store.create(name + ".b", Matrix<T>::Zero(1, out));
  }

  Var<T> operator()(const Var<T>& x) const {
    Tape<T>& t = *x.tape();
    return add_row(matmul(x, t.param(*w)), t.param(*b));
  }

  Eigen::Index in_dim() const { return w->value.rows(); }
  Eigen::Index out_dim() const { return w->value.cols(); }

  Parameter<T>* w = nullptr;
  Parameter<T>* b = nullptr;
};

/// 1-D convolution over time (rows) with "same" padding.
template <typename T>
struct Conv1d {
  Conv1d() = default;
  Conv1d(ParamStore<T>& store, const std::string& name, Eigen::Index in, Eigen::Index out, int kernel_size,
         std::mt19937_64& rng, int stride_ = 1, int dilation_ = 1)
      : kernel(kernel_size), stride(stride_), dilation(dilation_) {
    const T bound = std::sqrt(T(3) / static_cast<T>(in * kernel));
    w = &store.create(name + ".w", uniform_init<T>(in * kernel, out, bound, rng));
    b = &store.create(name + ".b", Matrix<T>::Zero(1, out));
  }

  Var<T> operator()(const Var<T>& x) const {
    Tape<T>& t = *x.tape();
    Var<T> cols = kernel == 1 && stride == 1 ? x : unfold(x, kernel, stride, dilation);
    return add_row(matmul(cols, t.param(*w)), t.param(*b));
  }

  Parameter<T>* w = nullptr;
  Parameter<T>* b = nullptr;
  int kernel = 1;
  int stride = 1;
  int dilation = 1;
};

template <typename T>
struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(ParamStore<T>& store, const std::string& name, Eigen::Index dim) {
    gamma = &store.create(name + ".gamma", Matrix<T>::Ones(1, dim));
    beta = &store.create(name + ".beta", Matrix<T>::Zero(1, dim));
  }

  Var<T> operator()(const Var<T>& x) const {
    Tape<T>& t = *x.tape();
    return layer_norm_rows(x, t.param(*gamma), t.param(*beta));
  }

  Parameter<T>* gamma = nullptr;
  Parameter<T>* beta = nullptr;
};

template <typename T>
struct Embedding {
  Embedding() = default;
  Embedding(ParamStore<T>& store, const std::string& name, Eigen::Index count, Eigen::Index dim,
            std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    Matrix<T> m(count, dim);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
    table = &store.create(name + ".table", std::move(m));
  }

  Var<T> operator()(Tape<T>& t, std::vector<int> ids) const { return gather_rows(t.param(*table), std::move(ids)); }

  Parameter<T>* table = nullptr;
};

template <typename T>
struct MultiHeadAttention {
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<T>& store, const std::string& name, Eigen::Index dim, int n_heads,
                     std::mt19937_64& rng)
      : heads(n_heads) {
    q = Linear<T>(store, name + ".q", dim, dim, rng);
    k = Linear<T>(store, name + ".k", dim, dim, rng);
    v = Linear<T>(store, name + ".v", dim, dim, rng);
    o = Linear<T>(store, name + ".o", dim, dim, rng);
  }

  Var<T> operator()(const Var<T>& x) const {
    const Eigen::Index dim = x.cols();
    const Eigen::Index dh = dim / heads;
    Var<T> qs = q(x), ks = k(x), vs = v(x);
    std::vector<Var<T>> outs;
    outs.reserve(static_cast<size_t>(heads));
    const T inv = T(1) / std::sqrt(static_cast<T>(dh));
    for (int h = 0; h < heads; ++h) {
      Var<T> qh = slice_cols(qs, h * dh, dh), kh = slice_cols(ks, h * dh, dh), vh = slice_cols(vs, h * dh, dh);
      Var<T> att = softmax_rows(scale(matmul_nt(qh, kh), inv));
      outs.push_back(matmul(att, vh));
    }
    return o(concat_cols<T>(std::span<const Var<T>>(outs)));
  }

  Linear<T> q, k, v, o;
  int heads = 1;
};

/// Bidirectional LSTM; forward and backward hidden states are summed.
template <typename T>
struct BiLstm {
  BiLstm() = default;
  BiLstm(ParamStore<T>& store, const std::string& name, Eigen::Index in, Eigen::Index hidden, std::mt19937_64& rng) {
    const T bound = T(1) / std::sqrt(static_cast<T>(hidden));
    for (int d = 0; d < 2; ++d) {
      const std::string n = name + (d == 0 ? ".fwd" : ".bwd");
      w_in[d] = &store.create(n + ".w_in", uniform_init<T>(in, 4 * hidden, bound, rng));
      w_rec[d] = &store.create(n + ".w_rec", uniform_init<T>(hidden, 4 * hidden, bound, rng));
      Matrix<T> b = Matrix<T>::Zero(1, 4 * hidden);
      b.middleCols(hidden, hidden).setOnes();  // forget-gate bias
      bias[d] = &store.create(n + ".b", std::move(b));
    }
  }

  Var<T> operator()(const Var<T>& x) const {
    Tape<T>& t = *x.tape();
    Var<T> f = lstm(x, t.param(*w_in[0]), t.param(*w_rec[0]), t.param(*bias[0]), false);
    Var<T> b = lstm(x, t.param(*w_in[1]), t.param(*w_rec[1]), t.param(*bias[1]), true);
    return add(f, b);
  }

  Parameter<T>* w_in[2] = {nullptr, nullptr};
  Parameter<T>* w_rec[2] = {nullptr, nullptr};
  Parameter<T>* bias[2] = {nullptr, nullptr};
};

/// Sinusoidal position table, rows = positions.
template <typename T>
Matrix<T> sinusoid_positions(Eigen::Index len, Eigen::Index dim) {
  Matrix<T> pe(len, dim);
  for (Eigen::Index p = 0; p < len; ++p) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double a = static_cast<double>(p) * rate;
      pe(p, i) = static_cast<T>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  }
  return pe;
}

}  // namespace voicectl::ag
