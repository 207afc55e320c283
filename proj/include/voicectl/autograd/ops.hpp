#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "voicectl/autograd/tape.hpp"

// Differentiable matrix ops. Every op takes and returns Var<T> on the same
// tape; shapes are checked eagerly and mismatches throw std::invalid_argument.

namespace voicectl::ag {

namespace detail {

template <typename T>
Tape<T>& tape_of(const Var<T>& a) {
  return *a.tape();
}

inline void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

template <typename T>
bool any_grad(std::initializer_list<Var<T>> vs) {
  for (const auto& v : vs) {
    if (v.tape()->requires_grad(v.id())) return true;
  }
  return false;
}

template <typename T, typename F>
Var<T> unary(const Var<T>& a, Matrix<T> out, F&& dfdx_times_g) {
  Tape<T>& t = tape_of(a);
  const int ia = a.id();
  return t.record(std::move(out), t.requires_grad(ia),
                  [ia, f = std::forward<F>(dfdx_times_g)](Tape<T>& tp, int self) {
                    tp.accumulate(ia, f(tp.value(ia), tp.value(self), tp.grad(self)));
                  });
}

}  // namespace detail

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Tape<T>& t = detail::tape_of(a);
  const int ia = a.id(), ib = b.id();
  Matrix<T> out = a.value() * b.value();
  return t.record(std::move(out), detail::any_grad({a, b}), [ia, ib](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

/// a * b^T
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  detail::require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  Tape<T>& t = detail::tape_of(a);
  const int ia = a.id(), ib = b.id();
  Matrix<T> out = a.value() * b.value().transpose();
  return t.record(std::move(out), detail::any_grad({a, b}), [ia, ib](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.transpose() * tp.value(ia));
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Tape<T>& t = detail::tape_of(a);
  const int ia = a.id(), ib = b.id();
  Matrix<T> out = a.value() + b.value();
  return t.record(std::move(out), detail::any_grad({a, b}), [ia, ib](Tape<T>& tp, int self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, tp.grad(self));
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Tape<T>& t = detail::tape_of(a);
  const int ia = a.id(), ib = b.id();
  Matrix<T> out = a.value() - b.value();
  return t.record(std::move(out), detail::any_grad({a, b}), [ia, ib](Tape<T>& tp, int self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, -tp.grad(self));
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Tape<T>& t = detail::tape_of(a);
  const int ia = a.id(), ib = b.id();
  Matrix<T> out = a.value().cwiseProduct(b.value());
  return t.record(std::move(out), detail::any_grad({a, b}), [ia, ib](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
  });
}

/// a (R x C) + row (1 x C), broadcast over rows.
template <typename T>
Var<T> add_row(const Var<T>& a, const Var<T>& row) {
  detail::require(row.rows() == 1 && row.cols() == a.cols(), "add_row: shape mismatch");
  Tape<T>& t = detail::tape_of(a);
  const int ia = a.id(), ib = row.id();
  Matrix<T> out = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), detail::any_grad({a, row}), [ia, ib](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
  });
}

/// a (R x C) * row (1 x C), broadcast over rows.
template <typename T>
Var<T> mul_row(const Var<T>& a, const Var<T>& row) {
  detail::require(row.rows() == 1 && row.cols() == a.cols(), "mul_row: shape mismatch");
  Tape<T>& t = detail::tape_of(a);
  const int ia = a.id(), ib = row.id();
  Matrix<T> out = a.value().array().rowwise() * row.value().row(0).array();
  return t.record(std::move(out), detail::any_grad({a, row}), [ia, ib](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.requires_grad(ia)) {
      Matrix<T> ga = g.array().rowwise() * tp.value(ib).row(0).array();
      tp.accumulate(ia, ga);
    }
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)).colwise().sum());
  });
}

/// a (R x C) * col (R x 1), broadcast over columns.
template <typename T>
Var<T> mul_col(const Var<T>& a, const Var<T>& col) {
  detail::require(col.cols() == 1 && col.rows() == a.rows(), "mul_col: shape mismatch");
  Tape<T>& t = detail::tape_of(a);
  const int ia = a.id(), ib = col.id();
  Matrix<T> out = a.value().array().colwise() * col.value().col(0).array();
  return t.record(std::move(out), detail::any_grad({a, col}), [ia, ib](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    if (tp.requires_grad(ia)) {
      Matrix<T> ga = g.array().colwise() * tp.value(ib).col(0).array();
      tp.accumulate(ia, ga);
    }
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)).rowwise().sum());
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Matrix<T> out = a.value() * s;
  return detail::unary(a, std::move(out), [s](const Matrix<T>&, const Matrix<T>&, const Matrix<T>& g) {
    return Matrix<T>(g * s);
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  Matrix<T> out = a.value().array() + s;
  return detail::unary(a, std::move(out),
                       [](const Matrix<T>&, const Matrix<T>&, const Matrix<T>& g) { return g; });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Matrix<T> out = a.value().array().tanh();
  return detail::unary(a, std::move(out), [](const Matrix<T>&, const Matrix<T>& y, const Matrix<T>& g) {
    return Matrix<T>(g.array() * (T(1) - y.array().square()));
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Matrix<T> out = (T(1) + (-a.value().array()).exp()).inverse();
  return detail::unary(a, std::move(out), [](const Matrix<T>&, const Matrix<T>& y, const Matrix<T>& g) {
    return Matrix<T>(g.array() * y.array() * (T(1) - y.array()));
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Matrix<T> out = a.value().cwiseMax(T(0));
  return detail::unary(a, std::move(out), [](const Matrix<T>& x, const Matrix<T>&, const Matrix<T>& g) {
    return Matrix<T>((x.array() > T(0)).select(g.array(), T(0)));
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope = T(0.1)) {
  Matrix<T> out = (a.value().array() > T(0)).select(a.value().array(), a.value().array() * slope);
  return detail::unary(a, std::move(out), [slope](const Matrix<T>& x, const Matrix<T>&, const Matrix<T>& g) {
    return Matrix<T>((x.array() > T(0)).select(g.array(), g.array() * slope));
  });
}

/// ln(1 + e^x), computed without overflow.
template <typename T>
Var<T> softplus(const Var<T>& a) {
  Matrix<T> out = a.value().unaryExpr([](T x) {
    return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  return detail::unary(a, std::move(out), [](const Matrix<T>& x, const Matrix<T>&, const Matrix<T>& g) {
    return Matrix<T>(g.array() * (T(1) + (-x.array()).exp()).inverse());
  });
}

template <typename T>
Var<T> silu(const Var<T>& a) {
  Matrix<T> sig = (T(1) + (-a.value().array()).exp()).inverse();
  Matrix<T> out = a.value().cwiseProduct(sig);
  return detail::unary(a, std::move(out), [sig](const Matrix<T>& x, const Matrix<T>&, const Matrix<T>& g) {
    return Matrix<T>(g.array() * (sig.array() * (T(1) + x.array() * (T(1) - sig.array()))));
  });
}

/// tanh approximation of GELU.
template <typename T>
Var<T> gelu(const Var<T>& a) {
  const T c = static_cast<T>(0.7978845608028654), k = static_cast<T>(0.044715);
  const auto x = a.value().array();
  Matrix<T> th = (c * (x + k * x.cube())).tanh();
  Matrix<T> out = T(0.5) * x * (T(1) + th.array());
  return detail::unary(a, std::move(out), [th, c, k](const Matrix<T>& xm, const Matrix<T>&, const Matrix<T>& g) {
    const auto xv = xm.array();
    const auto t = th.array();
    return Matrix<T>(g.array() * (T(0.5) * (T(1) + t) +
                                  T(0.5) * xv * (T(1) - t * t) * c * (T(1) + T(3) * k * xv * xv)));
  });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  Matrix<T> out = a.value().array().exp();
  return detail::unary(a, std::move(out), [](const Matrix<T>&, const Matrix<T>& y, const Matrix<T>& g) {
    return Matrix<T>(g.cwiseProduct(y));
  });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  Matrix<T> out = a.value().array().log();
  return detail::unary(a, std::move(out), [](const Matrix<T>& x, const Matrix<T>&, const Matrix<T>& g) {
    return Matrix<T>(g.array() / x.array());
  });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  Matrix<T> out = a.value().array().square();
  return detail::unary(a, std::move(out), [](const Matrix<T>& x, const Matrix<T>&, const Matrix<T>& g) {
    return Matrix<T>(T(2) * g.cwiseProduct(x));
  });
}

/// |x| with subgradient 0 at the origin.
template <typename T>
Var<T> abs(const Var<T>& a) {
  Matrix<T> out = a.value().cwiseAbs();
  return detail::unary(a, std::move(out), [](const Matrix<T>& x, const Matrix<T>&, const Matrix<T>& g) {
    return Matrix<T>(g.array() * x.array().sign());
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  Matrix<T> out = a.value().transpose();
  return detail::unary(a, std::move(out), [](const Matrix<T>&, const Matrix<T>&, const Matrix<T>& g) {
    return Matrix<T>(g.transpose());
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  Matrix<T> out = Matrix<T>::Constant(1, 1, a.value().sum());
  return detail::unary(a, std::move(out), [](const Matrix<T>& x, const Matrix<T>&, const Matrix<T>& g) {
    return Matrix<T>(Matrix<T>::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  detail::require(a.value().size() > 0, "mean: empty input");
  const T n = static_cast<T>(a.value().size());
  Matrix<T> out = Matrix<T>::Constant(1, 1, a.value().sum() / n);
  return detail::unary(a, std::move(out), [n](const Matrix<T>& x, const Matrix<T>&, const Matrix<T>& g) {
    return Matrix<T>(Matrix<T>::Constant(x.rows(), x.cols(), g(0, 0) / n));
  });
}

/// Column sums: (R x C) -> (1 x C).
template <typename T>
Var<T> sum_rows(const Var<T>& a) {
  Matrix<T> out = a.value().colwise().sum();
  return detail::unary(a, std::move(out), [](const Matrix<T>& x, const Matrix<T>&, const Matrix<T>& g) {
    return Matrix<T>(g.replicate(x.rows(), 1));
  });
}

template <typename T>
Var<T> mean_rows(const Var<T>& a) {
  detail::require(a.rows() > 0, "mean_rows: empty input");
  return scale(sum_rows(a), T(1) / static_cast<T>(a.rows()));
}

/// Row sums: (R x C) -> (R x 1).
template <typename T>
Var<T> sum_cols(const Var<T>& a) {
  Matrix<T> out = a.value().rowwise().sum();
  return detail::unary(a, std::move(out), [](const Matrix<T>& x, const Matrix<T>&, const Matrix<T>& g) {
    return Matrix<T>(g.replicate(1, x.cols()));
  });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::require(p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
    rg = rg || p.tape()->requires_grad(p.id());
  }
  Matrix<T> out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> ids;
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    ids.emplace_back(p.id(), c);
    c += p.cols();
  }
  Tape<T>& t = *parts[0].tape();
  return t.record(std::move(out), rg, [ids](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    for (const auto& [id, off] : ids) {
      if (tp.requires_grad(id)) tp.accumulate(id, g.middleCols(off, tp.value(id).cols()));
    }
  });
}

template <typename T>
Var<T> concat_cols(std::initializer_list<Var<T>> parts) {
  std::vector<Var<T>> v(parts);
  return concat_cols<T>(std::span<const Var<T>>(v));
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  detail::require(!parts.empty(), "concat_rows: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::require(p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
    rg = rg || p.tape()->requires_grad(p.id());
  }
  Matrix<T> out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> ids;
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    ids.emplace_back(p.id(), r);
    r += p.rows();
  }
  Tape<T>& t = *parts[0].tape();
  return t.record(std::move(out), rg, [ids](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    for (const auto& [id, off] : ids) {
      if (tp.requires_grad(id)) tp.accumulate(id, g.middleRows(off, tp.value(id).rows()));
    }
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, Eigen::Index start, Eigen::Index n) {
  detail::require(start >= 0 && n >= 0 && start + n <= a.cols(), "slice_cols: out of range");
  Tape<T>& t = detail::tape_of(a);
  const int ia = a.id();
  Matrix<T> out = a.value().middleCols(start, n);
  return t.record(std::move(out), t.requires_grad(ia), [ia, start, n](Tape<T>& tp, int self) {
    tp.grad_buffer(ia).middleCols(start, n) += tp.grad(self);
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, Eigen::Index start, Eigen::Index n) {
  detail::require(start >= 0 && n >= 0 && start + n <= a.rows(), "slice_rows: out of range");
  Tape<T>& t = detail::tape_of(a);
  const int ia = a.id();
  Matrix<T> out = a.value().middleRows(start, n);
  return t.record(std::move(out), t.requires_grad(ia), [ia, start, n](Tape<T>& tp, int self) {
    tp.grad_buffer(ia).middleRows(start, n) += tp.grad(self);
  });
}

/// Repeats a single row n times: (1 x C) -> (n x C).
template <typename T>
Var<T> repeat_rows(const Var<T>& row, Eigen::Index n) {
  detail::require(row.rows() == 1, "repeat_rows: expected a row vector");
  Matrix<T> out = row.value().replicate(n, 1);
  return detail::unary(row, std::move(out), [](const Matrix<T>&, const Matrix<T>&, const Matrix<T>& g) {
    return Matrix<T>(g.colwise().sum());
  });
}

/// out.row(i) = a.row(index[i]).
template <typename T>
Var<T> gather_rows(const Var<T>& a, std::vector<int> index) {
  Tape<T>& t = detail::tape_of(a);
  const int ia = a.id();
  Matrix<T> out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (size_t i = 0; i < index.size(); ++i) {
    detail::require(index[i] >= 0 && index[i] < a.rows(), "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  return t.record(std::move(out), t.requires_grad(ia), [ia, idx = std::move(index)](Tape<T>& tp, int self) {
    Matrix<T>& ga = tp.grad_buffer(ia);
    const Matrix<T>& g = tp.grad(self);
    for (size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& a) {
  Matrix<T> out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const T m = a.value().row(r).maxCoeff();
    out.row(r) = (a.value().row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return detail::unary(a, std::move(out), [](const Matrix<T>&, const Matrix<T>& y, const Matrix<T>& g) {
    Matrix<T> dot = g.cwiseProduct(y).rowwise().sum();
    Matrix<T> gx = y.array() * (g.array().colwise() - dot.col(0).array());
    return gx;
  });
}

template <typename T>
Var<T> log_softmax_rows(const Var<T>& a) {
  Matrix<T> out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const T m = a.value().row(r).maxCoeff();
    const T lse = m + std::log((a.value().row(r).array() - m).exp().sum());
    out.row(r) = a.value().row(r).array() - lse;
  }
  return detail::unary(a, std::move(out), [](const Matrix<T>&, const Matrix<T>& y, const Matrix<T>& g) {
    Matrix<T> gsum = g.rowwise().sum();
    Matrix<T> gx = g.array() - y.array().exp().colwise() * gsum.col(0).array();
    return gx;
  });
}

/// Row-wise log-sum-exp: (R x C) -> (R x 1).
template <typename T>
Var<T> logsumexp_rows(const Var<T>& a) {
  Matrix<T> out(a.rows(), 1);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const T m = a.value().row(r).maxCoeff();
    out(r, 0) = m + std::log((a.value().row(r).array() - m).exp().sum());
  }
  return detail::unary(a, std::move(out), [](const Matrix<T>& x, const Matrix<T>& y, const Matrix<T>& g) {
    Matrix<T> p = (x.array().colwise() - y.col(0).array()).exp();
    Matrix<T> gx = p.array().colwise() * g.col(0).array();
    return gx;
  });
}

/// Scales each row to unit L2 norm: x / sqrt(|x|^2 + eps^2).
template <typename T>
Var<T> normalize_rows(const Var<T>& a, T eps) {
  Matrix<T> norm = (a.value().rowwise().squaredNorm().array() + eps * eps).sqrt();
  Matrix<T> out = a.value().array().colwise() / norm.col(0).array();
  return detail::unary(a, std::move(out), [norm](const Matrix<T>&, const Matrix<T>& y, const Matrix<T>& g) {
    Matrix<T> dot = g.cwiseProduct(y).rowwise().sum();
    Matrix<T> gx = (g.array() - y.array().colwise() * dot.col(0).array()).colwise() / norm.col(0).array();
    return gx;
  });
}

template <typename T>
Var<T> layer_norm_rows(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  detail::require(gamma.cols() == x.cols() && beta.cols() == x.cols(), "layer_norm: width mismatch");
  const Eigen::Index c = x.cols();
  Matrix<T> mu = x.value().rowwise().mean();
  Matrix<T> xc = x.value().colwise() - mu.col(0);
  Matrix<T> inv = ((xc.array().square().rowwise().sum() / static_cast<T>(c)) + eps).rsqrt();
  Matrix<T> xhat = xc.array().colwise() * inv.col(0).array();
  Matrix<T> out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  Tape<T>& t = detail::tape_of(x);
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return t.record(std::move(out), detail::any_grad({x, gamma, beta}),
                  [ix, ig, ib, xhat, inv, c](Tape<T>& tp, int self) {
                    const Matrix<T>& g = tp.grad(self);
                    if (tp.requires_grad(ig)) tp.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                    if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
                    if (tp.requires_grad(ix)) {
                      Matrix<T> gh = g.array().rowwise() * tp.value(ig).row(0).array();
                      Matrix<T> m1 = gh.rowwise().mean();
                      Matrix<T> m2 = gh.cwiseProduct(xhat).rowwise().mean();
                      Matrix<T> gx = ((gh.array().colwise() - m1.col(0).array()) -
                                      xhat.array().colwise() * m2.col(0).array())
                                         .colwise() *
                                     inv.col(0).array();
                      tp.accumulate(ix, gx);
                    }
                    (void)c;
                  });
}

/// im2col for 1-D convolution over rows (time). Input T x C, output
/// T_out x (kernel * C) where T_out = ceil(T / stride) and the receptive field
/// is centred ("same" padding).
template <typename T>
Var<T> unfold(const Var<T>& x, int kernel, int stride = 1, int dilation = 1) {
  detail::require(kernel >= 1 && stride >= 1 && dilation >= 1, "unfold: bad geometry");
  const Eigen::Index len = x.rows(), ch = x.cols();
  const Eigen::Index out_len = (len + stride - 1) / stride;
  const int pad = dilation * (kernel - 1) / 2;
  Matrix<T> out = Matrix<T>::Zero(out_len, kernel * ch);
  for (Eigen::Index o = 0; o < out_len; ++o) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = o * stride + k * dilation - pad;
      if (src < 0 || src >= len) continue;
      out.row(o).segment(k * ch, ch) = x.value().row(src);
    }
  }
  Tape<T>& t = detail::tape_of(x);
  const int ix = x.id();
  return t.record(std::move(out), t.requires_grad(ix),
                  [ix, kernel, stride, dilation, pad, len, ch, out_len](Tape<T>& tp, int self) {
                    Matrix<T>& gx = tp.grad_buffer(ix);
                    const Matrix<T>& g = tp.grad(self);
                    for (Eigen::Index o = 0; o < out_len; ++o) {
                      for (int k = 0; k < kernel; ++k) {
                        const Eigen::Index src = o * stride + k * dilation - pad;
                        if (src < 0 || src >= len) continue;
                        gx.row(src) += g.row(o).segment(k * ch, ch);
                      }
                    }
                  });
}

/// Depthwise 1-D convolution with "same" padding. x: T x C, w: kernel x C.
template <typename T>
Var<T> depthwise_conv1d(const Var<T>& x, const Var<T>& w) {
  const Eigen::Index len = x.rows(), ch = x.cols();
  const int kernel = static_cast<int>(w.rows());
  detail::require(w.cols() == ch, "depthwise_conv1d: channel mismatch");
  const int pad = (kernel - 1) / 2;
  Matrix<T> out = Matrix<T>::Zero(len, ch);
  for (Eigen::Index t0 = 0; t0 < len; ++t0) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = t0 + k - pad;
      if (src < 0 || src >= len) continue;
      out.row(t0) += x.value().row(src).cwiseProduct(w.value().row(k));
    }
  }
  Tape<T>& t = detail::tape_of(x);
  const int ix = x.id(), iw = w.id();
  return t.record(std::move(out), detail::any_grad({x, w}), [ix, iw, len, kernel, pad](Tape<T>& tp, int self) {
    const Matrix<T>& g = tp.grad(self);
    const bool gx_on = tp.requires_grad(ix), gw_on = tp.requires_grad(iw);
    Matrix<T>* gx = gx_on ? &tp.grad_buffer(ix) : nullptr;
    Matrix<T>* gw = gw_on ? &tp.grad_buffer(iw) : nullptr;
    for (Eigen::Index t0 = 0; t0 < len; ++t0) {
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index src = t0 + k - pad;
        if (src < 0 || src >= len) continue;
        if (gx) gx->row(src) += g.row(t0).cwiseProduct(tp.value(iw).row(k));
        if (gw) gw->row(k) += g.row(t0).cwiseProduct(tp.value(ix).row(src));
      }
    }
  });
}

/// Single-direction LSTM over the rows of x (T x D). Gate layout in the
/// 4H-wide weights is [input, forget, cell, output]. Returns T x H hidden
/// states in input order (the recurrence runs backwards when `reverse`).
template <typename T>
Var<T> lstm(const Var<T>& x, const Var<T>& w_in, const Var<T>& w_rec, const Var<T>& bias, bool reverse) {
  const Eigen::Index len = x.rows();
  const Eigen::Index hid = w_rec.rows();
  detail::require(w_in.rows() == x.cols() && w_in.cols() == 4 * hid, "lstm: input weight shape");
  detail::require(w_rec.cols() == 4 * hid && bias.cols() == 4 * hid, "lstm: recurrent weight shape");
  Matrix<T> pre = (x.value() * w_in.value()).rowwise() + bias.value().row(0);
  Matrix<T> gates(len, 4 * hid);  // post-activation
  Matrix<T> cells(len, hid);
  Matrix<T> hs(len, hid);
  Matrix<T> h = Matrix<T>::Zero(1, hid), c = Matrix<T>::Zero(1, hid);
  for (Eigen::Index s = 0; s < len; ++s) {
    const Eigen::Index t0 = reverse ? len - 1 - s : s;
    Matrix<T> z = pre.row(t0) + h * w_rec.value();
    auto sig = [](T v) { return T(1) / (T(1) + std::exp(-v)); };
    for (Eigen::Index j = 0; j < hid; ++j) {
      gates(t0, j) = sig(z(0, j));
      gates(t0, hid + j) = sig(z(0, hid + j));
      gates(t0, 2 * hid + j) = std::tanh(z(0, 2 * hid + j));
      gates(t0, 3 * hid + j) = sig(z(0, 3 * hid + j));
      c(0, j) = gates(t0, hid + j) * c(0, j) + gates(t0, j) * gates(t0, 2 * hid + j);
      h(0, j) = gates(t0, 3 * hid + j) * std::tanh(c(0, j));
    }
    cells.row(t0) = c;
    hs.row(t0) = h;
  }
  Tape<T>& t = detail::tape_of(x);
  const int ix = x.id(), iwi = w_in.id(), iwr = w_rec.id(), ib = bias.id();
  return t.record(
      hs, detail::any_grad({x, w_in, w_rec, bias}),
      [ix, iwi, iwr, ib, gates, cells, hs, len, hid, reverse](Tape<T>& tp, int self) {
        const Matrix<T>& g = tp.grad(self);
        Matrix<T> dpre(len, 4 * hid);
        Matrix<T> dh_next = Matrix<T>::Zero(1, hid), dc_next = Matrix<T>::Zero(1, hid);
        const Matrix<T>& wr = tp.value(iwr);
        Matrix<T> gwr = Matrix<T>::Zero(hid, 4 * hid);
        for (Eigen::Index s = len - 1; s >= 0; --s) {
          const Eigen::Index t0 = reverse ? len - 1 - s : s;
          const Eigen::Index tprev = reverse ? t0 + 1 : t0 - 1;
          const bool has_prev = s > 0;
          Matrix<T> dh = g.row(t0) + dh_next;
          Matrix<T> dz(1, 4 * hid);
          Matrix<T> dc(1, hid);
          for (Eigen::Index j = 0; j < hid; ++j) {
            const T ig = gates(t0, j), fg = gates(t0, hid + j), cg = gates(t0, 2 * hid + j),
                    og = gates(t0, 3 * hid + j);
            const T tc = std::tanh(cells(t0, j));
            const T cprev = has_prev ? cells(tprev, j) : T(0);
            dc(0, j) = dh(0, j) * og * (T(1) - tc * tc) + dc_next(0, j);
            dz(0, j) = dc(0, j) * cg * ig * (T(1) - ig);
            dz(0, hid + j) = dc(0, j) * cprev * fg * (T(1) - fg);
            dz(0, 2 * hid + j) = dc(0, j) * ig * (T(1) - cg * cg);
            dz(0, 3 * hid + j) = dh(0, j) * tc * og * (T(1) - og);
            dc_next(0, j) = dc(0, j) * fg;
          }
          dpre.row(t0) = dz;
          if (has_prev) {
            gwr.noalias() += hs.row(tprev).transpose() * dz;
            dh_next = dz * wr.transpose();
          } else {
            dh_next.setZero();
          }
        }
        if (tp.requires_grad(iwr)) tp.accumulate(iwr, gwr);
        if (tp.requires_grad(ib)) tp.accumulate(ib, dpre.colwise().sum());
        if (tp.requires_grad(iwi)) tp.accumulate(iwi, tp.value(ix).transpose() * dpre);
        if (tp.requires_grad(ix)) tp.accumulate(ix, dpre * tp.value(iwi).transpose());
      });
}

/// Mean binary cross-entropy of sigmoid(logits) against targets in [0,1].
template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Matrix<T>& targets) {
  detail::require(logits.rows() == targets.rows() && logits.cols() == targets.cols(), "bce: shape mismatch");
  detail::require(logits.value().size() > 0, "bce: empty input");
  const T n = static_cast<T>(targets.size());
  const Matrix<T>& x = logits.value();
  // max(x,0) - x*y + log(1 + exp(-|x|))
  T total = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const T xi = x.data()[i], yi = targets.data()[i];
    total += std::max(xi, T(0)) - xi * yi + std::log1p(std::exp(-std::abs(xi)));
  }
  Tape<T>& t = detail::tape_of(logits);
  const int il = logits.id();
  return t.record(Matrix<T>::Constant(1, 1, total / n), t.requires_grad(il), [il, targets, n](Tape<T>& tp, int self) {
    const Matrix<T>& xv = tp.value(il);
    Matrix<T> p = (T(1) + (-xv.array()).exp()).inverse();
    tp.accumulate(il, (p - targets) * (tp.grad(self)(0, 0) / n));
  });
}

/// Op with a caller-supplied backward. `backward` receives the output
/// gradient and must return one gradient per input (empty matrices skip).
template <typename T>
Var<T> custom(std::span<const Var<T>> inputs, Matrix<T> value,
              std::function<std::vector<Matrix<T>>(const Matrix<T>& grad_out)> backward) {
  detail::require(!inputs.empty(), "custom: no inputs");
  std::vector<int> ids;
  bool rg = false;
  for (const auto& v : inputs) {
    ids.push_back(v.id());
    rg = rg || v.tape()->requires_grad(v.id());
  }
  Tape<T>& t = *inputs[0].tape();
  return t.record(std::move(value), rg, [ids, bw = std::move(backward)](Tape<T>& tp, int self) {
    std::vector<Matrix<T>> gs = bw(tp.grad(self));
    for (size_t i = 0; i < ids.size() && i < gs.size(); ++i) {
      if (gs[i].size() > 0 && tp.requires_grad(ids[i])) tp.accumulate(ids[i], gs[i]);
    }
  });
}

}  // namespace voicectl::ag
