#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <deque>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace voicectl::ag {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mat = Matrix<float>;

template <typename T>
class Tape;

/// A trainable tensor. Gradients accumulate into `grad` across backward passes
/// until `zero_grad` is called.
template <typename T>
struct Parameter {
  Parameter(std::string n, Matrix<T> v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<T>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }

  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  bool frozen = false;
};

/// Handle to a node on a tape. Cheap to copy.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  const Matrix<T>& value() const { return tape_->value(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  T scalar() const { return value()(0, 0); }

  /// Gradient after Tape::backward. Zero-sized if the node does not need one.
  const Matrix<T>& grad() const { return tape_->grad(id_); }

  Tape<T>* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode recording of a computation. One tape per forward pass; it is
/// not shared between threads.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> v) { return push(std::move(v), nullptr, false, nullptr, {}); }

  /// Input that receives a gradient but is not backed by a Parameter.
  Var<T> leaf(Matrix<T> v) { return push(std::move(v), nullptr, true, nullptr, {}); }

  Var<T> param(Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var<T>(this, it->second);
    Var<T> v = push(Matrix<T>(), &p.value, !p.frozen, &p, {});
    param_nodes_.emplace(&p, v.id());
    return v;
  }

  /// Records an op output. `backward` is called with the output node id once
  /// its gradient is complete.
  Var<T> record(Matrix<T> value, bool requires_grad, Backward backward) {
    return push(std::move(value), nullptr, requires_grad, nullptr, std::move(backward));
  }

  const Matrix<T>& value(int id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.ref ? *n.ref : n.value;
  }

  const Matrix<T>& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }

  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

  /// Adds `g` into the gradient buffer of node `id` (no-op for constants).
  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      const Matrix<T>& v = n.ref ? *n.ref : n.value;
      n.grad = Matrix<T>::Zero(v.rows(), v.cols());
    }
    n.grad += g;
  }

  /// Mutable gradient buffer, allocated on demand. Only valid for nodes that
  /// require grad.
  Matrix<T>& grad_buffer(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.size() == 0) {
      const Matrix<T>& v = n.ref ? *n.ref : n.value;
      n.grad = Matrix<T>::Zero(v.rows(), v.cols());
    }
    return n.grad;
  }

  /// Backpropagates from a 1x1 node. Parameter gradients are added to
  /// Parameter::grad.
  void backward(const Var<T>& root, T seed = T(1)) {
    if (root.rows() != 1 || root.cols() != 1) {
      throw std::invalid_argument("backward root must be a scalar");
    }
    Node& r = nodes_[static_cast<size_t>(root.id())];
    if (!r.requires_grad) return;
    r.grad = Matrix<T>::Constant(1, 1, seed);
    for (int i = root.id(); i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    const Matrix<T>* ref = nullptr;
    Matrix<T> grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    Backward backward;
  };

  Var<T> push(Matrix<T> value, const Matrix<T>* ref, bool requires_grad, Parameter<T>* p,
              Backward backward) {
    Node n;
    n.value = std::move(value);
    n.ref = ref;
    n.requires_grad = requires_grad;
    n.param = p;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, int> param_nodes_;
};

/// Owns named parameters in creation order.
template <typename T>
class ParamStore {
 public:
  Parameter<T>& create(const std::string& name, Matrix<T> init) {
    if (index_.count(name) != 0) throw std::invalid_argument("duplicate parameter: " + name);
    params_.push_back(std::make_unique<Parameter<T>>(name, std::move(init)));
    index_.emplace(name, params_.size() - 1);
    return *params_.back();
  }

  Parameter<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::vector<Parameter<T>*> all() {
    std::vector<Parameter<T>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<const Parameter<T>*> all() const {
    std::vector<const Parameter<T>*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }

  /// Parameters whose name starts with `prefix`.
  std::vector<Parameter<T>*> with_prefix(const std::string& prefix) {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) {
      if (p->name.compare(0, prefix.size(), prefix) == 0) out.push_back(p.get());
    }
    return out;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  size_t size() const { return params_.size(); }

  size_t count() const {
    size_t n = 0;
    for (const auto& p : params_) n += static_cast<size_t>(p->value.size());
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace voicectl::ag
