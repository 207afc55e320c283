#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "voicectl/autograd/tape.hpp"

namespace testsupport {

using voicectl::ag::Matrix;
using voicectl::ag::Tape;
using voicectl::ag::Var;
using MatD = Matrix<double>;

using ScalarFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

inline MatD random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

/// Largest relative error between the tape gradient and central differences,
/// measured per input as ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-10).
inline double gradcheck(const ScalarFn& f, std::vector<MatD> inputs, double h = 1e-6) {
  std::vector<MatD> analytic;
  {
    Tape<double> t;
    std::vector<Var<double>> vs;
    for (const auto& m : inputs) vs.push_back(t.leaf(m));
    Var<double> out = f(t, vs);
    t.backward(out);
    for (const auto& v : vs) {
      analytic.push_back(v.grad().size() == 0 ? MatD::Zero(v.rows(), v.cols()) : v.grad());
    }
  }
  auto eval = [&](const std::vector<MatD>& in) {
    Tape<double> t;
    std::vector<Var<double>> vs;
    for (const auto& m : in) vs.push_back(t.constant(m));
    return f(t, vs).scalar();
  };
  double worst = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    MatD numeric(inputs[k].rows(), inputs[k].cols());
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double keep = inputs[k].data()[i];
      inputs[k].data()[i] = keep + h;
      const double up = eval(inputs);
      inputs[k].data()[i] = keep - h;
      const double down = eval(inputs);
      inputs[k].data()[i] = keep;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    const double denom = std::max({analytic[k].norm(), numeric.norm(), 1e-10});
    worst = std::max(worst, (analytic[k] - numeric).norm() / denom);
  }
  return worst;
}

}  // namespace testsupport
