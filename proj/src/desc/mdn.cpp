#include "voicectl/desc/mdn.hpp"

#include <random>

#include "voicectl/core/rng.hpp"

namespace voicectl {

double mdn_nll(const MixtureParams& p, const Eigen::RowVectorXd& target) {
  if (target.size() != p.dim() || p.scales.rows() != p.components() || p.scales.cols() != p.dim() ||
      p.means.rows() != p.components()) {
    throw InvalidInput("mdn_nll: target dimension does not match the mixture");
  }
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  Eigen::VectorXd terms(p.components());
  for (int k = 0; k < p.components(); ++k) {
    double lp = std::log(p.weights(k));
    for (int d = 0; d < p.dim(); ++d) {
      const double z = (target(d) - p.means(k, d)) / p.scales(k, d);
      lp -= std::log(p.scales(k, d)) + half_log_2pi + 0.5 * z * z;
    }
    terms(k) = lp;
  }
  const double top = terms.maxCoeff();
  return -(top + std::log((terms.array() - top).exp().sum()));
}

MixtureParams to_mixture_params(const MixtureVars<float>& m) {
  MixtureParams p;
  Eigen::RowVectorXd logits = m.logits.value().cast<double>();
  logits.array() -= logits.maxCoeff();
  Eigen::RowVectorXd w = logits.array().exp();
  p.weights = (w / w.sum()).transpose();
  p.means = m.means.value().cast<double>();
  p.scales = m.scales.value().cast<double>();
  return p;
}

Eigen::RowVectorXd mdn_sample(const MixtureParams& p, const SampleStrategy& strategy, std::uint64_t seed) {
  if (p.components() < 1) throw InvalidInput("mdn_sample: empty mixture");
  if (strategy.kind == SampleStrategy::Kind::kMode) {
    int best = 0;
    for (int k = 1; k < p.components(); ++k) {
      if (p.weights(k) > p.weights(best)) best = k;
    }
    return p.means.row(best);
  }
  auto rng = SeedTree(seed).engine();
  std::discrete_distribution<int> pick(p.weights.data(), p.weights.data() + p.weights.size());
  const int k = pick(rng);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::RowVectorXd x = p.means.row(k);
  for (int d = 0; d < p.dim(); ++d) x(d) += strategy.temperature * p.scales(k, d) * n(rng);
  return x;
}

MdnHead::MdnHead(ag::ParamStore<float>& store, const std::string& name, int in, int hidden_dim, int k, int d,
                 std::mt19937_64& rng)
    : components(k), dim(d) {
  hidden = ag::Linear<float>(store, name + ".hidden", in, hidden_dim, rng);
  out = ag::Linear<float>(store, name + ".out", hidden_dim, k * (1 + 2 * d), rng, 0.5f);
}

MixtureVars<float> MdnHead::operator()(const ag::Var<float>& h) const {
  return mixture_from_raw<float>(out(ag::tanh(hidden(h))), components, dim);
}

}  // namespace voicectl
