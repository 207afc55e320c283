#include "voicectl/eval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "voicectl/core/errors.hpp"
#include "voicectl/signal/f0.hpp"

namespace voicectl {

double mean_f0(const Waveform& w) {
  validate(w);
  const F0Track t = estimate_f0(w);
  double sum = 0.0;
  long n = 0;
  for (size_t i = 0; i < t.size(); ++i) {
    if (!t.voiced[i]) continue;
    sum += t.f0_hz[i];
    ++n;
  }
  if (n == 0) throw NoVoicedFrames();
  return sum / static_cast<double>(n);
}

std::pair<double, double> active_region(const Waveform& w, double gate_db) {
  validate(w);
  const int block = hop_samples(w.sample_rate, 0.01);
  std::vector<double> energy;
  for (size_t s = 0; s < w.size(); s += static_cast<size_t>(block)) {
    const size_t e = std::min(w.size(), s + static_cast<size_t>(block));
    double acc = 0.0;
    for (size_t i = s; i < e; ++i) acc += static_cast<double>(w.samples[i]) * w.samples[i];
    energy.push_back(acc / static_cast<double>(e - s));
  }
  const double peak = energy.empty() ? 0.0 : *std::max_element(energy.begin(), energy.end());
  if (peak <= 0.0) return {0.0, 0.0};
  const double threshold = peak * std::pow(10.0, gate_db / 10.0);
  size_t first = energy.size(), last = 0;
  for (size_t i = 0; i < energy.size(); ++i) {
    if (energy[i] < threshold) continue;
    first = std::min(first, i);
    last = i;
  }
  const double sec = static_cast<double>(block) / w.sample_rate;
  const double end = std::min(static_cast<double>(last + 1) * sec, w.duration_seconds());
  return {static_cast<double>(first) * sec, end};
}

double speaking_speed(int unit_count, const Waveform& w, double gate_db) {
  if (unit_count <= 0) throw InvalidInput("speaking_speed: unit count must be positive");
  const auto [start, end] = active_region(w, gate_db);
  if (end - start <= 0.0) throw InvalidInput("speaking_speed: no active audio");
  return unit_count / (end - start);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidInput("pearson: length mismatch");
  if (x.size() < 2) throw InvalidInput("pearson: need at least two points");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw UndefinedCorrelation("levels are constant");
  if (syy == 0.0) throw UndefinedCorrelation("measured values are constant");
  return sxy / std::sqrt(sxx * syy);
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw InvalidInput("cosine: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw InvalidInput("cosine: zero vector");
  return a.dot(b) / (na * nb);
}

double mean_cosine(const Eigen::VectorXd& normal, const std::vector<Eigen::VectorXd>& others) {
  if (others.empty()) throw InvalidInput("speaker similarity needs at least one comparison sample");
  double s = 0.0;
  for (const auto& o : others) s += cosine_similarity(normal, o);
  return s / static_cast<double>(others.size());
}

}  // namespace voicectl
