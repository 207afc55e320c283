#pragma once

#include <vector>

#include <Eigen/Core>

#include "voicectl/signal/waveform.hpp"

namespace voicectl {

/// Arithmetic mean of voiced-frame F0 in Hz. Throws NoVoicedFrames.
double mean_f0(const Waveform& w);

/// Active region: first to last 10 ms block whose energy is within
/// `gate_db` of the loudest block. Returns {start, end} in seconds.
std::pair<double, double> active_region(const Waveform& w, double gate_db = -40.0);

/// unit_count / active duration. Throws InvalidInput for a zero count or an
/// empty active region.
double speaking_speed(int unit_count, const Waveform& w, double gate_db = -40.0);

/// Pearson r. Throws InvalidInput on length mismatch or fewer than two
/// points, UndefinedCorrelation when either side is constant.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Mean cosine between `normal` and each of `others`.
double mean_cosine(const Eigen::VectorXd& normal, const std::vector<Eigen::VectorXd>& others);

}  // namespace voicectl
