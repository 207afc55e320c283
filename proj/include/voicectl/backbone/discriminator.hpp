#pragma once

#include <random>
#include <vector>

#include "voicectl/autograd/nn.hpp"

namespace voicectl {

/// Small multi-scale waveform discriminator (raw and 4x average-pooled).
/// Parameters are named "disc.*".
class Discriminator {
 public:
  Discriminator(ag::ParamStore<float>& store, std::mt19937_64& rng);
  /// Per-scale score columns for an (N x 1) waveform.
  std::vector<ag::Var<float>> operator()(const ag::Var<float>& wave) const;

 private:
  struct Scale {
    ag::Conv1d<float> c1, c2, c3;
  };
  std::vector<Scale> scales_;
};

}  // namespace voicectl
