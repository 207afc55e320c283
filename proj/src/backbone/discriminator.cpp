#include "voicectl/backbone/discriminator.hpp"

namespace voicectl {

namespace {

ag::Var<float> average_pool4(const ag::Var<float>& x) {
  ag::Tape<float>& t = *x.tape();
  return ag::matmul(ag::unfold(x, 4, 4), t.constant(ag::Mat::Constant(4, 1, 0.25f)));
}

}  // namespace

Discriminator::Discriminator(ag::ParamStore<float>& store, std::mt19937_64& rng) {
  for (int s = 0; s < 2; ++s) {
    const std::string p = "disc.s" + std::to_string(s);
    scales_.push_back({ag::Conv1d<float>(store, p + ".c1", 1, 16, 15, rng, 4),
                       ag::Conv1d<float>(store, p + ".c2", 16, 32, 9, rng, 4),
                       ag::Conv1d<float>(store, p + ".c3", 32, 1, 3, rng)});
  }
}

std::vector<ag::Var<float>> Discriminator::operator()(const ag::Var<float>& wave) const {
  std::vector<ag::Var<float>> out;
  ag::Var<float> x = wave;
  for (size_t s = 0; s < scales_.size(); ++s) {
    if (s > 0) x = average_pool4(x);
    const auto& sc = scales_[s];
    out.push_back(sc.c3(ag::leaky_relu(sc.c2(ag::leaky_relu(sc.c1(x))))));
  }
  return out;
}

}  // namespace voicectl
