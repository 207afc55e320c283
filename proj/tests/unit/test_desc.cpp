#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "support/gradcheck.hpp"
#include "voicectl/core/tensor_io.hpp"
#include "voicectl/desc/model.hpp"
#include "voicectl/eval/level_phrases.hpp"
#include "voicectl/pipeline/toy_corpus.hpp"

using namespace voicectl;
using testsupport::gradcheck;
using testsupport::MatD;
using testsupport::random_matrix;

namespace {

// Density summed term by term in long double, independent of the
// log-sum-exp path.
double brute_force_nll(const MixtureParams& p, const Eigen::RowVectorXd& x) {
  long double total = 0.0L;
  for (int k = 0; k < p.components(); ++k) {
    long double dens = p.weights(k);
    for (int d = 0; d < p.dim(); ++d) {
      const long double s = p.scales(k, d);
      const long double z = (x(d) - p.means(k, d)) / s;
      dens *= std::exp(-0.5L * z * z) / (s * std::sqrt(2.0L * std::numbers::pi_v<long double>));
    }
    total += dens;
  }
  return static_cast<double>(-std::log(total));
}

MixtureParams random_mixture(int k, int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0), s(0.3, 2.0), m(-1.5, 1.5);
  MixtureParams p;
  p.weights.resize(k);
  for (int i = 0; i < k; ++i) p.weights(i) = u(rng);
  p.weights /= p.weights.sum();
  p.means.resize(k, d);
  p.scales.resize(k, d);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < d; ++j) {
      p.means(i, j) = m(rng);
      p.scales(i, j) = s(rng);
    }
  }
  return p;
}

DescConfig small_config() {
  DescConfig c;
  c.mdn_hidden = 32;
  return c;
}

}  // namespace

TEST_CASE("description normalization folds case and whitespace") {
  CHECK(normalize_description("  A  Warm\tvoice \n") == "a warm voice");
  CHECK_THROWS_AS(normalize_description(" \t\n"), InvalidInput);
  CHECK_THROWS_AS(normalize_description(""), InvalidInput);
}

TEST_CASE("keyword backend channels") {
  KeywordTextBackend kw({"warm", "bright"});
  REQUIRE(kw.dim() == KeywordTextBackend::kFixedChannels + 2);
  const auto very = kw.features("A warm voice with very high pitch and normal speed.");
  const auto plain = kw.features("A warm voice with high pitch and normal speed.");
  Eigen::RowVectorXf diff = very - plain;
  CHECK(diff(2) == 1.0f);
  diff(2) = 0.0f;
  CHECK(diff.isZero());

  CHECK(plain(0) == 1.0f);
  CHECK(plain(1) == 1.0f);
  CHECK(plain(3) == 1.0f);
  CHECK(plain(4) == 0.0f);
  CHECK(plain(6) == 1.0f);
  CHECK(plain(7) == 1.0f);
  CHECK(plain(8) == 0.0f);

  const auto low = kw.features("a bright voice with very low pitch and very slow speed");
  CHECK(low(1) == -1.0f);
  CHECK(low(4) == -1.0f);
  CHECK(low(5) == 1.0f);
  CHECK(low(8) == 1.0f);

  CHECK(kw.features("A WARM Voice WITH High PITCH") == kw.features("a warm voice with high pitch"));
  CHECK_THROWS_AS(kw.features("   "), InvalidInput);
}

TEST_CASE("mdn_nll of a unit Gaussian at its mean") {
  for (int d : {1, 3, 8}) {
    MixtureParams p;
    p.weights = Eigen::VectorXd::Ones(1);
    p.means = Eigen::MatrixXd::Constant(1, d, 0.7);
    p.scales = Eigen::MatrixXd::Ones(1, d);
    const Eigen::RowVectorXd x = Eigen::RowVectorXd::Constant(d, 0.7);
    const double expected = 0.5 * d * std::log(2.0 * std::numbers::pi);
    CHECK(mdn_nll(p, x) == Catch::Approx(expected).epsilon(1e-12));

    ag::Tape<double> t;
    MixtureVars<double> v{t.constant(MatD::Zero(1, 1)), t.constant(p.means), t.constant(p.scales)};
    CHECK(mdn_nll<double>(v, x).scalar() == Catch::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("mdn_nll matches the brute-force density on random instances") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> kd(1, 10), dd(1, 8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = kd(rng), d = dd(rng);
    const MixtureParams p = random_mixture(k, d, rng);
    Eigen::RowVectorXd x(d);
    for (int j = 0; j < d; ++j) x(j) = n(rng);
    const double oracle = brute_force_nll(p, x);
    INFO("K=" << k << " D=" << d);
    CHECK(std::abs(mdn_nll(p, x) - oracle) <= 1e-6 * std::abs(oracle) + 1e-12);

    ag::Tape<double> t;
    MixtureVars<double> v{t.constant(p.weights.transpose().array().log().matrix()), t.constant(p.means),
                          t.constant(p.scales)};
    CHECK(std::abs(mdn_nll<double>(v, x).scalar() - oracle) <= 1e-6 * std::abs(oracle) + 1e-12);
  }
  MixtureParams p = random_mixture(3, 4, rng);
  CHECK_THROWS_AS(mdn_nll(p, Eigen::RowVectorXd::Zero(5)), InvalidInput);
}

TEST_CASE("mdn_nll gradients match finite differences") {
  std::mt19937_64 rng(9);
  const int k = 3, d = 4;
  const MatD target = random_matrix(1, d, rng);
  const MatD logits = random_matrix(1, k, rng), means = random_matrix(k, d, rng);
  const MatD scales = (random_matrix(k, d, rng).array().abs() + 0.4).matrix();
  const double err = gradcheck(
      [&](ag::Tape<double>&, const std::vector<ag::Var<double>>& v) {
        return mdn_nll<double>(MixtureVars<double>{v[0], v[1], v[2]}, target);
      },
      {logits, means, scales});
  CHECK(err < 1e-4);

  // Through the raw-output split, including the softplus-plus-floor scales.
  const MatD raw = random_matrix(1, k * (1 + 2 * d), rng);
  CHECK(gradcheck([&](ag::Tape<double>&,
                      const std::vector<ag::Var<double>>& v) { return mdn_nll<double>(mixture_from_raw(v[0], k, d), target); },
                  {raw}) < 1e-4);
}

TEST_CASE("mixture parameters stay valid for extreme head inputs") {
  std::mt19937_64 rng(4);
  ag::ParamStore<float> store;
  MdnHead head(store, "mdn", 5, 16, kMixtureComponents, 6, rng);
  REQUIRE(head.components == 10);
  for (float v : {-1e6f, -1e3f, 0.0f, 1e3f, 1e6f}) {
    ag::Tape<float> t;
    Eigen::RowVectorXf h = Eigen::RowVectorXf::Constant(5, v);
    h(1) = -v;
    const MixtureParams p = to_mixture_params(head(t.constant(h)));
    INFO("input " << v);
    CHECK(std::abs(p.weights.sum() - 1.0) < 1e-6);
    CHECK((p.weights.array() >= 0.0).all());
    CHECK(p.scales.minCoeff() >= kScaleFloor);
    CHECK(p.means.allFinite());
    CHECK(p.scales.allFinite());
  }
  // Raw outputs far outside the usual range.
  ag::Tape<float> t;
  ag::Mat raw(1, 3 * (1 + 2 * 2));
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw(0, i) = i % 2 ? 1e6f : -1e6f;
  const MixtureParams p = to_mixture_params(mixture_from_raw(t.constant(raw), 3, 2));
  CHECK(std::abs(p.weights.sum() - 1.0) < 1e-6);
  CHECK(p.scales.minCoeff() >= kScaleFloor);
  CHECK(p.scales.allFinite());
}

TEST_CASE("mdn_sample mode and temperature contracts") {
  MixtureParams p;
  p.weights = Eigen::Vector2d(0.9, 0.1);
  p.means = (Eigen::MatrixXd(2, 2) << 1.0, 2.0, -3.0, 4.0).finished();
  p.scales = Eigen::MatrixXd::Constant(2, 2, 0.5);
  CHECK(mdn_sample(p, SampleStrategy::mode(), 1) == p.means.row(0));

  MixtureParams tie = p;
  tie.weights = Eigen::Vector2d(0.5, 0.5);
  CHECK(mdn_sample(tie, SampleStrategy::mode(), 1) == tie.means.row(0));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Eigen::RowVectorXd x = mdn_sample(p, SampleStrategy::sample(0.0), seed);
    CHECK((x == p.means.row(0) || x == p.means.row(1)));
    CHECK(mdn_sample(p, SampleStrategy::sample(1.0), seed) == mdn_sample(p, SampleStrategy::sample(1.0), seed));
  }
}

TEST_CASE("mdn_sample Monte Carlo mean matches the closed form") {
  MixtureParams p;
  p.weights = Eigen::Vector2d(0.3, 0.7);
  p.means = (Eigen::MatrixXd(2, 1) << -2.0, 1.0).finished();
  p.scales = (Eigen::MatrixXd(2, 1) << 0.5, 1.5).finished();
  const double mean = 0.3 * -2.0 + 0.7 * 1.0;
  const double second = 0.3 * (0.25 + 4.0) + 0.7 * (2.25 + 1.0);
  const double sigma = std::sqrt(second - mean * mean);
  const int n = 100000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += mdn_sample(p, SampleStrategy::sample(1.0), static_cast<std::uint64_t>(i))(0);
  CHECK(std::abs(acc / n - mean) < 3.0 * sigma / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("mode sampling ignores positive rescaling of the weight logits") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const MatD raw = random_matrix(1, 4 * (1 + 2 * 3), rng);
    ag::Tape<float> t;
    const auto base = to_mixture_params(mixture_from_raw(t.constant(raw.cast<float>()), 4, 3));
    MatD scaled = raw;
    const double c = std::uniform_real_distribution<double>(0.1, 10.0)(rng);
    scaled.leftCols(4) *= c;
    const auto other = to_mixture_params(mixture_from_raw(t.constant(scaled.cast<float>()), 4, 3));
    CHECK(mdn_sample(base, SampleStrategy::mode(), 0) == mdn_sample(other, SampleStrategy::mode(), 0));
  }
}

TEST_CASE("description model shapes and determinism") {
  DescModel m(DescConfig{});
  CHECK(m.head(0).components == 10);
  const auto a = m.predict_embeddings("A warm voice with high pitch and fast speed.", SampleStrategy::mode(), 5);
  const auto b = m.predict_embeddings("a warm  voice with high pitch and fast speed.", SampleStrategy::mode(), 99);
  for (size_t k = 0; k < 4; ++k) {
    CHECK(a[k].size() == 192);
    CHECK(a[k].allFinite());
    CHECK(a[k] == b[k]);
  }
  CHECK(m.encode_description("A warm voice") == m.encode_description("a WARM voice"));
  CHECK_THROWS_AS(m.encode_description("  "), InvalidInput);
  const auto p = m.mdn_forward(m.encode_description("a warm voice"), 3);
  CHECK(std::abs(p.weights.sum() - 1.0) < 1e-6);
  CHECK(p.scales.minCoeff() >= kScaleFloor);
  CHECK_THROWS_AS(DescModel(DescConfig{.text_backend = "nope"}), ConfigError);
}

namespace {

// Twenty labelled toy pairs whose targets depend on the levels and speaker.
std::vector<DescPair> toy_pairs() {
  std::vector<DescPair> pairs;
  const auto& ph = default_level_phrases();
  std::mt19937_64 rng(3);
  std::normal_distribution<float> noise(0.0f, 0.05f);
  for (int i = 0; i < 20; ++i) {
    const int spk = i % 4, p = i % 5 + 1, s = (i / 5) % 5 + 1;
    DescPair pair;
    pair.text = ph.describe(toy_speaker_adjective(spk), p, s);
    for (size_t k = 0; k < 4; ++k) {
      Eigen::RowVectorXf v(192);
      for (int j = 0; j < 192; ++j) {
        const float base = k == 0 ? 0.3f * static_cast<float>(spk) : (k == 3 ? 0.2f * p : 0.15f * s);
        v(j) = base * std::sin(0.1f * static_cast<float>(j + 1)) + noise(rng);
      }
      pair.target[k] = v;
    }
    pairs.push_back(pair);
  }
  return pairs;
}

std::vector<const DescPair*> batch_of(const std::vector<DescPair>& pairs, long step, int size) {
  std::vector<const DescPair*> b;
  for (int i = 0; i < size; ++i) b.push_back(&pairs[static_cast<size_t>((step * size + i) % 20)]);
  return b;
}

}  // namespace

TEST_CASE("overfitting twenty toy pairs lowers the total NLL") {
  const auto pairs = toy_pairs();
  DescModel m(small_config());
  DescTrainConfig tc;
  tc.batch_size = 4;
  DescOptimizer opt(m, tc, 5);
  std::vector<const DescPair*> all;
  for (const auto& p : pairs) all.push_back(&p);
  const double before = evaluate_desc(m, all).total;
  DescLossReport first, last;
  for (long step = 0; step < 300; ++step) {
    last = train_desc_step(m, batch_of(pairs, step, 4), opt, step);
    if (step == 0) first = last;
    for (double v : last.nll) REQUIRE(std::isfinite(v));
  }
  const double after = evaluate_desc(m, all).total;
  CHECK(last.total < first.total);
  CHECK(after < before);
}

TEST_CASE("zeroing one head's gradient leaves the other heads' updates unchanged") {
  const auto pairs = toy_pairs();
  DescModel full(small_config()), masked(small_config());
  DescTrainConfig tc;
  DescOptimizer o1(full, tc, 5), o2(masked, tc, 5);
  for (long step = 0; step < 3; ++step) {
    train_desc_step(full, batch_of(pairs, step, 4), o1, step);
    train_desc_step(masked, batch_of(pairs, step, 4), o2, step, {true, true, true, false});
  }
  for (auto* p : full.params().all()) {
    const auto* q = masked.params().find(p->name);
    REQUIRE(q != nullptr);
    INFO(p->name);
    if (p->name.starts_with("mdn.pitch.")) {
      CHECK(p->value != q->value);
    } else {
      CHECK(p->value == q->value);
    }
  }
}

TEST_CASE("language-model adapter trains only the last attention block") {
  const auto dir = std::filesystem::temp_directory_path() / "voicectl_mlm_cache";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(8);
  const auto pairs = toy_pairs();
  for (const auto& p : pairs) {
    const MatD tokens = random_matrix(6, 16, rng);
    write_tensors(CachedTokenFeatures::cache_path(dir, normalize_description(p.text)), {tokens.cast<float>()});
  }
  DescConfig c = small_config();
  c.text_backend = "mlm";
  c.mlm_cache_dir = dir.string();
  c.mlm_dim = 16;
  c.mlm_heads = 2;
  DescModel m(c);
  CHECK(m.pooled_dim() == 16);
  std::map<std::string, ag::Mat> before;
  for (auto* p : m.params().all()) before[p->name] = p->value;
  DescOptimizer opt(m, DescTrainConfig{}, 5);
  for (long step = 0; step < 2; ++step) train_desc_step(m, batch_of(pairs, step, 4), opt, step);
  for (auto* p : m.params().all()) {
    INFO(p->name);
    if (p->name.starts_with("text.ff") || p->name.starts_with("text.ln2")) {
      CHECK(p->frozen);
      CHECK(p->value == before[p->name]);
    }
    if (p->name == "text.att.q.w") CHECK(p->value != before[p->name]);
  }
  CHECK_THROWS_AS(m.encode_description("a description with no cached tokens"), EncoderUnavailable);
  std::filesystem::remove_all(dir);
}
