#include <doctest.h>

#include "bijou/errors.hpp"
#include "bijou/prenet.hpp"
#include "support.hpp"

using namespace bijou;

namespace {

PrenetConfig small_text() {
  PrenetConfig c;
  c.modality = Modality::text;
  c.d_model = 4;
  c.vocab_size = 10;
  c.max_positions = 8;
  return c;
}

PrenetConfig small_speech() {
  PrenetConfig c;
  c.modality = Modality::speech;
  c.d_model = 4;
  c.conv_channels = 3;
  c.pos_conv_kernel = 3;
  c.pos_conv_groups = 2;
  return c;
}

// Independent oracle: fold the floor length formula through the ladder.
std::size_t ladder_frames(std::size_t n) {
  const std::size_t kernels[] = {10, 3, 3, 3, 3, 2, 2};
  const std::size_t strides[] = {5, 2, 2, 2, 2, 2, 2};
  for (int i = 0; i < 7; ++i) {
    if (n < kernels[i]) return 0;
    n = (n - kernels[i]) / strides[i] + 1;
  }
  return n;
}

void jitter(ParameterSet& p, Rng& rng, double s) {
  for (auto& e : p.entries()) {
    for (auto& v : e.tensor.mutable_data()) v += s * rng.normal();
  }
}

}  // namespace

TEST_CASE("text embedding examples") {
  Rng rng(1);
  ParameterSet p;
  const auto cfg = small_text();
  init_prenet(p, cfg, rng);
  for (auto& v : p.get("prenet.position_embedding").mutable_data()) v = 0.0;

  const std::vector<std::int32_t> one{3};
  const auto f = embed_text(p, cfg, one);
  CHECK(f.length() == 1);
  for (std::size_t j = 0; j < 4; ++j) CHECK(f.frames.at(0, j) == p.get("prenet.token_embedding").at(3, j));

  const std::vector<std::int32_t> seq{1, 5, 9, 5, 0};
  CHECK(embed_text(p, cfg, seq).length() == seq.size());

  // Permutation equivariance with the positional table zeroed.
  const std::vector<std::int32_t> perm{5, 0, 1, 9, 5};
  const std::size_t map[] = {1, 4, 0, 2, 3};  // perm[i] = seq[map[i]]
  const auto a = embed_text(p, cfg, seq).frames;
  const auto b = embed_text(p, cfg, perm).frames;
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(b.at(i, j) == a.at(map[i], j));
  }

  CHECK_THROWS_AS(embed_text(p, cfg, std::vector<std::int32_t>{10}), InputError);
  CHECK_THROWS_AS(embed_text(p, cfg, std::vector<std::int32_t>(9, 1)), InputError);
  CHECK(prenet_parameter_count(cfg) == p.numel());
}

TEST_CASE("text embedding gradient reaches only the rows used") {
  Rng rng(2);
  ParameterSet p;
  const auto cfg = small_text();
  init_prenet(p, cfg, rng);
  jitter(p, rng, 0.5);
  const std::vector<std::int32_t> seq{2, 7, 2, 4};
  auto loss = [&] { return testing::scalarize(embed_text(p, cfg, seq).frames); };
  CHECK(testing::gradcheck(loss, testing::tensors_of(p)) < 1e-4);

  p.zero_grad();
  loss().backward();
  const auto& emb = p.get("prenet.token_embedding");
  for (std::size_t row = 0; row < cfg.vocab_size; ++row) {
    bool used = row == 2 || row == 7 || row == 4;
    double mag = 0.0;
    for (std::size_t j = 0; j < 4; ++j) mag += std::abs(emb.grad()[row * 4 + j]);
    CHECK((mag > 0.0) == used);
  }
}

TEST_CASE("audio frame arithmetic") {
  CHECK(frames_for_samples(16000) == 49);
  CHECK(frames_for_samples(400) == 1);
  CHECK(frames_for_samples(399) == 0);
  CHECK(min_audio_samples() == 400);

  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t n = rng.below(200000);
    REQUIRE(frames_for_samples(n) == ladder_frames(n));
    if (frames_for_samples(n) > 0) CHECK(frames_for_samples(2 * n) + 1 >= 2 * frames_for_samples(n));
  }
}

TEST_CASE("featurize_audio shapes, errors and determinism") {
  Rng rng(4);
  ParameterSet p;
  const auto cfg = small_speech();
  init_prenet(p, cfg, rng);
  CHECK(prenet_parameter_count(cfg) == p.numel());

  std::vector<double> wave(16000);
  for (auto& s : wave) s = 0.3 * rng.normal();
  const auto f = featurize_audio(p, cfg, wave);
  CHECK(f.frames.shape() == Shape{49, 4});
  const auto g = featurize_audio(p, cfg, wave);
  for (std::size_t i = 0; i < f.frames.numel(); ++i) CHECK(f.frames.at(i) == g.frames.at(i));

  CHECK(featurize_audio(p, cfg, std::span(wave).first(400)).length() == 1);
  CHECK_THROWS_AS(featurize_audio(p, cfg, std::span(wave).first(399)), InputError);

  auto bad = cfg;
  bad.pos_conv_kernel = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("standardize gives zero mean and unit variance") {
  Rng rng(5);
  std::vector<double> w(1000);
  for (auto& s : w) s = 3.0 + 0.1 * rng.normal();
  const auto z = standardize(w);
  double mu = 0.0, var = 0.0;
  for (auto v : z) mu += v / 1000.0;
  for (auto v : z) var += (v - mu) * (v - mu) / 1000.0;
  CHECK(std::abs(mu) < 1e-12);
  CHECK(std::abs(var - 1.0) < 1e-9);
}

TEST_CASE("speech pre-net gradient matches finite differences") {
  Rng rng(6);
  ParameterSet p;
  const auto cfg = small_speech();
  init_prenet(p, cfg, rng);
  jitter(p, rng, 0.3);
  std::vector<double> wave(1100);
  for (auto& s : wave) s = rng.normal();
  auto loss = [&] { return testing::scalarize(featurize_audio(p, cfg, wave).frames); };
  CHECK(testing::gradcheck(loss, testing::tensors_of(p)) < 1e-4);
}
