#include <doctest.h>

#include <cmath>

#include "bijou/encoder.hpp"
#include "bijou/errors.hpp"
#include "support.hpp"

using namespace bijou;
using testing::randn;

namespace {

EncoderConfig tiny(std::size_t layers = 2) {
  EncoderConfig c;
  c.layers = layers;
  c.heads = 2;
  c.d_model = 8;
  return c;
}

ParameterSet make(const EncoderConfig& cfg, std::uint64_t seed, double jitter = 0.0) {
  Rng rng(seed);
  ParameterSet p;
  init_encoder(p, cfg, rng);
  if (jitter > 0.0) {
    for (auto& e : p.entries()) {
      for (auto& v : e.tensor.mutable_data()) v += jitter * rng.normal();
    }
  }
  return p;
}

// Independent closed form: norms 4d, attention 4d² + 4d, feed-forward 2·d·ff + ff + d.
std::size_t count_oracle(std::size_t L, std::size_t d) {
  const std::size_t ff = 4 * d;
  return L * (4 * d + 4 * d * d + 4 * d + 2 * d * ff + ff + d) + 2 * d;
}

}  // namespace

TEST_CASE("parameter counts") {
  CHECK(encoder_parameter_count(EncoderConfig::base()) == count_oracle(12, 768));
  CHECK(encoder_parameter_count(EncoderConfig::base()) == 85056000);
  CHECK(encoder_parameter_count(EncoderConfig::large()) == count_oracle(24, 1024));
  const auto cfg = tiny();
  CHECK(make(cfg, 1).numel() == encoder_parameter_count(cfg));
}

TEST_CASE("shape contract and empty stack") {
  Rng rng(2);
  const auto x = randn({5, 8}, rng, 1.0, false);
  auto cfg = tiny();
  const auto p = make(cfg, 3);
  const auto out = encode(p, cfg, x, {.keep_layer_outputs = true});
  CHECK(out.output.shape() == Shape{5, 8});
  CHECK(out.layer_outputs.size() == 3);
  CHECK(out.layers_run == 2);

  auto empty = tiny(0);
  empty.final_norm = false;
  const auto id = encode(ParameterSet{}, empty, x);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(id.output.at(i) == x.at(i));

  CHECK_THROWS_AS(encode(p, cfg, randn({5, 6}, rng, 1.0, false)), DimensionError);
}

TEST_CASE("dropping every layer equals the empty stack") {
  Rng rng(4);
  const auto x = randn({5, 8}, rng, 1.0, false);
  auto cfg = tiny();
  cfg.layerdrop = 1.0 - 1e-12;
  cfg.final_norm = false;
  const auto p = make(cfg, 5);
  Rng drop_rng(6);
  const auto out = encode(p, cfg, x, {.rng = &drop_rng});
  CHECK(out.layers_run == 0);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(out.output.at(i) == x.at(i));
}

TEST_CASE("teacher mode records no graph and matches student mode") {
  Rng rng(7);
  const auto x = randn({6, 8}, rng);
  const auto cfg = tiny();
  const auto p = make(cfg, 8, 0.1);
  const auto before = graph_nodes_created();
  const auto t = encode(p, cfg, x, {.mode = EncodeMode::teacher});
  CHECK(graph_nodes_created() == before);
  CHECK_FALSE(t.output.has_node());
  const auto s = encode(p, cfg, x, {.mode = EncodeMode::student});
  CHECK(s.output.has_node());
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(s.output.at(i) == t.output.at(i));
}

TEST_CASE("self-attention matches a naive per-head oracle") {
  Rng rng(9);
  const auto cfg = tiny(1);
  const auto p = make(cfg, 10, 0.3);
  const auto x = randn({4, 8}, rng, 1.0, false);
  std::vector<Tensor> probs;
  const auto y = self_attention(p, "encoder.layers.0.attn.", x, 2, &probs);
  REQUIRE(probs.size() == 2);
  for (const auto& a : probs) {
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 4; ++c) s += a.at(r, c);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }

  const auto& W = p.get("encoder.layers.0.attn.qkv.weight");
  const auto& B = p.get("encoder.layers.0.attn.qkv.bias");
  const auto& Wo = p.get("encoder.layers.0.attn.out.weight");
  const auto& Bo = p.get("encoder.layers.0.attn.out.bias");
  auto proj = [&](std::size_t t, std::size_t col) {
    double acc = B.at(col);
    for (std::size_t i = 0; i < 8; ++i) acc += x.at(t, i) * W.at(i, col);
    return acc;
  };
  std::vector<double> concat(4 * 8, 0.0);
  for (std::size_t h = 0; h < 2; ++h) {
    for (std::size_t t = 0; t < 4; ++t) {
      std::vector<double> score(4);
      double mx = -1e300;
      for (std::size_t u = 0; u < 4; ++u) {
        double dot = 0.0;
        for (std::size_t j = 0; j < 4; ++j) dot += proj(t, h * 4 + j) * proj(u, 8 + h * 4 + j);
        score[u] = dot / 2.0;
        mx = std::max(mx, score[u]);
      }
      double z = 0.0;
      for (auto& s : score) z += (s = std::exp(s - mx));
      for (std::size_t j = 0; j < 4; ++j) {
        double acc = 0.0;
        for (std::size_t u = 0; u < 4; ++u) acc += score[u] / z * proj(u, 16 + h * 4 + j);
        concat[t * 8 + h * 4 + j] = acc;
      }
    }
  }
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t c = 0; c < 8; ++c) {
      double acc = Bo.at(c);
      for (std::size_t i = 0; i < 8; ++i) acc += concat[t * 8 + i] * Wo.at(i, c);
      CHECK(y.at(t, c) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("two-layer encoder gradient matches finite differences") {
  Rng rng(11);
  const auto cfg = tiny(2);
  auto p = make(cfg, 12, 0.2);
  auto x = randn({5, 8}, rng);
  auto inputs = testing::tensors_of(p);
  inputs.push_back(x);
  const double err =
      testing::gradcheck([&] { return testing::scalarize(encode(p, cfg, x).output); }, inputs);
  CHECK(err < 1e-3);
}

TEST_CASE("layerdrop draws are seeded") {
  auto cfg = tiny(12);
  cfg.layerdrop = 0.5;
  Rng a(13), b(13);
  CHECK(sample_layer_drops(cfg, a) == sample_layer_drops(cfg, b));
  Rng c(14);
  std::size_t dropped = 0;
  for (int i = 0; i < 200; ++i) {
    for (bool d : sample_layer_drops(cfg, c)) dropped += d;
  }
  CHECK(std::abs(static_cast<double>(dropped) / 2400.0 - 0.5) < 0.05);
}
