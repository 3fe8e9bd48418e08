#include <doctest.h>

#include <fstream>
#include <map>

#include "bijou/config.hpp"
#include "bijou/errors.hpp"
#include "support.hpp"

using namespace bijou;

namespace {
double num(const TrainConfig& c, const std::string& key) { return std::stod(c.get(key)); }
}  // namespace

TEST_CASE("speech presets carry the published hyperparameters") {
  const auto base = TrainConfig::from_preset("speech-base");
  const auto large = TrainConfig::from_preset("speech-large");
  const std::map<std::string, std::pair<double, double>> table{
      {"batch.seconds", {62.5, 40}},     {"optim.lr_max", {7.5e-4, 4.0e-4}},
      {"optim.warmup_steps", {8000, 5000}}, {"optim.max_steps", {400000, 300000}},
      {"encoder.layerdrop", {0.05, 0.0}}, {"mask.clones", {8, 12}},
      {"ema.start", {0.999, 0.9997}},    {"ema.end", {0.99999, 1.0}},
      {"ema.anneal_steps", {75000, 300000}}, {"mask.length", {5, 5}},
      {"mask.ratio", {0.5, 0.55}},       {"mask.adjust", {0.05, 0.1}},
      {"distill.top_k", {8, 16}},        {"decoder.layers", {4, 4}},
      {"decoder.dim", {384, 768}},       {"decoder.groups", {16, 16}},
      {"decoder.kernel", {7, 7}},        {"optim.beta1", {0.9, 0.9}},
      {"optim.beta2", {0.98, 0.98}},     {"optim.weight_decay", {0.1, 0.1}},
      {"encoder.layers", {12, 24}},      {"encoder.d_model", {768, 1024}},
  };
  for (const auto& [key, want] : table) {
    CAPTURE(key);
    CHECK(num(base, key) == want.first);
    CHECK(num(large, key) == want.second);
  }
  CHECK(base.get("optim.clip_norm") == "none");
  CHECK(num(large, "optim.clip_norm") == 1.0);
  CHECK(base.get("modality") == "speech");
  CHECK(base.get("distill.mlm") == "false");
}

TEST_CASE("text preset carries the published hyperparameters") {
  const auto t = TrainConfig::from_preset("text-base-mlm");
  const std::map<std::string, double> table{
      {"batch.size", 32},         {"optim.lr_max", 5e-4},       {"optim.warmup_steps", 8000},
      {"optim.max_steps", 250000}, {"lambda.start", 20.0},       {"lambda.end", 1.0},
      {"lambda.steps", 250000},   {"optim.clip_norm", 1.0},     {"mask.clones", 8},
      {"ema.start", 0.9995},      {"ema.end", 0.99995},         {"ema.anneal_steps", 125000},
      {"mask.length", 3},         {"mask.ratio", 0.6},          {"mask.adjust", 0.0},
      {"distill.top_k", 12},      {"decoder.layers", 5},        {"decoder.dim", 768},
      {"decoder.groups", 1},      {"decoder.kernel", 9},        {"data.max_length", 512},
      {"encoder.layerdrop", 0.0},
  };
  for (const auto& [key, want] : table) {
    CAPTURE(key);
    CHECK(num(t, key) == want);
  }
  CHECK(t.get("distill.mlm") == "true");
  CHECK(t.get("modality") == "text");
}

TEST_CASE("configuration text round trips") {
  for (const auto& name : TrainConfig::preset_names()) {
    auto c = TrainConfig::from_preset(name);
    c.set("seed", "17");
    c.set("optim.lr_max", "0.00031415926535897931");
    const auto text = c.to_text();
    const auto back = TrainConfig::parse(text);
    CHECK(back.to_text() == text);
    for (const auto& k : TrainConfig::keys()) {
      CAPTURE(k);
      CHECK(back.get(k) == c.get(k));
    }
  }
}

TEST_CASE("parsing rules and errors") {
  const auto c = TrainConfig::parse("# comment\npreset = text-base-mlm\n\noptim.max_steps = 10  # trailing\n"
                                    "optim.warmup_steps = 2\n");
  CHECK(c.optim.max_steps == 10);
  CHECK(c.model.mask.ratio == 0.6);

  TrainConfig x;
  CHECK_THROWS_AS(x.set("no.such.key", "1"), ConfigError);
  CHECK_THROWS_AS(x.set("optim.max_steps", "many"), ConfigError);
  CHECK_THROWS_AS(x.set("optim.max_steps", "-3"), ConfigError);
  CHECK_THROWS_AS(x.set("distill.mlm", "maybe"), ConfigError);
  CHECK_THROWS_AS(x.set("modality", "video"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("preset = nope\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("optim.max_steps 10\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_preset("speech-huge"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::load("/nonexistent/bijou.cfg"), DataError);

  auto bad = TrainConfig::from_preset("speech-base");
  bad.set("encoder.heads", "7");
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig::from_preset("speech-base");
  bad.set("distill.top_k", "13");
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  testing::TempDir dir("config");
  std::ofstream(dir / "a.cfg") << "preset = speech-large\nseed = 3\n";
  CHECK(TrainConfig::load(dir / "a.cfg").seed == 3);
}
