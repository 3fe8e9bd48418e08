#include "bijou/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "bijou/errors.hpp"

namespace bijou::synth {

namespace {

constexpr std::int32_t kOrdinary = static_cast<std::int32_t>(kToyVocab) - kFirstSymbol;

std::int32_t group_start(std::size_t depth) { return kFirstSymbol + static_cast<std::int32_t>(depth * kGroupSize); }

std::int32_t successor(std::int32_t sym, std::size_t depth) {
  const auto base = group_start(depth);
  const auto idx = sym - base;
  return base + static_cast<std::int32_t>((idx * 5 + 3) % static_cast<std::int32_t>(kGroupSize));
}

bool in_group(std::int32_t sym, std::size_t depth) {
  return sym >= group_start(depth) && sym < group_start(depth) + static_cast<std::int32_t>(kGroupSize);
}

Example text_example(std::vector<std::int32_t> ids) {
  Example ex;
  ex.modality = Modality::text;
  ex.tokens = std::move(ids);
  return ex;
}

}  // namespace

std::vector<std::int32_t> bracket_sequence(Rng& rng, const BracketOptions& opt) {
  std::vector<std::int32_t> out;
  out.reserve(opt.length);
  std::size_t depth = 0;
  std::int32_t prev = -1;
  for (std::size_t t = 0; t < opt.length; ++t) {
    const double r = rng.uniform();
    if (r < opt.open && depth + 1 < kDepthLevels) {
      out.push_back(kOpen);
      ++depth;
      prev = -1;
      continue;
    }
    if (r >= opt.open && r < opt.open + opt.close && depth > 0) {
      out.push_back(kClose);
      --depth;
      prev = -1;
      continue;
    }
    std::int32_t sym;
    if (rng.bernoulli(opt.noise)) {
      sym = kFirstSymbol + static_cast<std::int32_t>(rng.below(kOrdinary));
    } else if (prev >= 0 && in_group(prev, depth) && rng.bernoulli(opt.follow)) {
      sym = successor(prev, depth);
    } else {
      sym = group_start(depth) + static_cast<std::int32_t>(rng.below(kGroupSize));
    }
    out.push_back(sym);
    prev = sym;
  }
  return out;
}

std::vector<Example> bracket_corpus(std::size_t n, Rng& rng, const BracketOptions& opt) {
  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(text_example(bracket_sequence(rng, opt)));
  return out;
}

Dataset bracket_dataset(std::size_t n, std::uint64_t seed, const BracketOptions& opt) {
  Rng rng(seed);
  Dataset ds;
  ds.modality = Modality::text;
  ds.examples = bracket_corpus(n, rng, opt);
  return ds;
}

std::vector<int> bracket_depths(std::span<const std::int32_t> tokens) {
  std::vector<int> out;
  out.reserve(tokens.size());
  int depth = 0;
  for (auto t : tokens) {
    if (t == kOpen) ++depth;
    if (t == kClose && depth > 0) --depth;
    out.push_back(std::min(depth, static_cast<int>(kDepthLevels) - 1));
  }
  return out;
}

ProbeTask bracket_depth_task(std::size_t n_train, std::size_t n_eval, Rng& rng, const BracketOptions& opt) {
  ProbeTask task;
  task.name = "bracket-depth";
  task.kind = ProbeKind::token;
  task.num_labels = kDepthLevels;
  for (std::size_t i = 0; i < n_train + n_eval; ++i) {
    auto ids = bracket_sequence(rng, opt);
    auto labels = bracket_depths(ids);
    auto& inputs = i < n_train ? task.train_inputs : task.eval_inputs;
    auto& ls = i < n_train ? task.train_labels : task.eval_labels;
    inputs.push_back(text_example(std::move(ids)));
    ls.push_back(std::move(labels));
  }
  return task;
}

ProbeTask constant_task(std::size_t n_train, std::size_t n_eval, Rng& rng) {
  ProbeTask task;
  task.name = "constant";
  task.kind = ProbeKind::token;
  task.num_labels = 2;
  for (std::size_t i = 0; i < n_train + n_eval; ++i) {
    std::vector<std::int32_t> ids(16);
    for (auto& id : ids) id = kFirstSymbol + static_cast<std::int32_t>(rng.below(kOrdinary));
    auto& inputs = i < n_train ? task.train_inputs : task.eval_inputs;
    auto& ls = i < n_train ? task.train_labels : task.eval_labels;
    inputs.push_back(text_example(std::move(ids)));
    ls.emplace_back(16, 0);
  }
  return task;
}

ProbeTask random_label_task(std::size_t n_train, std::size_t n_eval, Rng& rng) {
  ProbeTask task;
  task.name = "random-labels";
  task.kind = ProbeKind::sequence;
  task.num_labels = 2;
  for (std::size_t i = 0; i < n_train + n_eval; ++i) {
    std::vector<std::int32_t> ids(16);
    for (auto& id : ids) id = kFirstSymbol + static_cast<std::int32_t>(rng.below(kOrdinary));
    auto& inputs = i < n_train ? task.train_inputs : task.eval_inputs;
    auto& ls = i < n_train ? task.train_labels : task.eval_labels;
    inputs.push_back(text_example(std::move(ids)));
    ls.push_back({static_cast<int>(rng.below(2))});
  }
  return task;
}

ProbeTask tone_task(std::size_t n_train, std::size_t n_eval, Rng& rng) {
  constexpr double kTones[] = {220.0, 440.0, 880.0};
  ProbeTask task;
  task.name = "tone";
  task.kind = ProbeKind::sequence;
  task.num_labels = 3;
  for (std::size_t i = 0; i < n_train + n_eval; ++i) {
    const auto label = static_cast<int>(rng.below(3));
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = rng.uniform(0.2, 0.8);
    Example ex;
    ex.modality = Modality::speech;
    ex.samples.resize(kSampleRate / 2);
    for (std::size_t n = 0; n < ex.samples.size(); ++n) {
      const double t = static_cast<double>(n) / kSampleRate;
      ex.samples[n] = amp * std::sin(2.0 * std::numbers::pi * kTones[label] * t + phase) + 0.05 * rng.normal();
    }
    auto& inputs = i < n_train ? task.train_inputs : task.eval_inputs;
    auto& ls = i < n_train ? task.train_labels : task.eval_labels;
    inputs.push_back(std::move(ex));
    ls.push_back({label});
  }
  return task;
}

std::vector<std::string> task_names() { return {"bracket-depth", "constant", "random-labels", "tone"}; }

ProbeTask make_task(const std::string& name, Rng& rng) {
  if (name == "bracket-depth") return bracket_depth_task(160, 40, rng);
  if (name == "constant") return constant_task(40, 10, rng);
  if (name == "random-labels") return random_label_task(160, 40, rng);
  if (name == "tone") return tone_task(48, 12, rng);
  throw ConfigError("unknown probe task '" + name + "'");
}

TrainConfig toy_text_config() {
  TrainConfig c;
  c.preset = "custom";
  c.model.prenet.modality = Modality::text;
  c.model.prenet.vocab_size = kToyVocab;
  c.model.prenet.max_positions = 64;
  c.model.prenet.d_model = 32;
  c.model.encoder = {2, 4, 32, 128, 0.0, true};
  c.model.mask = MaskSpec::text();
  c.model.mask.clones = 2;
  c.model.distill.top_k = 2;
  c.model.distill.decoder = {2, 32, 1, 3};
  c.model.distill.ema = {0.99, 0.999, 1000};
  c.model.distill.lambda = {20.0, 1.0, 2000};
  c.model.distill.mlm = true;
  c.optim.lr_min = 1e-5;
  c.optim.lr_max = 2e-3;
  c.optim.warmup_steps = 100;
  c.optim.max_steps = 2000;
  c.optim.clip_norm = 1.0;
  c.batch_size = 8;
  c.max_text_length = 64;
  c.seed = 1;
  return c;
}

}  // namespace bijou::synth
