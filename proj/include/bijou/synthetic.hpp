#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bijou/config.hpp"
#include "bijou/probe.hpp"
#include "bijou/trainer.hpp"

// Synthetic corpora and probe tasks small enough to train on a laptop core.
namespace bijou::synth {

// The toy vocabulary keeps the tokenizer's special ids 0..4.
inline constexpr std::size_t kToyVocab = 64;
inline constexpr std::int32_t kOpen = 5;
inline constexpr std::int32_t kClose = 6;
inline constexpr std::int32_t kFirstSymbol = 7;
inline constexpr std::size_t kDepthLevels = 4;
inline constexpr std::size_t kGroupSize = 14;

/// Sequences of brackets and ordinary symbols. Ordinary symbols come from
/// the group tied to the current nesting depth and mostly follow a fixed
/// successor permutation inside that group (the planted bigram); a `noise`
/// fraction is uniform over all ordinary symbols.
struct BracketOptions {
  std::size_t length = 32;
  double open = 0.12;
  double close = 0.12;
  double follow = 0.7;
  double noise = 0.25;
};

std::vector<std::int32_t> bracket_sequence(Rng& rng, const BracketOptions& opt = {});
std::vector<Example> bracket_corpus(std::size_t n, Rng& rng, const BracketOptions& opt = {});
Dataset bracket_dataset(std::size_t n, std::uint64_t seed, const BracketOptions& opt = {});

// Nesting depth after each token, clipped to kDepthLevels − 1.
std::vector<int> bracket_depths(std::span<const std::int32_t> tokens);

// Token task: predict the bracket depth at every position.
ProbeTask bracket_depth_task(std::size_t n_train, std::size_t n_eval, Rng& rng, const BracketOptions& opt = {});
// Token task whose every label is 0.
ProbeTask constant_task(std::size_t n_train, std::size_t n_eval, Rng& rng);
// Sequence task with two labels drawn independently of the input.
ProbeTask random_label_task(std::size_t n_train, std::size_t n_eval, Rng& rng);
// Sequence task over 0.5 s clips: which of three tones is playing.
ProbeTask tone_task(std::size_t n_train, std::size_t n_eval, Rng& rng);

std::vector<std::string> task_names();
// "bracket-depth", "constant", "random-labels" (text) or "tone" (speech).
ProbeTask make_task(const std::string& name, Rng& rng);

/// 2-layer, d=32 text model with the hybrid objective, sized for a
/// 2 000-step run on the bracket corpus.
TrainConfig toy_text_config();

}  // namespace bijou::synth
