#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bijou/trainer.hpp"

namespace bijou {

enum class ProbeKind { token, sequence };

/// Labeled inputs for a frozen-encoder probe. Token tasks carry one label
/// per encoder frame; sequence tasks carry exactly one.
struct ProbeTask {
  std::string name;
  ProbeKind kind = ProbeKind::token;
  std::size_t num_labels = 2;
  std::vector<Example> train_inputs, eval_inputs;
  std::vector<std::vector<int>> train_labels, eval_labels;

  void validate() const;
};

// Single affine head on encoder features.
struct ProbeHead {
  Tensor weight;  // [d × num_labels]
  Tensor bias;    // [num_labels]
};

struct ProbeOptions {
  std::size_t epochs = 200;
  double lr = 1e-2;
  std::optional<ProbeHead> init;  // warm start; its width must match the bundle
};

struct ProbeResult {
  ProbeHead head;
  double train_accuracy = 0.0;
  double accuracy = 0.0;  // on eval_inputs
};

/// Trains a linear head with full-batch Adam and cross-entropy on frozen
/// features; sequence tasks mean-pool the frames.
ProbeResult fit_probe(const EncoderBundle& bundle, const ProbeTask& task, const ProbeOptions& opt, Rng& rng);

}  // namespace bijou
