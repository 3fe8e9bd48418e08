#pragma once

#include <vector>

#include "bijou/parameters.hpp"

namespace bijou {

struct EncoderConfig {
  std::size_t layers = 12;
  std::size_t heads = 8;
  std::size_t d_model = 768;
  std::size_t d_ff = 0;  // 0 means 4 · d_model
  double layerdrop = 0.0;
  bool final_norm = true;

  static EncoderConfig base() { return {12, 8, 768}; }
  static EncoderConfig large() { return {24, 16, 1024}; }

  std::size_t ff_width() const { return d_ff ? d_ff : 4 * d_model; }
  void validate() const;
};

enum class EncodeMode { student, teacher };

struct EncodeOptions {
  EncodeMode mode = EncodeMode::student;
  bool keep_layer_outputs = false;
  // Student mode with layerdrop > 0 draws per-layer skips from `rng` unless
  // `dropped` supplies them.
  Rng* rng = nullptr;
  const std::vector<bool>* dropped = nullptr;
};

struct EncoderOutput {
  Tensor output;  // after the final norm when enabled
  // Entry 0 is the input; entry i is the output of block i. Empty unless
  // keep_layer_outputs was set.
  std::vector<Tensor> layer_outputs;
  std::size_t layers_run = 0;
};

void init_encoder(ParameterSet& params, const EncoderConfig& cfg, Rng& rng);
std::size_t encoder_parameter_count(const EncoderConfig& cfg);

std::vector<bool> sample_layer_drops(const EncoderConfig& cfg, Rng& rng);

/// Pre-norm transformer stack. Teacher mode records no graph and never
/// drops layers.
EncoderOutput encode(const ParameterSet& params, const EncoderConfig& cfg, const Tensor& features,
                     const EncodeOptions& opt = {});

// Multi-head self-attention sublayer on already-normalized input; exposed
// for tests. `probs` receives each head's attention matrix when non-null.
Tensor self_attention(const ParameterSet& params, const std::string& prefix, const Tensor& x,
                      std::size_t heads, std::vector<Tensor>* probs = nullptr);

}  // namespace bijou
