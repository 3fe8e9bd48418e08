#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "bijou/parameters.hpp"
#include "bijou/types.hpp"

namespace bijou {

// Strided waveform convolution ladder: total stride 320 samples (20 ms).
inline constexpr std::array<std::size_t, 7> kConvKernels{10, 3, 3, 3, 3, 2, 2};
inline constexpr std::array<std::size_t, 7> kConvStrides{5, 2, 2, 2, 2, 2, 2};

struct PrenetConfig {
  Modality modality = Modality::text;
  std::size_t d_model = 768;
  // text
  std::size_t vocab_size = 50000;
  std::size_t max_positions = 512;
  // speech
  std::size_t conv_channels = 512;
  std::size_t pos_conv_kernel = 19;
  std::size_t pos_conv_groups = 16;
  bool standardize_waveform = true;

  void validate() const;
};

struct FeatureSequence {
  Tensor frames;  // [T × d_model], row t is position t
  Modality modality = Modality::text;

  std::size_t length() const { return frames.dim(0); }
};

// Frames produced from `samples` audio samples; 0 when below the receptive field.
std::size_t frames_for_samples(std::size_t samples);
// Shortest input that yields one frame (400 samples).
std::size_t min_audio_samples();

void init_prenet(ParameterSet& params, const PrenetConfig& cfg, Rng& rng);
std::size_t prenet_parameter_count(const PrenetConfig& cfg);

FeatureSequence embed_text(const ParameterSet& params, const PrenetConfig& cfg,
                           std::span<const std::int32_t> tokens);
FeatureSequence featurize_audio(const ParameterSet& params, const PrenetConfig& cfg,
                                std::span<const double> samples);
FeatureSequence featurize(const ParameterSet& params, const PrenetConfig& cfg, const Example& ex);

// Zero mean, unit variance copy of a waveform.
std::vector<double> standardize(std::span<const double> samples);

}  // namespace bijou
