#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bijou/distiller.hpp"
#include "bijou/optim.hpp"

namespace bijou {

/// Every knob of a pretraining run. Serialized as a flat `key = value`
/// document whose keys mirror the fields (see `keys()`).
struct TrainConfig {
  std::string preset = "custom";
  ModelConfig model;
  OptimConfig optim;
  std::size_t batch_size = 32;   // text: sequences per batch
  double batch_seconds = 62.5;   // speech: audio seconds per batch
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::size_t max_text_length = 512;

  std::string data_text;       // UTF-8 sentences, one per line
  std::string data_tokenizer;  // directory holding vocab.txt / merges.txt
  std::string data_samples;    // packed samples file
  std::string data_manifest;   // audio chunk manifest
  std::string out_dir = "run";

  Modality modality() const { return model.modality(); }

  /// "speech-base", "speech-large" or "text-base-mlm".
  static TrainConfig from_preset(std::string_view name);
  static std::vector<std::string> preset_names();

  // Applies one key; throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  // A `preset` line, wherever it appears, is applied before other keys.
  static TrainConfig parse(std::string_view text);
  static TrainConfig load(const std::filesystem::path& path);
  std::string to_text() const;

  void validate() const;
};

}  // namespace bijou
