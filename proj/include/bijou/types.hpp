#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bijou {

enum class Modality { text, speech };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);

inline constexpr std::size_t kSampleRate = 16000;

struct WaveformChunk {
  std::vector<double> samples;  // mono, kSampleRate, amplitude in [-1, 1]
  std::string source;
  double offset_seconds = 0.0;

  double duration_seconds() const { return static_cast<double>(samples.size()) / kSampleRate; }
};

// One pretraining input of either modality.
struct Example {
  Modality modality = Modality::text;
  std::vector<std::int32_t> tokens;
  std::vector<double> samples;

  std::size_t raw_length() const { return modality == Modality::text ? tokens.size() : samples.size(); }
};

}  // namespace bijou
