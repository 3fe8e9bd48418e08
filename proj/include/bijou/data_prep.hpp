#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bijou/tokenizer.hpp"

namespace bijou {

inline constexpr std::size_t kMaxTextLength = 512;
inline constexpr std::string_view kSamplesHeader = "bijou-samples v1";
inline constexpr std::string_view kManifestHeader = "bijou-manifest v1";

struct TextSample {
  std::vector<std::int32_t> ids;
  std::vector<std::size_t> sentence_ends;  // exclusive offsets into ids
  bool truncated = false;                  // a single sentence exceeded max_len
};

/// Greedy packing of whole sentences into samples of at most `max_len`
/// tokens. Samples end on sentence boundaries; an oversized sentence becomes
/// its own truncated sample.
std::vector<TextSample> pack_text(std::span<const std::vector<std::int32_t>> sentences,
                                  std::size_t max_len = kMaxTextLength);
std::vector<TextSample> pack_text(std::span<const std::string> lines, const tok::Tokenizer& tokenizer,
                                  std::size_t max_len = kMaxTextLength);

void write_samples(const std::filesystem::path& path, std::span<const TextSample> samples);
std::vector<TextSample> read_samples(const std::filesystem::path& path);

// UTF-8 text, one sentence per line, blank lines dropped.
std::vector<std::string> read_lines(const std::filesystem::path& path);

struct ManifestEntry {
  std::string path;
  double offset_seconds = 0.0;
  double duration_seconds = 0.0;  // 0 in an input manifest means "to the end"
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

}  // namespace bijou
