#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bijou/data_prep.hpp"
#include "bijou/rng.hpp"
#include "bijou/types.hpp"

namespace bijou {

// 16-bit little-endian PCM, mono, 16 kHz. `duration_seconds` of 0 reads to
// the end of the file.
WaveformChunk read_wav(const std::filesystem::path& path, double offset_seconds = 0.0,
                       double duration_seconds = 0.0);
void write_wav(const std::filesystem::path& path, std::span<const double> samples);

// Fingerprint geometry in samples at 16 kHz: 371 ms windows, 11.6 ms hop.
inline constexpr std::size_t kFingerprintWindow = 5936;
inline constexpr std::size_t kFingerprintHop = 186;
inline constexpr std::size_t kFingerprintBands = 33;
inline constexpr double kFingerprintLowHz = 300.0;
inline constexpr double kFingerprintHighHz = 2000.0;

struct Fingerprint {
  std::vector<std::uint32_t> codes;  // one 32-bit code per window
};

std::size_t fingerprint_windows(std::size_t samples);

/// Energy-difference fingerprint: bit b of window n is set when
/// (E[n,b] − E[n,b+1]) − (E[n−1,b] − E[n−1,b+1]) > 0 over 33 log-spaced
/// log-energy bands.
Fingerprint fingerprint(std::span<const double> samples);

struct MatchRun {
  std::size_t a_start = 0;
  std::size_t b_start = 0;
  std::size_t length = 0;  // windows
};

inline constexpr unsigned kDefaultHammingMax = 3;
inline constexpr std::size_t kMinDuplicateRun = 4;

/// Maximal diagonal runs of similar windows (Hamming distance ≤ hamming_max)
/// of at least `min_run` windows; shorter runs are discarded.
std::vector<MatchRun> find_duplicates(const Fingerprint& a, const Fingerprint& b,
                                      unsigned hamming_max = kDefaultHammingMax,
                                      std::size_t min_run = kMinDuplicateRun);

struct Region {
  std::size_t begin = 0;  // samples, half-open
  std::size_t end = 0;
  bool operator==(const Region&) const = default;
};

// Samples of `b` covered by the windows of a run.
Region run_region_b(const MatchRun& run);

// Merged regions of `candidate` that duplicate `reference`; the step
// dedup_and_sample applies to every earlier source and exclusion source.
std::vector<Region> duplicate_regions(const Fingerprint& reference, const Fingerprint& candidate,
                                      unsigned hamming_max = kDefaultHammingMax,
                                      std::size_t min_run = kMinDuplicateRun);

struct DedupOptions {
  double target_hours = 0.0;
  double chunk_seconds = 30.0;
  unsigned hamming_max = kDefaultHammingMax;
  std::size_t min_run = kMinDuplicateRun;
};

struct SourceReport {
  std::string source;
  std::size_t samples = 0;
  std::vector<Region> excluded;  // merged, sorted
};

struct DedupResult {
  std::vector<ManifestEntry> chunks;
  std::vector<SourceReport> sources;
  std::vector<std::string> faults;  // unreadable sources
  double hours = 0.0;
  bool pool_exhausted = false;
};

/// Removes regions duplicated from an earlier source or from any exclusion
/// source, then samples non-overlapping chunks uniformly without replacement
/// until target_hours would be exceeded or the pool runs out.
DedupResult dedup_and_sample(std::span<const WaveformChunk> sources,
                             std::span<const WaveformChunk> exclusions, const DedupOptions& opt, Rng& rng);

// Manifest-driven variant; unreadable sources become fault records.
DedupResult dedup_and_sample(std::span<const ManifestEntry> corpus, std::span<const ManifestEntry> exclusions,
                             const DedupOptions& opt, Rng& rng);

}  // namespace bijou
