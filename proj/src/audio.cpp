#include "bijou/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <tuple>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "bijou/errors.hpp"

namespace bijou {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(b, 4);
}
void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
  os.write(b, 2);
}

std::size_t to_samples(double seconds) {
  return static_cast<std::size_t>(std::llround(seconds * static_cast<double>(kSampleRate)));
}

}  // namespace

WaveformChunk read_wav(const std::filesystem::path& path, double offset_seconds, double duration_seconds) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError(where + "not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::size_t len = read_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) throw DataError(where + "truncated chunk");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (len < 16) throw DataError(where + "short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      const auto format = read_u16(f), channels = read_u16(f + 2), bits = read_u16(f + 14);
      const auto rate = read_u32(f + 4);
      if (format != 1 || channels != 1 || rate != kSampleRate || bits != 16) {
        throw DataError(where + "expected 16-bit PCM mono 16 kHz, got format " + std::to_string(format) + ", " +
                        std::to_string(channels) + " channel(s), " + std::to_string(rate) + " Hz, " +
                        std::to_string(bits) + " bits");
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt || !data) throw DataError(where + "missing fmt or data chunk");

  const std::size_t total = data_len / 2;
  const std::size_t first = to_samples(offset_seconds);
  if (offset_seconds < 0.0 || first > total) throw DataError(where + "offset beyond end of audio");
  std::size_t count = duration_seconds > 0.0 ? to_samples(duration_seconds) : total - first;
  if (first + count > total) throw DataError(where + "requested region extends past end of audio");

  WaveformChunk chunk;
  chunk.source = path.string();
  chunk.offset_seconds = offset_seconds;
  chunk.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto v = static_cast<std::int16_t>(read_u16(data + 2 * (first + i)));
    chunk.samples[i] = static_cast<double>(v) / 32768.0;
  }
  return chunk;
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write audio file " + path.string());
  const auto data_len = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, kSampleRate);
  put_u32(out, kSampleRate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_len);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
}

std::size_t fingerprint_windows(std::size_t samples) {
  if (samples < kFingerprintWindow) return 0;
  return (samples - kFingerprintWindow) / kFingerprintHop + 1;
}

Fingerprint fingerprint(std::span<const double> samples) {
  const std::size_t n_windows = fingerprint_windows(samples.size());
  if (n_windows == 0) {
    throw InputError("fingerprint: need at least " + std::to_string(kFingerprintWindow) + " samples, got " +
                     std::to_string(samples.size()));
  }
  constexpr std::size_t N = kFingerprintWindow;
  constexpr std::size_t n_bins = N / 2 + 1;

  // Bin ranges of the 33 log-spaced bands.
  std::array<std::size_t, kFingerprintBands + 1> edge_bin{};
  const double bin_hz = static_cast<double>(kSampleRate) / static_cast<double>(N);
  for (std::size_t b = 0; b <= kFingerprintBands; ++b) {
    const double f = kFingerprintLowHz * std::pow(kFingerprintHighHz / kFingerprintLowHz,
                                                  static_cast<double>(b) / kFingerprintBands);
    edge_bin[b] = static_cast<std::size_t>(std::ceil(f / bin_hz));
  }

  std::vector<double> hann(N);
  for (std::size_t i = 0; i < N; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(N - 1));
  }

  double* frame = fftw_alloc_real(N);
  fftw_complex* spec = fftw_alloc_complex(n_bins);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(N), frame, spec, FFTW_ESTIMATE);

  Fingerprint fp;
  fp.codes.resize(n_windows);
  std::array<double, kFingerprintBands> prev{}, cur{};
  for (std::size_t w = 0; w < n_windows; ++w) {
    const double* src = samples.data() + w * kFingerprintHop;
    for (std::size_t i = 0; i < N; ++i) frame[i] = src[i] * hann[i];
    fftw_execute(plan);
    for (std::size_t b = 0; b < kFingerprintBands; ++b) {
      double e = 0.0;
      for (std::size_t k = edge_bin[b]; k < edge_bin[b + 1]; ++k) e += spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
      cur[b] = e > 0.0 ? std::log(e) : 0.0;
    }
    std::uint32_t code = 0;
    for (std::size_t b = 0; b + 1 < kFingerprintBands; ++b) {
      const double d = (cur[b] - cur[b + 1]) - (prev[b] - prev[b + 1]);
      if (d > 0.0) code |= std::uint32_t{1} << b;
    }
    fp.codes[w] = code;
    prev = cur;
  }
  fftw_destroy_plan(plan);
  fftw_free(spec);
  fftw_free(frame);
  return fp;
}

std::vector<MatchRun> find_duplicates(const Fingerprint& a, const Fingerprint& b, unsigned hamming_max,
                                      std::size_t min_run) {
  if (a.codes.empty() || b.codes.empty()) throw InputError("find_duplicates: empty fingerprint");
  const std::size_t na = a.codes.size(), nb = b.codes.size();
  std::vector<MatchRun> runs;
  // Diagonal d pairs a[i] with b[i + d - (na - 1)].
  for (std::size_t d = 0; d + 1 < na + nb; ++d) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(d) - static_cast<std::ptrdiff_t>(na - 1);
    std::size_t i = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
    std::size_t j = shift < 0 ? 0 : static_cast<std::size_t>(shift);
    std::size_t run = 0;
    for (; i < na && j < nb; ++i, ++j) {
      if (static_cast<unsigned>(std::popcount(a.codes[i] ^ b.codes[j])) <= hamming_max) {
        ++run;
        continue;
      }
      if (run >= min_run) runs.push_back({i - run, j - run, run});
      run = 0;
    }
    if (run >= min_run) runs.push_back({i - run, j - run, run});
  }
  std::sort(runs.begin(), runs.end(), [](const MatchRun& x, const MatchRun& y) {
    return std::tie(x.b_start, x.a_start) < std::tie(y.b_start, y.a_start);
  });
  return runs;
}

Region run_region_b(const MatchRun& run) {
  return {run.b_start * kFingerprintHop, (run.b_start + run.length - 1) * kFingerprintHop + kFingerprintWindow};
}

namespace {

std::vector<Region> merge_regions(std::vector<Region> r) {
  std::sort(r.begin(), r.end(), [](const Region& x, const Region& y) { return x.begin < y.begin; });
  std::vector<Region> out;
  for (const auto& x : r) {
    if (!out.empty() && x.begin <= out.back().end) {
      out.back().end = std::max(out.back().end, x.end);
    } else {
      out.push_back(x);
    }
  }
  return out;
}

void mark_duplicates(const Fingerprint& reference, const Fingerprint& candidate, const DedupOptions& opt,
                     std::vector<Region>& excluded) {
  for (const auto& r : duplicate_regions(reference, candidate, opt.hamming_max, opt.min_run)) excluded.push_back(r);
}

}  // namespace

std::vector<Region> duplicate_regions(const Fingerprint& reference, const Fingerprint& candidate,
                                      unsigned hamming_max, std::size_t min_run) {
  std::vector<Region> out;
  for (const auto& run : find_duplicates(reference, candidate, hamming_max, min_run)) out.push_back(run_region_b(run));
  return merge_regions(std::move(out));
}

DedupResult dedup_and_sample(std::span<const WaveformChunk> sources, std::span<const WaveformChunk> exclusions,
                             const DedupOptions& opt, Rng& rng) {
  if (opt.chunk_seconds <= 0.0) throw ConfigError("dedup: chunk length must be positive");
  DedupResult result;
  const std::size_t chunk = to_samples(opt.chunk_seconds);

  std::vector<Fingerprint> fps(sources.size()), excl_fps;
  std::vector<bool> usable(sources.size(), false);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (fingerprint_windows(sources[i].samples.size()) > 0) {
      fps[i] = fingerprint(sources[i].samples);
      usable[i] = true;
    }
  }
  for (const auto& x : exclusions) {
    if (fingerprint_windows(x.samples.size()) > 0) excl_fps.push_back(fingerprint(x.samples));
  }

  struct Slot {
    std::size_t source;
    std::size_t begin;
  };
  std::vector<Slot> slots;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    SourceReport rep;
    rep.source = sources[j].source;
    rep.samples = sources[j].samples.size();
    std::vector<Region> excluded;
    if (usable[j]) {
      for (const auto& x : excl_fps) mark_duplicates(x, fps[j], opt, excluded);
      for (std::size_t i = 0; i < j; ++i) {
        if (usable[i]) mark_duplicates(fps[i], fps[j], opt, excluded);
      }
    }
    rep.excluded = merge_regions(std::move(excluded));

    // Tile each eligible gap with chunk slots at a random phase.
    std::size_t cursor = 0;
    auto tile = [&](std::size_t begin, std::size_t end) {
      if (end <= begin || end - begin < chunk) return;
      const std::size_t len = end - begin, count = len / chunk;
      const std::size_t phase = rng.below(len - count * chunk + 1);
      for (std::size_t c = 0; c < count; ++c) slots.push_back({j, begin + phase + c * chunk});
    };
    for (const auto& r : rep.excluded) {
      tile(cursor, std::min(r.begin, rep.samples));
      cursor = std::max(cursor, r.end);
    }
    tile(cursor, rep.samples);
    result.sources.push_back(std::move(rep));
  }

  rng.shuffle(slots);
  const double chunk_hours = opt.chunk_seconds / 3600.0;
  std::vector<Slot> taken;
  for (const auto& s : slots) {
    if (result.hours + chunk_hours > opt.target_hours + 1e-9) break;
    taken.push_back(s);
    result.hours += chunk_hours;
  }
  result.pool_exhausted = taken.size() == slots.size() && result.hours + chunk_hours <= opt.target_hours + 1e-9;
  std::sort(taken.begin(), taken.end(),
            [](const Slot& x, const Slot& y) { return std::tie(x.source, x.begin) < std::tie(y.source, y.begin); });
  for (const auto& s : taken) {
    const auto& src = sources[s.source];
    result.chunks.push_back({src.source,
                             src.offset_seconds + static_cast<double>(s.begin) / static_cast<double>(kSampleRate),
                             opt.chunk_seconds});
  }
  return result;
}

DedupResult dedup_and_sample(std::span<const ManifestEntry> corpus, std::span<const ManifestEntry> exclusions,
                             const DedupOptions& opt, Rng& rng) {
  std::vector<std::string> faults;
  auto load = [&](std::span<const ManifestEntry> entries) {
    std::vector<WaveformChunk> out;
    for (const auto& e : entries) {
      try {
        out.push_back(read_wav(e.path, e.offset_seconds, e.duration_seconds));
      } catch (const DataError& err) {
        faults.push_back(err.what());
      }
    }
    return out;
  };
  const auto sources = load(corpus);
  const auto excl = load(exclusions);
  auto result = dedup_and_sample(sources, excl, opt, rng);
  result.faults = std::move(faults);
  return result;
}

}  // namespace bijou
