#pragma once

#include <cstdint>
#include <vector>

#include "bijou/rng.hpp"
#include "bijou/tensor.hpp"

namespace bijou {

/// Block-mask geometry: spans of `length` positions are masked until a
/// fraction `ratio` (jittered per clone by ±`adjust`, multiplicatively) is
/// covered; `clones` independent masks are drawn per example.
struct MaskSpec {
  std::size_t length = 3;
  double ratio = 0.6;
  double adjust = 0.0;
  std::size_t clones = 8;

  static MaskSpec speech_base() { return {5, 0.5, 0.05, 8}; }
  static MaskSpec speech_large() { return {5, 0.55, 0.1, 12}; }
  static MaskSpec text() { return {3, 0.6, 0.0, 8}; }

  void validate() const;
};

using Mask = std::vector<bool>;  // true = masked

struct MaskSet {
  std::vector<Mask> masks;
  // Seed of the private stream the clones were drawn from.
  std::uint64_t seed = 0;
};

MaskSet sample_masks(std::size_t length, const MaskSpec& spec, Rng& rng);
Mask sample_mask(std::size_t length, const MaskSpec& spec, Rng& rng);

std::size_t count_masked(const Mask& mask);
std::vector<std::size_t> masked_positions(const Mask& mask);

struct VisibleSplit {
  Tensor visible;                              // unmasked rows in original order
  std::vector<std::size_t> visible_positions;  // visible row -> original position
  std::vector<std::ptrdiff_t> position_to_visible;  // original position -> row, -1 if masked
};

VisibleSplit split_visible(const Tensor& frames, const Mask& mask);

// Puts visible rows back at their positions and fills masked positions with
// `fill_row` ([1 × d]).
Tensor restore_positions(const Tensor& visible, const Tensor& fill_row, const VisibleSplit& split);

}  // namespace bijou
