#include "bijou/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bijou/errors.hpp"
#include "bijou/ops.hpp"

namespace bijou {

void MaskSpec::validate() const {
  if (length == 0) throw ConfigError("mask: span length must be positive");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("mask: ratio must lie in (0, 1)");
  if (!(adjust >= 0.0 && adjust < 1.0)) throw ConfigError("mask: adjust must lie in [0, 1)");
  if (clones == 0) throw ConfigError("mask: at least one clone is required");
}

Mask sample_mask(std::size_t T, const MaskSpec& spec, Rng& rng) {
  spec.validate();
  if (T < 2) throw InputError("sample_mask: sequence length must be at least 2, got " + std::to_string(T));
  const double u = rng.uniform(-1.0, 1.0);
  const double r = spec.ratio * (1.0 + u * spec.adjust);
  const double Td = static_cast<double>(T);

  // Upper bound: never everything, never beyond min(0.95, r + L/T).
  const double cap_frac = std::min(0.95, r + static_cast<double>(spec.length) / Td);
  const std::size_t cap = std::max<std::size_t>(
      1, std::min(T - 1, static_cast<std::size_t>(std::floor(cap_frac * Td))));
  const std::size_t target = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(Td * r)), 1, cap);

  // Span starts are drawn without replacement from positions where a full
  // span fits; spans longer than the sequence start at 0 and clip.
  const std::size_t n_starts = T > spec.length ? T - spec.length + 1 : 1;
  std::vector<std::size_t> starts(n_starts);
  std::iota(starts.begin(), starts.end(), 0);

  Mask mask(T, false);
  std::size_t covered = 0;
  std::vector<std::size_t> last_added;
  for (std::size_t drawn = 0; drawn < n_starts && covered < target; ++drawn) {
    const std::size_t pick = drawn + rng.below(n_starts - drawn);
    std::swap(starts[drawn], starts[pick]);
    const std::size_t s = starts[drawn];
    last_added.clear();
    for (std::size_t p = s; p < std::min(T, s + spec.length); ++p) {
      if (!mask[p]) {
        mask[p] = true;
        last_added.push_back(p);
        ++covered;
      }
    }
  }
  // Trim the tail of the most recent span back under the cap.
  while (covered > cap && !last_added.empty()) {
    mask[last_added.back()] = false;
    last_added.pop_back();
    --covered;
  }
  return mask;
}

MaskSet sample_masks(std::size_t T, const MaskSpec& spec, Rng& rng) {
  MaskSet set;
  set.seed = rng.next_u64();
  Rng local(set.seed);
  set.masks.reserve(spec.clones);
  for (std::size_t m = 0; m < spec.clones; ++m) set.masks.push_back(sample_mask(T, spec, local));
  return set;
}

std::size_t count_masked(const Mask& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

std::vector<std::size_t> masked_positions(const Mask& mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(i);
  return out;
}

VisibleSplit split_visible(const Tensor& frames, const Mask& mask) {
  if (frames.rank() != 2 || frames.dim(0) != mask.size()) {
    throw DimensionError("split_visible: mask of length " + std::to_string(mask.size()) +
                         " for frames " + shape_str(frames.shape()));
  }
  VisibleSplit split;
  split.position_to_visible.assign(mask.size(), -1);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) continue;
    split.position_to_visible[i] = static_cast<std::ptrdiff_t>(split.visible_positions.size());
    split.visible_positions.push_back(i);
  }
  if (split.visible_positions.empty()) throw ContractError("split_visible: every position is masked");
  split.visible = ops::index_rows(frames, split.visible_positions);
  return split;
}

Tensor restore_positions(const Tensor& visible, const Tensor& fill_row, const VisibleSplit& split) {
  const std::size_t n_visible = split.visible_positions.size();
  if (visible.dim(0) != n_visible) throw DimensionError("restore_positions: visible row count mismatch");
  std::vector<std::size_t> gather(split.position_to_visible.size());
  for (std::size_t t = 0; t < gather.size(); ++t) {
    const auto v = split.position_to_visible[t];
    gather[t] = v >= 0 ? static_cast<std::size_t>(v) : n_visible;
  }
  return ops::index_rows(ops::concat_rows({visible, fill_row}), gather);
}

}  // namespace bijou
