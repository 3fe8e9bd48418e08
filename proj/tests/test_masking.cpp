#include <doctest.h>

#include <cmath>

#include "bijou/errors.hpp"
#include "bijou/masking.hpp"
#include "support.hpp"

using namespace bijou;

namespace {

double mean_fraction(std::size_t T, const MaskSpec& spec, std::size_t draws, std::uint64_t seed) {
  Rng rng(seed);
  double total = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    total += static_cast<double>(count_masked(sample_mask(T, spec, rng))) / static_cast<double>(T);
  }
  return total / static_cast<double>(draws);
}

}  // namespace

TEST_CASE("presets") {
  const auto sb = MaskSpec::speech_base();
  CHECK(sb.length == 5);
  CHECK(sb.ratio == 0.5);
  CHECK(sb.adjust == 0.05);
  CHECK(sb.clones == 8);
  const auto sl = MaskSpec::speech_large();
  CHECK(sl.length == 5);
  CHECK(sl.ratio == 0.55);
  CHECK(sl.adjust == 0.1);
  CHECK(sl.clones == 12);
  const auto tx = MaskSpec::text();
  CHECK(tx.length == 3);
  CHECK(tx.ratio == 0.6);
  CHECK(tx.adjust == 0.0);
  CHECK(tx.clones == 8);
}

TEST_CASE("masked fraction converges to the ratio") {
  const double f1 = mean_fraction(100, {3, 0.6, 0.0, 1}, 1000, 1);
  CHECK(f1 >= 0.57);
  CHECK(f1 <= 0.63);
  const double f2 = mean_fraction(100, {5, 0.5, 0.0, 1}, 1000, 2);
  CHECK(std::abs(f2 - 0.5) <= 0.03);
  // Preset geometries at the shortest length the invariant covers.
  CHECK(std::abs(mean_fraction(50, {3, 0.6, 0.0, 1}, 1000, 3) - 0.6) <= 0.03);
  CHECK(std::abs(mean_fraction(50, {5, 0.5, 0.0, 1}, 1000, 4) - 0.5) <= 0.03);
  CHECK(std::abs(mean_fraction(100, MaskSpec::speech_large(), 1000, 5) - 0.55) <= 0.03);
}

TEST_CASE("per-clone bounds hold for many geometries") {
  Rng rng(4);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t T = 2 + rng.below(120);
    MaskSpec spec{1 + rng.below(8), rng.uniform(0.05, 0.9), rng.uniform(0.0, 0.3), 3};
    const auto set = sample_masks(T, spec, rng);
    REQUIRE(set.masks.size() == 3);
    const double bound = std::min(0.95, spec.ratio * (1.0 + spec.adjust) + static_cast<double>(spec.length) / T);
    for (const auto& m : set.masks) {
      REQUIRE(m.size() == T);
      const auto n = count_masked(m);
      CHECK(n >= 1);
      CHECK(n <= T - 1);
      CHECK(static_cast<double>(n) <= std::max(1.0, std::floor(bound * T)) + 1e-9);
    }
  }
}

TEST_CASE("span longer than the sequence clips to T-1") {
  Rng rng(5);
  for (std::size_t T : {2, 5, 9}) {
    const auto m = sample_mask(T, {T, 0.6, 0.0, 1}, rng);
    CHECK(count_masked(m) == T - 1);
  }
  CHECK_THROWS_AS(sample_mask(1, MaskSpec::text(), rng), InputError);
  CHECK_THROWS_AS(MaskSpec({3, 1.0, 0.0, 1}).validate(), ConfigError);
}

TEST_CASE("seeded determinism") {
  Rng a(6), b(6);
  const auto x = sample_masks(40, MaskSpec::speech_large(), a);
  const auto y = sample_masks(40, MaskSpec::speech_large(), b);
  CHECK(x.seed == y.seed);
  CHECK(x.masks == y.masks);
  CHECK(a == b);
}

TEST_CASE("clones are mutually independent") {
  // Pairwise agreement of neighbouring clones against the i.i.d. expectation
  // computed from the empirical per-position marginals.
  const std::size_t T = 60, draws = 2000;
  const MaskSpec spec{3, 0.6, 0.0, 4};
  Rng rng(7);
  std::vector<double> marginal(T, 0.0);
  std::vector<double> agree;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto set = sample_masks(T, spec, rng);
    for (const auto& m : set.masks) {
      for (std::size_t t = 0; t < T; ++t) marginal[t] += m[t] ? 1.0 : 0.0;
    }
    for (std::size_t c = 0; c + 1 < set.masks.size(); ++c) {
      std::size_t same = 0;
      for (std::size_t t = 0; t < T; ++t) same += set.masks[c][t] == set.masks[c + 1][t];
      agree.push_back(static_cast<double>(same) / T);
    }
  }
  double expect = 0.0;
  for (auto& p : marginal) {
    p /= static_cast<double>(draws * spec.clones);
    expect += (p * p + (1 - p) * (1 - p)) / T;
  }
  double mu = 0.0, var = 0.0;
  for (double a : agree) mu += a / agree.size();
  for (double a : agree) var += (a - mu) * (a - mu) / (agree.size() - 1);
  const double sigma = std::sqrt(var / agree.size());
  CHECK(std::abs(mu - expect) < 3.0 * sigma);
}

TEST_CASE("mask adjust widens the per-clone ratio spread") {
  auto spread = [](double adjust) {
    Rng rng(8);
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < 2000; ++i) {
      const double f = static_cast<double>(count_masked(sample_mask(200, {5, 0.5, adjust, 1}, rng))) / 200.0;
      s1 += f;
      s2 += f * f;
    }
    return s2 / 2000 - (s1 / 2000) * (s1 / 2000);
  };
  CHECK(spread(0.1) > 2.0 * spread(0.0));
}

TEST_CASE("split_visible and restore_positions") {
  auto frames = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  const auto all = split_visible(frames, Mask{false, false, false});
  CHECK(all.visible_positions == std::vector<std::size_t>{0, 1, 2});
  for (std::size_t i = 0; i < 6; ++i) CHECK(all.visible.at(i) == frames.at(i));

  const auto s = split_visible(frames, Mask{false, true, false});
  CHECK(s.visible.shape() == Shape{2, 2});
  CHECK(s.visible.at(0, 0) == 1);
  CHECK(s.visible.at(1, 0) == 5);
  CHECK(s.position_to_visible == std::vector<std::ptrdiff_t>{0, -1, 1});

  const auto fill = Tensor::from({1, 2}, {-7, -8});
  const auto back = restore_positions(s.visible, fill, s);
  CHECK(back.at(0, 1) == 2);
  CHECK(back.at(1, 0) == -7);
  CHECK(back.at(1, 1) == -8);
  CHECK(back.at(2, 1) == 6);

  CHECK_THROWS_AS(split_visible(frames, Mask{true, true, true}), ContractError);
  CHECK_THROWS_AS(split_visible(frames, Mask{true, false}), DimensionError);
}

TEST_CASE("scatter of gather restores unmasked rows exactly") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 2 + rng.below(30);
    auto x = testing::randn({T, 4}, rng, 1.0, false);
    const auto m = sample_mask(T, {2, 0.4, 0.0, 1}, rng);
    const auto s = split_visible(x, m);
    const auto back = restore_positions(s.visible, Tensor::zeros({1, 4}), s);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < 4; ++j) CHECK(back.at(t, j) == (m[t] ? 0.0 : x.at(t, j)));
    }
  }
}
