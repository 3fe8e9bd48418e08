#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace bijou {

/// Deterministic random stream used everywhere randomness enters training.
///
/// Wraps mt19937_64 and draws every variate directly from the engine, so the
/// full stream state is the engine state and round-trips through text.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller, no cached second variate.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  std::string state() const;
  void set_state(const std::string& s);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace bijou
