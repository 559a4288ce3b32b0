#pragma once

#include <cstdint>
#include <string_view>

namespace epi {

// Deterministic xoshiro256** generator. Identical seeds produce identical
// draw sequences on every platform; named substreams let independent
// experiment stages (init, data, eval, ...) draw without perturbing each
// other.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  // Independent child stream keyed by (seed, name).
  Rng substream(std::string_view name) const;

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform();

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via Box-Muller; spare value cached.
  double normal();
  double normal(double mean, double stddev);

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t state_[4] = {};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace epi
