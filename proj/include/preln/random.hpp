#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace preln {

// Seeded random source. The engine is std::mt19937_64 (its output sequence is
// fixed by the standard) and every distribution is implemented here, so a
// seed yields the same samples with any standard library.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  // Independent substream keyed by (seed, label, index). Does not advance
  // this source.
  RandomSource fork(std::string_view label, std::uint64_t index = 0) const;

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();

  // Uniform integer on [0, n); n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal via the Marsaglia polar method.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace preln
