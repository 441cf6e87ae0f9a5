#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace bregopt {

/// xoshiro256** generator (Blackman & Vigna) with SplitMix64 seeding.
///
/// Every conversion to doubles and integers is done here rather than through
/// <random> distributions, so a seed yields the same stream on every platform.
///
/// Sub-streams: `Prng::stream(seed, id)` seeds a fresh generator from
/// splitmix64(seed) XOR splitmix64(id + 0x9E3779B97F4A7C15). Trials use id = trial index.
class Prng {
 public:
  explicit Prng(std::uint64_t seed);

  static Prng stream(std::uint64_t seed, std::uint64_t id);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (both outputs are used).
  double normal();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// `count` distinct indices from [0, n), uniformly without replacement,
  /// returned in ascending order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::array<std::uint64_t, 4> s_{};
  std::uint64_t seed_ = 0;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace bregopt
