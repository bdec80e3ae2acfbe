#pragma once

#include <cstdint>

namespace gda {

/// SplitMix64 (Steele, Lea & Flood 2014). Chosen because its output is fully
/// specified by 64-bit integer arithmetic, so a stream reproduces exactly in
/// any language.
class SplitMix64 {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  explicit constexpr SplitMix64(std::uint64_t state) : state_(state) {}

  /// Stream for one (seed, class) cell: state = mix(mix(seed) ^ class).
  static constexpr SplitMix64 for_cell(std::uint64_t seed, std::uint64_t cell) {
    return SplitMix64(mix(mix(seed) ^ cell));
  }

  static constexpr std::uint64_t mix(std::uint64_t x) {
    std::uint64_t z = x + kGolden;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  constexpr std::uint64_t next() {
    std::uint64_t z = (state_ += kGolden);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform integer in [0, bound) by rejection; bound must be > 0.
  constexpr std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (true) {
      std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace gda
