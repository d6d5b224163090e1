#pragma once

#include <cstdint>
#include <initializer_list>

namespace pzero {

// Counter-based randomness. Every random decision in the library is a pure
// function of (seed, counters...), so results do not depend on iteration or
// thread scheduling order.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept {
  return splitmix64(seed ^ splitmix64(value + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t hash_words(std::uint64_t seed, std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = splitmix64(seed);
  for (auto w : words) h = hash_combine(h, w);
  return h;
}

/// Maps 64 random bits to a double in [0, 1) using the top 53 bits.
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Sequential generator (splitmix64 stream). Output is fully specified, unlike
/// the std:: distributions, so generated artifacts are portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform() noexcept { return to_unit(next()); }

  /// Uniform integer in [0, bound). Rejection sampling avoids modulo bias.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % bound;
  }

 private:
  std::uint64_t state_;
};

/// Per-node random substream for one synchronous simulation step.
class StepRng {
 public:
  StepRng(std::uint64_t seed, std::uint64_t step) noexcept
      : base_(hash_words(seed, {0x5354455055ULL, step})) {}

  double uniform(std::uint64_t node, std::uint64_t draw = 0) const noexcept {
    return to_unit(hash_words(base_, {node, draw}));
  }

 private:
  std::uint64_t base_;
};

}  // namespace pzero
