#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace ptext {

// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : bytes) {
    h ^= static_cast<std::uint8_t>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based generator: draw i of stream (seed, tag) is a pure function of
// (seed, tag, i), so results never depend on the standard library's
// distribution implementations or on call interleaving across streams.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::string_view tag) noexcept
      : key_(mix64(seed) ^ mix64(fnv1a64(tag) + 0x632be59bd9b4e019ULL)) {}
  CounterRng(std::uint64_t seed, std::string_view tag, std::uint64_t sub) noexcept
      : key_(mix64(mix64(seed) ^ mix64(fnv1a64(tag) + 0x632be59bd9b4e019ULL)) ^ mix64(sub)) {}

  std::uint64_t at(std::uint64_t counter) const noexcept {
    return mix64(key_ ^ mix64(counter * 0xd1b54a32d192ed03ULL));
  }

  std::uint64_t next_u64() noexcept { return at(counter_++); }

  // Uniform in (0, 1].
  double next_unit() noexcept {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound); bound > 0.
  std::uint64_t next_below(std::uint64_t bound) noexcept {
    // Rejection sampling; no modulo bias.
    const std::uint64_t limit = ~0ULL - (~0ULL % bound);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % bound;
  }

  // Standard normal via Box-Muller (one output per pair of uniforms).
  double next_normal() noexcept {
    const double u1 = next_unit();
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ptext
