#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace diffloc {

// SplitMix64 finalizer. Full-avalanche mixing of a 64-bit word.
inline std::uint64_t avalanche64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Combine stream-key parts. Order-sensitive, collision-resistant enough for
// keying independent noise streams.
inline std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) {
  return avalanche64(a + 0x9E3779B97F4A7C15ULL + avalanche64(b) * 0xD1B54A32D192ED03ULL);
}

inline std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t k = 0x243F6A8885A308D3ULL;  // arbitrary nonzero base
  for (std::uint64_t p : parts) k = mix_key(k, p);
  return k;
}

// Counter-based SplitMix64 stream. Bit-stable across platforms; all sampling
// code goes through this generator rather than std:: distributions.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return avalanche64(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. First uniform shifted into (0, 1].
  double gaussian() {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace diffloc
