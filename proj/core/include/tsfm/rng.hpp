#pragma once

#include <cmath>
#include <cstdint>

namespace tsfm {

// Counter-based splittable generator (splitmix64 core). All randomness in the
// library funnels through this type so runs are reproducible bit-for-bit on a
// platform regardless of threading or call order; std:: distributions are
// avoided because their output is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1].
  double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_int(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; consumes two words per draw.
  double normal() {
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Independent child stream; advancing the child never touches the parent.
  Rng split() { return Rng(next_u64() ^ 0xD1B54A32D192ED03ULL); }

 private:
  uint64_t state_;
};

// Stable 64-bit hash for deriving per-entity seeds from string keys.
inline uint64_t fnv1a64(const char* s) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (; *s; ++s) {
    h ^= static_cast<unsigned char>(*s);
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline uint64_t seed_for(uint64_t base, const char* key, uint64_t index = 0) {
  Rng r(base ^ fnv1a64(key) ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
  return r.next_u64();
}

}  // namespace tsfm
