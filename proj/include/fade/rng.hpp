#pragma once

#include <cmath>
#include <cstdint>

namespace fade::rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline std::uint64_t mix(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ull;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebull;
  z ^= z >> 31;
  return z;
}

// Counter-based substream derivation: (seed, index) -> new seed.
// Used everywhere a stage or iteration needs its own stream, so that
// runs are reproducible regardless of evaluation order.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
  return mix(seed + kGolden * (index + 1));
}

// Deterministic splitmix64 stream with Box-Muller normals.
// Not std::mt19937 on purpose: identical output on every platform.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : key_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    state_ += kGolden;
    return mix(state_);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    // rejection sampling keeps the draw unbiased
    const std::uint64_t limit = ~0ull - (~0ull % n + 1) % n;
    std::uint64_t v = next_u64();
    while (v > limit) v = next_u64();
    return v % n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // child stream keyed off the construction seed, independent of how much
  // of this stream has been consumed
  Stream child(std::uint64_t index) const { return Stream(derive(key_, index)); }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fade::rng
