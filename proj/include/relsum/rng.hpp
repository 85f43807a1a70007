#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "relsum/common.hpp"

namespace relsum {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Seed splitting rule used everywhere a sub-stream is needed:
// derive(root, a), derive(root, a, b), ... Each index is folded through
// splitmix64, so streams for (example, rollout) pairs are independent of
// iteration order and of each other.
inline uint64_t derive_seed(uint64_t root, uint64_t a) {
  uint64_t s = root ^ (0x9e3779b97f4a7c15ull + a);
  uint64_t z = splitmix64(s);
  return z ^ splitmix64(s);
}

inline uint64_t derive_seed(uint64_t root, uint64_t a, uint64_t b) {
  return derive_seed(derive_seed(root, a), b);
}

inline uint64_t derive_seed(uint64_t root, uint64_t a, uint64_t b, uint64_t c) {
  return derive_seed(derive_seed(root, a, b), c);
}

// xoshiro256** with a splitmix64-seeded state. Self-contained so that every
// draw is bit-reproducible across platforms (std:: distributions are not).
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // uniform in [0, 1) with 53 random bits
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  uint64_t next_below(uint64_t n) {
    if (n == 0) fail(Errc::bad_argument, "next_below(0)");
    // rejection sampling to avoid modulo bias
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  int next_int(int lo, int hi) {  // inclusive range
    if (hi < lo) fail(Errc::bad_argument, "next_int: empty range");
    return lo + static_cast<int>(next_below(static_cast<uint64_t>(hi - lo + 1)));
  }

  bool next_bool() { return (next_u64() >> 63) != 0; }

  // standard normal, Box-Muller (no cached spare, keeps streams splittable)
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // index draw proportional to weights (weights need not be normalized)
  size_t next_weighted(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0 || !std::isfinite(w)) fail(Errc::bad_argument, "next_weighted: bad weight");
      total += w;
    }
    if (total <= 0.0) fail(Errc::bad_argument, "next_weighted: zero total weight");
    double u = next_double() * total;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.size() - 1;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t state_[4];
};

}  // namespace relsum
