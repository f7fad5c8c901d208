#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace synseg {

// Deterministic, platform-independent randomness. Everything below is pure
// integer arithmetic plus IEEE multiplies, so the same seed yields the same
// bytes on any conforming toolchain. std::mt19937 + std::*_distribution are
// deliberately avoided: the distributions are not pinned by the standard.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {
    // Warm up so nearby seeds decorrelate immediately.
    splitmix64(state_);
    splitmix64(state_);
  }

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1): 53 mantissa bits, exact on every IEEE platform.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Bounded integer in [0, n). Modulo bias is irrelevant here; determinism
  // is what matters.
  uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

// Independent stream for a named tensor / purpose under one master seed.
inline Rng seeded_stream(uint64_t seed, std::string_view name, uint64_t salt = 0) {
  uint64_t h = fnv1a64(name);
  uint64_t mix = seed;
  splitmix64(mix);
  return Rng(mix ^ h ^ (salt * 0x9e3779b97f4a7c15ULL));
}

}  // namespace synseg
