#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace mgtd::rng {

/// Deterministic 64-bit generator (SplitMix64). Used everywhere instead of
/// <random> engines so that sampled artifacts are reproducible across
/// platforms and standard-library versions.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53 bits of entropy.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform_range(double lo, double hi) {
    return lo + (hi - lo) * uniform();
  }

  /// Uniform integer in [0, n). n must be positive.
  uint64_t bounded(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  uint64_t state_;
};

inline uint64_t hash_bytes(std::string_view s, uint64_t seed = 0xcbf29ce484222325ULL) {
  uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;  // FNV-1a
  }
  return h;
}

/// Derives an independent stream seed from (base, tag, index).
inline uint64_t derive(uint64_t base, std::string_view tag, uint64_t index = 0) {
  SplitMix64 g(base ^ hash_bytes(tag) ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
  return g.next_u64();
}

template <typename T>
void shuffle(std::vector<T>& items, SplitMix64& g) {
  for (size_t i = items.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(g.bounded(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace mgtd::rng
