#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace sbr {

// Counter-based deterministic RNG (splitmix64 finalizer over key + counter).
// Identical seed + identical call sequence produces an identical stream,
// independent of thread scheduling or platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ull)) {}

  uint64_t next_u64() { return mix(key_ + kGolden * ++counter_); }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Fisher-Yates shuffle, deterministic for a given stream position.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derive an independent substream; the parent stream is not advanced.
  Rng fork(uint64_t stream) const {
    Rng r(0);
    r.key_ = mix(key_ ^ mix(stream + kGolden));
    r.counter_ = 0;
    return r;
  }

 private:
  static constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace sbr
