#pragma once

#include <cstdint>

namespace pbev {

// SplitMix64 generator. Chosen over std::mt19937_64 + distributions because
// every draw here must be bit-identical across platforms and standard
// library versions; the distribution adapters in <random> are not.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1), 53 bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n); n must be nonzero. The modulo bias is
  // irrelevant for the small n used here.
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // Independent stream keyed off this generator's current state without
  // advancing it. Used to give each scene object its own stream so object
  // draws do not depend on iteration order elsewhere.
  SplitMix64 fork(std::uint64_t key) const {
    SplitMix64 child(state_ ^ ((key + 0x9e3779b97f4a7c15ULL) * 0xff51afd7ed558ccdULL));
    child.next_u64();
    return child;
  }

 private:
  std::uint64_t state_;
};

}  // namespace pbev
