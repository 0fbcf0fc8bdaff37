// include/joinss/rng.h
//
// Deterministic, splittable random stream.
//
// The engine is std::mt19937_64 seeded from a 64-bit seed. Child streams are
// derived by mixing the parent seed with a label through the SplitMix64
// finalizer, so a query's randomness is a pure function of (seed, labels).

#pragma once

#include <random>

#include "joinss/types.h"

namespace joinss {

class Rng {
 public:
  explicit Rng(u64 seed = 0) : seed_(seed), engine_(mix(seed)) {}

  u64 seed() const { return seed_; }

  // Raw 64 random bits.
  u64 next_u64() { return engine_(); }

  // Uniform draw in the open interval (0, 1) with 53 bits of precision.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1p-53;
  }

  // True with probability p (p outside [0,1] is clamped).
  bool bernoulli(double p) {
    if (p >= 1.0) return true;
    if (p <= 0.0) return false;
    return uniform() < p;
  }

  // Deterministic independent stream identified by label.
  Rng derive_child(u64 label) const { return Rng(mix(seed_ ^ mix(label + 0x632be59bd9b4e019ULL))); }

  static u64 mix(u64 z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  u64 seed_;
  std::mt19937_64 engine_;
};

}  // namespace joinss
