#pragma once

#include <cstdint>

namespace lvf {

// Seeded PRNG for deterministic data generation (splitmix64 core).
// Byte-identical sequences on every platform, unlike the standard
// library distributions whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

 private:
  uint64_t state_;
};

// Derives an independent stream seed from a master seed. Stage constants
// fan one user-facing seed out to every pipeline stage.
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  Rng r(master ^ (0xD1B54A32D192ED03ull * (stream + 1)));
  r.next_u64();
  return r.next_u64();
}

}  // namespace lvf
