#pragma once

#include <cstdint>
#include <vector>

#include "strandopt/types.hpp"

namespace strandopt {

// All randomness in the project goes through these generators so that results
// are reproducible across platforms and standard library versions.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derive an independent stream from a base seed and a stream index.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t s = seed ^ (0x9e3779b97f4a7c15ull * (stream + 1));
  splitmix64(s);
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(uint64_t seed = 0, uint64_t stream = 0) : state_(mix_seed(seed, stream)) {}

  uint64_t next_u64() { return splitmix64(state_); }
  uint32_t next_u32() { return (uint32_t)(next_u64() >> 32); }

  // Uniform in [0, 1).
  double uniform() { return (double)(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform in [0, n).
  uint32_t uniform_index(uint32_t n) { return (uint32_t)(next_u64() % n); }

  Vec3 unit_vector() {
    double z = uniform(-1.0, 1.0);
    double a = uniform(0.0, 2.0 * 3.14159265358979323846);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return Vec3(r * std::cos(a), r * std::sin(a), z);
  }

 private:
  uint64_t state_;
};

// 2D Sobol sequence (direction numbers for the classic first two dimensions),
// XOR-scrambled by seed. Good enough stratification for root placement.
class Sobol2D {
 public:
  explicit Sobol2D(uint64_t seed = 0) {
    for (int k = 0; k < 32; ++k) v0_[k] = 1u << (31 - k);
    // dimension 2: primitive polynomial x+1, m_k = 2 m_{k-1} ^ m_{k-1}
    uint32_t m = 1;
    for (int k = 0; k < 32; ++k) {
      v1_[k] = m << (31 - k);
      m = (m << 1) ^ m;
      m &= (2u << (k + 1)) - 1;
    }
    uint64_t s = mix_seed(seed, 0x50b01u);
    scramble0_ = (uint32_t)(splitmix64(s) >> 32);
    scramble1_ = (uint32_t)(splitmix64(s) >> 32);
  }

  Vec2 sample(uint32_t index) const {
    uint32_t g = index ^ (index >> 1);
    uint32_t x = scramble0_, y = scramble1_;
    for (int k = 0; k < 32 && g; ++k, g >>= 1) {
      if (g & 1u) {
        x ^= v0_[k];
        y ^= v1_[k];
      }
    }
    return Vec2(x * 0x1.0p-32, y * 0x1.0p-32);
  }

 private:
  uint32_t v0_[32], v1_[32];
  uint32_t scramble0_ = 0, scramble1_ = 0;
};

// n roughly-evenly spaced unit directions on the upper hemisphere (z > 0).
inline std::vector<Vec3> fibonacci_hemisphere(int n) {
  std::vector<Vec3> dirs;
  dirs.reserve(n);
  const double ga = 2.39996322972865332;  // golden angle
  for (int i = 0; i < n; ++i) {
    double z = (i + 0.5) / n;
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double a = ga * i;
    dirs.emplace_back(r * std::cos(a), r * std::sin(a), z);
  }
  return dirs;
}

}  // namespace strandopt
