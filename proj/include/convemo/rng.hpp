#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace convemo {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// A named, seeded random stream. (seed, stream_id) fully determines the
// sequence, so every consumer of randomness (weight init, data order,
// masking, dropout, negative sampling, ...) owns its own stream and
// enabling one feature never perturbs another feature's draws. Workers
// that need independent randomness derive sub-streams by stream_id.
//
// Streams must not be shared across threads.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream_id = 0)
      : gen_(splitmix64(seed ^ (0x9E3779B97F4A7C15ULL * (stream_id + 1)))) {}

  // Uniform in [0, 1). Consumes exactly one engine draw.
  double u01() { return double(gen_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return u01() < p; }

  // Standard normal via Box-Muller. Consumes exactly two engine draws.
  double normal() {
    const double u1 = 1.0 - u01();  // (0, 1], keeps log finite
    const double u2 = u01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform index in [0, n). Modulo bias is negligible for the small n
  // used anywhere in this project.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(gen_() % n);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace convemo
