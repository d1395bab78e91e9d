#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace wsfcn {

// Deterministic random stream. All draws are derived from mt19937_64 output
// with hand-rolled transforms, so sequences are reproducible across standard
// library implementations. Sub-streams for independent purposes (dataset,
// augmentation, parameter init, gate) are forked with a tag.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed), seed_base_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    std::uint64_t span = std::uint64_t(hi - lo) + 1;
    return lo + int(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Independent sub-stream; stable for a given (seed, tag) pair.
  Rng fork(std::uint64_t tag) const {
    return Rng(splitmix(seed_base_ ^ (tag * 0x9E3779B97F4A7C15ull)));
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 eng_;
  std::uint64_t seed_base_;
};

}  // namespace wsfcn
