#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace specrec {

// Deterministic random source. Wraps std::mt19937_64 (bit-exact across
// platforms) but supplies its own uniform/normal transforms because the
// standard distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  // Independent stream keyed by (seed, label), e.g. one per eye.
  static Rng derive(uint64_t seed, std::string_view label);

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [lo, hi] via rejection sampling.
  int64_t uniform_int(int64_t lo, int64_t hi);

  // Standard normal via Box-Muller. Two uniforms per draw, no caching, so the
  // draw count per call is fixed.
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  bool bernoulli(double p = 0.5) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; i--) {
      size_t j = size_t(uniform_int(0, int64_t(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace specrec
