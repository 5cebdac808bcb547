#include "specrec/rng.hpp"

#include <cmath>
#include <numbers>

namespace specrec {

namespace {
uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= uint64_t(uint8_t(c));
    h *= 0x100000001b3ull;
  }
  return h;
}
uint64_t splitmix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace

Rng Rng::derive(uint64_t seed, std::string_view label) {
  return Rng(splitmix(seed ^ fnv1a(label)));
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  uint64_t range = uint64_t(hi - lo) + 1;
  if (range == 0) return int64_t(next_u64());  // full 64-bit range
  uint64_t limit = UINT64_MAX - UINT64_MAX % range;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return lo + int64_t(x % range);
}

double Rng::normal() {
  double u1 = uniform(), u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace specrec
