#include "specrec/fft.hpp"

#include <cmath>
#include <numbers>

#include "specrec/common.hpp"

namespace specrec {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_pow2(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  if (!is_pow2(int(n))) throw DomainError("fft_pow2: length must be a power of two");
  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; i++) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / double(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; j++) {
        auto u = a[i + j];
        auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

std::vector<std::complex<double>> dft_real(std::span<const double> x) {
  const size_t n = x.size();
  if (n == 0) throw DomainError("dft_real: empty input");
  if (is_pow2(int(n))) {
    std::vector<std::complex<double>> a(n);
    for (size_t i = 0; i < n; i++) a[i] = x[i];
    fft_pow2(a);
    return a;
  }
  std::vector<std::complex<double>> out(n);
  const double w0 = -2.0 * std::numbers::pi / double(n);
  for (size_t k = 0; k < n; k++) {
    double re = 0.0, im = 0.0;
    for (size_t t = 0; t < n; t++) {
      double ang = w0 * double(k) * double(t);
      re += x[t] * std::cos(ang);
      im += x[t] * std::sin(ang);
    }
    out[k] = {re, im};
  }
  return out;
}

}  // namespace specrec
