#pragma once

#include <complex>
#include <span>
#include <vector>

namespace specrec {

bool is_pow2(int n);

// In-place iterative radix-2 Cooley-Tukey DFT (unnormalized, e^{-i2pi kn/N}
// sign convention). Length must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a);

// Forward DFT of a real sequence, any length >= 1: radix-2 fast path for
// powers of two, O(n^2) direct evaluation otherwise. Returns all n bins.
std::vector<std::complex<double>> dft_real(std::span<const double> x);

}  // namespace specrec
