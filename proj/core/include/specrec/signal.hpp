#pragma once

#include <span>
#include <vector>

#include "specrec/common.hpp"

namespace specrec::signal {

enum class Provenance { kGroundTruth, kWindowed, kGenerated };

enum class ValueDomain { kLinearMagnitude, kLogCompressed, kUnitNormalized, kTrainNormalized };

// Spectral interferogram data: samples[k][j] is wavenumber sample k of
// A-scan j.
struct Fringe {
  Array2D samples;  // [n_k x width]
  Provenance meta = Provenance::kGroundTruth;

  int n_k() const { return samples.rows; }
  int width() const { return samples.cols; }
  void validate() const;
};

// Spatial-domain B-scan: pixels[depth][lateral].
struct BScan {
  Array2D pixels;  // [H x W]
  ValueDomain domain = ValueDomain::kLinearMagnitude;

  int height() const { return pixels.rows; }
  int width() const { return pixels.cols; }
  void validate() const;
};

// Gaussian spectral window. `center` is a sample index; the centered window
// sits at (n_k-1)/2, which is fractional for even n_k (that is what makes the
// mask coincide with gausswin). sigma_k = ((n_k-1)/2)/alpha, in samples.
struct WindowSpec {
  double alpha = 8.0;
  double center = 0.0;
  int n_k = 0;
  double sigma_k = 0.0;

  static WindowSpec centered(int n_k, double alpha);
  static WindowSpec at(int n_k, double alpha, double center);
  void validate() const;
};

// Vertical 1xn mean filter (the flower-style spatial degradation).
struct MeanFilterSpec {
  int n = 1;
  void validate() const;
};

struct CoherenceSpec {
  double lambda0_nm = 0.0;
  double delta_lambda_nm = 0.0;
  void validate() const;
};

// l_c = lambda0^2 / delta_lambda, in nm.
double coherence_length_nm(const CoherenceSpec& spec);

// MATLAB gausswin: w(n) = exp(-1/2 (alpha * n / ((N-1)/2))^2), n symmetric
// about zero in unit steps. N=1 degenerates to [1].
std::vector<double> gausswin(int n_k, double alpha);

// Elementwise multiply each A-scan by the Gaussian mask. Output tagged
// kWindowed.
Fringe apply_spectral_window(const Fringe& f, const WindowSpec& w);

// Per-column DFT magnitude, keeping the first floor(n_k/2) bins (positive
// depths). Optionally log-compress: 20*log10(mag + eps).
BScan reconstruct(const Fringe& f, bool log_compress = false, double log_eps = 1e-12);

// Per-column mean over n vertically adjacent pixels, replicate padding at the
// top/bottom borders.
BScan mean_filter_vertical(const BScan& img, const MeanFilterSpec& spec);

// Full width at half maximum of a 1-D profile around its argmax, by linear
// interpolation at the half-max crossings. NaN if a crossing is missing on
// either side.
double fwhm_pixels(std::span<const double> profile);

}  // namespace specrec::signal
