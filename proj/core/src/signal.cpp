#include "specrec/signal.hpp"

#include <cmath>
#include <limits>

#include "specrec/fft.hpp"
#include "specrec/parallel.hpp"

namespace specrec::signal {

void Fringe::validate() const {
  if (n_k() < 2) throw DomainError("Fringe: n_k must be >= 2");
  if (!samples.all_finite()) throw DomainError("Fringe: non-finite sample");
}

void BScan::validate() const {
  if (!pixels.all_finite()) throw DomainError("BScan: non-finite pixel");
  if (domain == ValueDomain::kUnitNormalized) {
    if (pixels.min() < 0.0 || pixels.max() > 1.0)
      throw DomainError("BScan: unit-normalized pixels outside [0,1]");
  } else if (domain == ValueDomain::kTrainNormalized) {
    if (pixels.min() < -1.0 || pixels.max() > 1.0)
      throw DomainError("BScan: train-normalized pixels outside [-1,1]");
  }
}

WindowSpec WindowSpec::centered(int n_k, double alpha) {
  return at(n_k, alpha, double(n_k - 1) / 2.0);
}

WindowSpec WindowSpec::at(int n_k, double alpha, double center) {
  WindowSpec w;
  w.alpha = alpha;
  w.center = center;
  w.n_k = n_k;
  w.sigma_k = (double(n_k - 1) / 2.0) / alpha;
  w.validate();
  return w;
}

void WindowSpec::validate() const {
  if (alpha <= 0.0) throw DomainError("WindowSpec: alpha must be > 0");
  if (n_k < 2) throw DomainError("WindowSpec: n_k must be >= 2");
  if (center < 0.0 || center > double(n_k - 1))
    throw DomainError("WindowSpec: center outside [0, n_k)");
  if (!(sigma_k > 0.0)) throw DomainError("WindowSpec: sigma_k must be > 0");
  double expect = (double(n_k - 1) / 2.0) / alpha;
  if (std::abs(sigma_k - expect) > 1e-9 * expect)
    throw DomainError("WindowSpec: sigma_k inconsistent with alpha");
}

void MeanFilterSpec::validate() const {
  if (n < 1 || n % 2 == 0) throw DomainError("MeanFilterSpec: n must be odd and >= 1");
}

void CoherenceSpec::validate() const {
  if (lambda0_nm <= 0.0 || delta_lambda_nm <= 0.0)
    throw DomainError("CoherenceSpec: wavelengths must be > 0");
}

double coherence_length_nm(const CoherenceSpec& spec) {
  spec.validate();
  return spec.lambda0_nm * spec.lambda0_nm / spec.delta_lambda_nm;
}

std::vector<double> gausswin(int n_k, double alpha) {
  if (n_k < 1) throw DomainError("gausswin: n_k must be >= 1");
  if (alpha <= 0.0) throw DomainError("gausswin: alpha must be > 0");
  if (n_k == 1) return {1.0};
  std::vector<double> w(size_t(n_k));
  const double half = double(n_k - 1) / 2.0;
  for (int i = 0; i < n_k; i++) {
    double n = double(i) - half;
    double t = alpha * n / half;
    w[size_t(i)] = std::exp(-0.5 * t * t);
  }
  return w;
}

Fringe apply_spectral_window(const Fringe& f, const WindowSpec& w) {
  f.validate();
  w.validate();
  if (w.n_k != f.n_k()) throw ShapeError("apply_spectral_window: window length != fringe n_k");
  Fringe out;
  out.samples = Array2D(f.n_k(), f.width());
  out.meta = Provenance::kWindowed;
  const int W = f.width();
  for (int i = 0; i < f.n_k(); i++) {
    double t = (double(i) - w.center) / w.sigma_k;
    double m = std::exp(-0.5 * t * t);
    const double* src = &f.samples.v[size_t(i) * W];
    double* dst = &out.samples.v[size_t(i) * W];
    for (int j = 0; j < W; j++) dst[j] = src[j] * m;
  }
  return out;
}

BScan reconstruct(const Fringe& f, bool log_compress, double log_eps) {
  f.validate();
  const int n_k = f.n_k();
  const int W = f.width();
  const int H = n_k / 2;
  BScan out;
  out.pixels = Array2D(H, W);
  out.domain = log_compress ? ValueDomain::kLogCompressed : ValueDomain::kLinearMagnitude;
  parallel_for(W, [&](long j) {
    std::vector<double> col(size_t(n_k));
    for (int i = 0; i < n_k; i++) col[size_t(i)] = f.samples.at(i, int(j));
    auto spec = dft_real(col);
    for (int i = 0; i < H; i++) {
      double mag = std::abs(spec[size_t(i)]);
      out.pixels.at(i, int(j)) = log_compress ? 20.0 * std::log10(mag + log_eps) : mag;
    }
  });
  return out;
}

BScan mean_filter_vertical(const BScan& img, const MeanFilterSpec& spec) {
  spec.validate();
  const int H = img.height(), W = img.width();
  if (spec.n > H) throw DomainError("mean_filter_vertical: n exceeds image height");
  BScan out;
  out.pixels = Array2D(H, W);
  out.domain = img.domain;
  const int r = spec.n / 2;
  for (int y = 0; y < H; y++) {
    for (int x = 0; x < W; x++) {
      double s = 0.0;
      for (int d = -r; d <= r; d++) {
        int yy = y + d;
        yy = yy < 0 ? 0 : (yy >= H ? H - 1 : yy);  // replicate padding
        s += img.pixels.at(yy, x);
      }
      out.pixels.at(y, x) = s / double(spec.n);
    }
  }
  return out;
}

double fwhm_pixels(std::span<const double> profile) {
  const long n = long(profile.size());
  if (n < 3) return std::numeric_limits<double>::quiet_NaN();
  long peak = 0;
  for (long i = 1; i < n; i++)
    if (profile[size_t(i)] > profile[size_t(peak)]) peak = i;
  const double half = profile[size_t(peak)] / 2.0;
  if (!(half > 0.0)) return std::numeric_limits<double>::quiet_NaN();

  double left = std::numeric_limits<double>::quiet_NaN();
  for (long i = peak; i > 0; i--) {
    double a = profile[size_t(i - 1)], b = profile[size_t(i)];
    if (a < half && b >= half) {
      left = double(i - 1) + (half - a) / (b - a);
      break;
    }
  }
  double right = std::numeric_limits<double>::quiet_NaN();
  for (long i = peak; i < n - 1; i++) {
    double a = profile[size_t(i)], b = profile[size_t(i + 1)];
    if (a >= half && b < half) {
      right = double(i) + (a - half) / (a - b);
      break;
    }
  }
  return right - left;  // NaN propagates if either crossing is missing
}

}  // namespace specrec::signal
