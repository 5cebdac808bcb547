#pragma once

#include <array>
#include <string>
#include <vector>

#include "specrec/rng.hpp"
#include "specrec/signal.hpp"

namespace specrec::phantom {

using signal::BScan;
using signal::Fringe;
using signal::WindowSpec;

// Layered-retina stand-in: cosine reflectors at fixed depth fractions plus
// random speckle scatterers, all under a broad Gaussian source envelope.
struct PhantomSpec {
  int n_layers = 3;
  std::vector<double> layer_depths = {0.2, 0.35, 0.55};       // fractions of the depth range
  std::vector<double> layer_reflectivities = {1.0, 0.7, 0.5};
  double speckle_density = 6.0;   // scatterers per A-scan
  double speckle_amplitude = 0.1; // per-scatterer amplitude upper bound
  double noise_sigma = 0.005;    // additive Gaussian noise on fringe samples
  int n_k = 256;
  int width = 64;                // A-scans per B-scan
  int n_bscans_per_eye = 16;
  uint64_t seed = 0;
  double source_alpha = 2.5;     // source envelope width (gausswin alpha)

  void validate() const;
};

struct EyeRecord {
  std::string patient_id;
  std::string eye_id;
  std::vector<Fringe> volume;  // one fringe array per B-scan
};

struct SplitAssignment {
  std::vector<std::string> train, val, test;  // eye ids
  std::array<double, 3> ratios{0.6, 0.2, 0.2};
};

EyeRecord generate_eye(const PhantomSpec& spec, const std::string& patient_id,
                       const std::string& eye_id);

// Patient-disjoint split with largest-remainder eye-count targets. Patient
// groups are placed largest-first (seeded shuffle within equal sizes) into
// the split with the biggest remaining deficit; ties break train, val, test.
struct EyeKey {
  std::string patient_id;
  std::string eye_id;
};
SplitAssignment split_by_patient(const std::vector<EyeKey>& eyes,
                                 const std::array<double, 3>& ratios, uint64_t seed);

// Indices 0, k, 2k, ... ("every 8th B-scan").
std::vector<int> select_every_kth(int n, int k = 8);

BScan crop_axial(const BScan& img, int top, int height);

std::vector<BScan> to_strips(const BScan& img, int strip_width = 20);
BScan concat_strips(const std::vector<BScan>& strips);

enum class NormalizeMode { kTrain, kEval };  // [-1,1] / [0,1]

struct Normalized {
  BScan img;
  double lo = 0.0, hi = 1.0;
  bool degenerate = false;  // constant input, output all zeros
};

Normalized normalize(const BScan& img, NormalizeMode mode);
BScan denormalize(const BScan& img, NormalizeMode mode, double lo, double hi);

struct AugmentSpec {
  bool h_flip = false;
  bool v_flip = false;
  int window_center_jitter = 0;        // max |offset| in samples
  double alpha_min = 8.0, alpha_max = 8.0;

  void validate() const;
};

BScan flip_horizontal(const BScan& img);
BScan flip_vertical(const BScan& img);

// Spatial augmentation: independent 50% horizontal/vertical flips applied
// identically to both images of the pair.
struct SpatialSample {
  BScan degraded;
  BScan gt;
};
void augment_spatial(SpatialSample& sample, const AugmentSpec& spec, Rng& rng);

// Spectral augmentation: random window center offset and alpha, returning
// the windowed fringe alongside the drawn WindowSpec.
struct SpectralAugment {
  Fringe windowed;
  WindowSpec window;
};
SpectralAugment augment_spectral(const Fringe& gt, const AugmentSpec& spec, Rng& rng);

}  // namespace specrec::phantom
