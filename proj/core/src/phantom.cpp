#include "specrec/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "specrec/fft.hpp"

namespace specrec::phantom {

void PhantomSpec::validate() const {
  if (n_layers < 0) throw DomainError("PhantomSpec: n_layers < 0");
  if (int(layer_depths.size()) != n_layers || int(layer_reflectivities.size()) != n_layers)
    throw DomainError("PhantomSpec: layer list lengths != n_layers");
  double prev = 0.0;
  for (double d : layer_depths) {
    if (!(d > prev && d < 1.0)) throw DomainError("PhantomSpec: depths must increase in (0,1)");
    prev = d;
  }
  for (double r : layer_reflectivities)
    if (!(r > 0.0)) throw DomainError("PhantomSpec: reflectivities must be > 0");
  if (speckle_density < 0.0 || speckle_amplitude < 0.0 || noise_sigma < 0.0)
    throw DomainError("PhantomSpec: negative speckle/noise parameter");
  if (!is_pow2(n_k)) throw DomainError("PhantomSpec: n_k must be a power of two");
  if (width < 1 || n_bscans_per_eye < 1) throw DomainError("PhantomSpec: empty geometry");
  if (source_alpha <= 0.0) throw DomainError("PhantomSpec: source_alpha must be > 0");
}

EyeRecord generate_eye(const PhantomSpec& spec, const std::string& patient_id,
                       const std::string& eye_id) {
  spec.validate();
  EyeRecord eye;
  eye.patient_id = patient_id;
  eye.eye_id = eye_id;
  eye.volume.reserve(size_t(spec.n_bscans_per_eye));

  Rng rng = Rng::derive(spec.seed, eye_id);
  const auto envelope = signal::gausswin(spec.n_k, spec.source_alpha);
  const int n_speckle = int(std::lround(spec.speckle_density));
  const double two_pi = 2.0 * std::numbers::pi;

  for (int b = 0; b < spec.n_bscans_per_eye; b++) {
    Fringe f;
    f.samples = Array2D(spec.n_k, spec.width);
    f.meta = signal::Provenance::kGroundTruth;
    for (int j = 0; j < spec.width; j++) {
      // reflector set for this A-scan: fixed layers + random scatterers
      std::vector<double> freq, amp, phase;
      for (int m = 0; m < spec.n_layers; m++) {
        freq.push_back(spec.layer_depths[size_t(m)] * double(spec.n_k) / 2.0);
        amp.push_back(spec.layer_reflectivities[size_t(m)]);
        phase.push_back(rng.uniform(0.0, two_pi));
      }
      for (int s = 0; s < n_speckle; s++) {
        freq.push_back(rng.uniform(0.05, 0.95) * double(spec.n_k) / 2.0);
        amp.push_back(rng.uniform(0.0, spec.speckle_amplitude));
        phase.push_back(rng.uniform(0.0, two_pi));
      }
      for (int k = 0; k < spec.n_k; k++) {
        double s = 0.0;
        for (size_t m = 0; m < freq.size(); m++)
          s += amp[m] * std::cos(two_pi * freq[m] * double(k) / double(spec.n_k) + phase[m]);
        s *= envelope[size_t(k)];
        if (spec.noise_sigma > 0.0) s += rng.normal(0.0, spec.noise_sigma);
        f.samples.at(k, j) = s;
      }
    }
    eye.volume.push_back(std::move(f));
  }
  return eye;
}

SplitAssignment split_by_patient(const std::vector<EyeKey>& eyes,
                                 const std::array<double, 3>& ratios, uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("split_by_patient: ratios must sum to 1");
  for (double r : ratios)
    if (r < 0.0) throw DomainError("split_by_patient: negative ratio");

  // group eyes by patient, preserving first-seen order
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  for (const auto& e : eyes) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.first == e.patient_id; });
    if (it == groups.end())
      groups.push_back({e.patient_id, {e.eye_id}});
    else
      it->second.push_back(e.eye_id);
  }
  int n_nonzero = 0;
  for (double r : ratios)
    if (r > 0.0) n_nonzero++;
  if (int(groups.size()) < n_nonzero)
    throw DomainError("split_by_patient: fewer patients than splits");

  // largest-remainder eye-count targets
  const long total = long(eyes.size());
  std::array<long, 3> target{};
  std::array<double, 3> frac{};
  long assigned = 0;
  for (int i = 0; i < 3; i++) {
    double exact = ratios[size_t(i)] * double(total);
    target[size_t(i)] = long(std::floor(exact));
    frac[size_t(i)] = exact - double(target[size_t(i)]);
    assigned += target[size_t(i)];
  }
  while (assigned < total) {
    int best = 0;
    for (int i = 1; i < 3; i++)
      if (frac[size_t(i)] > frac[size_t(best)]) best = i;
    target[size_t(best)]++;
    frac[size_t(best)] = -1.0;
    assigned++;
  }

  // place groups largest-first into the split with the biggest deficit
  Rng rng = Rng::derive(seed, "split");
  rng.shuffle(groups);
  std::stable_sort(groups.begin(), groups.end(),
                   [](const auto& a, const auto& b) { return a.second.size() > b.second.size(); });

  SplitAssignment out;
  out.ratios = ratios;
  std::array<long, 3> placed{};
  std::array<std::vector<std::string>*, 3> dest{&out.train, &out.val, &out.test};
  for (const auto& [patient, group_eyes] : groups) {
    int best = 0;
    long best_deficit = target[0] - placed[0];
    for (int i = 1; i < 3; i++) {
      long d = target[size_t(i)] - placed[size_t(i)];
      if (d > best_deficit) {
        best = i;
        best_deficit = d;
      }
    }
    for (const auto& id : group_eyes) dest[size_t(best)]->push_back(id);
    placed[size_t(best)] += long(group_eyes.size());
  }
  return out;
}

std::vector<int> select_every_kth(int n, int k) {
  if (k < 1) throw DomainError("select_every_kth: k must be >= 1");
  std::vector<int> idx;
  for (int i = 0; i < n; i += k) idx.push_back(i);
  return idx;
}

BScan crop_axial(const BScan& img, int top, int height) {
  if (top < 0 || height < 1 || top + height > img.height())
    throw ShapeError("crop_axial: window out of range");
  BScan out;
  out.domain = img.domain;
  out.pixels = Array2D(height, img.width());
  for (int y = 0; y < height; y++)
    for (int x = 0; x < img.width(); x++) out.pixels.at(y, x) = img.pixels.at(top + y, x);
  return out;
}

std::vector<BScan> to_strips(const BScan& img, int strip_width) {
  if (strip_width < 1 || img.width() % strip_width != 0)
    throw DomainError("to_strips: width not divisible by strip width");
  const int n = img.width() / strip_width;
  std::vector<BScan> strips;
  strips.reserve(size_t(n));
  for (int s = 0; s < n; s++) {
    BScan strip;
    strip.domain = img.domain;
    strip.pixels = Array2D(img.height(), strip_width);
    for (int y = 0; y < img.height(); y++)
      for (int x = 0; x < strip_width; x++)
        strip.pixels.at(y, x) = img.pixels.at(y, s * strip_width + x);
    strips.push_back(std::move(strip));
  }
  return strips;
}

BScan concat_strips(const std::vector<BScan>& strips) {
  if (strips.empty()) throw DomainError("concat_strips: no strips");
  const int H = strips[0].height();
  int W = 0;
  for (const auto& s : strips) {
    if (s.height() != H) throw ShapeError("concat_strips: inconsistent strip heights");
    W += s.width();
  }
  BScan out;
  out.domain = strips[0].domain;
  out.pixels = Array2D(H, W);
  int x0 = 0;
  for (const auto& s : strips) {
    for (int y = 0; y < H; y++)
      for (int x = 0; x < s.width(); x++) out.pixels.at(y, x0 + x) = s.pixels.at(y, x);
    x0 += s.width();
  }
  return out;
}

Normalized normalize(const BScan& img, NormalizeMode mode) {
  Normalized out;
  out.lo = img.pixels.min();
  out.hi = img.pixels.max();
  out.img.pixels = Array2D(img.height(), img.width());
  out.img.domain = mode == NormalizeMode::kTrain ? signal::ValueDomain::kTrainNormalized
                                                 : signal::ValueDomain::kUnitNormalized;
  if (!(out.lo < out.hi)) {
    out.degenerate = true;  // constant image maps to all zeros
    return out;
  }
  const double scale = 1.0 / (out.hi - out.lo);
  for (size_t i = 0; i < img.pixels.size(); i++) {
    double u = (img.pixels.v[i] - out.lo) * scale;
    out.img.pixels.v[i] = mode == NormalizeMode::kTrain ? 2.0 * u - 1.0 : u;
  }
  return out;
}

BScan denormalize(const BScan& img, NormalizeMode mode, double lo, double hi) {
  BScan out;
  out.domain = signal::ValueDomain::kLinearMagnitude;
  out.pixels = Array2D(img.height(), img.width());
  for (size_t i = 0; i < img.pixels.size(); i++) {
    double u = img.pixels.v[i];
    if (mode == NormalizeMode::kTrain) u = (u + 1.0) / 2.0;
    out.pixels.v[i] = lo + u * (hi - lo);
  }
  return out;
}

void AugmentSpec::validate() const {
  if (window_center_jitter < 0) throw DomainError("AugmentSpec: negative jitter");
  if (alpha_min > alpha_max || alpha_min <= 0.0)
    throw DomainError("AugmentSpec: bad alpha range");
}

BScan flip_horizontal(const BScan& img) {
  BScan out;
  out.domain = img.domain;
  out.pixels = Array2D(img.height(), img.width());
  for (int y = 0; y < img.height(); y++)
    for (int x = 0; x < img.width(); x++)
      out.pixels.at(y, x) = img.pixels.at(y, img.width() - 1 - x);
  return out;
}

BScan flip_vertical(const BScan& img) {
  BScan out;
  out.domain = img.domain;
  out.pixels = Array2D(img.height(), img.width());
  for (int y = 0; y < img.height(); y++)
    for (int x = 0; x < img.width(); x++)
      out.pixels.at(y, x) = img.pixels.at(img.height() - 1 - y, x);
  return out;
}

void augment_spatial(SpatialSample& sample, const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.h_flip && rng.bernoulli()) {
    sample.degraded = flip_horizontal(sample.degraded);
    sample.gt = flip_horizontal(sample.gt);
  }
  if (spec.v_flip && rng.bernoulli()) {
    sample.degraded = flip_vertical(sample.degraded);
    sample.gt = flip_vertical(sample.gt);
  }
}

SpectralAugment augment_spectral(const Fringe& gt, const AugmentSpec& spec, Rng& rng) {
  spec.validate();
  const int n_k = gt.n_k();
  const double centered = double(n_k - 1) / 2.0;
  long offset = spec.window_center_jitter > 0
                    ? rng.uniform_int(-spec.window_center_jitter, spec.window_center_jitter)
                    : 0;
  double center = centered + double(offset);
  if (center < 0.0 || center > double(n_k - 1))
    throw DomainError("augment_spectral: jitter pushes center outside [0, n_k)");
  double alpha = spec.alpha_min == spec.alpha_max ? spec.alpha_min
                                                  : rng.uniform(spec.alpha_min, spec.alpha_max);
  SpectralAugment out;
  out.window = WindowSpec::at(n_k, alpha, center);
  out.windowed = apply_spectral_window(gt, out.window);
  return out;
}

}  // namespace specrec::phantom
