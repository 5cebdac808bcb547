#include "specrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "specrec/parallel.hpp"

namespace specrec::metrics {

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw DomainError("percentile: empty input");
  if (p < 0.0 || p > 100.0) throw DomainError("percentile: p outside [0,100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double q = p / 100.0 * double(sorted.size() - 1);
  const size_t lo = size_t(std::floor(q));
  const size_t hi = size_t(std::ceil(q));
  const double frac = q - double(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

BScan standardize_for_eval(const BScan& img, const EvalStandardization& std_spec,
                           bool* degenerate) {
  if (!img.pixels.all_finite()) throw DomainError("standardize_for_eval: non-finite pixel");
  if (std_spec.p_low < 0.0 || std_spec.p_high > 100.0 || std_spec.p_low >= std_spec.p_high)
    throw DomainError("standardize_for_eval: bad percentile bounds");
  const double lo = percentile(img.pixels.v, std_spec.p_low);
  const double hi = percentile(img.pixels.v, std_spec.p_high);
  BScan out;
  out.domain = signal::ValueDomain::kUnitNormalized;
  out.pixels = Array2D(img.height(), img.width());
  if (degenerate) *degenerate = false;
  if (!(lo < hi)) {
    if (degenerate) *degenerate = true;
    return out;  // all zeros
  }
  const double scale = 1.0 / (hi - lo);
  for (size_t i = 0; i < img.pixels.size(); i++) {
    double v = std::clamp(img.pixels.v[i], lo, hi);
    out.pixels.v[i] = (v - lo) * scale;
  }
  return out;
}

namespace {
void check_same(const BScan& a, const BScan& b, const char* what) {
  if (!a.pixels.same_shape(b.pixels))
    throw ShapeError(std::string(what) + ": image shapes differ");
}
}  // namespace

double mse(const BScan& a, const BScan& b) {
  check_same(a, b, "mse");
  double s = 0.0;
  for (size_t i = 0; i < a.pixels.size(); i++) {
    double d = a.pixels.v[i] - b.pixels.v[i];
    s += d * d;
  }
  return s / double(a.pixels.size());
}

double nrmse(const BScan& pred, const BScan& gt) {
  check_same(pred, gt, "nrmse");
  const double range = gt.pixels.max() - gt.pixels.min();
  if (!(range > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(mse(pred, gt)) / range;
}

double psnr(const BScan& a, const BScan& b, double L) {
  if (L <= 0.0) throw DomainError("psnr: L must be > 0");
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(L * L / m);
}

namespace {

// 11-tap Gaussian (sigma 1.5), normalized.
constexpr int kSsimWindow = 11;
std::vector<double> ssim_kernel() {
  std::vector<double> k(kSsimWindow);
  double s = 0.0;
  for (int i = 0; i < kSsimWindow; i++) {
    double d = double(i) - double(kSsimWindow - 1) / 2.0;
    k[size_t(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    s += k[size_t(i)];
  }
  for (auto& v : k) v /= s;
  return k;
}

// Separable valid-mode 11x11 Gaussian filter.
Array2D gauss_filter_valid(const Array2D& img, const std::vector<double>& k) {
  const int H = img.rows, W = img.cols;
  const int Hv = H - kSsimWindow + 1, Wv = W - kSsimWindow + 1;
  Array2D tmp(Hv, W);
  for (int y = 0; y < Hv; y++)
    for (int x = 0; x < W; x++) {
      double s = 0.0;
      for (int t = 0; t < kSsimWindow; t++) s += k[size_t(t)] * img.at(y + t, x);
      tmp.at(y, x) = s;
    }
  Array2D out(Hv, Wv);
  for (int y = 0; y < Hv; y++)
    for (int x = 0; x < Wv; x++) {
      double s = 0.0;
      for (int t = 0; t < kSsimWindow; t++) s += k[size_t(t)] * tmp.at(y, x + t);
      out.at(y, x) = s;
    }
  return out;
}

}  // namespace

double ssim(const BScan& a, const BScan& b, double L) {
  check_same(a, b, "ssim");
  const int H = a.height(), W = a.width();
  if (H < kSsimWindow || W < kSsimWindow)
    throw DomainError("ssim: image smaller than the 11x11 window");
  const auto k = ssim_kernel();
  const double C1 = (0.01 * L) * (0.01 * L);
  const double C2 = (0.03 * L) * (0.03 * L);

  Array2D aa(H, W), bb(H, W), ab(H, W);
  for (size_t i = 0; i < a.pixels.size(); i++) {
    aa.v[i] = a.pixels.v[i] * a.pixels.v[i];
    bb.v[i] = b.pixels.v[i] * b.pixels.v[i];
    ab.v[i] = a.pixels.v[i] * b.pixels.v[i];
  }
  Array2D mu_a = gauss_filter_valid(a.pixels, k);
  Array2D mu_b = gauss_filter_valid(b.pixels, k);
  Array2D m_aa = gauss_filter_valid(aa, k);
  Array2D m_bb = gauss_filter_valid(bb, k);
  Array2D m_ab = gauss_filter_valid(ab, k);

  double total = 0.0;
  for (size_t i = 0; i < mu_a.size(); i++) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = m_aa.v[i] - ma * ma;
    const double vb = m_bb.v[i] - mb * mb;
    const double cov = m_ab.v[i] - ma * mb;
    total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) /
             ((ma * ma + mb * mb + C1) * (va + vb + C2));
  }
  return total / double(mu_a.size());
}

Aggregate aggregate(std::span<const double> values) {
  Aggregate agg;
  std::vector<double> finite;
  finite.reserve(values.size());
  for (double v : values) {
    if (std::isinf(v))
      agg.n_inf_excluded++;
    else
      finite.push_back(v);
  }
  agg.n = long(finite.size());
  if (agg.n == 0) return agg;

  // pairwise summation keeps aggregation order-independent
  std::function<double(size_t, size_t)> psum = [&](size_t lo, size_t hi) -> double {
    if (hi - lo <= 8) {
      double s = 0.0;
      for (size_t i = lo; i < hi; i++) s += finite[i];
      return s;
    }
    size_t mid = lo + (hi - lo) / 2;
    return psum(lo, mid) + psum(mid, hi);
  };
  agg.mean = psum(0, finite.size()) / double(agg.n);
  for (auto& v : finite) v = (v - agg.mean) * (v - agg.mean);
  agg.stddev = std::sqrt(psum(0, finite.size()) / double(agg.n));
  return agg;
}

void compute_aggregates(MetricReport& report) {
  report.aggregates.clear();
  std::map<std::string, std::map<std::string, std::vector<double>>> buckets;
  for (const auto& row : report.per_image) {
    auto& bucket = buckets[row.comparison];
    bucket["mse"].push_back(row.mse);
    bucket["nrmse"].push_back(row.nrmse);
    bucket["psnr"].push_back(row.psnr);
    bucket["ssim"].push_back(row.ssim);
  }
  for (auto& [comparison, metrics_map] : buckets)
    for (auto& [name, values] : metrics_map)
      report.aggregates[comparison][name] = aggregate(values);
}

MetricReport evaluate_images(const std::vector<EvalTriple>& triples,
                             const EvalStandardization& std_spec, double scale) {
  if (triples.empty()) throw DomainError("evaluate_images: empty test set");
  if (scale != 1.0 && scale != 255.0)
    throw DomainError("evaluate_images: scale must be 1 or 255");
  MetricReport report;
  report.standardization = std_spec;
  report.scale = scale;
  report.per_image.resize(triples.size() * 2);

  parallel_for(long(triples.size()), [&](long i) {
    const auto& tr = triples[size_t(i)];
    BScan gen = standardize_for_eval(tr.gen, std_spec);
    BScan deg = standardize_for_eval(tr.degraded, std_spec);
    BScan gt = standardize_for_eval(tr.gt, std_spec);
    if (scale != 1.0) {
      for (auto& v : gen.pixels.v) v *= scale;
      for (auto& v : deg.pixels.v) v *= scale;
      for (auto& v : gt.pixels.v) v *= scale;
      gen.domain = deg.domain = gt.domain = signal::ValueDomain::kLinearMagnitude;
    }
    report.per_image[size_t(i) * 2] = {tr.id, "gen_vs_gt", mse(gen, gt), nrmse(gen, gt),
                                       psnr(gen, gt, scale), ssim(gen, gt, scale)};
    report.per_image[size_t(i) * 2 + 1] = {tr.id, "degraded_vs_gt", mse(deg, gt),
                                           nrmse(deg, gt), psnr(deg, gt, scale),
                                           ssim(deg, gt, scale)};
  });
  compute_aggregates(report);
  return report;
}

namespace {
std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}
}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open for writing: " + path.string());
  os << "id,comparison,mse,nrmse,psnr,ssim\n";
  for (const auto& r : report.per_image)
    os << r.id << ',' << r.comparison << ',' << fmt(r.mse) << ',' << fmt(r.nrmse) << ','
       << fmt(r.psnr) << ',' << fmt(r.ssim) << '\n';
}

void write_summary(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open for writing: " + path.string());
  os << "# standardization: p_low=" << report.standardization.p_low
     << " p_high=" << report.standardization.p_high << " scale=" << report.scale << "\n";
  os << "Test                 NRMSE             PSNR              SSIM              MSE\n";
  const char* comparisons[2] = {"gen_vs_gt", "degraded_vs_gt"};
  // lower is better for nrmse/mse, higher for psnr/ssim
  auto best_of = [&](const std::string& metric, bool higher) {
    double best = higher ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();
    for (const char* c : comparisons) {
      auto it = report.aggregates.find(c);
      if (it == report.aggregates.end()) continue;
      double v = it->second.at(metric).mean;
      best = higher ? std::max(best, v) : std::min(best, v);
    }
    return best;
  };
  for (const char* c : comparisons) {
    auto it = report.aggregates.find(c);
    if (it == report.aggregates.end()) continue;
    os << c;
    for (size_t pad = std::string(c).size(); pad < 21; pad++) os << ' ';
    for (const auto& [name, higher] :
         std::vector<std::pair<std::string, bool>>{{"nrmse", false}, {"psnr", true},
                                                   {"ssim", true}, {"mse", false}}) {
      const auto& agg = it->second.at(name);
      std::string cell = fmt(agg.mean) + " (" + fmt(agg.stddev) + ")";
      if (agg.mean == best_of(name, higher)) cell += "*";
      os << cell;
      for (size_t pad = cell.size(); pad < 18; pad++) os << ' ';
    }
    os << "\n";
  }
  long n_inf = 0;
  for (const auto& [c, m] : report.aggregates)
    for (const auto& [name, agg] : m) n_inf += agg.n_inf_excluded;
  if (n_inf > 0)
    os << "# " << n_inf << " infinite value(s) excluded from the means above\n";
  os << "# best value per metric marked with *\n";
}

}  // namespace specrec::metrics
