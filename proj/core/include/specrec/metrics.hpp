#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "specrec/signal.hpp"

namespace specrec::metrics {

using signal::BScan;

// Percentile-clip contrast pipeline applied identically to GT, degraded, and
// generated images before any comparison.
struct EvalStandardization {
  double p_low = 1.0;
  double p_high = 99.0;
};

// Linear-interpolated percentile (q = p/100 * (n-1) between order statistics).
double percentile(std::span<const double> values, double p);

// Clip to [p_low, p_high] percentiles, then map affinely onto [0,1].
// A constant image comes back all zeros with *degenerate set.
BScan standardize_for_eval(const BScan& img, const EvalStandardization& std_spec = {},
                           bool* degenerate = nullptr);

double mse(const BScan& a, const BScan& b);
// sqrt(mse) normalized by the GT dynamic range; NaN when the GT is constant.
double nrmse(const BScan& pred, const BScan& gt);
// 10*log10(L^2/mse); +inf when mse == 0.
double psnr(const BScan& a, const BScan& b, double L = 1.0);
// Mean of the local SSIM map: 11x11 Gaussian window (sigma 1.5),
// C1=(0.01L)^2, C2=(0.03L)^2, valid positions only. Min dimension >= 11.
double ssim(const BScan& a, const BScan& b, double L = 1.0);

struct MetricRow {
  std::string id;
  std::string comparison;  // "gen_vs_gt" | "degraded_vs_gt"
  double mse, nrmse, psnr, ssim;
};

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population
  long n = 0;
  long n_inf_excluded = 0;
};

// Pairwise-summation mean/std; +-inf values are excluded and counted.
Aggregate aggregate(std::span<const double> values);

struct MetricReport {
  std::vector<MetricRow> per_image;
  // comparison -> metric name -> aggregate
  std::map<std::string, std::map<std::string, Aggregate>> aggregates;
  EvalStandardization standardization;
  double scale = 1.0;  // metric reporting scale: 1 ([0,1]) or 255
};

void compute_aggregates(MetricReport& report);

// One evaluation unit: raw (linear-magnitude) spatial images.
struct EvalTriple {
  std::string id;
  BScan gen;
  BScan degraded;
  BScan gt;
};

// Standardizes all three images with the same pipeline and fills per-image
// rows plus aggregates. Parallel per image, order-independent aggregation.
MetricReport evaluate_images(const std::vector<EvalTriple>& triples,
                             const EvalStandardization& std_spec = {}, double scale = 1.0);

// `metrics.csv`: id,comparison,mse,nrmse,psnr,ssim
void write_metrics_csv(const std::filesystem::path& path, const MetricReport& report);
// `summary.txt`: mean (std) per metric per comparison, best value flagged.
void write_summary(const std::filesystem::path& path, const MetricReport& report);

// Full test-set evaluation of a finished training run: loads the checkpoint
// and run config, rebuilds the generator, runs it over the test split of the
// dataset, reconstructs spectral outputs to the spatial domain, and writes
// metrics.csv + summary.txt into out_dir.
struct EvalOptions {
  EvalStandardization standardization;
  double scale = 1.0;
  std::string checkpoint;  // empty = ckpt_best_mse.ckp1, falling back to ckpt_final.ckp1
};

MetricReport evaluate_testset(const std::filesystem::path& run_dir,
                              const std::filesystem::path& data_dir,
                              const std::filesystem::path& out_dir,
                              const EvalOptions& options = {});

}  // namespace specrec::metrics
