// metrics::evaluate_testset - runs a finished training run's generator over
// the test split and produces the Table-2-shaped report.

#include <algorithm>
#include <cmath>

#include "specrec/metrics.hpp"
#include "specrec/train.hpp"

namespace specrec::metrics {

namespace fs = std::filesystem;
namespace ad = specrec::autodiff;
using autodiff::TensorT;
using signal::Fringe;
using signal::WindowSpec;

namespace {

Fringe fringe_from_volume(const io::Oct1& vol, int scan) {
  const int n_k = int(vol.dims[1]);
  const int W = int(vol.dims[2]);
  Fringe f;
  f.samples = Array2D(n_k, W);
  const size_t base = size_t(scan) * size_t(n_k) * size_t(W);
  for (size_t i = 0; i < f.samples.size(); i++) f.samples.v[i] = double(vol.data[base + i]);
  return f;
}

struct TestFrame {
  std::string id;
  Fringe gt;
};

std::vector<TestFrame> load_test_frames(const fs::path& data_dir, int select_stride) {
  const auto manifest = io::read_manifest(data_dir / "manifest.tsv");
  std::vector<TestFrame> frames;
  for (const auto& entry : manifest) {
    if (entry.split != "test") continue;
    const auto vol = io::read_oct1(data_dir / entry.path);
    if (vol.dims.size() != 3)
      throw ParseError("dataset volume must be 3-D [scans,n_k,width]: " + entry.path);
    for (int scan : phantom::select_every_kth(int(vol.dims[0]), select_stride))
      frames.push_back({entry.eye_id + "/b" + std::to_string(scan),
                        fringe_from_volume(vol, scan)});
  }
  return frames;
}

template <typename T>
MetricReport evaluate_impl(const fs::path& run_dir, const fs::path& data_dir,
                           const fs::path& out_dir, const EvalOptions& options,
                           const io::RunConfig& cfg) {
  const train::DatasetOptions dopts = train::dataset_options_from(cfg);
  const TrainDomain domain = dopts.domain;
  auto frames = load_test_frames(data_dir, dopts.select_stride);
  if (frames.empty()) throw DomainError("evaluate_testset: empty test split");
  const int n_k = frames[0].gt.n_k();

  fs::path ckpt = options.checkpoint.empty() ? run_dir / "ckpt_best_mse.ckp1"
                                             : fs::path(options.checkpoint);
  if (options.checkpoint.empty() && !fs::exists(ckpt)) ckpt = run_dir / "ckpt_final.ckp1";
  const auto entries = io::read_ckp1(ckpt);

  Rng init_rng(0);  // weights are replaced by load_state
  auto gen = train::make_generator<T>(domain, cfg, n_k, init_rng);
  gen->load_state(train::from_ckpt<T>(entries, "g."));

  std::vector<EvalTriple> triples(frames.size());
  for (size_t fi = 0; fi < frames.size(); fi++) {
    const auto& frame = frames[fi];
    const Fringe win =
        apply_spectral_window(frame.gt, WindowSpec::centered(n_k, dopts.alpha));
    EvalTriple tr;
    tr.id = frame.id;
    tr.gt = signal::reconstruct(frame.gt, dopts.log_compress);
    tr.degraded = signal::reconstruct(win, dopts.log_compress);

    if (domain == TrainDomain::kSpatial) {
      auto norm = phantom::normalize(tr.degraded, phantom::NormalizeMode::kTrain);
      const int H = norm.img.height(), W = norm.img.width();
      std::vector<T> x(size_t(H) * size_t(W));
      for (size_t i = 0; i < x.size(); i++) x[i] = T(norm.img.pixels.v[i]);
      TensorT<T> out = gen->forward(TensorT<T>::from_vec({1, H, W, 1}, std::move(x)),
                                    Mode::kInfer);
      signal::BScan gen_n;
      gen_n.domain = signal::ValueDomain::kTrainNormalized;
      gen_n.pixels = Array2D(H, W);
      for (size_t i = 0; i < gen_n.pixels.size(); i++) {
        double v = std::clamp(double(out.data()[i]), -1.0, 1.0);
        gen_n.pixels.v[i] = v;
      }
      tr.gen = phantom::denormalize(gen_n, phantom::NormalizeMode::kTrain, norm.lo, norm.hi);
    } else {
      // per-A-scan recovery on the frame-range-normalized windowed fringe,
      // then back to fringe units and Fourier transform to the spatial domain
      const double lo = win.samples.min(), hi = win.samples.max();
      const int W = win.width();
      std::vector<T> x(size_t(W) * size_t(n_k));
      const double s = lo < hi ? 2.0 / (hi - lo) : 0.0;
      for (int j = 0; j < W; j++)
        for (int k = 0; k < n_k; k++)
          x[size_t(j) * size_t(n_k) + size_t(k)] = T((win.samples.at(k, j) - lo) * s - 1.0);
      TensorT<T> out = gen->forward(TensorT<T>::from_vec({W, n_k, 1}, std::move(x)),
                                    Mode::kInfer);
      Fringe gen_fringe;
      gen_fringe.meta = signal::Provenance::kGenerated;
      gen_fringe.samples = Array2D(n_k, W);
      for (int j = 0; j < W; j++)
        for (int k = 0; k < n_k; k++) {
          double u = (double(out.data()[size_t(j) * size_t(n_k) + size_t(k)]) + 1.0) / 2.0;
          gen_fringe.samples.at(k, j) = lo + u * (hi - lo);
        }
      tr.gen = signal::reconstruct(gen_fringe, dopts.log_compress);
    }
    triples[fi] = std::move(tr);
  }

  MetricReport report = evaluate_images(triples, options.standardization, options.scale);
  fs::create_directories(out_dir);
  write_metrics_csv(out_dir / "metrics.csv", report);
  write_summary(out_dir / "summary.txt", report);
  return report;
}

}  // namespace

MetricReport evaluate_testset(const fs::path& run_dir, const fs::path& data_dir,
                              const fs::path& out_dir, const EvalOptions& options) {
  const auto cfg = io::RunConfig::from_file(run_dir / "config.txt");
  const std::string prec = cfg.get_str("train.precision", "f32");
  if (prec == "f64") return evaluate_impl<double>(run_dir, data_dir, out_dir, options, cfg);
  return evaluate_impl<float>(run_dir, data_dir, out_dir, options, cfg);
}

}  // namespace specrec::metrics
