#include "specrec/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "specrec/metrics.hpp"
#include "specrec/signal.hpp"

namespace specrec::train {

namespace ad = specrec::autodiff;
namespace fs = std::filesystem;
using phantom::NormalizeMode;
using signal::BScan;
using signal::Fringe;
using signal::WindowSpec;

void TrainConfig::validate() const {
  if (epochs < 1) throw DomainError("TrainConfig: epochs must be >= 1");
  if (batch_size < 2) throw DomainError("TrainConfig: batch size must be >= 2 (batch norm)");
  if (lr_g <= 0.0 || lr_d <= 0.0) throw DomainError("TrainConfig: learning rates must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0) throw DomainError("TrainConfig: beta1 must be in [0,1)");
  if (lambda_adv < 0.0) throw DomainError("TrainConfig: lambda_adv must be >= 0");
  if (save_dir.empty()) throw DomainError("TrainConfig: save_dir required");
  if (ckpt_history < 0) throw DomainError("TrainConfig: ckpt_history must be >= 0");
}

void DatasetOptions::validate() const {
  if (alpha <= 0.0) throw DomainError("DatasetOptions: alpha must be > 0");
  if (select_stride < 1) throw DomainError("DatasetOptions: select_stride must be >= 1");
  if (strip_width < 0) throw DomainError("DatasetOptions: strip_width must be >= 0");
  if (augment_enabled) augment.validate();
}

template <typename T>
TensorT<T> bce(const TensorT<T>& p, double target) {
  return ad::bce_loss(p, target, 1e-7);
}

template <typename T>
TensorT<T> content_loss(const TensorT<T>& gen, const TensorT<T>& gt) {
  return ad::mse_loss(gen, gt);
}

SaveDecision checkpoint_rule(const BestHistory& history, const LossReport& report) {
  SaveDecision d;
  d.updated = history;
  auto trigger = [&](const char* tag) {
    if (!d.reason.empty()) d.reason += "+";
    d.reason += tag;
    d.save = true;
  };
  if (report.i_mse < history.best_i_mse) {
    trigger("i_mse");
    d.updated.best_i_mse = report.i_mse;
  }
  if (report.i_gt > history.best_i_gt) {
    trigger("i_gt");
    d.updated.best_i_gt = report.i_gt;
  }
  if (report.i_generated > history.best_i_generated) {
    trigger("i_generated");
    d.updated.best_i_generated = report.i_generated;
  }
  return d;
}

// ---------------------------------------------------------------------------
// gan_step
// ---------------------------------------------------------------------------

template <typename T>
void GanContext<T>::init(models::Network<T>& g, models::Network<T>& d, const TrainConfig& cfg) {
  generator = &g;
  discriminator = &d;
  g_params = g.parameters();
  d_params = d.parameters();
  opt_g = ad::AdamState<T>{};
  opt_g.beta1 = cfg.beta1;
  opt_g.lr = cfg.lr_g;
  opt_d = ad::AdamState<T>{};
  opt_d.beta1 = cfg.beta1;
  opt_d.lr = cfg.lr_d;
  lambda_adv = cfg.lambda_adv;
}

template <typename T>
LossReport gan_step(const TensorT<T>& degraded, const TensorT<T>& gt, GanContext<T>& ctx) {
  auto& G = *ctx.generator;
  auto& D = *ctx.discriminator;

  TensorT<T> fake = G.forward(degraded, Mode::kTrain);

  // discriminator update: separate GT and generated passes, one optimizer step
  for (auto& p : ctx.d_params) p.zero_grad();
  TensorT<T> loss_real = bce(D.forward(gt, Mode::kTrain), 1.0);
  loss_real.backward();
  TensorT<T> loss_fake = bce(D.forward(fake.detach(), Mode::kTrain), 0.0);
  loss_fake.backward();
  ad::adam_step(ctx.d_params, ctx.opt_d);

  // generator update against the freshly updated discriminator
  for (auto& p : ctx.g_params) p.zero_grad();
  TensorT<T> i_mse = content_loss(fake, gt);
  double g_adv = 0.0;
  if (ctx.lambda_adv > 0.0) {
    TensorT<T> adv = bce(D.forward(fake, Mode::kTrain), 1.0);
    g_adv = double(adv.item());
    ad::add(i_mse, ad::scale(adv, ctx.lambda_adv)).backward();
  } else {
    i_mse.backward();
  }
  ad::adam_step(ctx.g_params, ctx.opt_g);

  LossReport r;
  r.i_mse = double(i_mse.item());
  r.i_gt = double(loss_real.item());
  r.i_generated = double(loss_fake.item());
  r.g_adv = g_adv;
  if (!std::isfinite(r.i_mse) || !std::isfinite(r.i_gt) || !std::isfinite(r.i_generated) ||
      !std::isfinite(r.g_adv))
    throw NumericError("gan_step: non-finite loss (i_mse=" + std::to_string(r.i_mse) +
                       " i_gt=" + std::to_string(r.i_gt) +
                       " i_generated=" + std::to_string(r.i_generated) +
                       " g_adv=" + std::to_string(r.g_adv) + ")");
  return r;
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

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

// [-1,1] map with explicit range (degenerate -> zeros).
Array2D normalize_range(const Array2D& a, double lo, double hi) {
  Array2D out(a.rows, a.cols);
  if (!(lo < hi)) return out;
  const double s = 2.0 / (hi - lo);
  for (size_t i = 0; i < a.size(); i++) out.v[i] = (a.v[i] - lo) * s - 1.0;
  return out;
}

}  // namespace

Dataset load_split(const fs::path& data_dir, const std::string& split,
                   const DatasetOptions& options) {
  options.validate();
  const auto manifest = io::read_manifest(data_dir / "manifest.tsv");
  Dataset ds;
  ds.domain = options.domain;
  Rng aug_rng = Rng::derive(options.seed, "augment:" + split);

  for (const auto& entry : manifest) {
    if (entry.split != split) continue;
    const auto vol = io::read_oct1(data_dir / entry.path);
    if (vol.dims.size() != 3)
      throw ParseError("dataset volume must be 3-D [scans,n_k,width]: " + entry.path);
    const int n_scans = int(vol.dims[0]);
    const int n_k = int(vol.dims[1]);
    if (ds.n_k == 0)
      ds.n_k = n_k;
    else if (ds.n_k != n_k)
      throw ShapeError("dataset mixes fringe lengths");

    for (int scan : phantom::select_every_kth(n_scans, options.select_stride)) {
      Fringe gt_fringe = fringe_from_volume(vol, scan);
      Fringe win_fringe;
      if (options.domain == TrainDomain::kSpectral && options.augment_enabled) {
        win_fringe = phantom::augment_spectral(gt_fringe, options.augment, aug_rng).windowed;
      } else {
        win_fringe =
            apply_spectral_window(gt_fringe, WindowSpec::centered(n_k, options.alpha));
      }
      const std::string frame_id = entry.eye_id + "/b" + std::to_string(scan);

      if (options.domain == TrainDomain::kSpatial) {
        BScan gt_img = signal::reconstruct(gt_fringe, options.log_compress);
        BScan deg_img = signal::reconstruct(win_fringe, options.log_compress);
        if (options.augment_enabled) {
          phantom::SpatialSample s{std::move(deg_img), std::move(gt_img)};
          phantom::augment_spatial(s, options.augment, aug_rng);
          deg_img = std::move(s.degraded);
          gt_img = std::move(s.gt);
        }
        std::vector<std::pair<BScan, BScan>> pieces;
        if (options.strip_width > 0) {
          auto dstrips = phantom::to_strips(deg_img, options.strip_width);
          auto gstrips = phantom::to_strips(gt_img, options.strip_width);
          for (size_t s = 0; s < dstrips.size(); s++)
            pieces.emplace_back(std::move(dstrips[s]), std::move(gstrips[s]));
        } else {
          pieces.emplace_back(std::move(deg_img), std::move(gt_img));
        }
        for (size_t s = 0; s < pieces.size(); s++) {
          auto deg_n = phantom::normalize(pieces[s].first, NormalizeMode::kTrain);
          auto gt_n = phantom::normalize(pieces[s].second, NormalizeMode::kTrain);
          SpatialItem item;
          item.id = pieces.size() > 1 ? frame_id + "/s" + std::to_string(s) : frame_id;
          item.degraded_n = std::move(deg_n.img.pixels);
          item.gt_n = std::move(gt_n.img.pixels);
          if (ds.height == 0) {
            ds.height = item.gt_n.rows;
            ds.width = item.gt_n.cols;
          } else if (ds.height != item.gt_n.rows || ds.width != item.gt_n.cols) {
            throw ShapeError("dataset mixes image sizes");
          }
          ds.spatial.push_back(std::move(item));
        }
      } else {
        const Array2D gt_n =
            normalize_range(gt_fringe.samples, gt_fringe.samples.min(), gt_fringe.samples.max());
        const Array2D deg_n = normalize_range(win_fringe.samples, win_fringe.samples.min(),
                                              win_fringe.samples.max());
        const int W = gt_n.cols;
        for (int j = 0; j < W; j++) {
          SpectralItem item;
          item.id = frame_id + "/c" + std::to_string(j);
          item.degraded_n.resize(size_t(n_k));
          item.gt_n.resize(size_t(n_k));
          for (int k = 0; k < n_k; k++) {
            item.degraded_n[size_t(k)] = deg_n.at(k, j);
            item.gt_n[size_t(k)] = gt_n.at(k, j);
          }
          ds.spectral.push_back(std::move(item));
        }
      }
    }
  }
  return ds;
}

template <typename T>
Batch<T> make_batch(const Dataset& ds, std::span<const long> indices) {
  if (indices.empty()) throw DomainError("make_batch: empty index list");
  Batch<T> batch;
  const int B = int(indices.size());
  if (ds.domain == TrainDomain::kSpatial) {
    const long per = long(ds.height) * ds.width;
    std::vector<T> deg(size_t(B) * size_t(per)), gt(size_t(B) * size_t(per));
    for (int i = 0; i < B; i++) {
      const auto& item = ds.spatial.at(size_t(indices[size_t(i)]));
      for (long p = 0; p < per; p++) {
        deg[size_t(i) * size_t(per) + size_t(p)] = T(item.degraded_n.v[size_t(p)]);
        gt[size_t(i) * size_t(per) + size_t(p)] = T(item.gt_n.v[size_t(p)]);
      }
    }
    batch.degraded = TensorT<T>::from_vec({B, ds.height, ds.width, 1}, std::move(deg));
    batch.gt = TensorT<T>::from_vec({B, ds.height, ds.width, 1}, std::move(gt));
  } else {
    const long per = ds.n_k;
    std::vector<T> deg(size_t(B) * size_t(per)), gt(size_t(B) * size_t(per));
    for (int i = 0; i < B; i++) {
      const auto& item = ds.spectral.at(size_t(indices[size_t(i)]));
      for (long p = 0; p < per; p++) {
        deg[size_t(i) * size_t(per) + size_t(p)] = T(item.degraded_n[size_t(p)]);
        gt[size_t(i) * size_t(per) + size_t(p)] = T(item.gt_n[size_t(p)]);
      }
    }
    batch.degraded = TensorT<T>::from_vec({B, ds.n_k, 1}, std::move(deg));
    batch.gt = TensorT<T>::from_vec({B, ds.n_k, 1}, std::move(gt));
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {
TrainDomain domain_from(const io::RunConfig& cfg) {
  const std::string d = cfg.get_str("train.domain", "spatial");
  if (d == "spatial") return TrainDomain::kSpatial;
  if (d == "spectral") return TrainDomain::kSpectral;
  throw ParseError("train.domain must be spatial|spectral, got \"" + d + "\"");
}
}  // namespace

TrainConfig train_config_from(const io::RunConfig& cfg) {
  TrainConfig t;
  t.domain = domain_from(cfg);
  t.epochs = int(cfg.get_int("train.epochs", 1));
  t.batch_size = int(cfg.get_int("train.batch_size", 8));
  t.lr_g = cfg.get_double("train.lr_g", 1e-4);
  t.lr_d = cfg.get_double("train.lr_d", 1e-4);
  t.beta1 = cfg.get_double("train.beta1", 0.5);
  t.lambda_adv = cfg.get_double("train.lambda_adv", 1e-3);
  t.seed = cfg.get_u64("seed");
  t.eval_every = cfg.get_int("train.eval_every", 200);
  t.save_dir = cfg.get_str("train.save_dir", "");
  t.max_steps = cfg.get_int("train.max_steps", 0);
  t.ckpt_per_step = cfg.get_bool("train.ckpt_per_step", false);
  t.ckpt_history = int(cfg.get_int("train.ckpt_history", 4));
  const std::string prec = cfg.get_str("train.precision", "f32");
  if (prec == "f32")
    t.precision = Precision::kFloat32;
  else if (prec == "f64")
    t.precision = Precision::kFloat64;
  else
    throw ParseError("train.precision must be f32|f64");
  t.warm_start = cfg.get_str("train.warm_start", "");
  return t;
}

DatasetOptions dataset_options_from(const io::RunConfig& cfg) {
  DatasetOptions o;
  o.domain = domain_from(cfg);
  o.alpha = cfg.get_double("signal.alpha", 8.0);
  o.select_stride = int(cfg.get_int("data.select_stride", 8));
  o.strip_width = int(cfg.get_int("data.strip_width", 0));
  o.log_compress = cfg.get_bool("signal.log", false);
  o.augment_enabled = cfg.get_bool("augment.enabled", false);
  o.augment.h_flip = cfg.get_bool("augment.h_flip", true);
  o.augment.v_flip = cfg.get_bool("augment.v_flip", true);
  o.augment.window_center_jitter = int(cfg.get_int("augment.window_jitter", 0));
  o.augment.alpha_min = cfg.get_double("augment.alpha_min", o.alpha);
  o.augment.alpha_max = cfg.get_double("augment.alpha_max", o.alpha);
  o.seed = cfg.get_u64("seed");
  return o;
}

models::SRGANGeneratorConfig srgan_config_from(const io::RunConfig& cfg) {
  models::SRGANGeneratorConfig c;
  c.n_res_blocks = int(cfg.get_int("model.res_blocks", c.n_res_blocks));
  c.channels = int(cfg.get_int("model.channels", c.channels));
  c.kernel = int(cfg.get_int("model.kernel", c.kernel));
  return c;
}

models::DiscriminatorConfig discriminator_config_from(const io::RunConfig& cfg) {
  models::DiscriminatorConfig c;
  if (cfg.has("model.disc_blocks")) {
    // "16:1,16:2,32:2,..." = channels:stride pairs
    c.conv_blocks.clear();
    std::istringstream ss(cfg.get_str("model.disc_blocks"));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      auto colon = tok.find(':');
      if (colon == std::string::npos)
        throw ParseError("model.disc_blocks: expected channels:stride, got \"" + tok + "\"");
      c.conv_blocks.emplace_back(std::stoi(tok.substr(0, colon)),
                                 std::stoi(tok.substr(colon + 1)));
    }
  }
  c.dense_units = int(cfg.get_int("model.disc_dense", c.dense_units));
  c.kernel = int(cfg.get_int("model.kernel", c.kernel));
  return c;
}

models::ResUNetAConfig resuneta_config_from(const io::RunConfig& cfg, int input_len) {
  models::ResUNetAConfig c;
  c.depth = int(cfg.get_int("model.depth", c.depth));
  c.base_channels = int(cfg.get_int("model.base_channels", c.base_channels));
  c.kernel_len = int(cfg.get_int("model.kernel_len", c.kernel_len));
  const std::vector<int> ladder = cfg.get_int_list("model.dilations", {1, 3, 15, 31});
  for (int l = 0; l <= c.depth; l++) {
    const int len = input_len >> l;
    std::vector<int> set;
    for (int d : ladder)
      if ((c.kernel_len - 1) * d + 1 <= len) set.push_back(d);
    if (set.empty()) set.push_back(1);
    c.dilation_sets.push_back(std::move(set));
  }
  return c;
}

template <typename T>
std::unique_ptr<models::Network<T>> make_generator(TrainDomain domain, const io::RunConfig& cfg,
                                                   int spectral_len, Rng& rng) {
  if (domain == TrainDomain::kSpatial)
    return std::make_unique<models::SRGANGenerator<T>>(srgan_config_from(cfg), rng);
  return std::make_unique<models::ResUNetA<T>>(resuneta_config_from(cfg, spectral_len), rng);
}

template <typename T>
std::vector<io::CkptEntry> to_ckpt(const std::vector<models::StateEntry<T>>& state,
                                   const std::string& prefix) {
  std::vector<io::CkptEntry> out;
  out.reserve(state.size());
  for (const auto& e : state) {
    io::CkptEntry c;
    c.name = prefix + e.name;
    for (int d : e.shape) c.dims.push_back(uint32_t(d));
    c.data.resize(e.data.size());
    for (size_t i = 0; i < e.data.size(); i++) c.data[i] = float(e.data[i]);
    out.push_back(std::move(c));
  }
  return out;
}

template <typename T>
std::vector<models::StateEntry<T>> from_ckpt(const std::vector<io::CkptEntry>& entries,
                                             const std::string& prefix) {
  std::vector<models::StateEntry<T>> out;
  for (const auto& c : entries) {
    if (c.name.rfind(prefix, 0) != 0) continue;
    models::StateEntry<T> e;
    e.name = c.name.substr(prefix.size());
    for (uint32_t d : c.dims) e.shape.push_back(int(d));
    e.data.resize(c.data.size());
    for (size_t i = 0; i < c.data.size(); i++) e.data[i] = T(c.data[i]);
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// train_run
// ---------------------------------------------------------------------------

namespace {

// [-1,1] -> [0,1] image for sample exports
Array2D to_unit(const Array2D& a) {
  Array2D out(a.rows, a.cols);
  for (size_t i = 0; i < a.size(); i++) out.v[i] = std::clamp((a.v[i] + 1.0) / 2.0, 0.0, 1.0);
  return out;
}

template <typename T>
Array2D tensor_image(const TensorT<T>& t, int item, int H, int W) {
  Array2D img(H, W);
  const T* d = t.data().data() + long(item) * H * W;
  for (long i = 0; i < long(H) * W; i++) img.v[size_t(i)] = double(d[i]);
  return img;
}

// Spectral batches are [B,L,1]; exported as an [L x B] image of A-scans.
template <typename T>
Array2D tensor_columns(const TensorT<T>& t) {
  const int B = t.shape()[0], L = t.shape()[1];
  Array2D img(L, B);
  for (int b = 0; b < B; b++)
    for (int k = 0; k < L; k++) img.at(k, b) = double(t.data()[size_t(b) * L + k]);
  return img;
}

struct CkptFiles {
  std::vector<fs::path> step_files;
};

template <typename T>
void save_checkpoint(const fs::path& path, models::Network<T>& g, models::Network<T>& d) {
  auto entries = to_ckpt(g.state(), "g.");
  auto dent = to_ckpt(d.state(), "d.");
  entries.insert(entries.end(), dent.begin(), dent.end());
  io::write_ckp1(path, entries);
}

template <typename T>
RunResult run_train_impl(const fs::path& data_dir, const io::RunConfig& cfg,
                         const TrainConfig& tcfg) {
  const fs::path run_dir(tcfg.save_dir);
  fs::create_directories(run_dir);
  fs::create_directories(run_dir / "samples");
  cfg.write(run_dir / "config.txt");

  DatasetOptions dopts = dataset_options_from(cfg);
  Dataset ds = load_split(data_dir, "train", dopts);
  if (ds.sample_count() == 0) throw DomainError("train_run: empty training split");
  DatasetOptions vopts = dopts;
  vopts.augment_enabled = false;
  Dataset val = load_split(data_dir, "val", vopts);

  const bool spatial = tcfg.domain == TrainDomain::kSpatial;
  Rng g_rng = Rng::derive(tcfg.seed, "g_init");
  Rng d_rng = Rng::derive(tcfg.seed, "d_init");
  auto gen = make_generator<T>(tcfg.domain, cfg, ds.n_k, g_rng);
  std::unique_ptr<models::Network<T>> disc;
  if (spatial)
    disc = std::make_unique<models::Discriminator2D<T>>(discriminator_config_from(cfg),
                                                        ds.height, ds.width, d_rng);
  else
    disc = std::make_unique<models::Discriminator1D<T>>(discriminator_config_from(cfg), ds.n_k,
                                                        d_rng);

  if (!tcfg.warm_start.empty())
    gen->load_state(from_ckpt<T>(io::read_ckp1(tcfg.warm_start), "g."));

  GanContext<T> ctx;
  ctx.init(*gen, *disc, tcfg);

  std::ofstream losses(run_dir / "losses.csv");
  losses << "step,epoch,i_mse,i_gt,i_generated,g_adv\n";
  std::ofstream val_csv(run_dir / "val_metrics.csv");
  val_csv << "step,epoch,val_mse,val_ssim\n";

  Rng shuffle_rng = Rng::derive(tcfg.seed, "shuffle");
  std::vector<long> order(size_t(ds.sample_count()));
  for (size_t i = 0; i < order.size(); i++) order[i] = long(i);

  BestHistory best;
  CkptFiles ckpts;
  long step = 0;
  int epochs_done = 0;
  bool stop = false;

  auto save_step_ckpt = [&](const std::string& reason, bool refresh_best_mse) {
    fs::path p = run_dir / ("ckpt_" + std::to_string(step) + "_" + reason + ".ckp1");
    save_checkpoint(p, *gen, *disc);
    ckpts.step_files.push_back(p);
    if (tcfg.ckpt_history > 0)
      while (long(ckpts.step_files.size()) > tcfg.ckpt_history) {
        fs::remove(ckpts.step_files.front());
        ckpts.step_files.erase(ckpts.step_files.begin());
      }
    if (refresh_best_mse) {
      save_checkpoint(run_dir / "ckpt_best_mse.ckp1", *gen, *disc);
    }
  };

  auto run_validation = [&](int epoch) {
    if (val.sample_count() == 0) return;
    const int n = int(std::min<long>(4, val.sample_count()));
    std::vector<long> idx(size_t(n));
    for (int i = 0; i < n; i++) idx[size_t(i)] = i;
    Batch<T> b = make_batch<T>(val, idx);
    TensorT<T> out = gen->forward(b.degraded, Mode::kInfer);
    double vmse = double(ad::mse_loss(out.detach(), b.gt).item());
    double vssim = std::numeric_limits<double>::quiet_NaN();
    if (spatial && ds.height >= 11 && ds.width >= 11) {
      BScan a, g2;
      a.pixels = to_unit(tensor_image(out, 0, ds.height, ds.width));
      g2.pixels = to_unit(tensor_image(b.gt, 0, ds.height, ds.width));
      vssim = metrics::ssim(a, g2);
    }
    val_csv << step << ',' << epoch << ',' << vmse << ',' << vssim << "\n";
    val_csv.flush();
  };

  auto export_samples = [&](const Batch<T>& b, const TensorT<T>& fake) {
    auto stem = [&](const char* which) {
      return run_dir / "samples" /
             ("step_" + std::to_string(step) + "_" + which + ".pgm");
    };
    if (spatial) {
      io::write_pgm(stem("degraded"), to_unit(tensor_image(b.degraded, 0, ds.height, ds.width)));
      io::write_pgm(stem("gt"), to_unit(tensor_image(b.gt, 0, ds.height, ds.width)));
      io::write_pgm(stem("generated"), to_unit(tensor_image(fake, 0, ds.height, ds.width)));
    } else {
      io::write_pgm(stem("degraded"), to_unit(tensor_columns(b.degraded)));
      io::write_pgm(stem("gt"), to_unit(tensor_columns(b.gt)));
      io::write_pgm(stem("generated"), to_unit(tensor_columns(fake)));
    }
  };

  for (int epoch = 1; epoch <= tcfg.epochs && !stop; epoch++) {
    shuffle_rng.shuffle(order);
    if (!spatial && epoch > 15) {
      std::fprintf(stderr,
                   "[specrec] warning: spectral-domain training past epoch 15 (epoch %d); "
                   "overfitting risk rises from here\n",
                   epoch);
    }
    double sum_mse = 0, sum_gt = 0, sum_gen = 0, sum_adv = 0;
    long epoch_steps = 0;

    for (size_t base = 0; base + size_t(tcfg.batch_size) <= order.size();
         base += size_t(tcfg.batch_size)) {
      std::span<const long> idx(order.data() + base, size_t(tcfg.batch_size));
      Batch<T> batch = make_batch<T>(ds, idx);
      LossReport r;
      try {
        r = gan_step(batch.degraded, batch.gt, ctx);
      } catch (const NumericError&) {
        // diagnostic state dump, then propagate
        std::ofstream dump(run_dir / "abort_state.txt");
        dump << "step=" << step << " epoch=" << epoch << "\n";
        dump << "last losses: see losses.csv\n";
        losses.flush();
        throw;
      }
      step++;
      r.step = step;
      r.epoch = epoch;
      losses << r.step << ',' << r.epoch << ',' << r.i_mse << ',' << r.i_gt << ','
             << r.i_generated << ',' << r.g_adv << "\n";
      sum_mse += r.i_mse;
      sum_gt += r.i_gt;
      sum_gen += r.i_generated;
      sum_adv += r.g_adv;
      epoch_steps++;

      if (tcfg.ckpt_per_step) {
        auto d = checkpoint_rule(best, r);
        if (d.save) {
          best = d.updated;
          save_step_ckpt(d.reason, d.reason.find("i_mse") != std::string::npos);
        }
      }
      if (tcfg.eval_every > 0 && step % tcfg.eval_every == 0) {
        run_validation(epoch);
        export_samples(batch, gen->forward(batch.degraded, Mode::kInfer));
      }
      if (tcfg.max_steps > 0 && step >= tcfg.max_steps) {
        stop = true;
        break;
      }
    }
    losses.flush();
    epochs_done = epoch;

    if (!tcfg.ckpt_per_step && epoch_steps > 0) {
      LossReport mean;
      mean.i_mse = sum_mse / double(epoch_steps);
      mean.i_gt = sum_gt / double(epoch_steps);
      mean.i_generated = sum_gen / double(epoch_steps);
      mean.g_adv = sum_adv / double(epoch_steps);
      mean.step = step;
      mean.epoch = epoch;
      auto d = checkpoint_rule(best, mean);
      if (d.save) {
        best = d.updated;
        save_step_ckpt(d.reason, d.reason.find("i_mse") != std::string::npos);
      }
    }
  }

  save_checkpoint(run_dir / "ckpt_final.ckp1", *gen, *disc);
  return RunResult{run_dir, step, epochs_done};
}

}  // namespace

RunResult train_run(const fs::path& data_dir, const io::RunConfig& cfg) {
  TrainConfig tcfg = train_config_from(cfg);
  tcfg.validate();
  if (tcfg.precision == Precision::kFloat64) return run_train_impl<double>(data_dir, cfg, tcfg);
  return run_train_impl<float>(data_dir, cfg, tcfg);
}

// ---------------------------------------------------------------------------
// Explicit instantiations
// ---------------------------------------------------------------------------

#define SPECREC_INSTANTIATE(T)                                                                \
  template TensorT<T> bce(const TensorT<T>&, double);                                        \
  template TensorT<T> content_loss(const TensorT<T>&, const TensorT<T>&);                    \
  template struct GanContext<T>;                                                             \
  template LossReport gan_step(const TensorT<T>&, const TensorT<T>&, GanContext<T>&);        \
  template Batch<T> make_batch(const Dataset&, std::span<const long>);                       \
  template std::unique_ptr<models::Network<T>> make_generator(TrainDomain,                   \
                                                              const io::RunConfig&, int,     \
                                                              Rng&);                         \
  template std::vector<io::CkptEntry> to_ckpt(const std::vector<models::StateEntry<T>>&,     \
                                              const std::string&);                           \
  template std::vector<models::StateEntry<T>> from_ckpt(const std::vector<io::CkptEntry>&,   \
                                                        const std::string&);

SPECREC_INSTANTIATE(float)
SPECREC_INSTANTIATE(double)

#undef SPECREC_INSTANTIATE

}  // namespace specrec::train
