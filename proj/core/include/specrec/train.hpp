#pragma once

#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "specrec/autodiff.hpp"
#include "specrec/io.hpp"
#include "specrec/models.hpp"
#include "specrec/phantom.hpp"

namespace specrec::train {

using autodiff::TensorT;

struct TrainConfig {
  TrainDomain domain = TrainDomain::kSpatial;
  int epochs = 1;
  int batch_size = 8;
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  double beta1 = 0.5;
  double lambda_adv = 1e-3;
  uint64_t seed = 0;
  long eval_every = 200;  // validation metrics + sample export cadence (steps, 0 = off)
  std::string save_dir;
  long max_steps = 0;          // stop after this many generator steps (0 = epochs decide)
  bool ckpt_per_step = false;  // checkpoint rule cadence: per epoch by default
  int ckpt_history = 4;        // step checkpoints kept (0 = keep all)
  Precision precision = Precision::kFloat32;
  std::string warm_start;  // CKP1 path used to initialize the generator

  void validate() const;
};

struct LossReport {
  double i_mse = 0.0;
  double i_gt = 0.0;
  double i_generated = 0.0;
  double g_adv = 0.0;
  long step = 0;
  int epoch = 0;
};

// The paper's losses as differentiable ops. bce clamps to [1e-7, 1-1e-7].
template <typename T>
TensorT<T> bce(const TensorT<T>& p, double target);
template <typename T>
TensorT<T> content_loss(const TensorT<T>& gen, const TensorT<T>& gt);

// ---------------------------------------------------------------------------
// Checkpoint rule: save iff i_mse improved (lower) OR i_gt improved (higher)
// OR i_generated improved (higher); each trigger tracks its own best.
// ---------------------------------------------------------------------------
struct BestHistory {
  double best_i_mse = std::numeric_limits<double>::infinity();
  double best_i_gt = -std::numeric_limits<double>::infinity();
  double best_i_generated = -std::numeric_limits<double>::infinity();
};

struct SaveDecision {
  bool save = false;
  std::string reason;  // '+'-joined trigger list, e.g. "i_mse+i_gt"
  BestHistory updated;
};

SaveDecision checkpoint_rule(const BestHistory& history, const LossReport& report);

// ---------------------------------------------------------------------------
// One adversarial step: discriminator update on separate GT and generated
// minibatches, then the generator update with i_mse + lambda_adv * BCE. The
// generator forward runs once; its detached output feeds the D update and its
// retained graph feeds the G update. lambda_adv == 0 skips the discriminator
// in the G update entirely.
// ---------------------------------------------------------------------------
template <typename T>
struct GanContext {
  models::Network<T>* generator = nullptr;
  models::Network<T>* discriminator = nullptr;
  autodiff::AdamState<T> opt_g, opt_d;
  std::vector<TensorT<T>> g_params, d_params;
  double lambda_adv = 1e-3;

  void init(models::Network<T>& g, models::Network<T>& d, const TrainConfig& cfg);
};

template <typename T>
LossReport gan_step(const TensorT<T>& degraded, const TensorT<T>& gt, GanContext<T>& ctx);

// ---------------------------------------------------------------------------
// Dataset assembly: manifest -> degraded/GT pairs, train-normalized.
// Spatial items are whole B-scans (or strips); spectral items are single
// A-scans normalized against their frame's range.
// ---------------------------------------------------------------------------
struct DatasetOptions {
  TrainDomain domain = TrainDomain::kSpatial;
  double alpha = 8.0;
  int select_stride = 8;
  int strip_width = 0;  // spatial only; 0 = whole images
  bool log_compress = false;
  bool augment_enabled = false;
  phantom::AugmentSpec augment;
  uint64_t seed = 0;

  void validate() const;
};

struct SpatialItem {
  std::string id;
  Array2D degraded_n, gt_n;  // [-1,1]
};

struct SpectralItem {
  std::string id;  // "<eye>/<scan>/<col>"
  std::vector<double> degraded_n, gt_n;  // [-1,1], frame-range normalized
};

struct Dataset {
  TrainDomain domain = TrainDomain::kSpatial;
  int height = 0;  // spatial image height (or 0)
  int width = 0;   // spatial image width (or 0)
  int n_k = 0;     // spectral fringe length (or 0)
  std::vector<SpatialItem> spatial;
  std::vector<SpectralItem> spectral;

  long sample_count() const {
    return domain == TrainDomain::kSpatial ? long(spatial.size()) : long(spectral.size());
  }
};

Dataset load_split(const std::filesystem::path& data_dir, const std::string& split,
                   const DatasetOptions& options);

template <typename T>
struct Batch {
  TensorT<T> degraded, gt;
};

template <typename T>
Batch<T> make_batch(const Dataset& ds, std::span<const long> indices);

// ---------------------------------------------------------------------------
// Full training run. Reads the resolved run config (train.*, model.*,
// signal.*, augment.* keys), writes config.txt, losses.csv, checkpoints and
// sample exports into train.save_dir.
// ---------------------------------------------------------------------------
struct RunResult {
  std::filesystem::path run_dir;
  long steps = 0;
  int epochs = 0;
};

RunResult train_run(const std::filesystem::path& data_dir, const io::RunConfig& cfg);

// Config parsing shared with the CLI and the evaluation path.
TrainConfig train_config_from(const io::RunConfig& cfg);
DatasetOptions dataset_options_from(const io::RunConfig& cfg);
models::SRGANGeneratorConfig srgan_config_from(const io::RunConfig& cfg);
models::DiscriminatorConfig discriminator_config_from(const io::RunConfig& cfg);
models::ResUNetAConfig resuneta_config_from(const io::RunConfig& cfg, int input_len);

template <typename T>
std::unique_ptr<models::Network<T>> make_generator(TrainDomain domain, const io::RunConfig& cfg,
                                                   int spectral_len, Rng& rng);

// Checkpoint <-> model state conversion ("g."/"d." namespacing).
template <typename T>
std::vector<io::CkptEntry> to_ckpt(const std::vector<models::StateEntry<T>>& state,
                                   const std::string& prefix);
template <typename T>
std::vector<models::StateEntry<T>> from_ckpt(const std::vector<io::CkptEntry>& entries,
                                             const std::string& prefix);

}  // namespace specrec::train
