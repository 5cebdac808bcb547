#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "specrec/autodiff.hpp"
#include "specrec/rng.hpp"

namespace specrec::models {

using autodiff::Shape;
using autodiff::TensorT;

// Serializable tensor snapshot (parameters and batch-norm running stats).
template <typename T>
struct StateEntry {
  std::string name;
  Shape shape;
  std::vector<T> data;
};

// Common surface the training loop drives: a forward map plus parameter and
// state access.
template <typename T>
class Network {
 public:
  virtual ~Network() = default;
  virtual TensorT<T> forward(const TensorT<T>& x, Mode mode) = 0;
  virtual std::vector<TensorT<T>> parameters() = 0;
  virtual std::vector<StateEntry<T>> state() const = 0;
  virtual void load_state(const std::vector<StateEntry<T>>& entries) = 0;
  virtual long param_count() const = 0;
};

// ---------------------------------------------------------------------------
// Spatial-domain generator: SRGAN residual-block generator with the pixel
// up-sampling stages removed, so the output shape equals the input shape.
// Input/output are [B,H,W,1] in [-1,1] (tanh tail).
// ---------------------------------------------------------------------------
struct SRGANGeneratorConfig {
  int n_res_blocks = 8;  // full-scale default; desk runs use 4
  int channels = 64;     // desk runs use 16
  int kernel = 3;

  void validate() const;
};

template <typename T>
class SRGANGenerator : public Network<T> {
 public:
  SRGANGenerator(const SRGANGeneratorConfig& config, Rng& rng);
  ~SRGANGenerator() override;
  SRGANGenerator(SRGANGenerator&&) noexcept;

  TensorT<T> forward(const TensorT<T>& x, Mode mode) override;
  std::vector<TensorT<T>> parameters() override;
  std::vector<StateEntry<T>> state() const override;
  void load_state(const std::vector<StateEntry<T>>& entries) override;
  long param_count() const override;

  const SRGANGeneratorConfig& config() const { return config_; }

 private:
  SRGANGeneratorConfig config_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// VGG-style discriminator: strided conv blocks with LeakyReLU(0.2), dense
// head, sigmoid score per image. 2-D variant for B-scans, 1-D variant for
// per-A-scan spectral training.
// ---------------------------------------------------------------------------
struct DiscriminatorConfig {
  std::vector<std::pair<int, int>> conv_blocks =  // (channels, stride)
      {{16, 1}, {16, 2}, {32, 2}, {32, 2}, {64, 2}, {64, 2}};
  int dense_units = 64;
  int kernel = 3;

  void validate() const;
};

template <typename T>
class Discriminator2D : public Network<T> {
 public:
  Discriminator2D(const DiscriminatorConfig& config, int input_h, int input_w, Rng& rng);
  ~Discriminator2D() override;
  Discriminator2D(Discriminator2D&&) noexcept;

  // x [B,H,W,1] -> [B] probabilities in (0,1)
  TensorT<T> forward(const TensorT<T>& x, Mode mode) override;
  std::vector<TensorT<T>> parameters() override;
  std::vector<StateEntry<T>> state() const override;
  void load_state(const std::vector<StateEntry<T>>& entries) override;
  long param_count() const override;

 private:
  DiscriminatorConfig config_;
  int input_h_, input_w_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

template <typename T>
class Discriminator1D : public Network<T> {
 public:
  Discriminator1D(const DiscriminatorConfig& config, int input_len, Rng& rng);
  ~Discriminator1D() override;
  Discriminator1D(Discriminator1D&&) noexcept;

  // x [B,L,1] -> [B] probabilities in (0,1)
  TensorT<T> forward(const TensorT<T>& x, Mode mode) override;
  std::vector<TensorT<T>> parameters() override;
  std::vector<StateEntry<T>> state() const override;
  void load_state(const std::vector<StateEntry<T>>& entries) override;
  long param_count() const override;

 private:
  DiscriminatorConfig config_;
  int input_len_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Spectral-domain generator: 1-D dilated ResUNet-a over independent A-scans.
// Each block runs parallel branches of (BN -> ReLU -> dilated conv) x2 summed
// with the identity skip; the encoder halves the length per level with
// stride-2 convs, the decoder restores it with nearest-repeat + conv and
// additive cross skips. Linear output, same length as the input.
// ---------------------------------------------------------------------------
struct ResUNetAConfig {
  int depth = 3;
  int base_channels = 16;
  // One dilation set per encoder level plus one for the bottleneck
  // (depth + 1 entries). Empty = default_dilations(depth, input_len, kernel).
  std::vector<std::vector<int>> dilation_sets;
  int kernel_len = 3;

  void validate() const;
};

// The {1,3,15,31} ladder truncated so each branch's dilated kernel extent
// fits the feature length at its level.
std::vector<std::vector<int>> default_dilations(int depth, int input_len, int kernel_len);

template <typename T>
class ResUNetA : public Network<T> {
 public:
  ResUNetA(const ResUNetAConfig& config, Rng& rng);
  ~ResUNetA() override;
  ResUNetA(ResUNetA&&) noexcept;

  // x [B,L,1], L divisible by 2^depth -> [B,L,1]
  TensorT<T> forward(const TensorT<T>& x, Mode mode) override;
  std::vector<TensorT<T>> parameters() override;
  std::vector<StateEntry<T>> state() const override;
  void load_state(const std::vector<StateEntry<T>>& entries) override;
  long param_count() const override;

  const ResUNetAConfig& config() const { return config_; }

 private:
  ResUNetAConfig config_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace specrec::models
