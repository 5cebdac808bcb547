#include "specrec/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace specrec::models {

namespace ad = specrec::autodiff;
using ad::ConvOpts;
using ad::Padding;

void SRGANGeneratorConfig::validate() const {
  if (n_res_blocks < 1) throw DomainError("SRGANGeneratorConfig: n_res_blocks must be >= 1");
  if (channels < 1) throw DomainError("SRGANGeneratorConfig: channels must be >= 1");
  if (kernel < 1) throw DomainError("SRGANGeneratorConfig: kernel must be >= 1");
}

void DiscriminatorConfig::validate() const {
  if (conv_blocks.empty()) throw DomainError("DiscriminatorConfig: no conv blocks");
  bool strided = false;
  for (auto [c, s] : conv_blocks) {
    if (c < 1 || s < 1) throw DomainError("DiscriminatorConfig: bad block spec");
    if (s > 1) strided = true;
  }
  if (!strided) throw DomainError("DiscriminatorConfig: at least one strided block required");
  if (dense_units < 1) throw DomainError("DiscriminatorConfig: dense_units must be >= 1");
  if (kernel < 1) throw DomainError("DiscriminatorConfig: kernel must be >= 1");
}

void ResUNetAConfig::validate() const {
  if (depth < 1) throw DomainError("ResUNetAConfig: depth must be >= 1");
  if (base_channels < 1) throw DomainError("ResUNetAConfig: base_channels must be >= 1");
  if (kernel_len < 1) throw DomainError("ResUNetAConfig: kernel_len must be >= 1");
  if (int(dilation_sets.size()) != depth + 1)
    throw DomainError("ResUNetAConfig: need depth+1 dilation sets (encoder levels + bottleneck)");
  for (const auto& set : dilation_sets) {
    if (set.empty() || set.size() > 8)
      throw DomainError("ResUNetAConfig: each block needs 1..8 parallel branches");
    for (int d : set)
      if (d < 1) throw DomainError("ResUNetAConfig: dilation must be >= 1");
  }
}

std::vector<std::vector<int>> default_dilations(int depth, int input_len, int kernel_len) {
  std::vector<std::vector<int>> sets;
  for (int l = 0; l <= depth; l++) {
    int len = input_len >> l;
    std::vector<int> set;
    for (int d : {1, 3, 15, 31})
      if ((kernel_len - 1) * d + 1 <= len) set.push_back(d);
    if (set.empty()) set.push_back(1);
    sets.push_back(std::move(set));
  }
  return sets;
}

// ---------------------------------------------------------------------------
// Internal layer helpers
// ---------------------------------------------------------------------------

namespace {

template <typename T>
struct Registry {
  std::vector<std::pair<std::string, TensorT<T>>> params;
  std::vector<std::pair<std::string, ad::BatchNormState<T>*>> bns;

  TensorT<T> add_param(const std::string& name, const Shape& shape, std::vector<T> init) {
    auto t = TensorT<T>::from_vec(shape, std::move(init), /*requires_grad=*/true);
    params.emplace_back(name, t);
    return t;
  }

  std::vector<TensorT<T>> parameters() const {
    std::vector<TensorT<T>> out;
    out.reserve(params.size());
    for (const auto& [n, t] : params) out.push_back(t);
    return out;
  }

  long param_count() const {
    long n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
  }

  std::vector<StateEntry<T>> state() const {
    std::vector<StateEntry<T>> out;
    for (const auto& [name, t] : params)
      out.push_back({name, t.shape(), std::vector<T>(t.data().begin(), t.data().end())});
    for (const auto& [name, bn] : bns) {
      out.push_back({name + ".running_mean", Shape{int(bn->running_mean.size())},
                     bn->running_mean});
      out.push_back({name + ".running_var", Shape{int(bn->running_var.size())},
                     bn->running_var});
    }
    return out;
  }

  void load_state(const std::vector<StateEntry<T>>& entries) {
    std::map<std::string, const StateEntry<T>*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e;
    auto fetch = [&](const std::string& name, const Shape& shape) -> const StateEntry<T>* {
      auto it = by_name.find(name);
      if (it == by_name.end())
        throw ShapeError("load_state: missing tensor \"" + name + "\"");
      if (it->second->shape != shape)
        throw ShapeError("load_state: shape mismatch for \"" + name + "\"");
      return it->second;
    };
    for (auto& [name, t] : params) {
      const auto* e = fetch(name, t.shape());
      std::copy(e->data.begin(), e->data.end(), t.mutable_data().begin());
    }
    for (auto& [name, bn] : bns) {
      bn->running_mean = fetch(name + ".running_mean", Shape{int(bn->running_mean.size())})->data;
      bn->running_var = fetch(name + ".running_var", Shape{int(bn->running_var.size())})->data;
    }
  }
};

template <typename T>
std::vector<T> normal_init(Rng& rng, long n, double stddev) {
  std::vector<T> v(size_t(n));
  for (auto& x : v) x = T(rng.normal(0.0, stddev));
  return v;
}

template <typename T>
struct Conv2DLayer {
  TensorT<T> w, b;
  ConvOpts opts;
  bool has_bias = false;

  Conv2DLayer() = default;
  Conv2DLayer(Registry<T>& reg, const std::string& name, int k, int cin, int cout, int stride,
              bool bias, Rng& rng) {
    opts = {stride, 1, Padding::kSame};
    has_bias = bias;
    const long fan_in = long(k) * k * cin;
    w = reg.add_param(name + ".w", Shape{k, k, cin, cout},
                      normal_init<T>(rng, long(k) * k * cin * cout, std::sqrt(2.0 / double(fan_in))));
    if (bias) b = reg.add_param(name + ".b", Shape{cout}, std::vector<T>(size_t(cout), T(0)));
  }

  TensorT<T> operator()(const TensorT<T>& x) const {
    auto y = ad::conv2d(x, w, opts);
    return has_bias ? ad::bias_add(y, b) : y;
  }
};

template <typename T>
struct Conv1DLayer {
  TensorT<T> w, b;
  ConvOpts opts;
  bool has_bias = false;

  Conv1DLayer() = default;
  Conv1DLayer(Registry<T>& reg, const std::string& name, int k, int cin, int cout, int stride,
              int dilation, bool bias, Rng& rng) {
    opts = {stride, dilation, Padding::kSame};
    has_bias = bias;
    const long fan_in = long(k) * cin;
    w = reg.add_param(name + ".w", Shape{k, cin, cout},
                      normal_init<T>(rng, long(k) * cin * cout, std::sqrt(2.0 / double(fan_in))));
    if (bias) b = reg.add_param(name + ".b", Shape{cout}, std::vector<T>(size_t(cout), T(0)));
  }

  TensorT<T> operator()(const TensorT<T>& x) const {
    auto y = ad::conv1d(x, w, opts);
    return has_bias ? ad::bias_add(y, b) : y;
  }
};

template <typename T>
struct BNLayer {
  TensorT<T> gamma, beta;
  std::unique_ptr<ad::BatchNormState<T>> st;  // stable address across layer moves

  BNLayer() = default;
  BNLayer(Registry<T>& reg, const std::string& name, int channels)
      : st(std::make_unique<ad::BatchNormState<T>>(channels)) {
    gamma = reg.add_param(name + ".gamma", Shape{channels}, std::vector<T>(size_t(channels), T(1)));
    beta = reg.add_param(name + ".beta", Shape{channels}, std::vector<T>(size_t(channels), T(0)));
    reg.bns.emplace_back(name, st.get());
  }

  TensorT<T> operator()(const TensorT<T>& x, Mode m) const {
    return ad::batch_norm(x, gamma, beta, *st, m);
  }
};

template <typename T>
struct PReLULayer {
  TensorT<T> alpha;

  PReLULayer() = default;
  PReLULayer(Registry<T>& reg, const std::string& name, int channels) {
    alpha = reg.add_param(name + ".alpha", Shape{channels},
                          std::vector<T>(size_t(channels), T(0.25)));
  }

  TensorT<T> operator()(const TensorT<T>& x) const { return ad::prelu(x, alpha); }
};

template <typename T>
struct DenseLayer {
  TensorT<T> w, b;

  DenseLayer() = default;
  DenseLayer(Registry<T>& reg, const std::string& name, int in, int out, Rng& rng) {
    w = reg.add_param(name + ".w", Shape{in, out},
                      normal_init<T>(rng, long(in) * out, std::sqrt(2.0 / double(in + out))));
    b = reg.add_param(name + ".b", Shape{out}, std::vector<T>(size_t(out), T(0)));
  }

  TensorT<T> operator()(const TensorT<T>& x) const { return ad::dense(x, w, b); }
};

template <typename T>
void check_unit_range(const TensorT<T>& x, const char* what) {
  const double tol = 1e-6;
  for (T v : x.data())
    if (double(v) < -1.0 - tol || double(v) > 1.0 + tol)
      throw DomainError(std::string(what) + ": input outside [-1,1]");
}

long ceil_div(long a, long b) { return (a + b - 1) / b; }

}  // namespace

// ---------------------------------------------------------------------------
// SRGANGenerator
// ---------------------------------------------------------------------------

template <typename T>
struct SRGANGenerator<T>::Impl {
  Registry<T> reg;
  Conv2DLayer<T> head;
  PReLULayer<T> head_act;
  struct ResBlock {
    Conv2DLayer<T> conv1;
    BNLayer<T> bn1;
    PReLULayer<T> act;
    Conv2DLayer<T> conv2;
    BNLayer<T> bn2;
  };
  std::vector<ResBlock> blocks;
  Conv2DLayer<T> merge;
  BNLayer<T> merge_bn;
  Conv2DLayer<T> tail;
};

template <typename T>
SRGANGenerator<T>::SRGANGenerator(const SRGANGeneratorConfig& config, Rng& rng)
    : config_(config), impl_(std::make_unique<Impl>()) {
  config.validate();
  const int C = config.channels, k = config.kernel;
  auto& im = *impl_;
  im.head = Conv2DLayer<T>(im.reg, "head", k, 1, C, 1, /*bias=*/true, rng);
  im.head_act = PReLULayer<T>(im.reg, "head_act", C);
  for (int i = 0; i < config.n_res_blocks; i++) {
    std::string p = "res" + std::to_string(i);
    typename Impl::ResBlock blk;
    blk.conv1 = Conv2DLayer<T>(im.reg, p + ".conv1", k, C, C, 1, false, rng);
    blk.bn1 = BNLayer<T>(im.reg, p + ".bn1", C);
    blk.act = PReLULayer<T>(im.reg, p + ".act", C);
    blk.conv2 = Conv2DLayer<T>(im.reg, p + ".conv2", k, C, C, 1, false, rng);
    blk.bn2 = BNLayer<T>(im.reg, p + ".bn2", C);
    im.blocks.push_back(std::move(blk));
  }
  im.merge = Conv2DLayer<T>(im.reg, "merge", k, C, C, 1, false, rng);
  im.merge_bn = BNLayer<T>(im.reg, "merge_bn", C);
  im.tail = Conv2DLayer<T>(im.reg, "tail", k, C, 1, 1, true, rng);
}

template <typename T>
SRGANGenerator<T>::~SRGANGenerator() = default;
template <typename T>
SRGANGenerator<T>::SRGANGenerator(SRGANGenerator&&) noexcept = default;

template <typename T>
TensorT<T> SRGANGenerator<T>::forward(const TensorT<T>& x, Mode mode) {
  if (x.shape().size() != 4 || x.shape()[3] != 1)
    throw ShapeError("SRGANGenerator: input must be [B,H,W,1], got " + ad::shape_str(x.shape()));
  check_unit_range(x, "SRGANGenerator");
  auto& im = *impl_;
  auto h = im.head_act(im.head(x));
  auto z = h;
  for (auto& blk : im.blocks) {
    auto t = blk.conv1(z);
    t = blk.bn1(t, mode);
    t = blk.act(t);
    t = blk.conv2(t);
    t = blk.bn2(t, mode);
    z = ad::add(z, t);
  }
  auto t = im.merge_bn(im.merge(z), mode);
  z = ad::add(h, t);  // global skip from the head features
  return ad::tanh_op(im.tail(z));
}

template <typename T>
std::vector<TensorT<T>> SRGANGenerator<T>::parameters() {
  return impl_->reg.parameters();
}
template <typename T>
std::vector<StateEntry<T>> SRGANGenerator<T>::state() const {
  return impl_->reg.state();
}
template <typename T>
void SRGANGenerator<T>::load_state(const std::vector<StateEntry<T>>& entries) {
  impl_->reg.load_state(entries);
}
template <typename T>
long SRGANGenerator<T>::param_count() const {
  return impl_->reg.param_count();
}

// ---------------------------------------------------------------------------
// Discriminator2D
// ---------------------------------------------------------------------------

template <typename T>
struct Discriminator2D<T>::Impl {
  Registry<T> reg;
  struct Block {
    Conv2DLayer<T> conv;
    BNLayer<T> bn;
    bool has_bn = false;
  };
  std::vector<Block> blocks;
  DenseLayer<T> fc1, fc2;
  long flat = 0;
};

template <typename T>
Discriminator2D<T>::Discriminator2D(const DiscriminatorConfig& config, int input_h, int input_w,
                                    Rng& rng)
    : config_(config), input_h_(input_h), input_w_(input_w), impl_(std::make_unique<Impl>()) {
  config.validate();
  if (input_h < 1 || input_w < 1) throw DomainError("Discriminator2D: bad input size");
  auto& im = *impl_;
  int cin = 1;
  long h = input_h, w = input_w;
  for (size_t i = 0; i < config.conv_blocks.size(); i++) {
    auto [c, s] = config.conv_blocks[i];
    std::string p = "block" + std::to_string(i);
    typename Impl::Block blk;
    blk.conv = Conv2DLayer<T>(im.reg, p, config.kernel, cin, c, s, /*bias=*/i == 0, rng);
    if (i > 0) {
      blk.bn = BNLayer<T>(im.reg, p + ".bn", c);
      blk.has_bn = true;
    }
    im.blocks.push_back(std::move(blk));
    cin = c;
    h = ceil_div(h, s);
    w = ceil_div(w, s);
  }
  im.flat = h * w * cin;
  im.fc1 = DenseLayer<T>(im.reg, "fc1", int(im.flat), config.dense_units, rng);
  im.fc2 = DenseLayer<T>(im.reg, "fc2", config.dense_units, 1, rng);
}

template <typename T>
Discriminator2D<T>::~Discriminator2D() = default;
template <typename T>
Discriminator2D<T>::Discriminator2D(Discriminator2D&&) noexcept = default;

template <typename T>
TensorT<T> Discriminator2D<T>::forward(const TensorT<T>& x, Mode mode) {
  if (x.shape().size() != 4 || x.shape()[3] != 1)
    throw ShapeError("Discriminator2D: input must be [B,H,W,1]");
  if (x.shape()[1] != input_h_ || x.shape()[2] != input_w_)
    throw ShapeError("Discriminator2D: expected " + std::to_string(input_h_) + "x" +
                     std::to_string(input_w_) + " input, got " + ad::shape_str(x.shape()));
  auto& im = *impl_;
  auto z = x;
  for (auto& blk : im.blocks) {
    z = blk.conv(z);
    if (blk.has_bn) z = blk.bn(z, mode);
    z = ad::leaky_relu(z, 0.2);
  }
  const int B = z.shape()[0];
  z = ad::reshape(z, Shape{B, int(im.flat)});
  z = ad::leaky_relu(im.fc1(z), 0.2);
  z = ad::sigmoid(im.fc2(z));
  return ad::reshape(z, Shape{B});
}

template <typename T>
std::vector<TensorT<T>> Discriminator2D<T>::parameters() {
  return impl_->reg.parameters();
}
template <typename T>
std::vector<StateEntry<T>> Discriminator2D<T>::state() const {
  return impl_->reg.state();
}
template <typename T>
void Discriminator2D<T>::load_state(const std::vector<StateEntry<T>>& entries) {
  impl_->reg.load_state(entries);
}
template <typename T>
long Discriminator2D<T>::param_count() const {
  return impl_->reg.param_count();
}

// ---------------------------------------------------------------------------
// Discriminator1D
// ---------------------------------------------------------------------------

template <typename T>
struct Discriminator1D<T>::Impl {
  Registry<T> reg;
  struct Block {
    Conv1DLayer<T> conv;
    BNLayer<T> bn;
    bool has_bn = false;
  };
  std::vector<Block> blocks;
  DenseLayer<T> fc1, fc2;
  long flat = 0;
};

template <typename T>
Discriminator1D<T>::Discriminator1D(const DiscriminatorConfig& config, int input_len, Rng& rng)
    : config_(config), input_len_(input_len), impl_(std::make_unique<Impl>()) {
  config.validate();
  if (input_len < 1) throw DomainError("Discriminator1D: bad input length");
  auto& im = *impl_;
  int cin = 1;
  long len = input_len;
  for (size_t i = 0; i < config.conv_blocks.size(); i++) {
    auto [c, s] = config.conv_blocks[i];
    std::string p = "block" + std::to_string(i);
    typename Impl::Block blk;
    blk.conv = Conv1DLayer<T>(im.reg, p, config.kernel, cin, c, s, 1, i == 0, rng);
    if (i > 0) {
      blk.bn = BNLayer<T>(im.reg, p + ".bn", c);
      blk.has_bn = true;
    }
    im.blocks.push_back(std::move(blk));
    cin = c;
    len = ceil_div(len, s);
  }
  im.flat = len * cin;
  im.fc1 = DenseLayer<T>(im.reg, "fc1", int(im.flat), config.dense_units, rng);
  im.fc2 = DenseLayer<T>(im.reg, "fc2", config.dense_units, 1, rng);
}

template <typename T>
Discriminator1D<T>::~Discriminator1D() = default;
template <typename T>
Discriminator1D<T>::Discriminator1D(Discriminator1D&&) noexcept = default;

template <typename T>
TensorT<T> Discriminator1D<T>::forward(const TensorT<T>& x, Mode mode) {
  if (x.shape().size() != 3 || x.shape()[2] != 1)
    throw ShapeError("Discriminator1D: input must be [B,L,1]");
  if (x.shape()[1] != input_len_)
    throw ShapeError("Discriminator1D: expected length " + std::to_string(input_len_));
  auto& im = *impl_;
  auto z = x;
  for (auto& blk : im.blocks) {
    z = blk.conv(z);
    if (blk.has_bn) z = blk.bn(z, mode);
    z = ad::leaky_relu(z, 0.2);
  }
  const int B = z.shape()[0];
  z = ad::reshape(z, Shape{B, int(im.flat)});
  z = ad::leaky_relu(im.fc1(z), 0.2);
  z = ad::sigmoid(im.fc2(z));
  return ad::reshape(z, Shape{B});
}

template <typename T>
std::vector<TensorT<T>> Discriminator1D<T>::parameters() {
  return impl_->reg.parameters();
}
template <typename T>
std::vector<StateEntry<T>> Discriminator1D<T>::state() const {
  return impl_->reg.state();
}
template <typename T>
void Discriminator1D<T>::load_state(const std::vector<StateEntry<T>>& entries) {
  impl_->reg.load_state(entries);
}
template <typename T>
long Discriminator1D<T>::param_count() const {
  return impl_->reg.param_count();
}

// ---------------------------------------------------------------------------
// ResUNetA
// ---------------------------------------------------------------------------

template <typename T>
struct ResUNetA<T>::Impl {
  Registry<T> reg;
  struct Branch {
    BNLayer<T> bn1;
    Conv1DLayer<T> conv1;
    BNLayer<T> bn2;
    Conv1DLayer<T> conv2;
  };
  struct Block {
    std::vector<Branch> branches;
  };
  Conv1DLayer<T> stem;
  std::vector<Block> enc;
  std::vector<Conv1DLayer<T>> down;
  Block bottleneck;
  std::vector<Conv1DLayer<T>> up;
  std::vector<Block> dec;
  Conv1DLayer<T> head;

  Block make_block(const std::string& prefix, int channels, const std::vector<int>& dilations,
                   int k, Rng& rng) {
    Block b;
    for (size_t j = 0; j < dilations.size(); j++) {
      std::string p = prefix + ".br" + std::to_string(j);
      Branch br;
      br.bn1 = BNLayer<T>(reg, p + ".bn1", channels);
      br.conv1 = Conv1DLayer<T>(reg, p + ".conv1", k, channels, channels, 1, dilations[j], false, rng);
      br.bn2 = BNLayer<T>(reg, p + ".bn2", channels);
      br.conv2 = Conv1DLayer<T>(reg, p + ".conv2", k, channels, channels, 1, dilations[j], false, rng);
      b.branches.push_back(std::move(br));
    }
    return b;
  }

  TensorT<T> run_block(Block& b, const TensorT<T>& x, Mode mode) {
    auto out = x;
    for (auto& br : b.branches) {
      auto t = br.bn1(x, mode);
      t = ad::relu(t);
      t = br.conv1(t);
      t = br.bn2(t, mode);
      t = ad::relu(t);
      t = br.conv2(t);
      out = ad::add(out, t);
    }
    return out;
  }
};

template <typename T>
ResUNetA<T>::ResUNetA(const ResUNetAConfig& config, Rng& rng)
    : config_(config), impl_(std::make_unique<Impl>()) {
  config.validate();
  auto& im = *impl_;
  const int k = config.kernel_len;
  auto ch = [&](int level) { return config.base_channels << level; };

  im.stem = Conv1DLayer<T>(im.reg, "stem", k, 1, ch(0), 1, 1, true, rng);
  for (int l = 0; l < config.depth; l++) {
    im.enc.push_back(im.make_block("enc" + std::to_string(l), ch(l),
                                   config.dilation_sets[size_t(l)], k, rng));
    im.down.push_back(Conv1DLayer<T>(im.reg, "down" + std::to_string(l), k, ch(l), ch(l + 1), 2,
                                     1, true, rng));
  }
  im.bottleneck = im.make_block("bottleneck", ch(config.depth),
                                config.dilation_sets[size_t(config.depth)], k, rng);
  for (int l = config.depth - 1; l >= 0; l--) {
    im.up.push_back(Conv1DLayer<T>(im.reg, "up" + std::to_string(l), k, ch(l + 1), ch(l), 1, 1,
                                   true, rng));
    im.dec.push_back(im.make_block("dec" + std::to_string(l), ch(l),
                                   config.dilation_sets[size_t(l)], k, rng));
  }
  im.head = Conv1DLayer<T>(im.reg, "head", k, ch(0), 1, 1, 1, true, rng);
}

template <typename T>
ResUNetA<T>::~ResUNetA() = default;
template <typename T>
ResUNetA<T>::ResUNetA(ResUNetA&&) noexcept = default;

template <typename T>
TensorT<T> ResUNetA<T>::forward(const TensorT<T>& x, Mode mode) {
  if (x.shape().size() != 3 || x.shape()[2] != 1)
    throw ShapeError("ResUNetA: input must be [B,L,1], got " + ad::shape_str(x.shape()));
  const int L = x.shape()[1];
  if (L % (1 << config_.depth) != 0)
    throw DomainError("ResUNetA: length " + std::to_string(L) + " not divisible by 2^depth");
  auto& im = *impl_;
  auto z = im.stem(x);
  std::vector<TensorT<T>> skips;
  for (int l = 0; l < config_.depth; l++) {
    auto e = im.run_block(im.enc[size_t(l)], z, mode);
    skips.push_back(e);
    z = im.down[size_t(l)](e);
  }
  z = im.run_block(im.bottleneck, z, mode);
  for (int i = 0; i < config_.depth; i++) {
    const int l = config_.depth - 1 - i;
    z = ad::upsample_nearest_1d(z, 2);
    z = im.up[size_t(i)](z);
    z = ad::add(z, skips[size_t(l)]);
    z = im.run_block(im.dec[size_t(i)], z, mode);
  }
  return im.head(z);
}

template <typename T>
std::vector<TensorT<T>> ResUNetA<T>::parameters() {
  return impl_->reg.parameters();
}
template <typename T>
std::vector<StateEntry<T>> ResUNetA<T>::state() const {
  return impl_->reg.state();
}
template <typename T>
void ResUNetA<T>::load_state(const std::vector<StateEntry<T>>& entries) {
  impl_->reg.load_state(entries);
}
template <typename T>
long ResUNetA<T>::param_count() const {
  return impl_->reg.param_count();
}

template class SRGANGenerator<float>;
template class SRGANGenerator<double>;
template class Discriminator2D<float>;
template class Discriminator2D<double>;
template class Discriminator1D<float>;
template class Discriminator1D<double>;
template class ResUNetA<float>;
template class ResUNetA<double>;

}  // namespace specrec::models
