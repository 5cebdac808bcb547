#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "specrec/common.hpp"

namespace specrec::autodiff {

using Shape = std::vector<int>;

long shape_size(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {
template <typename T>
struct NodeT;
}

// Reverse-mode autodiff value. A Tensor is a cheap shared handle to a graph
// node holding the value, an optional gradient, and the provenance needed to
// run the backward pass. Graphs are built define-by-run and freed when the
// last handle drops.
template <typename T>
class TensorT {
 public:
  using Scalar = T;

  TensorT() = default;

  static TensorT zeros(const Shape& shape);
  static TensorT full(const Shape& shape, T value);
  static TensorT from_vec(const Shape& shape, std::vector<T> data, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  long size() const;
  std::span<const T> data() const;
  std::span<T> mutable_data();  // in-place edits (optimizer updates between steps)
  T item() const;               // scalar tensors only

  bool requires_grad() const;
  std::span<const T> grad() const;  // empty when no gradient has been accumulated
  void zero_grad();
  TensorT detach() const;

  // Backpropagate from this scalar through the graph. Gradients accumulate
  // into every reachable node with requires_grad.
  void backward() const;

  const std::string& op() const;  // provenance tag ("conv2d", "leaf", ...)

  detail::NodeT<T>* node() const { return node_.get(); }
  const std::shared_ptr<detail::NodeT<T>>& handle() const { return node_; }
  explicit TensorT(std::shared_ptr<detail::NodeT<T>> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::NodeT<T>> node_;
};

using Tensor = TensorT<double>;
using Tensor32 = TensorT<float>;

// ---------------------------------------------------------------------------
// Elementwise / reduction ops
// ---------------------------------------------------------------------------
template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> scale(const TensorT<T>& a, double s);
template <typename T>
TensorT<T> square(const TensorT<T>& a);
template <typename T>
TensorT<T> sum_all(const TensorT<T>& a);
template <typename T>
TensorT<T> mean_all(const TensorT<T>& a);
template <typename T>
TensorT<T> reshape(const TensorT<T>& a, const Shape& shape);  // same element count

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------
template <typename T>
TensorT<T> relu(const TensorT<T>& x);
template <typename T>
TensorT<T> leaky_relu(const TensorT<T>& x, double slope);
// PReLU with a learned per-channel slope over the trailing axis.
template <typename T>
TensorT<T> prelu(const TensorT<T>& x, const TensorT<T>& slope);
template <typename T>
TensorT<T> tanh_op(const TensorT<T>& x);
template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x);

// ---------------------------------------------------------------------------
// Convolutions (cross-correlation convention, channels-last layout)
//   conv1d: x [B,L,C_in] or [L];   kernel [K,C_in,C_out] or [K]
//   conv2d: x [B,H,W,C_in] or [H,W]; kernel [KH,KW,C_in,C_out] or [KH,KW]
// Rank-1/rank-2 convenience inputs produce rank-1/rank-2 outputs.
// ---------------------------------------------------------------------------
enum class Padding { kValid, kSame };

struct ConvOpts {
  int stride = 1;
  int dilation = 1;
  Padding padding = Padding::kValid;
};

template <typename T>
TensorT<T> conv1d(const TensorT<T>& x, const TensorT<T>& kernel, const ConvOpts& opts = {});
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& kernel, const ConvOpts& opts = {});

// y[..., c] = x[..., c] + bias[c]
template <typename T>
TensorT<T> bias_add(const TensorT<T>& x, const TensorT<T>& bias);

// Nearest-neighbour upsampling along the length axis of [B,L,C].
template <typename T>
TensorT<T> upsample_nearest_1d(const TensorT<T>& x, int factor);

// Dense layer: x [B,F] * w [F,U] + b [U].
template <typename T>
TensorT<T> dense(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b);

// ---------------------------------------------------------------------------
// Batch normalization over the trailing channel axis. Train mode uses batch
// statistics (batch size >= 2 required) and updates the running stats by
// exponential moving average; infer mode uses the running stats.
// ---------------------------------------------------------------------------
template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;  // biased batch variance

  explicit BatchNormState(int channels = 0)
      : running_mean(size_t(channels), T(0)), running_var(size_t(channels), T(1)) {}
};

template <typename T>
TensorT<T> batch_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      BatchNormState<T>& state, Mode mode, double momentum = 0.1,
                      double eps = 1e-5);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------
template <typename T>
TensorT<T> mse_loss(const TensorT<T>& a, const TensorT<T>& b);
// Batch-mean binary cross entropy against a constant 0/1 target; predictions
// clamped to [eps, 1-eps].
template <typename T>
TensorT<T> bce_loss(const TensorT<T>& p, double target, double eps = 1e-7);

// ---------------------------------------------------------------------------
// Adam optimizer (bias-corrected)
// ---------------------------------------------------------------------------
template <typename T>
struct AdamState {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double lr = 1e-4;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<std::vector<T>> m, v;

  void validate() const;
};

// One update over the parameter list from their accumulated gradients.
// Parameters with no gradient are treated as zero-gradient.
template <typename T>
void adam_step(std::vector<TensorT<T>>& params, AdamState<T>& state);

// ---------------------------------------------------------------------------
// Gradient checking: reverse-mode vs central finite differences with
// h_i = h * max(1, |x_i|). Returns the max relative error
// |a - fd| / max(1, |a|, |fd|) over all coordinates.
// ---------------------------------------------------------------------------
template <typename T>
double grad_check(const std::function<TensorT<T>(const TensorT<T>&)>& f, const TensorT<T>& x0,
                  double h = 1e-5);

}  // namespace specrec::autodiff
