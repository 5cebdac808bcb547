#include "specrec/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "autodiff_node.hpp"
#include "specrec/parallel.hpp"

namespace specrec::autodiff {

using detail::NodeT;

long shape_size(const Shape& s) {
  long n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); i++) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// ---------------------------------------------------------------------------
// TensorT
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> TensorT<T>::zeros(const Shape& shape) {
  return TensorT(
      detail::make_leaf<T>(shape, std::vector<T>(size_t(shape_size(shape)), T(0)), false));
}

template <typename T>
TensorT<T> TensorT<T>::full(const Shape& shape, T value) {
  return TensorT(
      detail::make_leaf<T>(shape, std::vector<T>(size_t(shape_size(shape)), value), false));
}

template <typename T>
TensorT<T> TensorT<T>::from_vec(const Shape& shape, std::vector<T> data, bool requires_grad) {
  if (long(data.size()) != shape_size(shape))
    throw ShapeError("from_vec: data length " + std::to_string(data.size()) +
                     " != shape size of " + shape_str(shape));
  return TensorT(detail::make_leaf<T>(shape, std::move(data), requires_grad));
}

template <typename T>
const Shape& TensorT<T>::shape() const {
  if (!node_) throw DomainError("undefined tensor");
  return node_->shape;
}

template <typename T>
long TensorT<T>::size() const {
  return node_ ? node_->size() : 0;
}

template <typename T>
std::span<const T> TensorT<T>::data() const {
  if (!node_) throw DomainError("undefined tensor");
  return node_->value;
}

template <typename T>
std::span<T> TensorT<T>::mutable_data() {
  if (!node_) throw DomainError("undefined tensor");
  return node_->value;
}

template <typename T>
T TensorT<T>::item() const {
  if (size() != 1) throw ShapeError("item(): tensor is not scalar");
  return node_->value[0];
}

template <typename T>
bool TensorT<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
std::span<const T> TensorT<T>::grad() const {
  if (!node_) throw DomainError("undefined tensor");
  return node_->grad;
}

template <typename T>
void TensorT<T>::zero_grad() {
  if (!node_) throw DomainError("undefined tensor");
  node_->grad.assign(node_->value.size(), T(0));
}

template <typename T>
TensorT<T> TensorT<T>::detach() const {
  if (!node_) throw DomainError("undefined tensor");
  return TensorT(detail::make_leaf<T>(node_->shape, node_->value, false));
}

template <typename T>
const std::string& TensorT<T>::op() const {
  if (!node_) throw DomainError("undefined tensor");
  return node_->op;
}

template <typename T>
void TensorT<T>::backward() const {
  if (!node_) throw DomainError("undefined tensor");
  if (node_->size() != 1) throw ShapeError("backward(): root must be scalar");
  if (!node_->requires_grad) throw DomainError("backward(): root does not require grad");

  // Post-order DFS over the requires-grad subgraph; reversing gives a
  // topological order, so each backward_fn runs after all its consumers.
  std::vector<NodeT<T>*> order;
  std::unordered_set<NodeT<T>*> visited;
  struct Frame {
    NodeT<T>* n;
    size_t next_parent;
  };
  std::vector<Frame> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.n->parents.size()) {
      NodeT<T>* p = f.n->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

// Elementwise loop over fixed chunks; disjoint writes keep the result bitwise
// thread-count invariant.
template <typename F>
void for_chunks(long n, F&& body) {
  if (n < (1 << 14)) {
    body(0L, n);
    return;
  }
  parallel_chunks(n, kReductionChunks, [&](int, long b, long e) { body(b, e); });
}

template <typename T>
TensorT<T> wrap(std::shared_ptr<NodeT<T>> n) {
  return TensorT<T>(std::move(n));
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "add");
  std::vector<T> v(size_t(a.size()));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for_chunks(a.size(), [&](long lo, long hi) {
    for (long i = lo; i < hi; i++) v[size_t(i)] = pa[i] + pb[i];
  });
  auto n = detail::make_op<T>(a.shape(), std::move(v), "add", {a.handle(), b.handle()});
  if (n->requires_grad)
    n->backward_fn = [](NodeT<T>& self) {
      const T* g = self.grad.data();
      const long sz = self.size();
      for (int k = 0; k < 2; k++) {
        auto& p = *self.parents[size_t(k)];
        if (!p.requires_grad) continue;
        p.ensure_grad();
        T* pg = p.grad.data();
        for_chunks(sz, [&](long lo, long hi) {
          for (long i = lo; i < hi; i++) pg[i] += g[i];
        });
      }
    };
  return wrap(std::move(n));
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "sub");
  std::vector<T> v(size_t(a.size()));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for_chunks(a.size(), [&](long lo, long hi) {
    for (long i = lo; i < hi; i++) v[size_t(i)] = pa[i] - pb[i];
  });
  auto n = detail::make_op<T>(a.shape(), std::move(v), "sub", {a.handle(), b.handle()});
  if (n->requires_grad)
    n->backward_fn = [](NodeT<T>& self) {
      const T* g = self.grad.data();
      const long sz = self.size();
      auto& pa2 = *self.parents[0];
      auto& pb2 = *self.parents[1];
      if (pa2.requires_grad) {
        pa2.ensure_grad();
        T* pg = pa2.grad.data();
        for_chunks(sz, [&](long lo, long hi) {
          for (long i = lo; i < hi; i++) pg[i] += g[i];
        });
      }
      if (pb2.requires_grad) {
        pb2.ensure_grad();
        T* pg = pb2.grad.data();
        for_chunks(sz, [&](long lo, long hi) {
          for (long i = lo; i < hi; i++) pg[i] -= g[i];
        });
      }
    };
  return wrap(std::move(n));
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "mul");
  std::vector<T> v(size_t(a.size()));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for_chunks(a.size(), [&](long lo, long hi) {
    for (long i = lo; i < hi; i++) v[size_t(i)] = pa[i] * pb[i];
  });
  auto n = detail::make_op<T>(a.shape(), std::move(v), "mul", {a.handle(), b.handle()});
  if (n->requires_grad)
    n->backward_fn = [](NodeT<T>& self) {
      const T* g = self.grad.data();
      const long sz = self.size();
      auto& pa2 = *self.parents[0];
      auto& pb2 = *self.parents[1];
      if (pa2.requires_grad) {
        pa2.ensure_grad();
        T* pg = pa2.grad.data();
        const T* vb = pb2.value.data();
        for_chunks(sz, [&](long lo, long hi) {
          for (long i = lo; i < hi; i++) pg[i] += g[i] * vb[i];
        });
      }
      if (pb2.requires_grad) {
        pb2.ensure_grad();
        T* pg = pb2.grad.data();
        const T* va = pa2.value.data();
        for_chunks(sz, [&](long lo, long hi) {
          for (long i = lo; i < hi; i++) pg[i] += g[i] * va[i];
        });
      }
    };
  return wrap(std::move(n));
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, double s) {
  std::vector<T> v(size_t(a.size()));
  const T* pa = a.data().data();
  const T ts = T(s);
  for_chunks(a.size(), [&](long lo, long hi) {
    for (long i = lo; i < hi; i++) v[size_t(i)] = pa[i] * ts;
  });
  auto n = detail::make_op<T>(a.shape(), std::move(v), "scale", {a.handle()});
  if (n->requires_grad)
    n->backward_fn = [ts](NodeT<T>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      const T* g = self.grad.data();
      T* pg = p.grad.data();
      for_chunks(self.size(), [&](long lo, long hi) {
        for (long i = lo; i < hi; i++) pg[i] += g[i] * ts;
      });
    };
  return wrap(std::move(n));
}

template <typename T>
TensorT<T> square(const TensorT<T>& a) {
  std::vector<T> v(size_t(a.size()));
  const T* pa = a.data().data();
  for_chunks(a.size(), [&](long lo, long hi) {
    for (long i = lo; i < hi; i++) v[size_t(i)] = pa[i] * pa[i];
  });
  auto n = detail::make_op<T>(a.shape(), std::move(v), "square", {a.handle()});
  if (n->requires_grad)
    n->backward_fn = [](NodeT<T>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      const T* g = self.grad.data();
      const T* x = p.value.data();
      T* pg = p.grad.data();
      for_chunks(self.size(), [&](long lo, long hi) {
        for (long i = lo; i < hi; i++) pg[i] += T(2) * x[i] * g[i];
      });
    };
  return wrap(std::move(n));
}

namespace {
// Deterministic serial sum (fixed order regardless of thread count).
template <typename T>
T sum_serial(const T* x, long n) {
  T s = T(0);
  for (long i = 0; i < n; i++) s += x[i];
  return s;
}
}  // namespace

template <typename T>
TensorT<T> sum_all(const TensorT<T>& a) {
  T s = sum_serial(a.data().data(), a.size());
  auto n = detail::make_op<T>(Shape{1}, std::vector<T>{s}, "sum_all", {a.handle()});
  if (n->requires_grad)
    n->backward_fn = [](NodeT<T>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      const T g = self.grad[0];
      T* pg = p.grad.data();
      for_chunks(p.size(), [&](long lo, long hi) {
        for (long i = lo; i < hi; i++) pg[i] += g;
      });
    };
  return wrap(std::move(n));
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& a) {
  if (a.size() == 0) throw ShapeError("mean_all: empty tensor");
  T s = sum_serial(a.data().data(), a.size()) / T(a.size());
  auto n = detail::make_op<T>(Shape{1}, std::vector<T>{s}, "mean_all", {a.handle()});
  if (n->requires_grad)
    n->backward_fn = [](NodeT<T>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      const T g = self.grad[0] / T(p.size());
      T* pg = p.grad.data();
      for_chunks(p.size(), [&](long lo, long hi) {
        for (long i = lo; i < hi; i++) pg[i] += g;
      });
    };
  return wrap(std::move(n));
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, const Shape& shape) {
  if (shape_size(shape) != a.size())
    throw ShapeError("reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                     shape_str(shape));
  std::vector<T> v(a.data().begin(), a.data().end());
  auto n = detail::make_op<T>(shape, std::move(v), "reshape", {a.handle()});
  if (n->requires_grad)
    n->backward_fn = [](NodeT<T>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      const T* g = self.grad.data();
      T* pg = p.grad.data();
      for_chunks(self.size(), [&](long lo, long hi) {
        for (long i = lo; i < hi; i++) pg[i] += g[i];
      });
    };
  return wrap(std::move(n));
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  std::vector<T> v(size_t(x.size()));
  const T* px = x.data().data();
  for_chunks(x.size(), [&](long lo, long hi) {
    for (long i = lo; i < hi; i++) v[size_t(i)] = px[i] > T(0) ? px[i] : T(0);
  });
  auto n = detail::make_op<T>(x.shape(), std::move(v), "relu", {x.handle()});
  if (n->requires_grad)
    n->backward_fn = [](NodeT<T>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      const T* g = self.grad.data();
      const T* xv = p.value.data();
      T* pg = p.grad.data();
      for_chunks(self.size(), [&](long lo, long hi) {
        for (long i = lo; i < hi; i++)
          if (xv[i] > T(0)) pg[i] += g[i];
      });
    };
  return wrap(std::move(n));
}

template <typename T>
TensorT<T> leaky_relu(const TensorT<T>& x, double slope) {
  const T s = T(slope);
  std::vector<T> v(size_t(x.size()));
  const T* px = x.data().data();
  for_chunks(x.size(), [&](long lo, long hi) {
    for (long i = lo; i < hi; i++) v[size_t(i)] = px[i] > T(0) ? px[i] : s * px[i];
  });
  auto n = detail::make_op<T>(x.shape(), std::move(v), "leaky_relu", {x.handle()});
  if (n->requires_grad)
    n->backward_fn = [s](NodeT<T>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      const T* g = self.grad.data();
      const T* xv = p.value.data();
      T* pg = p.grad.data();
      for_chunks(self.size(), [&](long lo, long hi) {
        for (long i = lo; i < hi; i++) pg[i] += xv[i] > T(0) ? g[i] : s * g[i];
      });
    };
  return wrap(std::move(n));
}

template <typename T>
TensorT<T> prelu(const TensorT<T>& x, const TensorT<T>& slope) {
  if (x.shape().empty()) throw ShapeError("prelu: scalar input");
  const int C = x.shape().back();
  if (slope.shape() != Shape{C})
    throw ShapeError("prelu: slope must be [" + std::to_string(C) + "]");
  std::vector<T> v(size_t(x.size()));
  const T* px = x.data().data();
  const T* pa = slope.data().data();
  for_chunks(x.size(), [&](long lo, long hi) {
    for (long i = lo; i < hi; i++)
      v[size_t(i)] = px[i] > T(0) ? px[i] : pa[i % C] * px[i];
  });
  auto n = detail::make_op<T>(x.shape(), std::move(v), "prelu", {x.handle(), slope.handle()});
  if (n->requires_grad)
    n->backward_fn = [C](NodeT<T>& self) {
      auto& px2 = *self.parents[0];
      auto& pa2 = *self.parents[1];
      const T* g = self.grad.data();
      const T* xv = px2.value.data();
      const T* av = pa2.value.data();
      const long sz = self.size();
      if (px2.requires_grad) {
        px2.ensure_grad();
        T* pg = px2.grad.data();
        for_chunks(sz, [&](long lo, long hi) {
          for (long i = lo; i < hi; i++) pg[i] += xv[i] > T(0) ? g[i] : av[i % C] * g[i];
        });
      }
      if (pa2.requires_grad) {
        pa2.ensure_grad();
        T* ag = pa2.grad.data();
        // fixed-order reduction per channel
        for (long i = 0; i < sz; i++)
          if (!(xv[i] > T(0))) ag[i % C] += g[i] * xv[i];
      }
    };
  return wrap(std::move(n));
}

template <typename T>
TensorT<T> tanh_op(const TensorT<T>& x) {
  std::vector<T> v(size_t(x.size()));
  const T* px = x.data().data();
  for_chunks(x.size(), [&](long lo, long hi) {
    for (long i = lo; i < hi; i++) v[size_t(i)] = std::tanh(px[i]);
  });
  auto n = detail::make_op<T>(x.shape(), std::move(v), "tanh", {x.handle()});
  if (n->requires_grad)
    n->backward_fn = [](NodeT<T>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      const T* g = self.grad.data();
      const T* y = self.value.data();
      T* pg = p.grad.data();
      for_chunks(self.size(), [&](long lo, long hi) {
        for (long i = lo; i < hi; i++) pg[i] += g[i] * (T(1) - y[i] * y[i]);
      });
    };
  return wrap(std::move(n));
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  std::vector<T> v(size_t(x.size()));
  const T* px = x.data().data();
  for_chunks(x.size(), [&](long lo, long hi) {
    for (long i = lo; i < hi; i++) v[size_t(i)] = T(1) / (T(1) + std::exp(-px[i]));
  });
  auto n = detail::make_op<T>(x.shape(), std::move(v), "sigmoid", {x.handle()});
  if (n->requires_grad)
    n->backward_fn = [](NodeT<T>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      const T* g = self.grad.data();
      const T* y = self.value.data();
      T* pg = p.grad.data();
      for_chunks(self.size(), [&](long lo, long hi) {
        for (long i = lo; i < hi; i++) pg[i] += g[i] * y[i] * (T(1) - y[i]);
      });
    };
  return wrap(std::move(n));
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> batch_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      BatchNormState<T>& state, Mode mode, double momentum, double eps) {
  if (x.shape().size() < 2) throw ShapeError("batch_norm: input must have a batch axis");
  const int C = x.shape().back();
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
    throw ShapeError("batch_norm: gamma/beta must be [C]");
  if (int(state.running_mean.size()) != C)
    throw ShapeError("batch_norm: state channel mismatch");
  const long B = x.shape()[0];
  const long N = x.size() / C;  // positions per channel (batch * spatial)
  const T teps = T(eps);

  std::vector<T> mean(size_t(C)), var(size_t(C));
  if (mode == Mode::kTrain) {
    if (B < 2) throw DomainError("batch_norm: train mode requires batch size >= 2");
    std::vector<double> acc(size_t(C), 0.0);
    const T* px = x.data().data();
    for (long i = 0; i < x.size(); i++) acc[size_t(i % C)] += double(px[i]);
    for (int c = 0; c < C; c++) mean[size_t(c)] = T(acc[size_t(c)] / double(N));
    std::fill(acc.begin(), acc.end(), 0.0);
    for (long i = 0; i < x.size(); i++) {
      double d = double(px[i]) - double(mean[size_t(i % C)]);
      acc[size_t(i % C)] += d * d;
    }
    for (int c = 0; c < C; c++) var[size_t(c)] = T(acc[size_t(c)] / double(N));
    const T m = T(momentum);
    for (int c = 0; c < C; c++) {
      state.running_mean[size_t(c)] = (T(1) - m) * state.running_mean[size_t(c)] + m * mean[size_t(c)];
      state.running_var[size_t(c)] = (T(1) - m) * state.running_var[size_t(c)] + m * var[size_t(c)];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  std::vector<T> inv_std(size_t(C));
  for (int c = 0; c < C; c++) inv_std[size_t(c)] = T(1) / std::sqrt(var[size_t(c)] + teps);

  auto xhat = std::make_shared<std::vector<T>>(size_t(x.size()));
  std::vector<T> v(size_t(x.size()));
  {
    const T* px = x.data().data();
    const T* pg = gamma.data().data();
    const T* pb = beta.data().data();
    T* ph = xhat->data();
    for_chunks(x.size(), [&](long lo, long hi) {
      for (long i = lo; i < hi; i++) {
        int c = int(i % C);
        T h = (px[i] - mean[size_t(c)]) * inv_std[size_t(c)];
        ph[i] = h;
        v[size_t(i)] = pg[c] * h + pb[c];
      }
    });
  }

  auto n = detail::make_op<T>(x.shape(), std::move(v), "batch_norm",
                              {x.handle(), gamma.handle(), beta.handle()});
  if (n->requires_grad) {
    const bool train = mode == Mode::kTrain;
    n->backward_fn = [C, N, train, inv_std = std::move(inv_std), xhat](NodeT<T>& self) {
      auto& px2 = *self.parents[0];
      auto& pg2 = *self.parents[1];
      auto& pb2 = *self.parents[2];
      const T* g = self.grad.data();
      const T* h = xhat->data();
      const T* gv = pg2.value.data();
      const long sz = self.size();

      // per-channel reductions (fixed order)
      std::vector<double> sum_g(size_t(C), 0.0), sum_gh(size_t(C), 0.0);
      for (long i = 0; i < sz; i++) {
        int c = int(i % C);
        sum_g[size_t(c)] += double(g[i]);
        sum_gh[size_t(c)] += double(g[i]) * double(h[i]);
      }
      if (pb2.requires_grad) {
        pb2.ensure_grad();
        for (int c = 0; c < C; c++) pb2.grad[size_t(c)] += T(sum_g[size_t(c)]);
      }
      if (pg2.requires_grad) {
        pg2.ensure_grad();
        for (int c = 0; c < C; c++) pg2.grad[size_t(c)] += T(sum_gh[size_t(c)]);
      }
      if (px2.requires_grad) {
        px2.ensure_grad();
        T* pgx = px2.grad.data();
        if (train) {
          for_chunks(sz, [&](long lo, long hi) {
            for (long i = lo; i < hi; i++) {
              int c = int(i % C);
              T t = T(double(g[i]) - sum_g[size_t(c)] / double(N) -
                      double(h[i]) * sum_gh[size_t(c)] / double(N));
              pgx[i] += gv[c] * inv_std[size_t(c)] * t;
            }
          });
        } else {
          for_chunks(sz, [&](long lo, long hi) {
            for (long i = lo; i < hi; i++) {
              int c = int(i % C);
              pgx[i] += gv[c] * inv_std[size_t(c)] * g[i];
            }
          });
        }
      }
    };
  }
  return wrap(std::move(n));
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> mse_loss(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "mse_loss");
  const long sz = a.size();
  if (sz == 0) throw ShapeError("mse_loss: empty tensors");
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  double s = 0.0;
  for (long i = 0; i < sz; i++) {
    double d = double(pa[i]) - double(pb[i]);
    s += d * d;
  }
  auto n = detail::make_op<T>(Shape{1}, std::vector<T>{T(s / double(sz))}, "mse_loss",
                              {a.handle(), b.handle()});
  if (n->requires_grad)
    n->backward_fn = [](NodeT<T>& self) {
      auto& pa2 = *self.parents[0];
      auto& pb2 = *self.parents[1];
      const T g = self.grad[0];
      const long sz2 = pa2.size();
      const T k = T(2) * g / T(sz2);
      const T* va = pa2.value.data();
      const T* vb = pb2.value.data();
      if (pa2.requires_grad) {
        pa2.ensure_grad();
        T* pg = pa2.grad.data();
        for_chunks(sz2, [&](long lo, long hi) {
          for (long i = lo; i < hi; i++) pg[i] += k * (va[i] - vb[i]);
        });
      }
      if (pb2.requires_grad) {
        pb2.ensure_grad();
        T* pg = pb2.grad.data();
        for_chunks(sz2, [&](long lo, long hi) {
          for (long i = lo; i < hi; i++) pg[i] -= k * (va[i] - vb[i]);
        });
      }
    };
  return wrap(std::move(n));
}

template <typename T>
TensorT<T> bce_loss(const TensorT<T>& p, double target, double eps) {
  if (target != 0.0 && target != 1.0) throw DomainError("bce_loss: target must be 0 or 1");
  const long sz = p.size();
  if (sz == 0) throw ShapeError("bce_loss: empty tensor");
  const T* pp = p.data().data();
  const T lo = T(eps), hi = T(1.0 - eps);
  double s = 0.0;
  for (long i = 0; i < sz; i++) {
    double q = std::clamp(double(pp[i]), double(lo), double(hi));
    s += target == 1.0 ? -std::log(q) : -std::log(1.0 - q);
  }
  auto n = detail::make_op<T>(Shape{1}, std::vector<T>{T(s / double(sz))}, "bce_loss",
                              {p.handle()});
  if (n->requires_grad)
    n->backward_fn = [target, lo, hi](NodeT<T>& self) {
      auto& pp2 = *self.parents[0];
      pp2.ensure_grad();
      const T g = self.grad[0];
      const long sz2 = pp2.size();
      const T* v = pp2.value.data();
      T* pg = pp2.grad.data();
      const T k = g / T(sz2);
      for (long i = 0; i < sz2; i++) {
        if (v[i] < lo || v[i] > hi) continue;  // clamped region: flat
        pg[i] += target == 1.0 ? -k / v[i] : k / (T(1) - v[i]);
      }
    };
  return wrap(std::move(n));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
void AdamState<T>::validate() const {
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw DomainError("AdamState: betas must be in [0,1)");
  if (lr <= 0.0) throw DomainError("AdamState: lr must be > 0");
  if (eps <= 0.0) throw DomainError("AdamState: eps must be > 0");
}

template <typename T>
void adam_step(std::vector<TensorT<T>>& params, AdamState<T>& state) {
  state.validate();
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); i++) {
      state.m[i].assign(size_t(params[i].size()), T(0));
      state.v[i].assign(size_t(params[i].size()), T(0));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state/parameter count mismatch");
  state.step_count++;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, double(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, double(state.step_count));
  for (size_t pi = 0; pi < params.size(); pi++) {
    auto theta = params[pi].mutable_data();
    auto gspan = params[pi].grad();
    if (long(state.m[pi].size()) != params[pi].size())
      throw ShapeError("adam_step: moment/parameter shape mismatch");
    T* m = state.m[pi].data();
    T* v = state.v[pi].data();
    for (size_t i = 0; i < theta.size(); i++) {
      double g = gspan.empty() ? 0.0 : double(gspan[i]);
      double mi = b1 * double(m[i]) + (1.0 - b1) * g;
      double vi = b2 * double(v[i]) + (1.0 - b2) * g * g;
      m[i] = T(mi);
      v[i] = T(vi);
      double mhat = mi / bc1;
      double vhat = vi / bc2;
      theta[i] = T(double(theta[i]) - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

template <typename T>
double grad_check(const std::function<TensorT<T>(const TensorT<T>&)>& f, const TensorT<T>& x0,
                  double h) {
  if (h <= 0.0) throw DomainError("grad_check: h must be > 0");
  std::vector<T> base(x0.data().begin(), x0.data().end());
  TensorT<T> x = TensorT<T>::from_vec(x0.shape(), base, /*requires_grad=*/true);
  TensorT<T> y = f(x);
  if (y.size() != 1) throw ShapeError("grad_check: f must return a scalar");
  y.backward();
  std::vector<T> analytic(x.grad().begin(), x.grad().end());

  double max_rel = 0.0;
  for (size_t i = 0; i < base.size(); i++) {
    double hi = h * std::max(1.0, std::abs(double(base[i])));
    std::vector<T> xp = base, xm = base;
    xp[i] = T(double(xp[i]) + hi);
    xm[i] = T(double(xm[i]) - hi);
    double fp = double(f(TensorT<T>::from_vec(x0.shape(), std::move(xp))).item());
    double fm = double(f(TensorT<T>::from_vec(x0.shape(), std::move(xm))).item());
    double fd = (fp - fm) / (2.0 * hi);
    double a = double(analytic[i]);
    double rel = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// Explicit instantiations
// ---------------------------------------------------------------------------

#define SPECREC_INSTANTIATE(T)                                                              \
  template class TensorT<T>;                                                                \
  template TensorT<T> add(const TensorT<T>&, const TensorT<T>&);                            \
  template TensorT<T> sub(const TensorT<T>&, const TensorT<T>&);                            \
  template TensorT<T> mul(const TensorT<T>&, const TensorT<T>&);                            \
  template TensorT<T> scale(const TensorT<T>&, double);                                     \
  template TensorT<T> square(const TensorT<T>&);                                            \
  template TensorT<T> sum_all(const TensorT<T>&);                                           \
  template TensorT<T> mean_all(const TensorT<T>&);                                          \
  template TensorT<T> reshape(const TensorT<T>&, const Shape&);                             \
  template TensorT<T> relu(const TensorT<T>&);                                              \
  template TensorT<T> leaky_relu(const TensorT<T>&, double);                                \
  template TensorT<T> prelu(const TensorT<T>&, const TensorT<T>&);                          \
  template TensorT<T> tanh_op(const TensorT<T>&);                                           \
  template TensorT<T> sigmoid(const TensorT<T>&);                                           \
  template TensorT<T> batch_norm(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,   \
                                 BatchNormState<T>&, Mode, double, double);                 \
  template TensorT<T> mse_loss(const TensorT<T>&, const TensorT<T>&);                       \
  template TensorT<T> bce_loss(const TensorT<T>&, double, double);                          \
  template struct AdamState<T>;                                                             \
  template void adam_step(std::vector<TensorT<T>>&, AdamState<T>&);                         \
  template double grad_check(const std::function<TensorT<T>(const TensorT<T>&)>&,           \
                             const TensorT<T>&, double);

SPECREC_INSTANTIATE(float)
SPECREC_INSTANTIATE(double)

#undef SPECREC_INSTANTIATE

}  // namespace specrec::autodiff
