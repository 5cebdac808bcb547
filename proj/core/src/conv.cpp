#include <algorithm>
#include <cstring>
#include <memory>

#include "autodiff_node.hpp"
#include "conv_kernels.hpp"
#include "specrec/autodiff.hpp"
#include "specrec/parallel.hpp"

namespace specrec::autodiff {

using detail::ConvPlan;
using detail::NodeT;

namespace {

struct AxisGeom {
  long out = 0;
  int pad_lo = 0, pad_hi = 0;
};

AxisGeom resolve_axis(long len, int k, int stride, int dilation, Padding padding,
                      const char* what) {
  if (stride < 1) throw DomainError(std::string(what) + ": stride must be >= 1");
  if (dilation < 1) throw DomainError(std::string(what) + ": dilation must be >= 1");
  const long eff = long(k - 1) * dilation + 1;
  AxisGeom g;
  if (padding == Padding::kValid) {
    if (len < eff)
      throw ShapeError(std::string(what) + ": input length " + std::to_string(len) +
                       " smaller than dilated kernel extent " + std::to_string(eff));
    g.out = (len - eff) / stride + 1;
  } else {
    g.out = (len + stride - 1) / stride;
    long pad_total = std::max<long>(0, (g.out - 1) * stride + eff - len);
    g.pad_lo = int(pad_total / 2);
    g.pad_hi = int(pad_total - g.pad_lo);
  }
  return g;
}

// Copy [B,H,W,C] into a zero-padded [B,Hp,Wp,C] buffer.
template <typename T>
std::shared_ptr<std::vector<T>> pad_input(const T* x, long B, long H, long W, int C, int pt,
                                          int pl, long Hp, long Wp) {
  auto out = std::make_shared<std::vector<T>>(size_t(B * Hp * Wp * C), T(0));
  T* dst = out->data();
  parallel_for(B * H, [&](long bh) {
    long b = bh / H, y = bh % H;
    std::memcpy(dst + ((b * Hp + y + pt) * Wp + pl) * C, x + (b * H + y) * W * C,
                size_t(W) * size_t(C) * sizeof(T));
  });
  return out;
}

// taps reversed, channel axes swapped: wrot[t', co, ci] = w[taps-1-t', ci, co]
template <typename T>
std::vector<T> rotate_transpose_kernel(const T* w, int taps, int c_in, int c_out) {
  std::vector<T> out(size_t(taps) * c_in * c_out);
  for (int t = 0; t < taps; t++)
    for (int ci = 0; ci < c_in; ci++)
      for (int co = 0; co < c_out; co++)
        out[(size_t(t) * c_out + size_t(co)) * c_in + size_t(ci)] =
            w[(size_t(taps - 1 - t) * c_in + size_t(ci)) * c_out + size_t(co)];
  return out;
}

struct Conv2DGeom {
  long B, H, W;
  int c_in;
  int KH, KW, c_out;
  int stride, dilation;
  AxisGeom gy, gx;
  long Hp, Wp;

  long out_count() const { return B * gy.out * gx.out * c_out; }
};

// Core shared by conv1d (KH=1) and conv2d. Inputs already canonicalized to
// x [B,H,W,C_in], kernel [KH,KW,C_in,C_out].
template <typename T>
TensorT<T> conv_core(const TensorT<T>& x, const TensorT<T>& kernel,
                     const Conv2DGeom& geom, const Shape& out_shape, const char* opname) {
  auto xpad = pad_input(x.data().data(), geom.B, geom.H, geom.W, geom.c_in, geom.gy.pad_lo,
                        geom.gx.pad_lo, geom.Hp, geom.Wp);
  ConvPlan plan = detail::make_conv_plan(geom.B, geom.Hp, geom.Wp, geom.c_in, geom.gy.out,
                                         geom.gx.out, geom.KH, geom.KW, geom.c_out, geom.stride,
                                         geom.stride, geom.dilation, geom.dilation);
  std::vector<T> y(size_t(geom.out_count()));
  detail::conv_exec_forward(xpad->data(), kernel.data().data(), y.data(), plan);

  auto n = detail::make_op<T>(out_shape, std::move(y), opname, {x.handle(), kernel.handle()});
  if (n->requires_grad) {
    n->backward_fn = [geom, plan = std::move(plan), xpad](NodeT<T>& self) {
      auto& px = *self.parents[0];
      auto& pk = *self.parents[1];
      const T* g = self.grad.data();

      if (pk.requires_grad) {
        pk.ensure_grad();
        detail::conv_exec_dweights(xpad->data(), g, pk.grad.data(), plan);
      }
      if (px.requires_grad) {
        px.ensure_grad();
        // Gather form of the input gradient: zero-stuff dy onto the stride-1
        // grid, pad by (K-1)*dilation - pad, correlate with the rotated
        // transposed kernel at stride 1.
        const int s = geom.stride, d = geom.dilation;
        const long Hz = geom.H + long(geom.KH - 1) * d;
        const long Wz = geom.W + long(geom.KW - 1) * d;
        const int py = (geom.KH - 1) * d - geom.gy.pad_lo;
        const int px_off = (geom.KW - 1) * d - geom.gx.pad_lo;
        std::vector<T> z(size_t(geom.B * Hz * Wz * geom.c_out), T(0));
        parallel_for(geom.B * geom.gy.out, [&](long bo) {
          long b = bo / geom.gy.out, oy = bo % geom.gy.out;
          for (long ox = 0; ox < geom.gx.out; ox++) {
            const T* src = g + ((b * geom.gy.out + oy) * geom.gx.out + ox) * geom.c_out;
            T* dst = z.data() + ((b * Hz + py + oy * s) * Wz + px_off + ox * s) * geom.c_out;
            std::memcpy(dst, src, size_t(geom.c_out) * sizeof(T));
          }
        });
        std::vector<T> wrot =
            rotate_transpose_kernel(pk.value.data(), plan.taps, geom.c_in, geom.c_out);
        ConvPlan tplan = detail::make_conv_plan(geom.B, Hz, Wz, geom.c_out, geom.H, geom.W,
                                                geom.KH, geom.KW, geom.c_in, 1, 1, d, d);
        std::vector<T> dx(size_t(geom.B * geom.H * geom.W * geom.c_in));
        detail::conv_exec_forward(z.data(), wrot.data(), dx.data(), tplan);
        T* pg = px.grad.data();
        parallel_chunks(long(dx.size()), kReductionChunks, [&](int, long lo, long hi) {
          for (long i = lo; i < hi; i++) pg[i] += dx[size_t(i)];
        });
      }
    };
  }
  return TensorT<T>(std::move(n));
}

}  // namespace

template <typename T>
TensorT<T> conv1d(const TensorT<T>& x, const TensorT<T>& kernel, const ConvOpts& opts) {
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  const bool plain = xs.size() == 1;
  if (!plain && xs.size() != 3)
    throw ShapeError("conv1d: input must be [L] or [B,L,C], got " + shape_str(xs));
  if (plain ? ks.size() != 1 : ks.size() != 3)
    throw ShapeError("conv1d: kernel must be [K] (for [L] input) or [K,C_in,C_out], got " +
                     shape_str(ks));

  TensorT<T> x3 = plain ? reshape(x, Shape{1, xs[0], 1}) : x;
  TensorT<T> k3 = plain ? reshape(kernel, Shape{ks[0], 1, 1}) : kernel;

  Conv2DGeom geom;
  geom.B = x3.shape()[0];
  geom.H = 1;
  geom.W = x3.shape()[1];
  geom.c_in = x3.shape()[2];
  geom.KH = 1;
  geom.KW = k3.shape()[0];
  geom.c_out = k3.shape()[2];
  geom.stride = opts.stride;
  geom.dilation = opts.dilation;
  if (k3.shape()[1] != geom.c_in)
    throw ShapeError("conv1d: kernel C_in " + std::to_string(k3.shape()[1]) +
                     " != input channels " + std::to_string(geom.c_in));
  geom.gy = AxisGeom{1, 0, 0};
  geom.gx = resolve_axis(geom.W, geom.KW, opts.stride, opts.dilation, opts.padding, "conv1d");
  geom.Hp = 1;
  geom.Wp = geom.W + geom.gx.pad_lo + geom.gx.pad_hi;

  Shape out_shape{int(geom.B), int(geom.gx.out), geom.c_out};
  TensorT<T> y = conv_core(x3, k3, geom, out_shape, "conv1d");
  return plain ? reshape(y, Shape{int(geom.gx.out)}) : y;
}

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& kernel, const ConvOpts& opts) {
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  const bool plain = xs.size() == 2;
  if (!plain && xs.size() != 4)
    throw ShapeError("conv2d: input must be [H,W] or [B,H,W,C], got " + shape_str(xs));
  if (plain ? ks.size() != 2 : ks.size() != 4)
    throw ShapeError("conv2d: kernel must be [KH,KW] (for [H,W] input) or [KH,KW,C_in,C_out]");

  TensorT<T> x4 = plain ? reshape(x, Shape{1, xs[0], xs[1], 1}) : x;
  TensorT<T> k4 = plain ? reshape(kernel, Shape{ks[0], ks[1], 1, 1}) : kernel;

  Conv2DGeom geom;
  geom.B = x4.shape()[0];
  geom.H = x4.shape()[1];
  geom.W = x4.shape()[2];
  geom.c_in = x4.shape()[3];
  geom.KH = k4.shape()[0];
  geom.KW = k4.shape()[1];
  geom.c_out = k4.shape()[3];
  geom.stride = opts.stride;
  geom.dilation = opts.dilation;
  if (k4.shape()[2] != geom.c_in)
    throw ShapeError("conv2d: kernel C_in " + std::to_string(k4.shape()[2]) +
                     " != input channels " + std::to_string(geom.c_in));
  geom.gy = resolve_axis(geom.H, geom.KH, opts.stride, opts.dilation, opts.padding, "conv2d");
  geom.gx = resolve_axis(geom.W, geom.KW, opts.stride, opts.dilation, opts.padding, "conv2d");
  geom.Hp = geom.H + geom.gy.pad_lo + geom.gy.pad_hi;
  geom.Wp = geom.W + geom.gx.pad_lo + geom.gx.pad_hi;

  Shape out_shape{int(geom.B), int(geom.gy.out), int(geom.gx.out), geom.c_out};
  TensorT<T> y = conv_core(x4, k4, geom, out_shape, "conv2d");
  return plain ? reshape(y, Shape{int(geom.gy.out), int(geom.gx.out)}) : y;
}

template <typename T>
TensorT<T> bias_add(const TensorT<T>& x, const TensorT<T>& bias) {
  if (x.shape().empty()) throw ShapeError("bias_add: scalar input");
  const int C = x.shape().back();
  if (bias.shape() != Shape{C})
    throw ShapeError("bias_add: bias must be [" + std::to_string(C) + "]");
  std::vector<T> v(size_t(x.size()));
  const T* px = x.data().data();
  const T* pb = bias.data().data();
  parallel_chunks(x.size(), kReductionChunks, [&](int, long lo, long hi) {
    for (long i = lo; i < hi; i++) v[size_t(i)] = px[i] + pb[i % C];
  });
  auto n = detail::make_op<T>(x.shape(), std::move(v), "bias_add", {x.handle(), bias.handle()});
  if (n->requires_grad)
    n->backward_fn = [C](NodeT<T>& self) {
      auto& px2 = *self.parents[0];
      auto& pb2 = *self.parents[1];
      const T* g = self.grad.data();
      const long sz = self.size();
      if (px2.requires_grad) {
        px2.ensure_grad();
        T* pg = px2.grad.data();
        parallel_chunks(sz, kReductionChunks, [&](int, long lo, long hi) {
          for (long i = lo; i < hi; i++) pg[i] += g[i];
        });
      }
      if (pb2.requires_grad) {
        pb2.ensure_grad();
        for (long i = 0; i < sz; i++) pb2.grad[size_t(i % C)] += g[i];
      }
    };
  return TensorT<T>(std::move(n));
}

template <typename T>
TensorT<T> dense(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  if (x.shape().size() != 2) throw ShapeError("dense: input must be [B,F]");
  if (w.shape().size() != 2) throw ShapeError("dense: weight must be [F,U]");
  const long B = x.shape()[0];
  const int F = x.shape()[1];
  const int U = w.shape()[1];
  if (w.shape()[0] != F)
    throw ShapeError("dense: weight rows " + std::to_string(w.shape()[0]) + " != features " +
                     std::to_string(F));
  if (b.shape() != Shape{U}) throw ShapeError("dense: bias must be [U]");

  std::vector<T> v(size_t(B * U));
  const T* px = x.data().data();
  const T* pw = w.data().data();
  const T* pb = b.data().data();
  parallel_for(B, [&](long i) {
    const T* xr = px + i * F;
    T* yr = v.data() + i * U;
    for (int u = 0; u < U; u++) yr[u] = pb[u];
    for (int f = 0; f < F; f++) {
      T xv = xr[f];
      const T* wr = pw + size_t(f) * U;
      for (int u = 0; u < U; u++) yr[u] += xv * wr[u];
    }
  });
  auto n = detail::make_op<T>(Shape{int(B), U}, std::move(v), "dense",
                              {x.handle(), w.handle(), b.handle()});
  if (n->requires_grad)
    n->backward_fn = [B, F, U](NodeT<T>& self) {
      auto& px2 = *self.parents[0];
      auto& pw2 = *self.parents[1];
      auto& pb2 = *self.parents[2];
      const T* g = self.grad.data();
      if (px2.requires_grad) {
        px2.ensure_grad();
        const T* wv = pw2.value.data();
        parallel_for(B, [&](long i) {
          T* pg = px2.grad.data() + i * F;
          const T* gr = g + i * U;
          for (int f = 0; f < F; f++) {
            T acc = T(0);
            const T* wr = wv + size_t(f) * U;
            for (int u = 0; u < U; u++) acc += gr[u] * wr[u];
            pg[f] += acc;
          }
        });
      }
      if (pw2.requires_grad) {
        pw2.ensure_grad();
        const T* xv = px2.value.data();
        // fixed batch-major order
        for (long i = 0; i < B; i++) {
          const T* xr = xv + i * F;
          const T* gr = g + i * U;
          for (int f = 0; f < F; f++) {
            T* dwr = pw2.grad.data() + size_t(f) * U;
            T xf = xr[f];
            for (int u = 0; u < U; u++) dwr[u] += xf * gr[u];
          }
        }
      }
      if (pb2.requires_grad) {
        pb2.ensure_grad();
        for (long i = 0; i < B; i++)
          for (int u = 0; u < U; u++) pb2.grad[size_t(u)] += g[i * U + u];
      }
    };
  return TensorT<T>(std::move(n));
}

template <typename T>
TensorT<T> upsample_nearest_1d(const TensorT<T>& x, int factor) {
  if (factor < 1) throw DomainError("upsample_nearest_1d: factor must be >= 1");
  if (x.shape().size() != 3) throw ShapeError("upsample_nearest_1d: input must be [B,L,C]");
  const long B = x.shape()[0], L = x.shape()[1];
  const int C = x.shape()[2];
  std::vector<T> v(size_t(B * L * factor * C));
  const T* px = x.data().data();
  parallel_for(B * L, [&](long bl) {
    const T* src = px + bl * C;
    T* dst = v.data() + bl * factor * C;
    for (int r = 0; r < factor; r++) std::memcpy(dst + long(r) * C, src, size_t(C) * sizeof(T));
  });
  auto n = detail::make_op<T>(Shape{int(B), int(L * factor), C}, std::move(v),
                              "upsample_nearest_1d", {x.handle()});
  if (n->requires_grad)
    n->backward_fn = [factor, C](NodeT<T>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      const T* g = self.grad.data();
      const long BL = p.size() / C;
      parallel_for(BL, [&](long bl) {
        T* pg = p.grad.data() + bl * C;
        const T* gr = g + bl * factor * C;
        for (int r = 0; r < factor; r++)
          for (int c = 0; c < C; c++) pg[c] += gr[long(r) * C + c];
      });
    };
  return TensorT<T>(std::move(n));
}

#define SPECREC_INSTANTIATE(T)                                                         \
  template TensorT<T> conv1d(const TensorT<T>&, const TensorT<T>&, const ConvOpts&);   \
  template TensorT<T> conv2d(const TensorT<T>&, const TensorT<T>&, const ConvOpts&);   \
  template TensorT<T> bias_add(const TensorT<T>&, const TensorT<T>&);                  \
  template TensorT<T> dense(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);  \
  template TensorT<T> upsample_nearest_1d(const TensorT<T>&, int);

SPECREC_INSTANTIATE(float)
SPECREC_INSTANTIATE(double)

#undef SPECREC_INSTANTIATE

}  // namespace specrec::autodiff
