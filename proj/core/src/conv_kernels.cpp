#include "conv_kernels.hpp"

#include <algorithm>
#include <type_traits>

#include "specrec/parallel.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define SPECREC_AVX2 1
#endif

namespace specrec::autodiff::detail {

ConvPlan make_conv_plan(long B, long Hp, long Wp, int c_in, long H_out, long W_out, int KH,
                        int KW, int c_out, int sy, int sx, int dy, int dx) {
  ConvPlan p;
  p.c_in = c_in;
  p.c_out = c_out;
  p.taps = KH * KW;
  p.tap_off.resize(size_t(p.taps));
  for (int ky = 0; ky < KH; ky++)
    for (int kx = 0; kx < KW; kx++)
      p.tap_off[size_t(ky * KW + kx)] = (long(ky) * dy * Wp + long(kx) * dx) * c_in;
  p.in_pix_stride = long(sx) * c_in;
  p.runs.reserve(size_t(B * H_out));
  for (long b = 0; b < B; b++)
    for (long oy = 0; oy < H_out; oy++)
      p.runs.push_back({(b * Hp + oy * sy) * Wp * c_in, (b * H_out + oy) * W_out * c_out, W_out});
  p.total_pixels = B * H_out * W_out;
  return p;
}

namespace {

// Reference path (doubles, channel remainders): per output element, sum taps
// then input channels, matching the SIMD kernels' order exactly.
template <typename T>
void fwd_scalar(const T* x, long xstride, const T* w, int c_in, int c_out, const long* off,
                int taps, int co0, int co_n, T* y, long n_pix) {
  for (long pix = 0; pix < n_pix; pix++) {
    const T* xp = x + pix * xstride;
    T* yp = y + pix * c_out + co0;
    for (int o = 0; o < co_n; o++) {
      T acc = T(0);
      for (int t = 0; t < taps; t++) {
        const T* xt = xp + off[t];
        const T* wt = w + (size_t(t) * c_in) * c_out + co0 + o;
        for (int c = 0; c < c_in; c++) acc += xt[c] * wt[size_t(c) * c_out];
      }
      yp[o] = acc;
    }
  }
}

#ifdef SPECREC_AVX2

// NPIX output pixels x 16 output channels per call.
template <int NPIX>
void fwd_f32_co16(const float* x, long xstride, const float* w, int c_in, int c_out,
                  const long* off, int taps, int co0, float* y) {
  __m256 acc[NPIX][2];
  for (int i = 0; i < NPIX; i++) {
    acc[i][0] = _mm256_setzero_ps();
    acc[i][1] = _mm256_setzero_ps();
  }
  for (int t = 0; t < taps; t++) {
    const float* wt = w + (size_t(t) * c_in) * c_out + co0;
    const float* xt[NPIX];
    for (int i = 0; i < NPIX; i++) xt[i] = x + i * xstride + off[t];
    for (int c = 0; c < c_in; c++) {
      __m256 w0 = _mm256_loadu_ps(wt);
      __m256 w1 = _mm256_loadu_ps(wt + 8);
      for (int i = 0; i < NPIX; i++) {
        __m256 xv = _mm256_broadcast_ss(xt[i] + c);
        acc[i][0] = _mm256_fmadd_ps(xv, w0, acc[i][0]);
        acc[i][1] = _mm256_fmadd_ps(xv, w1, acc[i][1]);
      }
      wt += c_out;
    }
  }
  for (int i = 0; i < NPIX; i++) {
    _mm256_storeu_ps(y + i * c_out + co0, acc[i][0]);
    _mm256_storeu_ps(y + i * c_out + co0 + 8, acc[i][1]);
  }
}

template <int NPIX>
void fwd_f32_co8(const float* x, long xstride, const float* w, int c_in, int c_out,
                 const long* off, int taps, int co0, float* y) {
  __m256 acc[NPIX];
  for (int i = 0; i < NPIX; i++) acc[i] = _mm256_setzero_ps();
  for (int t = 0; t < taps; t++) {
    const float* wt = w + (size_t(t) * c_in) * c_out + co0;
    const float* xt[NPIX];
    for (int i = 0; i < NPIX; i++) xt[i] = x + i * xstride + off[t];
    for (int c = 0; c < c_in; c++) {
      __m256 w0 = _mm256_loadu_ps(wt);
      for (int i = 0; i < NPIX; i++)
        acc[i] = _mm256_fmadd_ps(_mm256_broadcast_ss(xt[i] + c), w0, acc[i]);
      wt += c_out;
    }
  }
  for (int i = 0; i < NPIX; i++) _mm256_storeu_ps(y + i * c_out + co0, acc[i]);
}

void fwd_run_f32(const float* x, long xstride, const float* w, int c_in, int c_out,
                 const long* off, int taps, float* y, long n_pix) {
  long pix = 0;
  for (; pix + 4 <= n_pix; pix += 4) {
    const float* xp = x + pix * xstride;
    float* yp = y + pix * c_out;
    int co = 0;
    for (; co + 16 <= c_out; co += 16) fwd_f32_co16<4>(xp, xstride, w, c_in, c_out, off, taps, co, yp);
    for (; co + 8 <= c_out; co += 8) fwd_f32_co8<4>(xp, xstride, w, c_in, c_out, off, taps, co, yp);
    if (co < c_out) fwd_scalar(xp, xstride, w, c_in, c_out, off, taps, co, c_out - co, yp, 4);
  }
  for (; pix < n_pix; pix++) {
    const float* xp = x + pix * xstride;
    float* yp = y + pix * c_out;
    int co = 0;
    for (; co + 16 <= c_out; co += 16) fwd_f32_co16<1>(xp, xstride, w, c_in, c_out, off, taps, co, yp);
    for (; co + 8 <= c_out; co += 8) fwd_f32_co8<1>(xp, xstride, w, c_in, c_out, off, taps, co, yp);
    if (co < c_out) fwd_scalar(xp, xstride, w, c_in, c_out, off, taps, co, c_out - co, yp, 1);
  }
}

#endif  // SPECREC_AVX2

// dw accumulation for one run segment, scalar path. Pixel-major so the
// per-element accumulation order is (run, pixel, tap, channel).
template <typename T>
void dw_scalar(const T* x, long xstride, const T* dy, int c_in, int c_out, const long* off,
               int taps, T* dw, long n_pix) {
  for (long pix = 0; pix < n_pix; pix++) {
    const T* xp = x + pix * xstride;
    const T* gp = dy + pix * c_out;
    for (int t = 0; t < taps; t++) {
      const T* xt = xp + off[t];
      T* dwt = dw + (size_t(t) * c_in) * c_out;
      for (int c = 0; c < c_in; c++) {
        T xv = xt[c];
        T* dwr = dwt + size_t(c) * c_out;
        for (int o = 0; o < c_out; o++) dwr[o] += xv * gp[o];
      }
    }
  }
}

#ifdef SPECREC_AVX2

// Blocked float path: accumulates each (tap, c_in) row over a pixel block in
// registers, then folds into dw once per block. dy rows for the block stay
// L1-resident.
void dw_run_f32(const float* x, long xstride, const float* dy, int c_in, int c_out,
                const long* off, int taps, float* dw, long n_pix) {
  if (c_out % 8 != 0) {
    dw_scalar(x, xstride, dy, c_in, c_out, off, taps, dw, n_pix);
    return;
  }
  constexpr long kBlock = 64;
  for (long base = 0; base < n_pix; base += kBlock) {
    const long nb = std::min(kBlock, n_pix - base);
    const float* xb = x + base * xstride;
    const float* gb = dy + base * c_out;
    for (int t = 0; t < taps; t++) {
      for (int c = 0; c < c_in; c++) {
        float* dwr = dw + (size_t(t) * c_in + size_t(c)) * c_out;
        for (int co = 0; co < c_out; co += 8) {
          __m256 acc = _mm256_setzero_ps();
          const float* xcol = xb + off[t] + c;
          const float* g = gb + co;
          for (long p = 0; p < nb; p++) {
            acc = _mm256_fmadd_ps(_mm256_broadcast_ss(xcol), _mm256_loadu_ps(g), acc);
            xcol += xstride;
            g += c_out;
          }
          _mm256_storeu_ps(dwr + co, _mm256_add_ps(_mm256_loadu_ps(dwr + co), acc));
        }
      }
    }
  }
}

#endif  // SPECREC_AVX2

}  // namespace

template <typename T>
void conv_exec_forward(const T* x_padded, const T* w, T* y, const ConvPlan& plan) {
  parallel_for(long(plan.runs.size()), [&](long r) {
    const auto& run = plan.runs[size_t(r)];
    if constexpr (std::is_same_v<T, float>) {
#ifdef SPECREC_AVX2
      fwd_run_f32(x_padded + run.in_base, plan.in_pix_stride, w, plan.c_in, plan.c_out,
                  plan.tap_off.data(), plan.taps, y + run.out_base, run.n);
      return;
#endif
    }
    fwd_scalar(x_padded + run.in_base, plan.in_pix_stride, w, plan.c_in, plan.c_out,
               plan.tap_off.data(), plan.taps, 0, plan.c_out, y + run.out_base, run.n);
  });
}

template <typename T>
void conv_exec_dweights(const T* x_padded, const T* dy, T* dw, const ConvPlan& plan) {
  const long n_runs = long(plan.runs.size());
  const size_t dw_size = size_t(plan.taps) * size_t(plan.c_in) * size_t(plan.c_out);
  const int n_chunks = int(std::min<long>(kReductionChunks, n_runs));
  std::vector<std::vector<T>> partials(size_t(n_chunks));
  parallel_chunks(n_runs, n_chunks, [&](int chunk, long rb, long re) {
    auto& part = partials[size_t(chunk)];
    part.assign(dw_size, T(0));
    for (long r = rb; r < re; r++) {
      const auto& run = plan.runs[size_t(r)];
      if constexpr (std::is_same_v<T, float>) {
#ifdef SPECREC_AVX2
        dw_run_f32(x_padded + run.in_base, plan.in_pix_stride, dy + run.out_base, plan.c_in,
                   plan.c_out, plan.tap_off.data(), plan.taps, part.data(), run.n);
        continue;
#endif
      }
      dw_scalar(x_padded + run.in_base, plan.in_pix_stride, dy + run.out_base, plan.c_in,
                plan.c_out, plan.tap_off.data(), plan.taps, part.data(), run.n);
    }
  });
  // fold partials in fixed chunk order
  for (const auto& part : partials) {
    if (part.empty()) continue;
    for (size_t i = 0; i < dw_size; i++) dw[i] += part[i];
  }
}

template void conv_exec_forward(const float*, const float*, float*, const ConvPlan&);
template void conv_exec_forward(const double*, const double*, double*, const ConvPlan&);
template void conv_exec_dweights(const float*, const float*, float*, const ConvPlan&);
template void conv_exec_dweights(const double*, const double*, double*, const ConvPlan&);

}  // namespace specrec::autodiff::detail
