#pragma once

// Internal direct-convolution executors, channels-last layout.
//
// A ConvPlan describes a convolution over an already-padded input buffer:
// output pixel (run r, index i) reads the input window starting at
// runs[r].in_base + i*in_pix_stride, with kernel tap t at tap_off[t], and
// writes c_out values at runs[r].out_base + i*c_out. Weights are laid out
// [taps][c_in][c_out]. Every output element is produced by exactly one
// fixed-order summation, so results are bitwise thread-count invariant.

#include <vector>

namespace specrec::autodiff::detail {

struct ConvPlan {
  int c_in = 0;
  int c_out = 0;
  int taps = 0;
  std::vector<long> tap_off;
  struct Run {
    long in_base;
    long out_base;
    long n;  // pixels
  };
  std::vector<Run> runs;
  long in_pix_stride = 0;
  long total_pixels = 0;
};

// Reads output pixels (b, oy, ox) from a padded buffer [B, Hp, Wp, c_in]:
// window origin (oy*sy + ky*dy, ox*sx + kx*dx).
ConvPlan make_conv_plan(long B, long Hp, long Wp, int c_in, long H_out, long W_out, int KH,
                        int KW, int c_out, int sy, int sx, int dy, int dx);

template <typename T>
void conv_exec_forward(const T* x_padded, const T* w, T* y, const ConvPlan& plan);

// dw accumulated in place (callers pass zeroed or partial buffers).
template <typename T>
void conv_exec_dweights(const T* x_padded, const T* dy, T* dw, const ConvPlan& plan);

}  // namespace specrec::autodiff::detail
