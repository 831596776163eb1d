// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#pragma once

#include <cstddef>

namespace deband::kern {

// Fast expf for non-positive arguments (state decay factors). Polynomial
// plus exponent reassembly, relative error below 3e-7 on [-87, 0].
float exp_neg(float x);

// 3x3 convolution, zero padding, stride 1.
// x: (h,w,ci), wgt: (3,3,ci,co), bias: (co) or nullptr, y: (h,w,co).
void conv3x3_fwd(const float* x, int h, int w, int ci, const float* wgt,
                 const float* bias, int co, float* y);
void conv3x3_bwd_input(const float* dy, int h, int w, int co, const float* wgt,
                       int ci, float* dx);
void conv3x3_bwd_weight(const float* x, const float* dy, int h, int w, int ci,
                        int co, float* dw, float* db);

// Pointwise (1x1) convolution over n pixels. x: (n,ci), wgt: (ci,co).
void conv1x1_fwd(const float* x, std::size_t n, int ci, const float* wgt,
                 const float* bias, int co, float* y);
void conv1x1_bwd_input(const float* dy, std::size_t n, int co, const float* wgt,
                       int ci, float* dx);
void conv1x1_bwd_weight(const float* x, const float* dy, std::size_t n, int ci,
                        int co, float* dw, float* db);

// Bilinear resize without corner alignment. x: (h,w,c) -> y: (oh,ow,c).
void bilinear_fwd(const float* x, int h, int w, int c, float* y, int oh, int ow);
void bilinear_bwd(const float* dy, int oh, int ow, int c, float* dx, int h, int w);

// Layer normalization across channels at every pixel, eps 1e-5.
// mu, rstd: (n) saved statistics for the backward pass.
void layernorm_fwd(const float* x, std::size_t n, int c, const float* gain,
                   const float* bias, float* y, float* mu, float* rstd);
void layernorm_bwd(const float* x, const float* dy, std::size_t n, int c,
                   const float* gain, const float* mu, const float* rstd,
                   float* dx, float* dgain, float* dbias);

// Selective state-space scan over n positions.
//   x, delta: (n,c)   bsel, csel: (n,s)   a_log: (c,s)   dskip: (c)
// perm gives the traversal order (perm[t] = pixel index at step t);
// nullptr means raster order. Per channel:
//   h_t = exp(delta_t * A) * h_{t-1} + delta_t * B_t * x_t,  A = -exp(a_log)
//   y_t = <C_t, h_t> + dskip * x_t
// hstate (n*c*s, indexed by step) is filled when non-null.
void scan_fwd(const float* x, const float* delta, const float* bsel,
              const float* csel, const float* a_log, const float* dskip, int n,
              int c, int s, const int* perm, float* y, float* hstate);
// All output gradients accumulate into caller-zeroed buffers.
void scan_bwd(const float* x, const float* delta, const float* bsel,
              const float* csel, const float* a_log, const float* dskip,
              const float* hstate, const float* dy, int n, int c, int s,
              const int* perm, float* dx, float* ddelta, float* dbsel,
              float* dcsel, float* da_log, float* ddskip);

}  // namespace deband::kern
