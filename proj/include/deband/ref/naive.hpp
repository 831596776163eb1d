// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#pragma once

#include <vector>

#include "deband/tensor.hpp"
#include "deband/wavelet.hpp"

// Serial reference implementations, written independently of the OpenMP
// kernels in src/. Used as test oracles and as the baseline side of the
// kernel benchmark; never linked into deband_core.
namespace deband::ref {

// Filter-bank Haar analysis: 1D low/high convolution + downsample along
// rows, then along columns. Plain double loops.
wavelet::WaveletLevel naive_dwt2(const Tensor& x);
Tensor naive_idwt2(const wavelet::WaveletLevel& level);

// Step-by-step selective-scan recurrence in raster order, double state,
// std::exp. x/delta: (n,c), bsel/csel: (n,s), a_log: (c,s), dskip: (c).
void naive_scan(const float* x, const float* delta, const float* bsel,
                const float* csel, const float* a_log, const float* dskip,
                int n, int c, int s, float* y);

// Scalar bilinear resize (align_corners = false).
Tensor naive_bilinear(const Tensor& x, int out_h, int out_w);

// Mask variants via explicit loops, mirroring the published aggregation:
// per level, upsampled channel mean of the absolute detail sum, averaged
// over levels, min-max normalized.
Tensor naive_dwt_mask(const std::vector<wavelet::WaveletLevel>& levels);
Tensor naive_map_mask(const std::vector<Tensor>& enhanced);

// Plain 3x3 convolution for the kernel benchmark.
void naive_conv3x3(const float* x, int h, int w, int ci, const float* wgt,
                   const float* bias, int co, float* y);

}  // namespace deband::ref
