// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#pragma once

#include <vector>

#include "deband/tensor.hpp"

namespace deband::wavelet {

// One decomposition level. All four subbands are half the parent's height
// and width; lh carries horizontal detail (row-high, col-low), hl vertical
// detail (row-low, col-high), hh diagonal detail.
struct WaveletLevel {
  Tensor ll, lh, hl, hh;
  int level_index = 1;
};

struct WaveletPyramid {
  std::vector<WaveletLevel> levels;  // index 0 holds level 1
  int depth() const { return static_cast<int>(levels.size()); }
};

// Single-level orthonormal 2D Haar analysis, per channel.
// Requires even height and width.
WaveletLevel dwt2(const Tensor& x);

// Exact synthesis inverse of dwt2.
Tensor idwt2(const WaveletLevel& level);

// Recursive dwt2 on the ll band; requires dimensions divisible by 2^depth.
WaveletPyramid decompose(const Tensor& x, int depth);

// Level-by-level idwt2, deepest first.
Tensor reconstruct(const WaveletPyramid& p);

// Raw kernels shared with the autodiff graph. Subbands are stacked along
// the channel axis in ll, lh, hl, hh order: (h, w, c) <-> (h/2, w/2, 4c).
void dwt2_stacked(const float* x, int h, int w, int c, float* out);
void idwt2_stacked(const float* in, int h2, int w2, int c, float* out);

}  // namespace deband::wavelet
