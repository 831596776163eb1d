// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#pragma once

#include <vector>

#include "deband/tensor.hpp"
#include "deband/wavelet.hpp"

namespace deband::freqmask {

// BT.601 luma. Input must be 3-channel.
Tensor to_grayscale(const Tensor& img);

// (s - min) / (max - min); all zeros when max == min.
Tensor minmax_normalize(const Tensor& s);

// Weighted wavelet map from the input image: grayscale, depth-level Haar
// pyramid, |c_h|+|c_v|+|c_d| of the final level, bilinear upsample to the
// input resolution, min-max normalization.
Tensor wwm_mask(const Tensor& img, int depth = 3);

// Multi-scale mask from encoder detail triples (feature space, C channels):
// per level, bilinear-upsampled channel mean of |lh|+|hl|+|hh|; masks are
// averaged over levels and normalized. Full resolution is twice level 0.
Tensor dwt_mask(const std::vector<wavelet::WaveletLevel>& levels);

// Same aggregation over enhanced high-frequency features |F^(i,E)|.
Tensor map_mask(const std::vector<Tensor>& enhanced);

// Single-pixel fusion rule shared with the network graph so that the two
// paths agree bit-exactly. The m=0 / m=1 / equal-input limits short-circuit
// so the contract identities hold to the bit in float arithmetic.
inline float fuse_px_raw(float banded, float restored, float m) {
  if (m <= 0.0f) return restored;
  if (m >= 1.0f) return banded;
  if (banded == restored) return banded;
  return m * banded + (1.0f - m) * restored;
}

inline float fuse_px(float banded, float restored, float m) {
  const float v = fuse_px_raw(banded, restored, m);
  return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
}

// m*banded + (1-m)*restored per channel, clamped to [0,1]. m is HxWx1.
Tensor fuse(const Tensor& banded, const Tensor& restored, const Tensor& m);

// Bilinear resize helper (align_corners = false), any channel count.
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);

}  // namespace deband::freqmask
