// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#include "deband/freqmask.hpp"

#include <cmath>
#include <cstddef>

#include "deband/kernels.hpp"

namespace deband::freqmask {

Tensor to_grayscale(const Tensor& img) {
  if (img.shape.size() != 3 || img.c() != 3)
    throw ArgumentError("to_grayscale expects a 3-channel image");
  Tensor g = Tensor::hwc(img.h(), img.w(), 1);
  const std::size_t n = static_cast<std::size_t>(img.h()) * img.w();
#pragma omp parallel for
  for (long long p = 0; p < static_cast<long long>(n); ++p) {
    const float* px = img.v.data() + static_cast<std::size_t>(p) * 3;
    g.v[p] = 0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2];
  }
  return g;
}

Tensor minmax_normalize(const Tensor& s) {
  for (float x : s.v)
    if (!std::isfinite(x)) throw ArgumentError("minmax_normalize on non-finite input");
  float mn = s.v[0], mx = s.v[0];
  for (float x : s.v) {
    if (x < mn) mn = x;
    if (x > mx) mx = x;
  }
  Tensor out = s;
  const float r = mx - mn;
  if (r <= 0.0f) {
    out.fill(0.0f);
    return out;
  }
  for (float& x : out.v) x = (x - mn) / r;
  return out;
}

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
  if (x.shape.size() != 3) throw DimensionError("bilinear_resize expects HxWxC");
  Tensor y = Tensor::hwc(out_h, out_w, x.c());
  kern::bilinear_fwd(x.v.data(), x.h(), x.w(), x.c(), y.v.data(), out_h, out_w);
  return y;
}

Tensor wwm_mask(const Tensor& img, int depth) {
  Tensor gray = img.c() == 1 ? img : to_grayscale(img);
  wavelet::WaveletPyramid pyr = wavelet::decompose(gray, depth);
  const wavelet::WaveletLevel& top = pyr.levels.back();
  Tensor s = Tensor::hwc(top.lh.h(), top.lh.w(), 1);
  for (std::size_t i = 0; i < s.v.size(); ++i)
    s.v[i] = std::fabs(top.lh.v[i]) + std::fabs(top.hl.v[i]) + std::fabs(top.hh.v[i]);
  return minmax_normalize(bilinear_resize(s, img.h(), img.w()));
}

namespace {

// channel mean of a precomputed per-pixel magnitude, upsampled to (H, W)
Tensor upsampled_level_map(const Tensor& mag, int full_h, int full_w) {
  const int c = mag.c();
  Tensor mean = Tensor::hwc(mag.h(), mag.w(), 1);
  const std::size_t n = static_cast<std::size_t>(mag.h()) * mag.w();
  for (std::size_t p = 0; p < n; ++p) {
    double acc = 0.0;
    for (int ch = 0; ch < c; ++ch) acc += mag.v[p * c + ch];
    mean.v[p] = static_cast<float>(acc / c);
  }
  return bilinear_resize(mean, full_h, full_w);
}

}  // namespace

Tensor dwt_mask(const std::vector<wavelet::WaveletLevel>& levels) {
  if (levels.empty()) throw ArgumentError("dwt_mask on empty level list");
  const int full_h = levels.front().lh.h() * 2;
  const int full_w = levels.front().lh.w() * 2;
  Tensor acc = Tensor::hwc(full_h, full_w, 1);
  for (const auto& lv : levels) {
    Tensor mag = lv.lh;
    for (std::size_t i = 0; i < mag.v.size(); ++i)
      mag.v[i] = std::fabs(lv.lh.v[i]) + std::fabs(lv.hl.v[i]) + std::fabs(lv.hh.v[i]);
    Tensor up = upsampled_level_map(mag, full_h, full_w);
    for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += up.v[i];
  }
  const float inv = 1.0f / static_cast<float>(levels.size());
  for (float& x : acc.v) x *= inv;
  return minmax_normalize(acc);
}

Tensor map_mask(const std::vector<Tensor>& enhanced) {
  if (enhanced.empty()) throw ArgumentError("map_mask on empty feature list");
  const int full_h = enhanced.front().h() * 2;
  const int full_w = enhanced.front().w() * 2;
  Tensor acc = Tensor::hwc(full_h, full_w, 1);
  for (const auto& e : enhanced) {
    Tensor mag = e;
    for (float& x : mag.v) x = std::fabs(x);
    Tensor up = upsampled_level_map(mag, full_h, full_w);
    for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += up.v[i];
  }
  const float inv = 1.0f / static_cast<float>(enhanced.size());
  for (float& x : acc.v) x *= inv;
  return minmax_normalize(acc);
}

Tensor fuse(const Tensor& banded, const Tensor& restored, const Tensor& m) {
  if (!banded.same_shape(restored))
    throw DimensionError("fuse: banded/restored shapes differ");
  if (m.h() != banded.h() || m.w() != banded.w() || m.c() != 1)
    throw DimensionError("fuse: mask must be HxWx1 matching the images");
  Tensor out = banded;
  const int c = banded.c();
  const std::size_t n = static_cast<std::size_t>(banded.h()) * banded.w();
#pragma omp parallel for
  for (long long p = 0; p < static_cast<long long>(n); ++p) {
    const float mv = m.v[p];
    const float* pb = banded.v.data() + static_cast<std::size_t>(p) * c;
    const float* pr = restored.v.data() + static_cast<std::size_t>(p) * c;
    float* po = out.v.data() + static_cast<std::size_t>(p) * c;
    for (int ch = 0; ch < c; ++ch) po[ch] = fuse_px(pb[ch], pr[ch], mv);
  }
  return out;
}

}  // namespace deband::freqmask
