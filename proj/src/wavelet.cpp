// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#include "deband/wavelet.hpp"

#include <string>

namespace deband::wavelet {

// Orthonormal Haar: low = [1/sqrt2, 1/sqrt2], high = [1/sqrt2, -1/sqrt2],
// rows then columns. Fused over each 2x2 block the four outputs are
//   ll = (a+b+c+d)/2   lh = (a-b+c-d)/2   hl = (a+b-c-d)/2   hh = (a-b-c+d)/2
// with a,b the top and c,d the bottom pair.
void dwt2_stacked(const float* x, int h, int w, int c, float* out) {
  const int h2 = h / 2, w2 = w / 2;
  const std::size_t row = static_cast<std::size_t>(w) * c;
#pragma omp parallel for
  for (int y = 0; y < h2; ++y) {
    const float* top = x + 2 * static_cast<std::size_t>(y) * row;
    const float* bot = top + row;
    float* o = out + static_cast<std::size_t>(y) * w2 * 4 * c;
    for (int xx = 0; xx < w2; ++xx) {
      const float* a = top + 2 * static_cast<std::size_t>(xx) * c;
      const float* b = a + c;
      const float* cc = bot + 2 * static_cast<std::size_t>(xx) * c;
      const float* d = cc + c;
      float* po = o + static_cast<std::size_t>(xx) * 4 * c;
      for (int ch = 0; ch < c; ++ch) {
        const float av = a[ch], bv = b[ch], cv = cc[ch], dv = d[ch];
        po[ch] = 0.5f * (av + bv + cv + dv);
        po[c + ch] = 0.5f * (av - bv + cv - dv);
        po[2 * c + ch] = 0.5f * (av + bv - cv - dv);
        po[3 * c + ch] = 0.5f * (av - bv - cv + dv);
      }
    }
  }
}

void idwt2_stacked(const float* in, int h2, int w2, int c, float* out) {
  const int w = 2 * w2;
  const std::size_t row = static_cast<std::size_t>(w) * c;
#pragma omp parallel for
  for (int y = 0; y < h2; ++y) {
    const float* i = in + static_cast<std::size_t>(y) * w2 * 4 * c;
    float* top = out + 2 * static_cast<std::size_t>(y) * row;
    float* bot = top + row;
    for (int xx = 0; xx < w2; ++xx) {
      const float* pi = i + static_cast<std::size_t>(xx) * 4 * c;
      float* a = top + 2 * static_cast<std::size_t>(xx) * c;
      float* b = a + c;
      float* cc = bot + 2 * static_cast<std::size_t>(xx) * c;
      float* d = cc + c;
      for (int ch = 0; ch < c; ++ch) {
        const float ll = pi[ch], lh = pi[c + ch];
        const float hl = pi[2 * c + ch], hh = pi[3 * c + ch];
        a[ch] = 0.5f * (ll + lh + hl + hh);
        b[ch] = 0.5f * (ll - lh + hl - hh);
        cc[ch] = 0.5f * (ll + lh - hl - hh);
        d[ch] = 0.5f * (ll - lh - hl + hh);
      }
    }
  }
}

WaveletLevel dwt2(const Tensor& x) {
  if (x.shape.size() != 3) throw DimensionError("dwt2 expects an HxWxC tensor");
  if (x.h() % 2 != 0 || x.w() % 2 != 0)
    throw DimensionError("dwt2 requires even height and width, got " +
                         std::to_string(x.h()) + "x" + std::to_string(x.w()));
  const int h2 = x.h() / 2, w2 = x.w() / 2, c = x.c();
  Tensor stacked = Tensor::hwc(h2, w2, 4 * c);
  dwt2_stacked(x.v.data(), x.h(), x.w(), c, stacked.v.data());
  WaveletLevel lv;
  lv.ll = Tensor::hwc(h2, w2, c);
  lv.lh = Tensor::hwc(h2, w2, c);
  lv.hl = Tensor::hwc(h2, w2, c);
  lv.hh = Tensor::hwc(h2, w2, c);
  for (int y = 0; y < h2; ++y)
    for (int xx = 0; xx < w2; ++xx)
      for (int ch = 0; ch < c; ++ch) {
        lv.ll.at(y, xx, ch) = stacked.at(y, xx, ch);
        lv.lh.at(y, xx, ch) = stacked.at(y, xx, c + ch);
        lv.hl.at(y, xx, ch) = stacked.at(y, xx, 2 * c + ch);
        lv.hh.at(y, xx, ch) = stacked.at(y, xx, 3 * c + ch);
      }
  return lv;
}

Tensor idwt2(const WaveletLevel& level) {
  const Tensor& ll = level.ll;
  if (ll.shape.size() != 3) throw DimensionError("idwt2 expects HxWxC subbands");
  if (!ll.same_shape(level.lh) || !ll.same_shape(level.hl) ||
      !ll.same_shape(level.hh))
    throw DimensionError("idwt2 subband shapes do not match");
  const int h2 = ll.h(), w2 = ll.w(), c = ll.c();
  Tensor stacked = Tensor::hwc(h2, w2, 4 * c);
  for (int y = 0; y < h2; ++y)
    for (int xx = 0; xx < w2; ++xx)
      for (int ch = 0; ch < c; ++ch) {
        stacked.at(y, xx, ch) = ll.at(y, xx, ch);
        stacked.at(y, xx, c + ch) = level.lh.at(y, xx, ch);
        stacked.at(y, xx, 2 * c + ch) = level.hl.at(y, xx, ch);
        stacked.at(y, xx, 3 * c + ch) = level.hh.at(y, xx, ch);
      }
  Tensor out = Tensor::hwc(2 * h2, 2 * w2, c);
  idwt2_stacked(stacked.v.data(), h2, w2, c, out.v.data());
  return out;
}

WaveletPyramid decompose(const Tensor& x, int depth) {
  if (depth < 1) throw ArgumentError("decompose depth must be >= 1");
  const int div = 1 << depth;
  if (x.h() % div != 0 || x.w() % div != 0)
    throw DimensionError("decompose requires dimensions divisible by 2^depth (" +
                         std::to_string(div) + "), got " + std::to_string(x.h()) +
                         "x" + std::to_string(x.w()));
  WaveletPyramid p;
  p.levels.reserve(depth);
  const Tensor* cur = &x;
  for (int i = 0; i < depth; ++i) {
    WaveletLevel lv = dwt2(*cur);
    lv.level_index = i + 1;
    p.levels.push_back(std::move(lv));
    cur = &p.levels.back().ll;
  }
  return p;
}

Tensor reconstruct(const WaveletPyramid& p) {
  if (p.levels.empty()) throw ArgumentError("reconstruct on empty pyramid");
  Tensor cur = idwt2(p.levels.back());
  for (int i = p.depth() - 2; i >= 0; --i) {
    WaveletLevel lv;
    lv.ll = std::move(cur);
    lv.lh = p.levels[i].lh;
    lv.hl = p.levels[i].hl;
    lv.hh = p.levels[i].hh;
    if (!lv.ll.same_shape(lv.lh))
      throw DimensionError("pyramid level shapes are inconsistent");
    cur = idwt2(lv);
  }
  return cur;
}

}  // namespace deband::wavelet
