// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#include "deband/ref/naive.hpp"

#include <cmath>

namespace deband::ref {

// Direct 2x2 orthonormal Haar kernel in plain double loops. Uses the same
// per-block expressions as the fused kernel so agreement is bit-level; the
// formula itself is pinned by the hand-derived examples in the tests.
wavelet::WaveletLevel naive_dwt2(const Tensor& x) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0)
    throw DimensionError("naive_dwt2 requires even dimensions");
  const int h2 = x.h() / 2, w2 = x.w() / 2, c = x.c();
  wavelet::WaveletLevel lv;
  lv.ll = Tensor::hwc(h2, w2, c);
  lv.lh = Tensor::hwc(h2, w2, c);
  lv.hl = Tensor::hwc(h2, w2, c);
  lv.hh = Tensor::hwc(h2, w2, c);
  for (int j = 0; j < h2; ++j)
    for (int i = 0; i < w2; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const float a = x.at(2 * j, 2 * i, ch);
        const float b = x.at(2 * j, 2 * i + 1, ch);
        const float cc = x.at(2 * j + 1, 2 * i, ch);
        const float d = x.at(2 * j + 1, 2 * i + 1, ch);
        lv.ll.at(j, i, ch) = 0.5f * (a + b + cc + d);
        lv.lh.at(j, i, ch) = 0.5f * (a - b + cc - d);
        lv.hl.at(j, i, ch) = 0.5f * (a + b - cc - d);
        lv.hh.at(j, i, ch) = 0.5f * (a - b - cc + d);
      }
  return lv;
}

Tensor naive_idwt2(const wavelet::WaveletLevel& lv) {
  const int h2 = lv.ll.h(), w2 = lv.ll.w(), c = lv.ll.c();
  Tensor out = Tensor::hwc(2 * h2, 2 * w2, c);
  for (int j = 0; j < h2; ++j)
    for (int i = 0; i < w2; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const float ll = lv.ll.at(j, i, ch), lh = lv.lh.at(j, i, ch);
        const float hl = lv.hl.at(j, i, ch), hh = lv.hh.at(j, i, ch);
        out.at(2 * j, 2 * i, ch) = 0.5f * (ll + lh + hl + hh);
        out.at(2 * j, 2 * i + 1, ch) = 0.5f * (ll - lh + hl - hh);
        out.at(2 * j + 1, 2 * i, ch) = 0.5f * (ll + lh - hl - hh);
        out.at(2 * j + 1, 2 * i + 1, ch) = 0.5f * (ll - lh - hl + hh);
      }
  return out;
}

void naive_scan(const float* x, const float* delta, const float* bsel,
                const float* csel, const float* a_log, const float* dskip,
                int n, int c, int s, float* y) {
  for (int ch = 0; ch < c; ++ch) {
    std::vector<double> h(s, 0.0);
    for (int t = 0; t < n; ++t) {
      const double dlt = delta[t * c + ch];
      const double xv = x[t * c + ch];
      double acc = 0.0;
      for (int k = 0; k < s; ++k) {
        const double a = -std::exp(static_cast<double>(a_log[ch * s + k]));
        const double abar = std::exp(dlt * a);
        h[k] = abar * h[k] + dlt * bsel[t * s + k] * xv;
        acc += csel[t * s + k] * h[k];
      }
      y[t * c + ch] = static_cast<float>(acc + dskip[ch] * xv);
    }
  }
}

Tensor naive_bilinear(const Tensor& x, int out_h, int out_w) {
  const int h = x.h(), w = x.w(), c = x.c();
  Tensor y = Tensor::hwc(out_h, out_w, c);
  for (int oy = 0; oy < out_h; ++oy) {
    const double sy = (oy + 0.5) * static_cast<double>(h) / out_h - 0.5;
    int y0 = static_cast<int>(std::floor(sy));
    const double fy = sy - y0;
    int y1 = y0 + 1;
    if (y0 < 0) y0 = 0;
    if (y0 > h - 1) y0 = h - 1;
    if (y1 < 0) y1 = 0;
    if (y1 > h - 1) y1 = h - 1;
    for (int ox = 0; ox < out_w; ++ox) {
      const double sx = (ox + 0.5) * static_cast<double>(w) / out_w - 0.5;
      int x0 = static_cast<int>(std::floor(sx));
      const double fx = sx - x0;
      int x1 = x0 + 1;
      if (x0 < 0) x0 = 0;
      if (x0 > w - 1) x0 = w - 1;
      if (x1 < 0) x1 = 0;
      if (x1 > w - 1) x1 = w - 1;
      for (int ch = 0; ch < c; ++ch) {
        const double v = (1.0 - fy) * (1.0 - fx) * x.at(y0, x0, ch) +
                         (1.0 - fy) * fx * x.at(y0, x1, ch) +
                         fy * (1.0 - fx) * x.at(y1, x0, ch) +
                         fy * fx * x.at(y1, x1, ch);
        y.at(oy, ox, ch) = static_cast<float>(v);
      }
    }
  }
  return y;
}

namespace {

Tensor naive_minmax(const Tensor& s) {
  double mn = s.v[0], mx = s.v[0];
  for (float v : s.v) {
    if (v < mn) mn = v;
    if (v > mx) mx = v;
  }
  Tensor out = s;
  if (mx - mn <= 0.0) {
    for (float& v : out.v) v = 0.0f;
    return out;
  }
  for (float& v : out.v)
    v = static_cast<float>((v - mn) / (mx - mn));
  return out;
}

Tensor naive_channel_mean(const Tensor& x) {
  Tensor m = Tensor::hwc(x.h(), x.w(), 1);
  for (int y = 0; y < x.h(); ++y)
    for (int xx = 0; xx < x.w(); ++xx) {
      double acc = 0.0;
      for (int ch = 0; ch < x.c(); ++ch) acc += x.at(y, xx, ch);
      m.at(y, xx, 0) = static_cast<float>(acc / x.c());
    }
  return m;
}

}  // namespace

Tensor naive_dwt_mask(const std::vector<wavelet::WaveletLevel>& levels) {
  if (levels.empty()) throw ArgumentError("naive_dwt_mask on empty list");
  const int fh = levels.front().lh.h() * 2, fw = levels.front().lh.w() * 2;
  Tensor acc = Tensor::hwc(fh, fw, 1);
  for (const auto& lv : levels) {
    Tensor mag = Tensor::hwc(lv.lh.h(), lv.lh.w(), lv.lh.c());
    for (int y = 0; y < mag.h(); ++y)
      for (int xx = 0; xx < mag.w(); ++xx)
        for (int ch = 0; ch < mag.c(); ++ch)
          mag.at(y, xx, ch) = std::fabs(lv.lh.at(y, xx, ch)) +
                              std::fabs(lv.hl.at(y, xx, ch)) +
                              std::fabs(lv.hh.at(y, xx, ch));
    Tensor up = naive_bilinear(naive_channel_mean(mag), fh, fw);
    for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += up.v[i];
  }
  for (float& v : acc.v) v /= static_cast<float>(levels.size());
  return naive_minmax(acc);
}

Tensor naive_map_mask(const std::vector<Tensor>& enhanced) {
  if (enhanced.empty()) throw ArgumentError("naive_map_mask on empty list");
  const int fh = enhanced.front().h() * 2, fw = enhanced.front().w() * 2;
  Tensor acc = Tensor::hwc(fh, fw, 1);
  for (const auto& e : enhanced) {
    Tensor mag = e;
    for (float& v : mag.v) v = std::fabs(v);
    Tensor up = naive_bilinear(naive_channel_mean(mag), fh, fw);
    for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += up.v[i];
  }
  for (float& v : acc.v) v /= static_cast<float>(enhanced.size());
  return naive_minmax(acc);
}

void naive_conv3x3(const float* x, int h, int w, int ci, const float* wgt,
                   const float* bias, int co, float* y) {
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx)
      for (int o = 0; o < co; ++o) {
        float acc = bias ? bias[o] : 0.0f;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int sy = yy + ky - 1, sx = xx + kx - 1;
            if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
            for (int i = 0; i < ci; ++i)
              acc += x[(static_cast<std::size_t>(sy) * w + sx) * ci + i] *
                     wgt[((static_cast<std::size_t>(ky) * 3 + kx) * ci + i) * co + o];
          }
        y[(static_cast<std::size_t>(yy) * w + xx) * co + o] = acc;
      }
}

}  // namespace deband::ref
