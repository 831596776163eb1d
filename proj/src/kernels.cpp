// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#include "deband/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

namespace deband::kern {

float exp_neg(float x) {
  if (x < -87.0f) return 0.0f;
  if (x > 0.0f) x = 0.0f;
  const float log2e = 1.442695040888963f;
  float t = x * log2e;
  float nf = std::floor(t + 0.5f);
  int n = static_cast<int>(nf);
  // r = x - n*ln2 in two parts for accuracy
  float r = x - nf * 0.6931471824645996f;
  r += nf * 1.904654323148236e-09f;
  // degree-6 minimax-ish polynomial for exp(r), r in [-ln2/2, ln2/2]
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  float e = p * r * r + r + 1.0f;
  // scale by 2^n via exponent bits (n in [-126, 0] here)
  std::uint32_t bits;
  std::memcpy(&bits, &e, 4);
  const std::int32_t expo = static_cast<std::int32_t>((bits >> 23) & 0xff) + n;
  if (expo <= 0) return 0.0f;  // denormal range: treat as zero decay
  bits = (bits & 0x807fffffu) | (static_cast<std::uint32_t>(expo) << 23);
  float out;
  std::memcpy(&out, &bits, 4);
  return out;
}

void conv3x3_fwd(const float* x, int h, int w, int ci, const float* wgt,
                 const float* bias, int co, float* y) {
#pragma omp parallel for
  for (int yy = 0; yy < h; ++yy) {
    for (int xx = 0; xx < w; ++xx) {
      float* out = y + (static_cast<std::size_t>(yy) * w + xx) * co;
      for (int o = 0; o < co; ++o) out[o] = bias ? bias[o] : 0.0f;
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = yy + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = xx + kx - 1;
          if (sx < 0 || sx >= w) continue;
          const float* px = x + (static_cast<std::size_t>(sy) * w + sx) * ci;
          const float* pw = wgt + (static_cast<std::size_t>(ky) * 3 + kx) * ci * co;
          for (int i = 0; i < ci; ++i) {
            const float xv = px[i];
            const float* wr = pw + static_cast<std::size_t>(i) * co;
            for (int o = 0; o < co; ++o) out[o] += xv * wr[o];
          }
        }
      }
    }
  }
}

void conv3x3_bwd_input(const float* dy, int h, int w, int co, const float* wgt,
                       int ci, float* dx) {
#pragma omp parallel for
  for (int yy = 0; yy < h; ++yy) {
    for (int xx = 0; xx < w; ++xx) {
      float* out = dx + (static_cast<std::size_t>(yy) * w + xx) * ci;
      for (int ky = 0; ky < 3; ++ky) {
        const int oy = yy - (ky - 1);
        if (oy < 0 || oy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ox = xx - (kx - 1);
          if (ox < 0 || ox >= w) continue;
          const float* pdy = dy + (static_cast<std::size_t>(oy) * w + ox) * co;
          const float* pw = wgt + (static_cast<std::size_t>(ky) * 3 + kx) * ci * co;
          for (int i = 0; i < ci; ++i) {
            const float* wr = pw + static_cast<std::size_t>(i) * co;
            float acc = 0.0f;
            for (int o = 0; o < co; ++o) acc += wr[o] * pdy[o];
            out[i] += acc;
          }
        }
      }
    }
  }
}

void conv3x3_bwd_weight(const float* x, const float* dy, int h, int w, int ci,
                        int co, float* dw, float* db) {
#pragma omp parallel for
  for (int o = 0; o < co; ++o) {
    double dbacc = 0.0;
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        const float g = dy[(static_cast<std::size_t>(yy) * w + xx) * co + o];
        if (g == 0.0f) continue;
        dbacc += g;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = yy + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= w) continue;
            const float* px = x + (static_cast<std::size_t>(sy) * w + sx) * ci;
            float* pw = dw + ((static_cast<std::size_t>(ky) * 3 + kx) * ci) * co + o;
            for (int i = 0; i < ci; ++i) pw[static_cast<std::size_t>(i) * co] += px[i] * g;
          }
        }
      }
    }
    if (db) db[o] += static_cast<float>(dbacc);
  }
}

void conv1x1_fwd(const float* x, std::size_t n, int ci, const float* wgt,
                 const float* bias, int co, float* y) {
#pragma omp parallel for
  for (long long p = 0; p < static_cast<long long>(n); ++p) {
    const float* px = x + static_cast<std::size_t>(p) * ci;
    float* py = y + static_cast<std::size_t>(p) * co;
    for (int o = 0; o < co; ++o) py[o] = bias ? bias[o] : 0.0f;
    for (int i = 0; i < ci; ++i) {
      const float xv = px[i];
      const float* wr = wgt + static_cast<std::size_t>(i) * co;
      for (int o = 0; o < co; ++o) py[o] += xv * wr[o];
    }
  }
}

void conv1x1_bwd_input(const float* dy, std::size_t n, int co, const float* wgt,
                       int ci, float* dx) {
#pragma omp parallel for
  for (long long p = 0; p < static_cast<long long>(n); ++p) {
    const float* pdy = dy + static_cast<std::size_t>(p) * co;
    float* pdx = dx + static_cast<std::size_t>(p) * ci;
    for (int i = 0; i < ci; ++i) {
      const float* wr = wgt + static_cast<std::size_t>(i) * co;
      float acc = 0.0f;
      for (int o = 0; o < co; ++o) acc += wr[o] * pdy[o];
      pdx[i] += acc;
    }
  }
}

void conv1x1_bwd_weight(const float* x, const float* dy, std::size_t n, int ci,
                        int co, float* dw, float* db) {
#pragma omp parallel for
  for (int i = 0; i < ci; ++i) {
    float* wr = dw + static_cast<std::size_t>(i) * co;
    for (std::size_t p = 0; p < n; ++p) {
      const float xv = x[p * ci + i];
      if (xv == 0.0f) continue;
      const float* pdy = dy + p * co;
      for (int o = 0; o < co; ++o) wr[o] += xv * pdy[o];
    }
  }
  if (db) {
    for (int o = 0; o < co; ++o) {
      double acc = 0.0;
      for (std::size_t p = 0; p < n; ++p) acc += dy[p * co + o];
      db[o] += static_cast<float>(acc);
    }
  }
}

namespace {
inline void bilinear_coord(int o, int in_size, int out_size, int& i0, int& i1,
                           float& f) {
  const float scale = static_cast<float>(in_size) / static_cast<float>(out_size);
  float s = (static_cast<float>(o) + 0.5f) * scale - 0.5f;
  float fl = std::floor(s);
  f = s - fl;
  int i = static_cast<int>(fl);
  i0 = i < 0 ? 0 : (i >= in_size ? in_size - 1 : i);
  i1 = i + 1 < 0 ? 0 : (i + 1 >= in_size ? in_size - 1 : i + 1);
}
}  // namespace

void bilinear_fwd(const float* x, int h, int w, int c, float* y, int oh, int ow) {
#pragma omp parallel for
  for (int oy = 0; oy < oh; ++oy) {
    int y0, y1;
    float fy;
    bilinear_coord(oy, h, oh, y0, y1, fy);
    for (int ox = 0; ox < ow; ++ox) {
      int x0, x1;
      float fx;
      bilinear_coord(ox, w, ow, x0, x1, fx);
      const float* p00 = x + (static_cast<std::size_t>(y0) * w + x0) * c;
      const float* p01 = x + (static_cast<std::size_t>(y0) * w + x1) * c;
      const float* p10 = x + (static_cast<std::size_t>(y1) * w + x0) * c;
      const float* p11 = x + (static_cast<std::size_t>(y1) * w + x1) * c;
      float* py = y + (static_cast<std::size_t>(oy) * ow + ox) * c;
      const float w00 = (1.0f - fy) * (1.0f - fx), w01 = (1.0f - fy) * fx;
      const float w10 = fy * (1.0f - fx), w11 = fy * fx;
      for (int ch = 0; ch < c; ++ch)
        py[ch] = w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
    }
  }
}

void bilinear_bwd(const float* dy, int oh, int ow, int c, float* dx, int h, int w) {
  // scatter-add; kept serial for determinism (mask maps are small)
  for (int oy = 0; oy < oh; ++oy) {
    int y0, y1;
    float fy;
    bilinear_coord(oy, h, oh, y0, y1, fy);
    for (int ox = 0; ox < ow; ++ox) {
      int x0, x1;
      float fx;
      bilinear_coord(ox, w, ow, x0, x1, fx);
      const float* pdy = dy + (static_cast<std::size_t>(oy) * ow + ox) * c;
      float* p00 = dx + (static_cast<std::size_t>(y0) * w + x0) * c;
      float* p01 = dx + (static_cast<std::size_t>(y0) * w + x1) * c;
      float* p10 = dx + (static_cast<std::size_t>(y1) * w + x0) * c;
      float* p11 = dx + (static_cast<std::size_t>(y1) * w + x1) * c;
      const float w00 = (1.0f - fy) * (1.0f - fx), w01 = (1.0f - fy) * fx;
      const float w10 = fy * (1.0f - fx), w11 = fy * fx;
      for (int ch = 0; ch < c; ++ch) {
        const float g = pdy[ch];
        p00[ch] += w00 * g;
        p01[ch] += w01 * g;
        p10[ch] += w10 * g;
        p11[ch] += w11 * g;
      }
    }
  }
}

void layernorm_fwd(const float* x, std::size_t n, int c, const float* gain,
                   const float* bias, float* y, float* mu, float* rstd) {
  const double eps = 1e-5;
#pragma omp parallel for
  for (long long p = 0; p < static_cast<long long>(n); ++p) {
    const float* px = x + static_cast<std::size_t>(p) * c;
    float* py = y + static_cast<std::size_t>(p) * c;
    double m = 0.0;
    for (int i = 0; i < c; ++i) m += px[i];
    m /= c;
    double var = 0.0;
    for (int i = 0; i < c; ++i) {
      const double d = px[i] - m;
      var += d * d;
    }
    var /= c;
    const float r = static_cast<float>(1.0 / std::sqrt(var + eps));
    const float mf = static_cast<float>(m);
    mu[p] = mf;
    rstd[p] = r;
    for (int i = 0; i < c; ++i) py[i] = (px[i] - mf) * r * gain[i] + bias[i];
  }
}

void layernorm_bwd(const float* x, const float* dy, std::size_t n, int c,
                   const float* gain, const float* mu, const float* rstd,
                   float* dx, float* dgain, float* dbias) {
#pragma omp parallel for
  for (long long p = 0; p < static_cast<long long>(n); ++p) {
    const float* px = x + static_cast<std::size_t>(p) * c;
    const float* pdy = dy + static_cast<std::size_t>(p) * c;
    float* pdx = dx + static_cast<std::size_t>(p) * c;
    const float m = mu[p], r = rstd[p];
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < c; ++i) {
      const float xh = (px[i] - m) * r;
      const float dxh = pdy[i] * gain[i];
      s1 += dxh;
      s2 += static_cast<double>(dxh) * xh;
    }
    const float a1 = static_cast<float>(s1 / c), a2 = static_cast<float>(s2 / c);
    for (int i = 0; i < c; ++i) {
      const float xh = (px[i] - m) * r;
      const float dxh = pdy[i] * gain[i];
      pdx[i] += r * (dxh - a1 - xh * a2);
    }
  }
  // parameter grads: per-channel serial sums, deterministic
#pragma omp parallel for
  for (int i = 0; i < c; ++i) {
    double dg = 0.0, db = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      const float xh = (x[p * c + i] - mu[p]) * rstd[p];
      dg += static_cast<double>(dy[p * c + i]) * xh;
      db += dy[p * c + i];
    }
    dgain[i] += static_cast<float>(dg);
    dbias[i] += static_cast<float>(db);
  }
}

void scan_fwd(const float* x, const float* delta, const float* bsel,
              const float* csel, const float* a_log, const float* dskip, int n,
              int c, int s, const int* perm, float* y, float* hstate) {
#pragma omp parallel for
  for (int ch = 0; ch < c; ++ch) {
    std::vector<float> h(s, 0.0f);
    std::vector<float> a(s);
    for (int k = 0; k < s; ++k) a[k] = -std::exp(a_log[ch * s + k]);
    const float dsk = dskip[ch];
    float* hp = h.data();
    const float* ap = a.data();
    for (int t = 0; t < n; ++t) {
      const int p = perm ? perm[t] : t;
      const std::size_t off = static_cast<std::size_t>(p) * c + ch;
      const float dlt = delta[off];
      const float xv = x[off];
      const float dx = dlt * xv;
      const float* pb = bsel + static_cast<std::size_t>(p) * s;
      const float* pc = csel + static_cast<std::size_t>(p) * s;
      float acc = 0.0f;
      for (int k = 0; k < s; ++k) {
        const float abar = exp_neg(dlt * ap[k]);
        hp[k] = abar * hp[k] + dx * pb[k];
        acc += pc[k] * hp[k];
      }
      y[off] = acc + dsk * xv;
      if (hstate) {
        float* hs = hstate + (static_cast<std::size_t>(t) * c + ch) * s;
        for (int k = 0; k < s; ++k) hs[k] = hp[k];
      }
    }
  }
}

void scan_bwd(const float* x, const float* delta, const float* bsel,
              const float* csel, const float* a_log, const float* dskip,
              const float* hstate, const float* dy, int n, int c, int s,
              const int* perm, float* dx, float* ddelta, float* dbsel,
              float* dcsel, float* da_log, float* ddskip) {
  // per-channel scratch for the B/C gradients, reduced in channel order
  std::vector<float> sb(static_cast<std::size_t>(c) * n * s, 0.0f);
  std::vector<float> sc(static_cast<std::size_t>(c) * n * s, 0.0f);
#pragma omp parallel for
  for (int ch = 0; ch < c; ++ch) {
    std::vector<float> dh(s, 0.0f);
    std::vector<float> a(s);
    for (int k = 0; k < s; ++k) a[k] = -std::exp(a_log[ch * s + k]);
    float* dhp = dh.data();
    const float* ap = a.data();
    float* dal = da_log + static_cast<std::size_t>(ch) * s;
    float* sbc = sb.data() + static_cast<std::size_t>(ch) * n * s;
    float* scc = sc.data() + static_cast<std::size_t>(ch) * n * s;
    double ddsk = 0.0;
    for (int t = n - 1; t >= 0; --t) {
      const int p = perm ? perm[t] : t;
      const std::size_t pc_off = static_cast<std::size_t>(p) * c + ch;
      const float dlt = delta[pc_off];
      const float xv = x[pc_off];
      const float g = dy[pc_off];
      const float* pb = bsel + static_cast<std::size_t>(p) * s;
      const float* pcs = csel + static_cast<std::size_t>(p) * s;
      const float* ht = hstate + (static_cast<std::size_t>(t) * c + ch) * s;
      const float* hprev =
          t > 0 ? hstate + (static_cast<std::size_t>(t - 1) * c + ch) * s : nullptr;
      ddsk += static_cast<double>(g) * xv;
      float ddlt = 0.0f, dxv = g * dskip[ch];
      float* sbp = sbc + static_cast<std::size_t>(p) * s;
      float* scp = scc + static_cast<std::size_t>(p) * s;
      const float dltx = dlt * xv;
      for (int k = 0; k < s; ++k) {
        float dhk = dhp[k] + pcs[k] * g;
        scp[k] += ht[k] * g;
        const float hp = hprev ? hprev[k] : 0.0f;
        const float abar = exp_neg(dlt * ap[k]);
        const float dabar = dhk * hp;
        const float da = dabar * ap[k] * abar;
        ddlt += da;
        dal[k] += da * dlt;
        sbp[k] += dhk * dltx;
        ddlt += dhk * pb[k] * xv;
        dxv += dhk * dlt * pb[k];
        dhp[k] = dhk * abar;
      }
      ddelta[pc_off] += ddlt;
      dx[pc_off] += dxv;
    }
    ddskip[ch] += static_cast<float>(ddsk);
  }
#pragma omp parallel for
  for (long long e = 0; e < static_cast<long long>(static_cast<std::size_t>(n) * s);
       ++e) {
    double accb = 0.0, accc = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      accb += sb[static_cast<std::size_t>(ch) * n * s + e];
      accc += sc[static_cast<std::size_t>(ch) * n * s + e];
    }
    dbsel[e] += static_cast<float>(accb);
    dcsel[e] += static_cast<float>(accc);
  }
}

}  // namespace deband::kern
