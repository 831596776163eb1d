// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#include <cmath>

#include <doctest.h>

#include "deband/freqmask.hpp"
#include "deband/ref/naive.hpp"
#include "deband/tensor.hpp"
#include "deband/wavelet.hpp"

using namespace deband;

namespace {

Tensor random_hwc(int h, int w, int c, std::uint64_t seed) {
  Tensor t = Tensor::hwc(h, w, c);
  Rng rng(seed);
  for (float& v : t.v) v = rng.uniform();
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::fabs(static_cast<double>(a.v[i]) - b.v[i]));
  return m;
}

Tensor mirror_h(const Tensor& t) {
  Tensor out = t;
  for (int y = 0; y < t.h(); ++y)
    for (int x = 0; x < t.w(); ++x)
      for (int c = 0; c < t.c(); ++c) out.at(y, x, c) = t.at(y, t.w() - 1 - x, c);
  return out;
}

}  // namespace

TEST_SUITE("freqmask") {

TEST_CASE("grayscale weights") {
  Tensor img = Tensor::hwc(1, 3, 3);
  img.at(0, 0, 0) = 1;
  img.at(0, 0, 1) = 1;
  img.at(0, 0, 2) = 1;  // white
  img.at(0, 1, 0) = 1;  // pure red
  img.at(0, 2, 0) = 0.5f;
  img.at(0, 2, 1) = 0.5f;
  img.at(0, 2, 2) = 0.5f;  // gray
  Tensor g = freqmask::to_grayscale(img);
  CHECK(g.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(g.at(0, 1, 0) == doctest::Approx(0.299).epsilon(1e-6));
  CHECK(g.at(0, 2, 0) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK_THROWS_AS(freqmask::to_grayscale(Tensor::hwc(2, 2, 1)), ArgumentError);
}

TEST_CASE("minmax_normalize direct arithmetic") {
  Tensor s = Tensor::hwc(2, 2, 1);
  s.v = {1, 3, 5, 7};
  Tensor m = freqmask::minmax_normalize(s);
  CHECK(m.v[0] == 0.0f);
  CHECK(m.v[1] == doctest::Approx(1.0 / 3).epsilon(1e-6));
  CHECK(m.v[2] == doctest::Approx(2.0 / 3).epsilon(1e-6));
  CHECK(m.v[3] == 1.0f);

  Tensor two = Tensor::hwc(1, 2, 1);
  two.v = {0, 10};
  Tensor m2 = freqmask::minmax_normalize(two);
  CHECK(m2.v[0] == 0.0f);
  CHECK(m2.v[1] == 1.0f);
}

TEST_CASE("minmax_normalize degenerate rule: constant map -> zeros") {
  Tensor s = Tensor::hwc(3, 3, 1);
  s.fill(4.2f);
  Tensor m = freqmask::minmax_normalize(s);
  for (float v : m.v) CHECK(v == 0.0f);
}

TEST_CASE("minmax_normalize is scale-invariant") {
  Tensor s = random_hwc(6, 6, 1, 11);
  // power-of-two scales keep float products exact, so the 1e-7 bound holds
  for (float k : {0.25f, 32.0f}) {
    Tensor sk = s;
    for (float& v : sk.v) v *= k;
    CHECK(max_abs_diff(freqmask::minmax_normalize(s),
                       freqmask::minmax_normalize(sk)) < 1e-7);
  }
  // generic positive scale: within 2 ulp of 1.0
  Tensor sg = s;
  for (float& v : sg.v) v *= 37.3f;
  CHECK(max_abs_diff(freqmask::minmax_normalize(s), freqmask::minmax_normalize(sg)) <
        2.5e-7);
}

TEST_CASE("wwm_mask of a constant image is all zeros") {
  Tensor img = Tensor::hwc(32, 32, 3);
  img.fill(0.5f);
  Tensor m = freqmask::wwm_mask(img, 3);
  CHECK(m.h() == 32);
  CHECK(m.w() == 32);
  for (float v : m.v) CHECK(v == 0.0f);
}

TEST_CASE("wwm_mask concentrates on a vertical step edge") {
  const int n = 64;
  Tensor img = Tensor::hwc(n, n, 3);
  // step placed off the dyadic block grid so every level sees it
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = x <= n / 2 ? 0.2f : 0.8f;
  Tensor m = freqmask::wwm_mask(img, 3);
  // peak must sit on the edge columns, flat halves near zero
  double edge_mean = 0, flat_mean = 0;
  int edge_n = 0, flat_n = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (std::abs(x - n / 2) <= 6) {
        edge_mean += m.at(y, x, 0);
        ++edge_n;
      } else if (x < n / 2 - 12 || x > n / 2 + 12) {
        flat_mean += m.at(y, x, 0);
        ++flat_n;
      }
    }
  edge_mean /= edge_n;
  flat_mean /= flat_n;
  CHECK(edge_mean > 10 * flat_mean);
  CHECK(flat_mean < 0.05);
}

TEST_CASE("wwm_mask output dimensions equal input dimensions") {
  Tensor img = random_hwc(40, 24, 3, 12);
  Tensor m = freqmask::wwm_mask(img, 3);
  CHECK(m.h() == 40);
  CHECK(m.w() == 24);
  CHECK(m.c() == 1);
}

TEST_CASE("mask range: min 0 and max 1 for non-constant input") {
  Tensor img = random_hwc(32, 32, 3, 13);
  Tensor m = freqmask::wwm_mask(img, 3);
  float mn = 1e9f, mx = -1e9f;
  for (float v : m.v) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  CHECK(mn == 0.0f);
  CHECK(mx == 1.0f);
}

TEST_CASE("wwm_mask mirror consistency") {
  Tensor img = random_hwc(32, 32, 3, 14);
  Tensor m = freqmask::wwm_mask(img, 3);
  Tensor mm = freqmask::wwm_mask(mirror_h(img), 3);
  CHECK(max_abs_diff(mirror_h(m), mm) < 1e-5);
}

TEST_CASE("fuse limits and convexity") {
  Tensor banded = random_hwc(8, 8, 3, 15);
  Tensor restored = random_hwc(8, 8, 3, 16);
  Tensor ones = Tensor::hwc(8, 8, 1);
  ones.fill(1.0f);
  Tensor zeros = Tensor::hwc(8, 8, 1);
  CHECK(max_abs_diff(freqmask::fuse(banded, restored, ones), banded) == 0.0);
  CHECK(max_abs_diff(freqmask::fuse(banded, restored, zeros), restored) == 0.0);

  Tensor half = Tensor::hwc(8, 8, 1);
  half.fill(0.5f);
  Tensor b2 = Tensor::hwc(8, 8, 3), r2 = Tensor::hwc(8, 8, 3);
  b2.fill(0.2f);
  r2.fill(0.6f);
  Tensor f = freqmask::fuse(b2, r2, half);
  for (float v : f.v) CHECK(v == doctest::Approx(0.4).epsilon(1e-6));
}

TEST_CASE("fuse stays within the per-pixel envelope") {
  Tensor banded = random_hwc(8, 8, 3, 17);
  Tensor restored = random_hwc(8, 8, 3, 18);
  Tensor m = random_hwc(8, 8, 1, 19);
  Tensor f = freqmask::fuse(banded, restored, m);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) {
        const float lo = std::min(banded.at(y, x, c), restored.at(y, x, c));
        const float hi = std::max(banded.at(y, x, c), restored.at(y, x, c));
        CHECK(f.at(y, x, c) >= lo - 1e-7f);
        CHECK(f.at(y, x, c) <= hi + 1e-7f);
      }
}

TEST_CASE("fuse idempotence: fuse(x, x, m) == x") {
  Tensor x = random_hwc(8, 8, 3, 20);
  Tensor m = random_hwc(8, 8, 1, 21);
  CHECK(max_abs_diff(freqmask::fuse(x, x, m), x) == 0.0);
}

TEST_CASE("fuse rejects shape mismatches") {
  CHECK_THROWS_AS(freqmask::fuse(Tensor::hwc(8, 8, 3), Tensor::hwc(8, 4, 3),
                                 Tensor::hwc(8, 8, 1)),
                  DimensionError);
  CHECK_THROWS_AS(freqmask::fuse(Tensor::hwc(8, 8, 3), Tensor::hwc(8, 8, 3),
                                 Tensor::hwc(4, 8, 1)),
                  DimensionError);
}

TEST_CASE("dwt_mask: all-zero features give an all-zero mask") {
  std::vector<wavelet::WaveletLevel> levels(2);
  for (int i = 0; i < 2; ++i) {
    const int s = 16 >> i;
    levels[i].ll = Tensor::hwc(s, s, 4);
    levels[i].lh = Tensor::hwc(s, s, 4);
    levels[i].hl = Tensor::hwc(s, s, 4);
    levels[i].hh = Tensor::hwc(s, s, 4);
  }
  Tensor m = freqmask::dwt_mask(levels);
  CHECK(m.h() == 32);
  for (float v : m.v) CHECK(v == 0.0f);
}

TEST_CASE("dwt_mask single level reduces to normalized upsampled magnitude") {
  std::vector<wavelet::WaveletLevel> levels(1);
  levels[0].ll = random_hwc(8, 8, 4, 22);
  levels[0].lh = random_hwc(8, 8, 4, 23);
  levels[0].hl = random_hwc(8, 8, 4, 24);
  levels[0].hh = random_hwc(8, 8, 4, 25);
  Tensor m = freqmask::dwt_mask(levels);

  Tensor mag = Tensor::hwc(8, 8, 4);
  for (std::size_t i = 0; i < mag.numel(); ++i)
    mag.v[i] = std::fabs(levels[0].lh.v[i]) + std::fabs(levels[0].hl.v[i]) +
               std::fabs(levels[0].hh.v[i]);
  Tensor mean = Tensor::hwc(8, 8, 1);
  for (int p = 0; p < 64; ++p) {
    double acc = 0;
    for (int c = 0; c < 4; ++c) acc += mag.v[p * 4 + c];
    mean.v[p] = static_cast<float>(acc / 4);
  }
  Tensor expect =
      freqmask::minmax_normalize(freqmask::bilinear_resize(mean, 16, 16));
  CHECK(max_abs_diff(m, expect) < 1e-7);
}

TEST_CASE("dwt_mask matches the naive-loop oracle on random 3-level features") {
  std::vector<wavelet::WaveletLevel> levels(3);
  for (int i = 0; i < 3; ++i) {
    const int s = 32 >> i;
    levels[i].ll = random_hwc(s, s, 8, 30 + 4 * i);
    levels[i].lh = random_hwc(s, s, 8, 31 + 4 * i);
    levels[i].hl = random_hwc(s, s, 8, 32 + 4 * i);
    levels[i].hh = random_hwc(s, s, 8, 33 + 4 * i);
  }
  CHECK(max_abs_diff(freqmask::dwt_mask(levels), ref::naive_dwt_mask(levels)) <
        1e-6);
}

TEST_CASE("dwt_mask and map_mask reject empty lists") {
  CHECK_THROWS_AS(freqmask::dwt_mask({}), ArgumentError);
  CHECK_THROWS_AS(freqmask::map_mask({}), ArgumentError);
}

TEST_CASE("map_mask: zero features -> zero mask, random -> [0,1] attained") {
  std::vector<Tensor> zero = {Tensor::hwc(16, 16, 8), Tensor::hwc(8, 8, 8)};
  Tensor mz = freqmask::map_mask(zero);
  for (float v : mz.v) CHECK(v == 0.0f);

  std::vector<Tensor> feats = {random_hwc(16, 16, 8, 50), random_hwc(8, 8, 8, 51),
                               random_hwc(4, 4, 8, 52)};
  for (auto& f : feats)
    for (float& v : f.v) v = v * 2.0f - 1.0f;
  Tensor m = freqmask::map_mask(feats);
  float mn = 1e9f, mx = -1e9f;
  for (float v : m.v) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  CHECK(mn == 0.0f);
  CHECK(mx == 1.0f);
}

TEST_CASE("map_mask matches the naive-loop oracle") {
  std::vector<Tensor> feats = {random_hwc(16, 16, 6, 60), random_hwc(8, 8, 6, 61),
                               random_hwc(4, 4, 6, 62)};
  for (auto& f : feats)
    for (float& v : f.v) v = v * 2.0f - 1.0f;
  CHECK(max_abs_diff(freqmask::map_mask(feats), ref::naive_map_mask(feats)) < 1e-6);
}

}  // TEST_SUITE
