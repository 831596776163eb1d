// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

// Times the OpenMP kernels against the serial reference implementations and
// cross-checks their outputs. Build target: deband_bench.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include <omp.h>

#include "deband/kernels.hpp"
#include "deband/ref/naive.hpp"
#include "deband/tensor.hpp"
#include "deband/wavelet.hpp"

using namespace deband;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(static_cast<double>(a[i]) - b[i]));
  return m;
}

Tensor random_hwc(int h, int w, int c, std::uint64_t seed) {
  Tensor t = Tensor::hwc(h, w, c);
  Rng rng(seed);
  for (float& v : t.v) v = rng.uniform();
  return t;
}

void report(const char* name, double serial_ms, double omp_ms, double diff) {
  std::printf("%-28s serial %9.3f ms | omp %9.3f ms | speedup %5.2fx | max|diff| %.2e\n",
              name, serial_ms, omp_ms, serial_ms / omp_ms, diff);
}

}  // namespace

int main() {
  std::printf("kernel benchmark, %d OpenMP thread(s)\n", omp_get_max_threads());

  {  // dwt2: 512x512x16
    Tensor x = random_hwc(512, 512, 16, 1);
    Tensor out_omp = Tensor::hwc(256, 256, 64);
    wavelet::WaveletLevel lv;
    const double ts = time_ms([&] { lv = ref::naive_dwt2(x); }, 5);
    const double to = time_ms(
        [&] { wavelet::dwt2_stacked(x.v.data(), 512, 512, 16, out_omp.v.data()); },
        5);
    // compare ll band
    double diff = 0;
    for (int y = 0; y < 256; ++y)
      for (int xx = 0; xx < 256; ++xx)
        for (int ch = 0; ch < 16; ++ch)
          diff = std::max(diff, std::fabs(static_cast<double>(lv.ll.at(y, xx, ch)) -
                                          out_omp.at(y, xx, ch)));
    report("dwt2 512x512x16", ts, to, diff);
  }

  {  // conv3x3: 256x256, 16 -> 16
    Tensor x = random_hwc(256, 256, 16, 2);
    Tensor w({3, 3, 16, 16}), b({16});
    Rng rng(3);
    for (float& v : w.v) v = rng.uniform(-0.1f, 0.1f);
    for (float& v : b.v) v = rng.uniform(-0.1f, 0.1f);
    std::vector<float> ys(x.numel()), yo(x.numel());
    const double ts = time_ms(
        [&] {
          ref::naive_conv3x3(x.v.data(), 256, 256, 16, w.v.data(), b.v.data(), 16,
                             ys.data());
        },
        3);
    const double to = time_ms(
        [&] {
          kern::conv3x3_fwd(x.v.data(), 256, 256, 16, w.v.data(), b.v.data(), 16,
                            yo.data());
        },
        3);
    report("conv3x3 256x256 16->16", ts, to, max_abs_diff(ys, yo));
  }

  {  // selective scan: 64x64 grid, c=16, s=16
    const int n = 64 * 64, c = 16, s = 16;
    Tensor x = random_hwc(64, 64, c, 4);
    Tensor delta = random_hwc(64, 64, c, 5);
    for (float& v : delta.v) v = 0.001f + 0.1f * v;
    Tensor bsel = random_hwc(64, 64, s, 6), csel = random_hwc(64, 64, s, 7);
    Tensor a_log({c, s}), dsk({c});
    for (int ch = 0; ch < c; ++ch)
      for (int k = 0; k < s; ++k) a_log.v[ch * s + k] = std::log(1.0f + k);
    dsk.fill(1.0f);
    std::vector<float> ys(x.numel()), yo(x.numel());
    const double ts = time_ms(
        [&] {
          ref::naive_scan(x.v.data(), delta.v.data(), bsel.v.data(), csel.v.data(),
                          a_log.v.data(), dsk.v.data(), n, c, s, ys.data());
        },
        3);
    const double to = time_ms(
        [&] {
          kern::scan_fwd(x.v.data(), delta.v.data(), bsel.v.data(), csel.v.data(),
                         a_log.v.data(), dsk.v.data(), n, c, s, nullptr, yo.data(),
                         nullptr);
        },
        3);
    report("selective scan 4096x16x16", ts, to, max_abs_diff(ys, yo));
  }

  {  // bilinear upsample 64x64 -> 512x512
    Tensor x = random_hwc(64, 64, 1, 8);
    Tensor yo = Tensor::hwc(512, 512, 1);
    Tensor ys;
    const double ts = time_ms([&] { ys = ref::naive_bilinear(x, 512, 512); }, 5);
    const double to = time_ms(
        [&] { kern::bilinear_fwd(x.v.data(), 64, 64, 1, yo.v.data(), 512, 512); },
        5);
    report("bilinear 64->512", ts, to, max_abs_diff(ys.v, yo.v));
  }

  return 0;
}
