// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#include <cmath>

#include <doctest.h>

#include "deband/banddata.hpp"
#include "deband/metrics.hpp"
#include "deband/tensor.hpp"

using namespace deband;

namespace {

Tensor constant(int h, int w, int c, float v) {
  Tensor t = Tensor::hwc(h, w, c);
  t.fill(v);
  return t;
}

Tensor random_hwc(int h, int w, int c, std::uint64_t seed) {
  Tensor t = Tensor::hwc(h, w, c);
  Rng rng(seed);
  for (float& v : t.v) v = rng.uniform();
  return t;
}

Tensor hramp(int h, int w) {
  Tensor t = Tensor::hwc(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) t.at(y, x, c) = static_cast<float>(x) / 255.0f;
  return t;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("psnr formula cases") {
  Tensor a = random_hwc(16, 16, 3, 1);
  CHECK(metrics::psnr(a, a) == 100.0);

  Tensor zero = constant(16, 16, 1, 0.0f);
  Tensor half = constant(16, 16, 1, 0.5f);
  CHECK(metrics::psnr(zero, half) == doctest::Approx(6.0206).epsilon(1e-4));

  Tensor off = constant(16, 16, 1, 0.1f);
  CHECK(metrics::psnr(zero, off) == doctest::Approx(20.0).epsilon(1e-6));

  CHECK(metrics::psnr(a, random_hwc(16, 16, 3, 2)) ==
        metrics::psnr(random_hwc(16, 16, 3, 2), a));
  CHECK_THROWS_AS(metrics::psnr(a, Tensor::hwc(8, 8, 3)), DimensionError);
}

TEST_CASE("psnr strictly decreases with noise amplitude") {
  Tensor base = random_hwc(32, 32, 3, 3);
  double prev = 1e9;
  for (float amp : {0.01f, 0.03f, 0.09f}) {
    Tensor noisy = base;
    Rng rng(4);
    for (float& v : noisy.v) {
      v += rng.uniform(-amp, amp);
      v = v < 0 ? 0 : (v > 1 ? 1 : v);
    }
    const double p = metrics::psnr(noisy, base);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim identity, symmetry and range") {
  Tensor a = random_hwc(24, 24, 1, 5);
  CHECK(metrics::ssim(a, a) == 1.0);
  Tensor b = random_hwc(24, 24, 1, 6);
  CHECK(metrics::ssim(a, b) == doctest::Approx(metrics::ssim(b, a)).epsilon(1e-12));
  const double s = metrics::ssim(a, b);
  CHECK(s >= -1.0);
  CHECK(s <= 1.0);
}

TEST_CASE("ssim of constant 0 vs constant 1 hits the closed form") {
  // mu_x=0, mu_y=1, sigma=0: ssim = C1/(1+C1) with C1 = 1e-4
  Tensor zero = constant(16, 16, 1, 0.0f);
  Tensor one = constant(16, 16, 1, 1.0f);
  const double expect = 1e-4 / (1.0 + 1e-4);
  CHECK(metrics::ssim(zero, one) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("ssim rejects images smaller than the window") {
  Tensor small = constant(8, 8, 1, 0.5f);
  CHECK_THROWS_AS(metrics::ssim(small, small), ArgumentError);
}

TEST_CASE("band_edge_index on constant, quantized ramp, smooth ramp") {
  CHECK(metrics::band_edge_index(constant(32, 32, 3, 0.37f)) == 0.0);

  // 2-bit quantized 256-px ramp: 3 step columns per row -> 3/256
  Tensor ramp = hramp(32, 256);
  Tensor q = data::synth_band(ramp, 2);
  CHECK(metrics::band_edge_index(q) == doctest::Approx(3.0 / 256).epsilon(1e-9));

  // the smooth ramp itself has gradient 1/255 everywhere: flanks fail
  CHECK(metrics::band_edge_index(ramp) == 0.0);
}

TEST_CASE("BEI on the ramp family: quantized strictly above pristine") {
  // a b-bit quantizer crosses 2^b - 1 levels on the full ramp, so the
  // band-edge count is (2^b - 1)/256 as long as steps stay isolated;
  // every quantized ramp sits strictly above the pristine ramp's zero
  Tensor ramp = hramp(32, 256);
  const double b3 = metrics::band_edge_index(data::synth_band(ramp, 3));
  const double b5 = metrics::band_edge_index(data::synth_band(ramp, 5));
  const double bp = metrics::band_edge_index(ramp);
  CHECK(b3 == doctest::Approx(7.0 / 256).epsilon(1e-9));
  CHECK(b5 == doctest::Approx(31.0 / 256).epsilon(1e-9));
  CHECK(b3 > bp);
  CHECK(b5 > bp);
  CHECK(bp == 0.0);
}

TEST_CASE("evaluate: perfect restoration and identity restoration") {
  std::vector<metrics::EvalPair> pairs;
  for (int k = 0; k < 3; ++k) {
    metrics::EvalPair p;
    p.id = "p" + std::to_string(k);
    p.pristine = random_hwc(16, 16, 3, 100 + k);
    p.banded = data::synth_band(p.pristine, 3);
    p.restored = p.pristine;
    pairs.push_back(p);
  }
  metrics::MetricReport rep = metrics::evaluate(pairs, "ideal");
  for (const auto& r : rep.rows) {
    CHECK(r.psnr_db == 100.0);
    CHECK(r.ssim == 1.0);
  }

  for (auto& p : pairs) p.restored = p.banded;
  metrics::MetricReport rep2 = metrics::evaluate(pairs, "noop");
  for (const auto& r : rep2.rows) {
    CHECK(r.delta_psnr == 0.0);
    CHECK(r.delta_bei == 0.0);
  }
}

TEST_CASE("report aggregates equal hand-averaged rows") {
  std::vector<metrics::EvalPair> pairs;
  for (int k = 0; k < 4; ++k) {
    metrics::EvalPair p;
    p.id = "p" + std::to_string(k);
    p.pristine = random_hwc(16, 16, 3, 200 + k);
    p.banded = data::synth_band(p.pristine, 4);
    p.restored = data::synth_band(p.pristine, 6);
    pairs.push_back(p);
  }
  metrics::MetricReport rep = metrics::evaluate(pairs, "v");
  double mean = 0;
  for (const auto& r : rep.rows) mean += r.psnr_db;
  mean /= rep.rows.size();
  CHECK(rep.aggregates.at("v").at("psnr_db").mean ==
        doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("report determinism: identical inputs give identical bytes") {
  std::vector<metrics::EvalPair> pairs;
  for (int k = 0; k < 2; ++k) {
    metrics::EvalPair p;
    p.id = "p" + std::to_string(k);
    p.pristine = random_hwc(16, 16, 3, 300 + k);
    p.banded = data::synth_band(p.pristine, 3);
    p.restored = p.banded;
    pairs.push_back(p);
  }
  metrics::MetricReport a = metrics::evaluate(pairs, "x");
  metrics::MetricReport b = metrics::evaluate(pairs, "x");
  CHECK(metrics::to_csv(a) == metrics::to_csv(b));
  CHECK(metrics::summary_json(a) == metrics::summary_json(b));
}

TEST_CASE("evaluate records per-row failures without aborting") {
  std::vector<metrics::EvalPair> pairs;
  metrics::EvalPair good;
  good.id = "good";
  good.pristine = random_hwc(16, 16, 3, 400);
  good.banded = good.pristine;
  good.restored = good.pristine;
  metrics::EvalPair bad;
  bad.id = "bad";
  bad.pristine = random_hwc(16, 16, 3, 401);
  bad.banded = bad.pristine;
  bad.restored = Tensor::hwc(8, 8, 3);  // shape mismatch
  pairs.push_back(good);
  pairs.push_back(bad);
  metrics::MetricReport rep = metrics::evaluate(pairs, "v");
  CHECK(rep.ok_rows == 1);
  CHECK(rep.rows[1].failed);
  CHECK(metrics::to_csv(rep).find("bad") == std::string::npos);
}

TEST_CASE("external hook: echo, failure degradation, absence") {
  std::vector<metrics::EvalPair> pairs;
  metrics::EvalPair p;
  p.id = "p0";
  p.pristine = random_hwc(16, 16, 3, 500);
  p.banded = p.pristine;
  p.restored = p.pristine;
  p.pristine_path = "x";
  p.banded_path = "y";
  p.restored_path = "z";
  pairs.push_back(p);

  metrics::MetricReport with_hook =
      metrics::evaluate(pairs, "v", {{"half", "echo 0.5"}});
  REQUIRE(with_hook.rows[0].external.count("half") == 1);
  CHECK(*with_hook.rows[0].external.at("half") == 0.5);
  CHECK(with_hook.aggregates.at("v").at("ext_half").mean == 0.5);

  metrics::MetricReport failing =
      metrics::evaluate(pairs, "v", {{"boom", "false"}});
  CHECK_FALSE(failing.rows[0].external.at("boom").has_value());

  metrics::MetricReport none = metrics::evaluate(pairs, "v");
  metrics::MetricReport none2 = metrics::evaluate(pairs, "v", {});
  CHECK(metrics::to_csv(none) == metrics::to_csv(none2));
}

}  // TEST_SUITE
