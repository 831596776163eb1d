// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <doctest.h>

#include "deband/banddata.hpp"
#include "deband/metrics.hpp"
#include "deband/tensor.hpp"
#include "deband/wavelet.hpp"

using namespace deband;
namespace fs = std::filesystem;

namespace {

Tensor hramp(int h, int w) {
  Tensor t = Tensor::hwc(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) t.at(y, x, c) = static_cast<float>(x) / 255.0f;
  return t;
}

int distinct_values(const Tensor& t, int channel) {
  std::set<float> vals;
  for (int y = 0; y < t.h(); ++y)
    for (int x = 0; x < t.w(); ++x) vals.insert(t.at(y, x, channel));
  return static_cast<int>(vals.size());
}

fs::path temp_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / "deband_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("banddata") {

TEST_CASE("synth_band quantizer levels on a ramp") {
  Tensor ramp = hramp(4, 256);
  Tensor q2 = data::synth_band(ramp, 2);
  CHECK(distinct_values(q2, 0) == 4);

  // 7 interior step transitions per row for bits=3
  Tensor q3 = data::synth_band(ramp, 3);
  int transitions = 0;
  for (int x = 0; x + 1 < 256; ++x)
    if (q3.at(0, x, 0) != q3.at(0, x + 1, 0)) ++transitions;
  CHECK(transitions == 7);
}

TEST_CASE("synth_band at 8 bits is the identity on 8-bit data") {
  Tensor ramp = hramp(2, 256);  // values k/255 are exactly 8-bit
  Tensor q = data::synth_band(ramp, 8);
  for (std::size_t i = 0; i < ramp.numel(); ++i) CHECK(q.v[i] == ramp.v[i]);
}

TEST_CASE("synth_band output has at most 2^bits distinct values per channel") {
  Rng rng(99);
  Tensor img = Tensor::hwc(32, 32, 3);
  for (float& v : img.v) v = rng.uniform();
  for (int bits : {2, 3, 5}) {
    Tensor q = data::synth_band(img, bits);
    for (int c = 0; c < 3; ++c) CHECK(distinct_values(q, c) <= (1 << bits));
  }
}

TEST_CASE("synth_band dither is seeded and reproducible") {
  Tensor img = hramp(8, 64);
  Tensor a = data::synth_band(img, 4, 7u);
  Tensor b = data::synth_band(img, 4, 7u);
  Tensor c = data::synth_band(img, 4, 8u);
  CHECK(a.v == b.v);
  CHECK(a.v != c.v);
}

TEST_CASE("synth_band rejects out-of-range bits") {
  Tensor img = hramp(2, 4);
  CHECK_THROWS_AS(data::synth_band(img, 1), ArgumentError);
  CHECK_THROWS_AS(data::synth_band(img, 9), ArgumentError);
}

TEST_CASE("gen_gradient_corpus determinism and range") {
  auto a = data::gen_gradient_corpus(10, 64, 7);
  auto b = data::gen_gradient_corpus(10, 64, 7);
  REQUIRE(a.size() == 10);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].v == b[i].v);
  for (const Tensor& img : a)
    for (float v : img.v) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
}

TEST_CASE("corpus contains a textured sub-region with 10x the median detail energy") {
  auto corpus = data::gen_gradient_corpus(10, 64, 7);
  bool found = false;
  for (const Tensor& img : corpus) {
    Tensor gray = Tensor::hwc(64, 64, 1);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        gray.at(y, x, 0) =
            (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0f;
    auto lv = wavelet::dwt2(gray);
    const int bs = 8;  // 8x8 blocks of the 32x32 subbands
    std::vector<double> block_energy;
    for (int by = 0; by < 32 / bs; ++by)
      for (int bx = 0; bx < 32 / bs; ++bx) {
        double e = 0;
        for (int y = 0; y < bs; ++y)
          for (int x = 0; x < bs; ++x) {
            const int yy = by * bs + y, xx = bx * bs + x;
            e += std::fabs(lv.lh.at(yy, xx, 0)) + std::fabs(lv.hl.at(yy, xx, 0)) +
                 std::fabs(lv.hh.at(yy, xx, 0));
          }
        block_energy.push_back(e);
      }
    std::sort(block_energy.begin(), block_energy.end());
    const double median = block_energy[block_energy.size() / 2];
    if (block_energy.back() > 10 * (median + 1e-12)) {
      found = true;
      break;
    }
  }
  CHECK(found);
}

TEST_CASE("extract_patches counts and edge anchoring") {
  Tensor img128 = Tensor::hwc(128, 128, 3);
  CHECK(data::extract_patches(img128, 64, 64).size() == 4);
  CHECK(data::extract_patches(img128, 64, 32).size() == 9);

  Tensor img100 = Tensor::hwc(100, 100, 3);
  auto offs = data::patch_offsets(100, 64, 64);
  REQUIRE(offs.size() == 2);
  CHECK(offs[0].first == 0);
  CHECK(offs[1].first == 36);
  CHECK(data::extract_patches(img100, 64, 64).size() == 4);

  CHECK_THROWS_AS(data::extract_patches(Tensor::hwc(32, 32, 3), 64, 32),
                  ArgumentError);
}

TEST_CASE("make_dataset split ratios, determinism and leakage") {
  auto corpus = data::gen_gradient_corpus(10, 64, 3);
  data::PatchDataset ds = data::make_dataset(corpus, {4}, 32, 32, 5);

  std::set<std::string> tr, va, te;
  for (const auto& [id, sp] : ds.split) {
    if (sp == data::Split::train) tr.insert(id.substr(0, 7));
    if (sp == data::Split::val) va.insert(id.substr(0, 7));
    if (sp == data::Split::test) te.insert(id.substr(0, 7));
  }
  CHECK(tr.size() == 7);
  CHECK(va.size() == 2);
  CHECK(te.size() == 1);
  // no source image appears in two splits
  for (const auto& s : tr) {
    CHECK(va.count(s) == 0);
    CHECK(te.count(s) == 0);
  }
  for (const auto& s : va) CHECK(te.count(s) == 0);

  data::PatchDataset ds2 = data::make_dataset(corpus, {4}, 32, 32, 5);
  data::PatchDataset ds3 = data::make_dataset(corpus, {4}, 32, 32, 6);
  REQUIRE(ds2.pairs.size() == ds.pairs.size());
  bool same = true, diff = false;
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    same = same && ds.pairs[i].banded.v == ds2.pairs[i].banded.v;
    diff = diff || ds.split.at(ds.pairs[i].id) != ds3.split.at(ds.pairs[i].id);
  }
  CHECK(same);
  CHECK(diff);  // different seed shuffles the split
}

TEST_CASE("make_dataset rejects a corpus too small for three splits") {
  auto corpus = data::gen_gradient_corpus(3, 64, 1);
  CHECK_THROWS_AS(data::make_dataset(corpus, {4}, 32, 32, 0), ArgumentError);
}

TEST_CASE("banded patches carry more band edges than pristine ones") {
  auto corpus = data::gen_gradient_corpus(12, 128, 11);
  data::PatchDataset ds = data::make_dataset(corpus, {3, 4, 5}, 64, 64, 11);
  double bei_banded = 0, bei_pristine = 0;
  for (const auto& p : ds.pairs) {
    bei_banded += metrics::band_edge_index(p.banded);
    bei_pristine += metrics::band_edge_index(p.pristine);
  }
  CHECK(bei_banded > bei_pristine);
}

TEST_CASE("pad_to_multiple reflects and crops back exactly") {
  Rng rng(123);
  Tensor img = Tensor::hwc(100, 100, 3);
  for (float& v : img.v) v = rng.uniform();
  data::Padded p = data::pad_to_multiple(img, 8);
  CHECK(p.padded.h() == 104);
  CHECK(p.padded.w() == 104);
  // reflected row: padded[100] == img[99]
  CHECK(p.padded.at(100, 0, 0) == img.at(99, 0, 0));
  CHECK(p.padded.at(103, 5, 1) == img.at(96, 5, 1));
  Tensor back = data::crop(p.padded, 100, 100);
  CHECK(back.v == img.v);

  Tensor even = Tensor::hwc(64, 64, 3);
  data::Padded q = data::pad_to_multiple(even, 8);
  CHECK(q.padded.h() == 64);
}

TEST_CASE("ppm round trip is exact on 8-bit data") {
  fs::path dir = temp_dir("ppm");
  Rng rng(9);
  Tensor img = Tensor::hwc(21, 17, 3);
  for (float& v : img.v) v = static_cast<float>(rng.uniform_int(256)) / 255.0f;
  const std::string path = (dir / "img.ppm").string();
  data::save_image(img, path);
  Tensor back = data::load_image(path);
  CHECK(back.v == img.v);

  // byte 128 loads as 128/255
  CHECK(std::fabs(128.0f / 255.0f - 0.50196f) < 1e-5);
}

TEST_CASE("16-bit ppm input is rejected with a format error") {
  fs::path dir = temp_dir("ppm16");
  const std::string path = (dir / "deep.ppm").string();
  std::ofstream out(path, std::ios::binary);
  out << "P6\n2 2\n65535\n";
  for (int i = 0; i < 24; ++i) out.put(static_cast<char>(i));
  out.close();
  CHECK_THROWS_AS(data::load_image(path), FormatError);
  CHECK_THROWS_AS(data::load_image((dir / "missing.ppm").string()), IoError);
}

TEST_CASE("dataset save/load round trip preserves pairs and splits") {
  fs::path dir = temp_dir("dataset");
  auto corpus = data::gen_gradient_corpus(10, 64, 21);
  data::PatchDataset ds = data::make_dataset(corpus, {3, 5}, 32, 32, 21);
  data::save_dataset(ds, dir.string());
  data::PatchDataset back = data::load_dataset(dir.string());
  REQUIRE(back.pairs.size() == ds.pairs.size());
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    CHECK(back.pairs[i].id == ds.pairs[i].id);
    CHECK(back.pairs[i].bits == ds.pairs[i].bits);
    CHECK(back.split.at(back.pairs[i].id) == ds.split.at(ds.pairs[i].id));
    // pixels quantize to bytes on save
    double m = 0;
    for (std::size_t k = 0; k < back.pairs[i].pristine.numel(); ++k)
      m = std::max(m, std::fabs(static_cast<double>(back.pairs[i].pristine.v[k]) -
                                ds.pairs[i].pristine.v[k]));
    CHECK(m <= 0.5 / 255.0 + 1e-9);
  }
}

}  // TEST_SUITE
