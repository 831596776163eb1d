// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#include "deband/banddata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace deband::data {

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw FormatError("unknown split '" + s + "'");
}

std::vector<std::size_t> PatchDataset::indices_of(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto it = split.find(pairs[i].id);
    if (it != split.end() && it->second == s) out.push_back(i);
  }
  return out;
}

Tensor synth_band(const Tensor& pristine, int bits,
                  std::optional<std::uint64_t> dither_seed) {
  if (bits < 2 || bits > 8)
    throw ArgumentError("synth_band bits must be in [2, 8], got " +
                        std::to_string(bits));
  const float levels = static_cast<float>((1 << bits) - 1);
  Tensor out = pristine;
  if (dither_seed) {
    Rng rng(*dither_seed);
    for (float& x : out.v) {
      const float noise = (rng.uniform() - 0.5f) / levels;
      x = std::round((x + noise) * levels) / levels;
      x = x < 0.0f ? 0.0f : (x > 1.0f ? 1.0f : x);
    }
  } else {
    for (float& x : out.v) x = std::round(x * levels) / levels;
  }
  return out;
}

std::vector<Tensor> gen_gradient_corpus(int n, int size, std::uint64_t seed) {
  if (size < 32 || (size & (size - 1)) != 0)
    throw ArgumentError("corpus size must be a power of two >= 32");
  std::vector<Tensor> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
    Tensor img = Tensor::hwc(size, size, 3);
    float c0[3], c1[3];
    for (int ch = 0; ch < 3; ++ch) {
      c0[ch] = rng.uniform();
      c1[ch] = rng.uniform();
    }
    const bool radial = rng.uniform() < 0.5f;
    if (radial) {
      const float cx = rng.uniform(0.2f, 0.8f) * size;
      const float cy = rng.uniform(0.2f, 0.8f) * size;
      const float rmax = rng.uniform(0.5f, 1.2f) * size;
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const float d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
          const float t = std::min(1.0f, d / rmax);
          for (int ch = 0; ch < 3; ++ch)
            img.at(y, x, ch) = c0[ch] + (c1[ch] - c0[ch]) * t;
        }
    } else {
      const float theta = rng.uniform(0.0f, 6.2831853f);
      const float dx = std::cos(theta), dy = std::sin(theta);
      // projection range over the square
      float pmin = 0.0f, pmax = 0.0f;
      for (int cy = 0; cy < 2; ++cy)
        for (int cx = 0; cx < 2; ++cx) {
          const float p = dx * cx * (size - 1) + dy * cy * (size - 1);
          pmin = std::min(pmin, p);
          pmax = std::max(pmax, p);
        }
      const float prange = std::max(1.0f, pmax - pmin);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const float t = (dx * x + dy * y - pmin) / prange;
          for (int ch = 0; ch < 3; ++ch)
            img.at(y, x, ch) = c0[ch] + (c1[ch] - c0[ch]) * t;
        }
    }
    // textured overlay on every other image, to exercise detail preservation
    if (i % 2 == 0) {
      const int tw = size / 4 + rng.uniform_int(size / 4);
      const int th = size / 4 + rng.uniform_int(size / 4);
      const int tx = rng.uniform_int(size - tw);
      const int ty = rng.uniform_int(size - th);
      const float amp = rng.uniform(0.08f, 0.16f);
      for (int y = ty; y < ty + th; ++y)
        for (int x = tx; x < tx + tw; ++x) {
          const float noise = rng.uniform(-amp, amp);
          for (int ch = 0; ch < 3; ++ch) {
            float v = img.at(y, x, ch) + noise;
            img.at(y, x, ch) = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
          }
        }
    }
    for (float& v : img.v) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<std::pair<int, int>> patch_offsets(int extent, int patch, int stride) {
  std::vector<int> xs;
  for (int x = 0; x + patch <= extent; x += stride) xs.push_back(x);
  if (xs.empty() || xs.back() != extent - patch) xs.push_back(extent - patch);
  std::vector<std::pair<int, int>> out;
  for (int x : xs) out.emplace_back(x, x + patch);
  return out;
}

std::vector<Tensor> extract_patches(const Tensor& img, int patch, int stride) {
  if (patch > img.h() || patch > img.w())
    throw ArgumentError("patch size exceeds image dimensions");
  if (stride < 1) throw ArgumentError("stride must be >= 1");
  auto ys = patch_offsets(img.h(), patch, stride);
  auto xs = patch_offsets(img.w(), patch, stride);
  std::vector<Tensor> out;
  out.reserve(ys.size() * xs.size());
  for (auto [y0, y1] : ys)
    for (auto [x0, x1] : xs) {
      Tensor p = Tensor::hwc(patch, patch, img.c());
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x)
          for (int ch = 0; ch < img.c(); ++ch)
            p.at(y, x, ch) = img.at(y0 + y, x0 + x, ch);
      out.push_back(std::move(p));
    }
  return out;
}

PatchDataset make_dataset(const std::vector<Tensor>& corpus,
                          const std::vector<int>& bits, int patch, int stride,
                          std::uint64_t seed) {
  if (corpus.empty()) throw ArgumentError("make_dataset: empty corpus");
  if (bits.empty()) throw ArgumentError("make_dataset: empty bits list");
  for (int b : bits)
    if (b < 2 || b > 8) throw ArgumentError("make_dataset: bits out of [2, 8]");

  const int n = static_cast<int>(corpus.size());
  int n_train = std::max(1, static_cast<int>(std::llround(0.7 * n)));
  int n_val = std::max(1, static_cast<int>(std::llround(0.2 * n)));
  int n_test = n - n_train - n_val;
  // keep every split populated while staying within one image of 70/20/10
  while (n_test < 1 && n_val > 1 &&
         std::abs((n_val - 1) - 0.2 * n) <= 1.0 + 1e-9) {
    --n_val;
    ++n_test;
  }
  while (n_test < 1 && n_train > 1 &&
         std::abs((n_train - 1) - 0.7 * n) <= 1.0 + 1e-9) {
    --n_train;
    ++n_test;
  }
  if (n_test < 1 || n_val < 1 || n_train < 1 ||
      std::abs(n_train - 0.7 * n) > 1.0 + 1e-9 ||
      std::abs(n_val - 0.2 * n) > 1.0 + 1e-9 ||
      std::abs(n_test - 0.1 * n) > 1.0 + 1e-9)
    throw ArgumentError("corpus too small to populate train/val/test splits (" +
                        std::to_string(n) + " images)");

  // seeded shuffle of source images
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(Rng::derive(seed, 0x5b1d));
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(i + 1)]);
  std::vector<Split> img_split(n);
  for (int k = 0; k < n; ++k)
    img_split[order[k]] = k < n_train ? Split::train
                          : (k < n_train + n_val ? Split::val : Split::test);

  PatchDataset ds;
  ds.patch_size = patch;
  ds.seed = seed;
  for (int i = 0; i < n; ++i) {
    const int b = bits[i % bits.size()];
    const Tensor banded_full = synth_band(corpus[i], b);
    auto ys = patch_offsets(corpus[i].h(), patch, stride);
    auto xs = patch_offsets(corpus[i].w(), patch, stride);
    char src_name[32];
    std::snprintf(src_name, sizeof src_name, "img%04d", i);
    int pi = 0;
    for (auto [y0, y1] : ys)
      for (auto [x0, x1] : xs) {
        ImagePair pair;
        pair.pristine = Tensor::hwc(patch, patch, 3);
        pair.banded = Tensor::hwc(patch, patch, 3);
        for (int y = 0; y < patch; ++y)
          for (int x = 0; x < patch; ++x)
            for (int ch = 0; ch < 3; ++ch) {
              pair.pristine.at(y, x, ch) = corpus[i].at(y0 + y, x0 + x, ch);
              pair.banded.at(y, x, ch) = banded_full.at(y0 + y, x0 + x, ch);
            }
        char id[48];
        std::snprintf(id, sizeof id, "%s_p%03d", src_name, pi++);
        pair.id = id;
        pair.source = "synthetic";
        pair.bits = b;
        pair.patch_x = x0;
        pair.patch_y = y0;
        pair.source_image = src_name;
        ds.split[pair.id] = img_split[i];
        ds.pairs.push_back(std::move(pair));
      }
  }
  return ds;
}

Padded pad_to_multiple(const Tensor& img, int m) {
  if (m < 1) throw ArgumentError("pad_to_multiple: m must be >= 1");
  const int h = img.h(), w = img.w(), c = img.c();
  const int ph = (h % m == 0) ? h : h + (m - h % m);
  const int pw = (w % m == 0) ? w : w + (m - w % m);
  Padded out;
  out.orig_h = h;
  out.orig_w = w;
  if (ph == h && pw == w) {
    out.padded = img;
    return out;
  }
  if (ph - h > h || pw - w > w)
    throw ArgumentError("pad_to_multiple: image too small to reflect-pad");
  out.padded = Tensor::hwc(ph, pw, c);
  for (int y = 0; y < ph; ++y) {
    const int sy = y < h ? y : 2 * h - 1 - y;  // symmetric reflection
    for (int x = 0; x < pw; ++x) {
      const int sx = x < w ? x : 2 * w - 1 - x;
      for (int ch = 0; ch < c; ++ch) out.padded.at(y, x, ch) = img.at(sy, sx, ch);
    }
  }
  return out;
}

Tensor crop(const Tensor& img, int h, int w) {
  if (h > img.h() || w > img.w()) throw DimensionError("crop larger than image");
  if (h == img.h() && w == img.w()) return img;
  Tensor out = Tensor::hwc(h, w, img.c());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < img.c(); ++ch) out.at(y, x, ch) = img.at(y, x, ch);
  return out;
}

namespace {

void skip_ppm_space(std::istream& in) {
  for (;;) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      return;
    }
  }
}

int read_ppm_int(std::istream& in) {
  skip_ppm_space(in);
  int v = -1;
  in >> v;
  if (!in) throw FormatError("truncated PPM header");
  return v;
}

}  // namespace

Tensor load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path + "'");
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (!in || magic != "P6")
    throw FormatError("unsupported image format in '" + path +
                      "' (expected binary PPM P6)");
  const int w = read_ppm_int(in);
  const int h = read_ppm_int(in);
  const int maxval = read_ppm_int(in);
  if (maxval != 255)
    throw FormatError("unsupported maxval " + std::to_string(maxval) + " in '" +
                      path + "' (only 8-bit images are supported)");
  in.get();  // single whitespace after maxval
  if (w < 1 || h < 1) throw FormatError("bad PPM dimensions in '" + path + "'");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw FormatError("truncated PPM pixel data in '" + path + "'");
  Tensor img = Tensor::hwc(h, w, 3);
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img.v[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

void save_image(const Tensor& img, const std::string& path) {
  if (img.shape.size() != 3 || (img.c() != 3 && img.c() != 1))
    throw ArgumentError("save_image expects HxWx3 or HxWx1");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image '" + path + "'");
  out << (img.c() == 3 ? "P6" : "P5") << "\n"
      << img.w() << " " << img.h() << "\n255\n";
  std::vector<unsigned char> bytes(img.numel());
  for (std::size_t i = 0; i < img.numel(); ++i) {
    // round half away from zero, clamp to [0, 255]
    float v = std::floor(img.v[i] * 255.0f + 0.5f);
    v = v < 0.0f ? 0.0f : (v > 255.0f ? 255.0f : v);
    bytes[i] = static_cast<unsigned char>(v);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing image '" + path + "'");
}

void save_dataset(const PatchDataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
  if (!manifest) throw IoError("cannot write manifest in '" + dir + "'");
  for (const ImagePair& p : ds.pairs) {
    save_image(p.pristine, (fs::path(dir) / (p.id + "_pristine.ppm")).string());
    save_image(p.banded, (fs::path(dir) / (p.id + "_banded.ppm")).string());
    nlohmann::json rec;
    rec["id"] = p.id;
    rec["split"] = split_name(ds.split.at(p.id));
    rec["source"] = p.source;
    rec["bits"] = p.bits;
    rec["patch_x"] = p.patch_x;
    rec["patch_y"] = p.patch_y;
    rec["source_image"] = p.source_image;
    rec["patch_size"] = ds.patch_size;
    manifest << rec.dump() << "\n";
  }
  if (!manifest) throw IoError("failed writing manifest in '" + dir + "'");
}

PatchDataset load_dataset(const std::string& dir) {
  const fs::path mpath = fs::path(dir) / "manifest.jsonl";
  std::ifstream manifest(mpath);
  if (!manifest) throw IoError("cannot open dataset manifest '" + mpath.string() + "'");
  PatchDataset ds;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad manifest line in '" + mpath.string() + "': " + e.what());
    }
    ImagePair p;
    p.id = rec.at("id").get<std::string>();
    p.source = rec.value("source", "imported");
    p.bits = rec.value("bits", 0);
    p.patch_x = rec.value("patch_x", 0);
    p.patch_y = rec.value("patch_y", 0);
    p.source_image = rec.value("source_image", "");
    p.pristine = load_image((fs::path(dir) / (p.id + "_pristine.ppm")).string());
    p.banded = load_image((fs::path(dir) / (p.id + "_banded.ppm")).string());
    if (!p.pristine.same_shape(p.banded))
      throw FormatError("pair '" + p.id + "' has mismatched pristine/banded sizes");
    ds.split[p.id] = split_from(rec.at("split").get<std::string>());
    if (ds.patch_size == 64 && rec.contains("patch_size"))
      ds.patch_size = rec["patch_size"].get<int>();
    ds.pairs.push_back(std::move(p));
  }
  if (ds.pairs.empty()) throw FormatError("dataset manifest '" + mpath.string() + "' is empty");
  return ds;
}

}  // namespace deband::data
