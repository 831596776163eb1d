// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deband/tensor.hpp"

namespace deband::data {

enum class Split { train, val, test };
std::string split_name(Split s);
Split split_from(const std::string& s);

struct ImagePair {
  Tensor pristine;  // HxWx3 in [0,1]
  Tensor banded;
  std::string id;
  std::string source = "synthetic";  // synthetic | imported
  int bits = 0;
  int patch_x = 0, patch_y = 0;
  std::string source_image;
};

struct PatchDataset {
  std::vector<ImagePair> pairs;
  std::map<std::string, Split> split;  // by pair id
  int patch_size = 64;
  std::uint64_t seed = 0;

  std::vector<std::size_t> indices_of(Split s) const;
};

// Uniform bit-depth quantization: q = round(x*(2^bits-1)) / (2^bits-1).
// With a dither seed, uniform noise in [-0.5, 0.5]/(2^bits-1) is added
// before rounding. bits must be in [2, 8].
Tensor synth_band(const Tensor& pristine, int bits,
                  std::optional<std::uint64_t> dither_seed = std::nullopt);

// n pristine images of size x size: linear/radial gradients, with a seeded
// textured sub-region on every other image.
std::vector<Tensor> gen_gradient_corpus(int n, int size, std::uint64_t seed);

// Raster-order tiling; the last row/column is anchored to the image edge.
std::vector<std::pair<int, int>> patch_offsets(int extent, int patch, int stride);
std::vector<Tensor> extract_patches(const Tensor& img, int patch, int stride);

// Pairs each pristine patch with its quantized counterpart; splits at
// source-image granularity, 70/20/10. bits cycles over source images.
PatchDataset make_dataset(const std::vector<Tensor>& corpus,
                          const std::vector<int>& bits, int patch, int stride,
                          std::uint64_t seed);

struct Padded {
  Tensor padded;
  int orig_h = 0, orig_w = 0;
};
// Symmetric-reflection pad right/bottom to the next multiple of m.
Padded pad_to_multiple(const Tensor& img, int m);
Tensor crop(const Tensor& img, int h, int w);

// Binary PPM (P6, maxval 255) for RGB; PGM (P5) for single-channel maps.
// Loading accepts P6 only and maps bytes to byte/255 exactly.
Tensor load_image(const std::string& path);
void save_image(const Tensor& img, const std::string& path);

// On-disk dataset: <id>_pristine.ppm / <id>_banded.ppm plus manifest.jsonl
// (one record per pair: id, split, source, bits, patch offsets, source image).
void save_dataset(const PatchDataset& ds, const std::string& dir);
PatchDataset load_dataset(const std::string& dir);

}  // namespace deband::data
