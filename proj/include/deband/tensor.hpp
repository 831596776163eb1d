// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "deband/errors.hpp"

namespace deband {

// Dense row-major float tensor. Feature maps use shape {h, w, c};
// weight matrices use {rows, cols}; scalars use {1}.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(numel_of(shape), 0.0f);
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    if (s.empty()) return 0;
    std::size_t n = 1;
    for (int d : s) {
      if (d <= 0) throw DimensionError("tensor dimensions must be positive");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  static Tensor hwc(int h, int w, int c) { return Tensor({h, w, c}); }

  std::size_t numel() const { return v.size(); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // HWC accessors; valid only for 3-d tensors.
  int h() const { return shape[0]; }
  int w() const { return shape[1]; }
  int c() const { return shape.size() >= 3 ? shape[2] : 1; }
  float& at(int y, int x, int ch) {
    return v[(static_cast<std::size_t>(y) * shape[1] + x) * shape[2] + ch];
  }
  float at(int y, int x, int ch) const {
    return v[(static_cast<std::size_t>(y) * shape[1] + x) * shape[2] + ch];
  }

  void fill(float x) { v.assign(v.size(), x); }

  bool all_finite() const {
    for (float x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

// Deterministic RNG with portable output scaling (the raw mt19937 stream is
// standard-specified; the distributions in <random> are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (s_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  float uniform() {
    return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
  }
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>((next_u64() >> 33) % static_cast<std::uint64_t>(n));
  }

  // Derive an independent stream (for per-image / per-sample seeding).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    Rng r(seed ^ (0xd1342543de82ef95ull * (stream + 1)));
    return r.next_u64();
  }

 private:
  std::uint64_t s_;
};

}  // namespace deband
