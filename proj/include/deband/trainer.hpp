// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deband/banddata.hpp"
#include "deband/network.hpp"
#include "deband/tensor.hpp"

namespace deband::train {

struct TrainConfig {
  int steps = 1000;
  int batch = 8;
  float learning_rate = 2e-4f;
  std::uint64_t seed = 0;
  net::Variant variant = net::Variant::plain;
  int eval_every = 200;
  std::string checkpoint_path;  // empty: keep checkpoints in memory only
  int eval_pairs_cap = 64;      // validation pairs per eval
};

struct EvalRecord {
  int step = 0;
  double psnr = 0, ssim = 0, bei_banded = 0, bei_restored = 0;
  std::optional<double> mask_mean, mask_frac_gt_half;
};

struct TrainLog {
  std::vector<float> loss;  // one entry per step
  std::vector<EvalRecord> evals;
  double wall_seconds = 0;  // reported separately, never serialized
};

double l1_loss(const Tensor& pred, const Tensor& target);

struct TrainResult {
  net::ModelState model;
  TrainLog log;
};

// Seeded Adam loop; loss is L1 on the variant's final output (fused for
// dwt/map). Aborts with a diagnostic on the first non-finite loss.
TrainResult train(const net::ModelState& model, const data::PatchDataset& ds,
                  const TrainConfig& cfg);

void save_checkpoint(const net::ModelState& model, const std::string& path);
net::ModelState load_checkpoint(const std::string& path);

// Deterministic line-delimited export (loss + eval records; no wall clock).
std::string log_to_jsonl(const TrainLog& log);

}  // namespace deband::train
