// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deband/tensor.hpp"

namespace deband::metrics {

// 10*log10(1/MSE), capped at 100 dB when the images are identical.
double psnr(const Tensor& a, const Tensor& b);

// Windowed SSIM: 11x11 Gaussian (sigma 1.5), K1=0.01, K2=0.03, dynamic
// range 1, mean over valid window positions; computed per channel and
// averaged. Images must be at least 11x11.
double ssim(const Tensor& a, const Tensor& b);

// Band-edge index: fraction of pixels whose luma carries an isolated
// 1-pixel step (|gradient| >= 1/255) flanked on both sides by 3-pixel
// windows of mean |gradient| < 1/510, along either axis.
double band_edge_index(const Tensor& img);

struct EvalPair {
  std::string id;
  Tensor pristine;
  Tensor banded;
  Tensor restored;
  std::optional<double> mask_mean;
  // file paths for the external metric hook (optional)
  std::string pristine_path, banded_path, restored_path;
};

struct MetricRow {
  std::string image_id;
  std::string variant;
  double psnr_db = 0, ssim = 0;
  double bei_banded = 0, bei_restored = 0;
  double delta_psnr = 0, delta_bei = 0;
  std::optional<double> mask_mean;
  std::map<std::string, std::optional<double>> external;
  bool failed = false;
  std::string error;
};

struct Aggregate {
  double mean = 0, stddev = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  // variant -> column -> aggregate, over non-failed rows
  std::map<std::string, std::map<std::string, Aggregate>> aggregates;
  std::size_t ok_rows = 0;
};

// External metric adapter: the command template is run once per pair with
// {pristine}/{banded}/{restored} replaced by file paths; the first line of
// stdout must parse as one real. Failures leave the column absent.
struct ExternalMetric {
  std::string name;
  std::string command_template;
};

MetricReport evaluate(const std::vector<EvalPair>& pairs, const std::string& variant,
                      const std::vector<ExternalMetric>& hooks = {});

// Merges row groups of several per-variant reports into one.
MetricReport merge_reports(const std::vector<MetricReport>& reports);

// Fixed column order: image_id, variant, psnr_db, ssim, bei_banded,
// bei_restored, delta_psnr, delta_bei, mask_mean, then external columns.
std::string to_csv(const MetricReport& report);
std::string summary_json(const MetricReport& report);

}  // namespace deband::metrics
