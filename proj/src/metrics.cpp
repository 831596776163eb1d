// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#include "deband/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "deband/freqmask.hpp"

namespace deband::metrics {

double psnr(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("psnr: shapes differ");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.v[i]) - b.v[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse <= 0.0) return 100.0;
  const double db = 10.0 * std::log10(1.0 / mse);
  return std::min(db, 100.0);
}

namespace {

// 11x11 Gaussian window, sigma 1.5, normalized
const std::vector<float>& ssim_window() {
  static const std::vector<float> win = [] {
    std::vector<float> w(121);
    double sum = 0.0;
    for (int y = 0; y < 11; ++y)
      for (int x = 0; x < 11; ++x) {
        const double dy = y - 5, dx = x - 5;
        const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
        w[y * 11 + x] = static_cast<float>(v);
        sum += v;
      }
    for (float& v : w) v = static_cast<float>(v / sum);
    return w;
  }();
  return win;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("ssim: shapes differ");
  if (a.h() < 11 || a.w() < 11)
    throw ArgumentError("ssim requires images of at least 11x11");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const std::vector<float>& win = ssim_window();
  const int h = a.h(), w = a.w(), c = a.c();
  const int rows = h - 10;
  double total = 0.0;
  std::vector<double> row_acc(rows);
  for (int ch = 0; ch < c; ++ch) {
    // per-row partials summed serially, deterministic for any thread count
#pragma omp parallel for
    for (int y = 0; y < rows; ++y) {
      double acc = 0.0;
      for (int x = 0; x <= w - 11; ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int ky = 0; ky < 11; ++ky)
          for (int kx = 0; kx < 11; ++kx) {
            const double wv = win[ky * 11 + kx];
            const double av = a.at(y + ky, x + kx, ch);
            const double bv = b.at(y + ky, x + kx, ch);
            mx += wv * av;
            my += wv * bv;
            sxx += wv * av * av;
            syy += wv * bv * bv;
            sxy += wv * av * bv;
          }
        const double vx = sxx - mx * mx, vy = syy - my * my, cv = sxy - mx * my;
        const double num = (2 * mx * my + c1) * (2 * cv + c2);
        const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
        acc += num / den;
      }
      row_acc[y] = acc;
    }
    double acc = 0.0;
    for (int y = 0; y < rows; ++y) acc += row_acc[y];
    total += acc / (static_cast<double>(rows) * (w - 10));
  }
  return total / c;
}

double band_edge_index(const Tensor& img) {
  Tensor luma = img.c() == 3 ? freqmask::to_grayscale(img) : img;
  const int h = luma.h(), w = luma.w();
  const float step_thr = 1.0f / 255.0f;
  const float flat_thr = 1.0f / 510.0f;
  std::size_t count = 0;
#pragma omp parallel for reduction(+ : count)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool edge = false;
      // along x: gradient g[x] = I[x+1] - I[x]
      if (x >= 3 && x + 4 <= w - 1) {
        const float g = luma.at(y, x + 1, 0) - luma.at(y, x, 0);
        if (std::fabs(g) >= step_thr) {
          float left = 0, right = 0;
          for (int k = 1; k <= 3; ++k) {
            left += std::fabs(luma.at(y, x - k + 1, 0) - luma.at(y, x - k, 0));
            right += std::fabs(luma.at(y, x + k + 1, 0) - luma.at(y, x + k, 0));
          }
          if (left / 3.0f < flat_thr && right / 3.0f < flat_thr) edge = true;
        }
      }
      if (!edge && y >= 3 && y + 4 <= h - 1) {
        const float g = luma.at(y + 1, x, 0) - luma.at(y, x, 0);
        if (std::fabs(g) >= step_thr) {
          float up = 0, down = 0;
          for (int k = 1; k <= 3; ++k) {
            up += std::fabs(luma.at(y - k + 1, x, 0) - luma.at(y - k, x, 0));
            down += std::fabs(luma.at(y + k + 1, x, 0) - luma.at(y + k, x, 0));
          }
          if (up / 3.0f < flat_thr && down / 3.0f < flat_thr) edge = true;
        }
      }
      if (edge) ++count;
    }
  }
  return static_cast<double>(count) / (static_cast<double>(h) * w);
}

namespace {

std::optional<double> run_external(const ExternalMetric& hook, const EvalPair& p) {
  std::string cmd = hook.command_template;
  auto replace_all = [&cmd](const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = cmd.find(from, pos)) != std::string::npos) {
      cmd.replace(pos, from.size(), to);
      pos += to.size();
    }
  };
  replace_all("{pristine}", p.pristine_path);
  replace_all("{banded}", p.banded_path);
  replace_all("{restored}", p.restored_path);
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    std::fprintf(stderr, "warning: external metric '%s' failed to start\n",
                 hook.name.c_str());
    return std::nullopt;
  }
  char buf[256] = {0};
  const bool got = std::fgets(buf, sizeof buf, pipe) != nullptr;
  const int rc = pclose(pipe);
  if (!got || rc != 0) {
    std::fprintf(stderr,
                 "warning: external metric '%s' exited with status %d for %s\n",
                 hook.name.c_str(), rc, p.id.c_str());
    return std::nullopt;
  }
  char* end = nullptr;
  const double v = std::strtod(buf, &end);
  if (end == buf) {
    std::fprintf(stderr, "warning: external metric '%s' output unparsable for %s\n",
                 hook.name.c_str(), p.id.c_str());
    return std::nullopt;
  }
  return v;
}

void aggregate_rows(MetricReport& rep) {
  rep.aggregates.clear();
  rep.ok_rows = 0;
  std::map<std::string, std::map<std::string, std::vector<double>>> cols;
  for (const MetricRow& r : rep.rows) {
    if (r.failed) continue;
    ++rep.ok_rows;
    auto& m = cols[r.variant];
    m["psnr_db"].push_back(r.psnr_db);
    m["ssim"].push_back(r.ssim);
    m["bei_banded"].push_back(r.bei_banded);
    m["bei_restored"].push_back(r.bei_restored);
    m["delta_psnr"].push_back(r.delta_psnr);
    m["delta_bei"].push_back(r.delta_bei);
    if (r.mask_mean) m["mask_mean"].push_back(*r.mask_mean);
    for (const auto& [name, val] : r.external)
      if (val) m["ext_" + name].push_back(*val);
  }
  for (auto& [variant, m] : cols)
    for (auto& [col, vals] : m) {
      Aggregate a;
      double s = 0;
      for (double v : vals) s += v;
      a.mean = s / static_cast<double>(vals.size());
      double q = 0;
      for (double v : vals) q += (v - a.mean) * (v - a.mean);
      a.stddev = std::sqrt(q / static_cast<double>(vals.size()));
      rep.aggregates[variant][col] = a;
    }
}

}  // namespace

MetricReport evaluate(const std::vector<EvalPair>& pairs, const std::string& variant,
                      const std::vector<ExternalMetric>& hooks) {
  if (pairs.empty()) throw ArgumentError("evaluate on empty pair list");
  MetricReport rep;
  rep.rows.resize(pairs.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(pairs.size()); ++i) {
    const EvalPair& p = pairs[i];
    MetricRow r;
    r.image_id = p.id;
    r.variant = variant;
    try {
      r.psnr_db = psnr(p.restored, p.pristine);
      r.ssim = ssim(p.restored, p.pristine);
      r.bei_banded = band_edge_index(p.banded);
      r.bei_restored = band_edge_index(p.restored);
      r.delta_psnr = r.psnr_db - psnr(p.banded, p.pristine);
      r.delta_bei = r.bei_restored - r.bei_banded;
      r.mask_mean = p.mask_mean;
    } catch (const Error& e) {
      r.failed = true;
      r.error = e.what();
    }
    rep.rows[i] = std::move(r);
  }
  // external hooks run serially after the parallel section
  for (const ExternalMetric& hook : hooks)
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (!rep.rows[i].failed)
        rep.rows[i].external[hook.name] = run_external(hook, pairs[i]);
  aggregate_rows(rep);
  return rep;
}

MetricReport merge_reports(const std::vector<MetricReport>& reports) {
  MetricReport out;
  for (const MetricReport& r : reports)
    out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
  aggregate_rows(out);
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> external_names(const MetricReport& rep) {
  std::set<std::string> names;
  for (const MetricRow& r : rep.rows)
    for (const auto& [name, _] : r.external) names.insert(name);
  return {names.begin(), names.end()};
}

}  // namespace

std::string to_csv(const MetricReport& rep) {
  const auto ext = external_names(rep);
  std::ostringstream os;
  os << "image_id,variant,psnr_db,ssim,bei_banded,bei_restored,delta_psnr,"
        "delta_bei,mask_mean";
  for (const std::string& e : ext) os << "," << e;
  os << "\n";
  for (const MetricRow& r : rep.rows) {
    if (r.failed) continue;
    os << r.image_id << "," << r.variant << "," << fmt(r.psnr_db) << ","
       << fmt(r.ssim) << "," << fmt(r.bei_banded) << "," << fmt(r.bei_restored)
       << "," << fmt(r.delta_psnr) << "," << fmt(r.delta_bei) << ","
       << (r.mask_mean ? fmt(*r.mask_mean) : "");
    for (const std::string& e : ext) {
      os << ",";
      auto it = r.external.find(e);
      if (it != r.external.end() && it->second) os << fmt(*it->second);
    }
    os << "\n";
  }
  return os.str();
}

std::string summary_json(const MetricReport& rep) {
  // std::map keeps key order deterministic; emitted manually to keep the
  // exact field order documented in the README
  std::ostringstream os;
  os << "{\n  \"ok_rows\": " << rep.ok_rows << ",\n  \"variants\": {\n";
  bool first_v = true;
  for (const auto& [variant, cols] : rep.aggregates) {
    if (!first_v) os << ",\n";
    first_v = false;
    os << "    \"" << variant << "\": {";
    bool first_c = true;
    for (const auto& [col, agg] : cols) {
      if (!first_c) os << ",";
      first_c = false;
      os << "\n      \"" << col << "\": {\"mean\": " << fmt(agg.mean)
         << ", \"stddev\": " << fmt(agg.stddev) << "}";
    }
    os << "\n    }";
  }
  os << "\n  }\n}\n";
  return os.str();
}

}  // namespace deband::metrics
