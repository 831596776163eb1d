// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#include "deband/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "deband/metrics.hpp"

namespace deband::train {

double l1_loss(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) throw DimensionError("l1_loss: shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i)
    acc += std::fabs(static_cast<double>(pred.v[i]) - target.v[i]);
  return acc / static_cast<double>(pred.numel());
}

namespace {

Tensor clamped01(const Tensor& t) {
  Tensor out = t;
  for (float& v : out.v) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return out;
}

EvalRecord run_eval(int step, const net::ModelState& model,
                    const data::PatchDataset& ds,
                    const std::vector<std::size_t>& val_idx, int cap) {
  const std::size_t n = std::min<std::size_t>(val_idx.size(), cap);
  std::vector<double> psnr_v(n), ssim_v(n), beib_v(n), beir_v(n), mmean_v(n),
      mfrac_v(n);
  const bool has_mask = model.config.variant == net::Variant::dwt ||
                        model.config.variant == net::Variant::map;
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    const data::ImagePair& p = ds.pairs[val_idx[i]];
    net::ForwardResult fr = net::forward(p.banded, model);
    const Tensor restored = clamped01(fr.restored);
    psnr_v[i] = metrics::psnr(restored, p.pristine);
    ssim_v[i] = metrics::ssim(restored, p.pristine);
    beib_v[i] = metrics::band_edge_index(p.banded);
    beir_v[i] = metrics::band_edge_index(restored);
    if (fr.mask) {
      double m = 0, f = 0;
      for (float v : fr.mask->v) {
        m += v;
        if (v > 0.5f) f += 1.0;
      }
      mmean_v[i] = m / static_cast<double>(fr.mask->numel());
      mfrac_v[i] = f / static_cast<double>(fr.mask->numel());
    }
  }
  EvalRecord rec;
  rec.step = step;
  for (std::size_t i = 0; i < n; ++i) {
    rec.psnr += psnr_v[i];
    rec.ssim += ssim_v[i];
    rec.bei_banded += beib_v[i];
    rec.bei_restored += beir_v[i];
  }
  const double inv = 1.0 / static_cast<double>(n);
  rec.psnr *= inv;
  rec.ssim *= inv;
  rec.bei_banded *= inv;
  rec.bei_restored *= inv;
  if (has_mask) {
    double m = 0, f = 0;
    for (std::size_t i = 0; i < n; ++i) {
      m += mmean_v[i];
      f += mfrac_v[i];
    }
    rec.mask_mean = m * inv;
    rec.mask_frac_gt_half = f * inv;
  }
  return rec;
}

}  // namespace

TrainResult train(const net::ModelState& model, const data::PatchDataset& ds,
                  const TrainConfig& cfg) {
  if (cfg.steps < 1) throw ArgumentError("train: steps must be >= 1");
  if (cfg.batch < 1) throw ArgumentError("train: batch must be >= 1");
  if (!(cfg.learning_rate > 0.0f))
    throw ArgumentError("train: learning_rate must be > 0");
  if (cfg.variant == net::Variant::wwm)
    throw ArgumentError("wwm is inference-time; train plain");

  const auto train_idx = ds.indices_of(data::Split::train);
  const auto val_idx = ds.indices_of(data::Split::val);
  if (train_idx.empty()) throw ArgumentError("train: empty train split");
  if (val_idx.empty()) throw ArgumentError("train: empty val split");

  TrainResult res;
  res.model = model;
  res.model.config.variant = cfg.variant;
  res.model.step = 0;

  const std::size_t np = res.model.params.size();
  std::vector<Tensor> m1(np), m2(np);
  for (std::size_t p = 0; p < np; ++p) {
    m1[p] = Tensor(res.model.params[p].shape);
    m2[p] = Tensor(res.model.params[p].shape);
  }
  const float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;

  Rng rng(Rng::derive(cfg.seed, 0x7a41));
  const auto t0 = std::chrono::steady_clock::now();

  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> batch(cfg.batch);
    for (int i = 0; i < cfg.batch; ++i)
      batch[i] = train_idx[rng.uniform_int(static_cast<int>(train_idx.size()))];

    std::vector<net::LossGrads> lg(cfg.batch);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < cfg.batch; ++i) {
      const data::ImagePair& pair = ds.pairs[batch[i]];
      lg[i] = net::loss_and_grads(pair.banded, pair.pristine, res.model);
    }

    double loss = 0.0;
    for (int i = 0; i < cfg.batch; ++i) loss += lg[i].loss;
    loss /= cfg.batch;
    if (!std::isfinite(loss))
      throw TrainError("non-finite loss at step " + std::to_string(step));
    res.log.loss.push_back(static_cast<float>(loss));

    // batch-mean gradients in fixed parameter/sample order
    const float bscale = 1.0f / static_cast<float>(cfg.batch);
    const float corr1 = 1.0f - std::pow(b1, static_cast<float>(step));
    const float corr2 = 1.0f - std::pow(b2, static_cast<float>(step));
#pragma omp parallel for schedule(dynamic)
    for (long long p = 0; p < static_cast<long long>(np); ++p) {
      Tensor& theta = res.model.params[p];
      Tensor g(theta.shape);
      bool any = false;
      for (int i = 0; i < cfg.batch; ++i) {
        const Tensor& gi = lg[i].grads[p];
        if (gi.v.empty()) continue;
        any = true;
        for (std::size_t e = 0; e < g.numel(); ++e) g.v[e] += gi.v[e];
      }
      if (!any) continue;
      for (std::size_t e = 0; e < g.numel(); ++e) {
        const float gv = g.v[e] * bscale;
        m1[p].v[e] = b1 * m1[p].v[e] + (1.0f - b1) * gv;
        m2[p].v[e] = b2 * m2[p].v[e] + (1.0f - b2) * gv * gv;
        const float mhat = m1[p].v[e] / corr1;
        const float vhat = m2[p].v[e] / corr2;
        theta.v[e] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + eps);
      }
    }
    for (std::size_t p = 0; p < np; ++p)
      if (!res.model.params[p].all_finite())
        throw TrainError("non-finite parameter '" + res.model.names[p] +
                         "' after step " + std::to_string(step));

    res.model.step = step;
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      res.log.evals.push_back(
          run_eval(step, res.model, ds, val_idx, cfg.eval_pairs_cap));
      if (!cfg.checkpoint_path.empty())
        save_checkpoint(res.model, cfg.checkpoint_path);
    }
  }
  res.log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'W', 'D', 'B', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void get(std::ifstream& in, T& v, const std::string& path) {
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in)
    throw CheckpointError("checkpoint '" + path + "' is truncated or corrupt");
}

}  // namespace

void save_checkpoint(const net::ModelState& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(kMagic, sizeof kMagic);
  put(out, kVersion);
  const net::NetConfig& c = model.config;
  put(out, static_cast<std::int32_t>(c.base_channels));
  put(out, static_cast<std::int32_t>(c.depth));
  put(out, static_cast<std::int32_t>(c.state_dim));
  put(out, static_cast<std::int32_t>(c.ffn_expansion));
  put(out, static_cast<std::int32_t>(c.attention_heads));
  put(out, static_cast<std::uint32_t>(c.variant));
  put(out, static_cast<std::int64_t>(model.step));
  put(out, static_cast<std::uint32_t>(model.params.size()));
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const std::string& name = model.names[i];
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Tensor& t = model.params[i];
    put(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put(out, static_cast<std::int32_t>(d));
    out.write(reinterpret_cast<const char*>(t.v.data()),
              static_cast<std::streamsize>(t.v.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

net::ModelState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw CheckpointError("'" + path + "' is not a checkpoint file");
  std::uint32_t version = 0;
  get(in, version, path);
  if (version != kVersion)
    throw CheckpointError("checkpoint version mismatch in '" + path +
                          "': expected " + std::to_string(kVersion) + ", found " +
                          std::to_string(version));
  net::ModelState st;
  std::int32_t v32;
  get(in, v32, path);
  st.config.base_channels = v32;
  get(in, v32, path);
  st.config.depth = v32;
  get(in, v32, path);
  st.config.state_dim = v32;
  get(in, v32, path);
  st.config.ffn_expansion = v32;
  get(in, v32, path);
  st.config.attention_heads = v32;
  std::uint32_t var = 0;
  get(in, var, path);
  if (var > 3) throw CheckpointError("bad variant field in '" + path + "'");
  st.config.variant = static_cast<net::Variant>(var);
  std::int64_t step = 0;
  get(in, step, path);
  st.step = step;
  std::uint32_t nparams = 0;
  get(in, nparams, path);

  // expected registry for this config
  std::vector<std::string> exp_names;
  std::vector<std::vector<int>> exp_shapes;
  net::for_each_param(st.config, [&](const std::string& n, const std::vector<int>& s,
                                     net::Init) {
    exp_names.push_back(n);
    exp_shapes.push_back(s);
  });
  if (nparams != exp_names.size())
    throw CheckpointError("checkpoint '" + path + "' holds " +
                          std::to_string(nparams) + " parameters, config expects " +
                          std::to_string(exp_names.size()));
  for (std::uint32_t i = 0; i < nparams; ++i) {
    std::uint32_t len = 0;
    get(in, len, path);
    if (len > 4096) throw CheckpointError("bad name length in '" + path + "'");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw CheckpointError("checkpoint '" + path + "' is truncated or corrupt");
    std::uint32_t ndims = 0;
    get(in, ndims, path);
    if (ndims > 8) throw CheckpointError("bad shape rank in '" + path + "'");
    std::vector<int> shape(ndims);
    for (std::uint32_t d = 0; d < ndims; ++d) {
      std::int32_t dim = 0;
      get(in, dim, path);
      shape[d] = dim;
    }
    if (name != exp_names[i] || shape != exp_shapes[i])
      throw CheckpointError("checkpoint '" + path + "' parameter '" + name +
                            "' does not match the expected layout ('" +
                            exp_names[i] + "')");
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(float)));
    if (!in) throw CheckpointError("checkpoint '" + path + "' is truncated or corrupt");
    st.names.push_back(name);
    st.params.push_back(std::move(t));
  }
  return st;
}

std::string log_to_jsonl(const TrainLog& log) {
  std::string out;
  for (std::size_t i = 0; i < log.loss.size(); ++i) {
    nlohmann::json rec;
    rec["type"] = "loss";
    rec["step"] = i + 1;
    rec["loss"] = log.loss[i];
    out += rec.dump();
    out += "\n";
  }
  for (const EvalRecord& e : log.evals) {
    nlohmann::json rec;
    rec["type"] = "eval";
    rec["step"] = e.step;
    rec["psnr"] = e.psnr;
    rec["ssim"] = e.ssim;
    rec["bei_banded"] = e.bei_banded;
    rec["bei_restored"] = e.bei_restored;
    if (e.mask_mean) rec["mask_mean"] = *e.mask_mean;
    if (e.mask_frac_gt_half) rec["mask_frac_gt_half"] = *e.mask_frac_gt_half;
    out += rec.dump();
    out += "\n";
  }
  return out;
}

}  // namespace deband::train
