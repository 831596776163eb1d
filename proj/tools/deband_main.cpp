// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deband/banddata.hpp"
#include "deband/errors.hpp"
#include "deband/freqmask.hpp"
#include "deband/metrics.hpp"
#include "deband/network.hpp"
#include "deband/pipeline.hpp"
#include "deband/trainer.hpp"

namespace fs = std::filesystem;
using namespace deband;

namespace {

// ------------------------------------------------------------- config file

std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::map<std::string, std::string> kv;
  if (path.empty()) return kv;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw FormatError("config line " + std::to_string(lineno) +
                          " is not 'key = value'");
      continue;
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = val;
  }
  return kv;
}

template <typename T>
T parse_value(const std::string& s);

template <>
int parse_value<int>(const std::string& s) {
  return std::stoi(s);
}
template <>
float parse_value<float>(const std::string& s) {
  return std::stof(s);
}
template <>
std::uint64_t parse_value<std::uint64_t>(const std::string& s) {
  return std::stoull(s);
}
template <>
std::string parse_value<std::string>(const std::string& s) {
  return s;
}
template <>
std::vector<int> parse_value<std::vector<int>>(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

// CLI flag wins over config value wins over default.
template <typename T>
void resolve(const CLI::App* cmd, const std::string& flag,
             const std::map<std::string, std::string>& cfg,
             const std::string& key, T& var) {
  if (cmd->count(flag) > 0) return;
  auto it = cfg.find(key);
  if (it == cfg.end()) return;
  try {
    var = parse_value<T>(it->second);
  } catch (const std::exception&) {
    throw FormatError("config key '" + key + "' has bad value '" + it->second + "'");
  }
}

void write_effective_config(const std::string& out_dir,
                            const std::vector<std::pair<std::string, std::string>>& kv) {
  auto sorted = kv;
  std::sort(sorted.begin(), sorted.end());
  std::ofstream out(fs::path(out_dir) / "effective_config.txt");
  for (const auto& [k, v] : sorted) out << k << " = " << v << "\n";
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

Tensor clamped01(const Tensor& t) {
  Tensor out = t;
  for (float& v : out.v) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return out;
}

void require_out(const std::string& out) {
  if (out.empty()) throw ArgumentError("--out is required");
}

// ---------------------------------------------------------------- settings

struct NetFlags {
  int channels = 16, depth = 3, state_dim = 16, ffn = 2, heads = 2;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--channels", channels, "base feature channels");
    cmd->add_option("--net-depth", depth, "wavelet decomposition levels");
    cmd->add_option("--state-dim", state_dim, "state space hidden size");
    cmd->add_option("--ffn-expansion", ffn, "feed-forward expansion factor");
    cmd->add_option("--heads", heads, "attention heads");
  }
  void resolve_from(const CLI::App* cmd, const std::map<std::string, std::string>& cfg) {
    resolve(cmd, "--channels", cfg, "channels", channels);
    resolve(cmd, "--net-depth", cfg, "net_depth", depth);
    resolve(cmd, "--state-dim", cfg, "state_dim", state_dim);
    resolve(cmd, "--ffn-expansion", cfg, "ffn_expansion", ffn);
    resolve(cmd, "--heads", cfg, "heads", heads);
  }
  net::NetConfig to_config(net::Variant v) const {
    net::NetConfig c;
    c.base_channels = channels;
    c.depth = depth;
    c.state_dim = state_dim;
    c.ffn_expansion = ffn;
    c.attention_heads = heads;
    c.variant = v;
    c.validate();
    return c;
  }
  std::vector<std::pair<std::string, std::string>> echo() const {
    return {{"channels", std::to_string(channels)},
            {"net_depth", std::to_string(depth)},
            {"state_dim", std::to_string(state_dim)},
            {"ffn_expansion", std::to_string(ffn)},
            {"heads", std::to_string(heads)}};
  }
};

// ------------------------------------------------------------- subcommands

int cmd_synth(const std::string& out, int n, int size, const std::vector<int>& bits,
              std::uint64_t seed, int patch, int stride, bool force) {
  require_out(out);
  if (fs::exists(out) && !fs::is_empty(out) && !force)
    throw ArgumentError("output directory '" + out +
                        "' is not empty (pass --force to overwrite)");
  auto corpus = data::gen_gradient_corpus(n, size, seed);
  data::PatchDataset ds = data::make_dataset(corpus, bits, patch, stride, seed);
  data::save_dataset(ds, out);
  write_effective_config(out, {{"command", "synth"},
                               {"n", std::to_string(n)},
                               {"size", std::to_string(size)},
                               {"bits", join_ints(bits)},
                               {"seed", std::to_string(seed)},
                               {"patch", std::to_string(patch)},
                               {"stride", std::to_string(stride)}});
  int counts[3] = {0, 0, 0};
  for (const auto& [id, sp] : ds.split) counts[static_cast<int>(sp)]++;
  std::printf("wrote %zu pairs to %s (train %d, val %d, test %d)\n",
              ds.pairs.size(), out.c_str(), counts[0], counts[1], counts[2]);
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& variant_s, int steps,
              int batch, float lr, std::uint64_t seed, int eval_every, int eval_cap,
              const NetFlags& nf, const std::string& out) {
  require_out(out);
  const net::Variant variant = net::variant_from(variant_s);
  if (variant == net::Variant::wwm)
    throw ArgumentError("wwm is inference-time; train plain");
  if (!fs::exists(data_dir))
    throw IoError("dataset directory '" + data_dir + "' does not exist");
  data::PatchDataset ds = data::load_dataset(data_dir);

  net::ModelState model = net::init_model(nf.to_config(variant), seed);
  train::TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch = batch;
  cfg.learning_rate = lr;
  cfg.seed = seed;
  cfg.variant = variant;
  cfg.eval_every = eval_every;
  cfg.eval_pairs_cap = eval_cap;
  fs::create_directories(out);
  cfg.checkpoint_path = (fs::path(out) / "checkpoint.bin").string();

  train::TrainResult res = train::train(model, ds, cfg);

  std::ofstream log(fs::path(out) / "trainlog.jsonl");
  log << train::log_to_jsonl(res.log);
  log.close();
  std::ofstream info(fs::path(out) / "run_info.txt");
  info << "wall_seconds = " << res.log.wall_seconds << "\n"
       << "steps_per_second = " << (steps / std::max(1e-9, res.log.wall_seconds))
       << "\n";
  info.close();
  auto echo = nf.echo();
  echo.insert(echo.end(), {{"command", "train"},
                           {"data", data_dir},
                           {"variant", variant_s},
                           {"steps", std::to_string(steps)},
                           {"batch", std::to_string(batch)},
                           {"lr", std::to_string(lr)},
                           {"seed", std::to_string(seed)},
                           {"eval_every", std::to_string(eval_every)},
                           {"eval_cap", std::to_string(eval_cap)}});
  write_effective_config(out, echo);
  const auto& ev = res.log.evals.back();
  std::printf(
      "trained %s for %d steps: final loss %.5f, val psnr %.3f dB, ssim %.4f, "
      "bei %.5f -> %.5f (%.1fs)\n",
      variant_s.c_str(), steps, res.log.loss.back(), ev.psnr, ev.ssim,
      ev.bei_banded, ev.bei_restored, res.log.wall_seconds);
  return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& input,
              const std::string& variant_s, const std::string& out) {
  require_out(out);
  const net::Variant variant = net::variant_from(variant_s);
  net::ModelState model = train::load_checkpoint(ckpt_path);
  if (!pipe::variant_compatible(variant, model.config.variant))
    throw ArgumentError("checkpoint variant '" +
                        net::variant_name(model.config.variant) +
                        "' is incompatible with requested variant '" + variant_s +
                        "'");
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file() && e.path().extension() == ".ppm")
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw IoError("no .ppm images found in directory '" + input + "'");
  } else if (fs::exists(input)) {
    files.push_back(input);
  } else {
    throw IoError("input path '" + input + "' does not exist");
  }
  fs::create_directories(out);
  int written = 0;
  for (const fs::path& f : files) {
    Tensor img;
    try {
      img = data::load_image(f.string());
    } catch (const Error& e) {
      std::fprintf(stderr, "warning: skipping '%s': %s\n", f.string().c_str(),
                   e.what());
      continue;
    }
    pipe::InferOut io = pipe::infer_image(model, variant, img);
    const std::string stem = f.stem().string();
    data::save_image(clamped01(io.restored),
                     (fs::path(out) / (stem + "_restored.ppm")).string());
    if (io.mask)
      data::save_image(*io.mask, (fs::path(out) / (stem + "_mask.pgm")).string());
    ++written;
  }
  if (written == 0) throw IoError("no readable input images");
  write_effective_config(out, {{"command", "infer"},
                               {"checkpoint", ckpt_path},
                               {"variant", variant_s},
                               {"input", input}});
  std::printf("restored %d image(s) into %s\n", written, out.c_str());
  return 0;
}

int cmd_eval(const std::string& data_dir, const std::vector<std::string>& model_specs,
             const std::vector<std::string>& external_specs, const std::string& out) {
  require_out(out);
  data::PatchDataset ds = data::load_dataset(data_dir);
  const auto test_idx = ds.indices_of(data::Split::test);
  if (test_idx.empty()) throw ArgumentError("eval: dataset has an empty test split");

  std::vector<metrics::ExternalMetric> hooks;
  for (const std::string& spec : external_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw ArgumentError("--external expects name=command, got '" + spec + "'");
    hooks.push_back({spec.substr(0, eq), spec.substr(eq + 1)});
  }

  fs::create_directories(out);
  std::vector<metrics::MetricReport> reports;

  // baseline row group: restored := banded
  {
    std::vector<metrics::EvalPair> pairs;
    for (std::size_t idx : test_idx) {
      const data::ImagePair& p = ds.pairs[idx];
      metrics::EvalPair ep;
      ep.id = p.id;
      ep.pristine = p.pristine;
      ep.banded = p.banded;
      ep.restored = p.banded;
      ep.pristine_path = (fs::path(data_dir) / (p.id + "_pristine.ppm")).string();
      ep.banded_path = (fs::path(data_dir) / (p.id + "_banded.ppm")).string();
      ep.restored_path = ep.banded_path;
      pairs.push_back(std::move(ep));
    }
    reports.push_back(metrics::evaluate(pairs, "banded", hooks));
  }

  for (const std::string& spec : model_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw ArgumentError("--model expects variant=checkpoint, got '" + spec + "'");
    const std::string variant_s = spec.substr(0, eq);
    const std::string ckpt = spec.substr(eq + 1);
    const net::Variant variant = net::variant_from(variant_s);
    net::ModelState model = train::load_checkpoint(ckpt);
    if (!pipe::variant_compatible(variant, model.config.variant))
      throw ArgumentError("checkpoint variant '" +
                          net::variant_name(model.config.variant) +
                          "' is incompatible with requested variant '" + variant_s +
                          "'");
    const fs::path img_dir = fs::path(out) / "images" / variant_s;
    fs::create_directories(img_dir);
    std::vector<metrics::EvalPair> pairs(test_idx.size());
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(test_idx.size()); ++i) {
      const data::ImagePair& p = ds.pairs[test_idx[i]];
      pipe::InferOut io = pipe::infer_image(model, variant, p.banded);
      metrics::EvalPair ep;
      ep.id = p.id;
      ep.pristine = p.pristine;
      ep.banded = p.banded;
      ep.restored = clamped01(io.restored);
      if (io.mask) {
        double m = 0;
        for (float v : io.mask->v) m += v;
        ep.mask_mean = m / static_cast<double>(io.mask->numel());
      }
      ep.pristine_path = (fs::path(data_dir) / (p.id + "_pristine.ppm")).string();
      ep.banded_path = (fs::path(data_dir) / (p.id + "_banded.ppm")).string();
      ep.restored_path = (img_dir / (p.id + ".ppm")).string();
      data::save_image(ep.restored, ep.restored_path);
      pairs[i] = std::move(ep);
    }
    reports.push_back(metrics::evaluate(pairs, variant_s, hooks));
  }

  metrics::MetricReport merged = metrics::merge_reports(reports);
  if (merged.ok_rows == 0) throw Error("E_EVAL", "no evaluation rows succeeded");
  std::ofstream csv(fs::path(out) / "report.csv");
  csv << metrics::to_csv(merged);
  csv.close();
  std::ofstream js(fs::path(out) / "summary.json");
  js << metrics::summary_json(merged);
  js.close();
  write_effective_config(
      out, {{"command", "eval"}, {"data", data_dir},
            {"models", [&] {
               std::string s;
               for (std::size_t i = 0; i < model_specs.size(); ++i)
                 s += (i ? ";" : "") + model_specs[i];
               return s;
             }()}});
  for (const auto& [variant, cols] : merged.aggregates) {
    const auto& p = cols.at("psnr_db");
    const auto& b = cols.at("bei_restored");
    std::printf("%-8s psnr %.3f dB  ssim %.4f  bei %.5f  dpsnr %+.3f\n",
                variant.c_str(), p.mean, cols.at("ssim").mean, b.mean,
                cols.at("delta_psnr").mean);
  }
  std::printf("report: %s\n", (fs::path(out) / "report.csv").string().c_str());
  return 0;
}

int cmd_info(const std::string& ckpt_path, const NetFlags& nf) {
  if (!ckpt_path.empty()) {
    net::ModelState model = train::load_checkpoint(ckpt_path);
    std::printf("checkpoint: %s\n", ckpt_path.c_str());
    std::printf("variant: %s, training step: %lld\n",
                net::variant_name(model.config.variant).c_str(),
                static_cast<long long>(model.step));
    std::printf("%s", net::parameter_count_breakdown(model.config).c_str());
    std::printf("parameters: %lld\n",
                static_cast<long long>(model.parameter_count()));
    return 0;
  }
  const net::NetConfig cfg = nf.to_config(net::Variant::plain);
  std::printf("%s", net::parameter_count_breakdown(cfg).c_str());
  std::printf("parameters: %lld\n", static_cast<long long>(net::parameter_count(cfg)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deband: wavelet state-space image debanding toolkit"};
  app.fallthrough(true);
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  bool force = false;
  std::string out;
  app.add_option("--config", config_path, "flat key=value config file");
  app.add_option("--seed", seed, "RNG seed");
  app.add_flag("--force", force, "overwrite a non-empty output directory");
  app.add_option("--out", out, "output directory");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic banding dataset");
  int n = 60, size = 256, patch = 64, stride = 32;
  std::vector<int> bits = {3, 4, 5};
  synth->add_option("--n", n, "number of source images");
  synth->add_option("--size", size, "source image size (power of two)");
  synth->add_option("--bits", bits, "quantizer bit depths, cycled per image")
      ->delimiter(',');
  synth->add_option("--patch", patch, "patch size");
  synth->add_option("--stride", stride, "patch stride");

  // train
  auto* traincmd = app.add_subcommand("train", "train a variant on a dataset");
  std::string data_dir, variant_s = "plain";
  int steps = 1000, batch = 8, eval_every = 200, eval_cap = 64;
  float lr = 2e-4f;
  traincmd->add_option("--data", data_dir, "dataset directory");
  traincmd->add_option("--variant", variant_s, "plain|dwt|map");
  traincmd->add_option("--steps", steps, "optimizer steps");
  traincmd->add_option("--batch", batch, "batch size");
  traincmd->add_option("--lr", lr, "learning rate");
  traincmd->add_option("--eval-every", eval_every, "validation interval");
  traincmd->add_option("--eval-cap", eval_cap, "validation pairs per eval");
  NetFlags nf_train;
  nf_train.add_to(traincmd);

  // infer
  auto* infer = app.add_subcommand("infer", "restore images with a checkpoint");
  std::string ckpt, input, infer_variant = "plain";
  infer->add_option("--checkpoint", ckpt, "checkpoint file");
  infer->add_option("--input", input, "image file or directory of .ppm files");
  infer->add_option("--variant", infer_variant, "plain|wwm|dwt|map");

  // eval
  auto* evalcmd = app.add_subcommand("eval", "compare variants on the test split");
  std::string eval_data;
  std::vector<std::string> model_specs, external_specs;
  evalcmd->add_option("--data", eval_data, "dataset directory");
  evalcmd->add_option("--model", model_specs,
                      "variant=checkpoint (repeatable)");
  evalcmd->add_option("--external", external_specs,
                      "name=command external metric hook (repeatable; "
                      "{pristine}/{banded}/{restored} are replaced)");

  // info
  auto* info = app.add_subcommand("info", "print model configuration and size");
  std::string info_ckpt;
  info->add_option("--checkpoint", info_ckpt, "checkpoint file");
  NetFlags nf_info;
  nf_info.add_to(info);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load_config_file(config_path);
    resolve(&app, "--seed", cfg, "seed", seed);
    resolve(&app, "--out", cfg, "out", out);
    if (synth->parsed()) {
      resolve(synth, "--n", cfg, "n", n);
      resolve(synth, "--size", cfg, "size", size);
      resolve(synth, "--bits", cfg, "bits", bits);
      resolve(synth, "--patch", cfg, "patch", patch);
      resolve(synth, "--stride", cfg, "stride", stride);
      return cmd_synth(out, n, size, bits, seed, patch, stride, force);
    }
    if (traincmd->parsed()) {
      resolve(traincmd, "--data", cfg, "data", data_dir);
      resolve(traincmd, "--variant", cfg, "variant", variant_s);
      resolve(traincmd, "--steps", cfg, "steps", steps);
      resolve(traincmd, "--batch", cfg, "batch", batch);
      resolve(traincmd, "--lr", cfg, "lr", lr);
      resolve(traincmd, "--eval-every", cfg, "eval_every", eval_every);
      resolve(traincmd, "--eval-cap", cfg, "eval_cap", eval_cap);
      nf_train.resolve_from(traincmd, cfg);
      return cmd_train(data_dir, variant_s, steps, batch, lr, seed, eval_every,
                       eval_cap, nf_train, out);
    }
    if (infer->parsed()) {
      resolve(infer, "--checkpoint", cfg, "checkpoint", ckpt);
      resolve(infer, "--input", cfg, "input", input);
      resolve(infer, "--variant", cfg, "variant", infer_variant);
      return cmd_infer(ckpt, input, infer_variant, out);
    }
    if (evalcmd->parsed()) {
      resolve(evalcmd, "--data", cfg, "data", eval_data);
      return cmd_eval(eval_data, model_specs, external_specs, out);
    }
    if (info->parsed()) {
      nf_info.resolve_from(info, cfg);
      return cmd_info(info_ckpt, nf_info);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: E_INTERNAL: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
