// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "deband/graph.hpp"
#include "deband/tensor.hpp"

namespace deband::net {

enum class Variant { plain, wwm, dwt, map };

std::string variant_name(Variant v);
Variant variant_from(const std::string& s);

struct NetConfig {
  int base_channels = 16;
  int depth = 3;
  int state_dim = 16;
  int ffn_expansion = 2;
  int attention_heads = 2;
  Variant variant = Variant::plain;

  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

enum class Init { zeros, ones, uniform_fan, a_log_ladder, dt_bias };

// Walks every learnable array of the architecture in registration order.
void for_each_param(
    const NetConfig& cfg,
    const std::function<void(const std::string& name, const std::vector<int>& shape,
                             Init init)>& fn);

struct ModelState {
  NetConfig config;
  std::vector<std::string> names;
  std::vector<Tensor> params;
  std::int64_t step = 0;

  int index_of(const std::string& name) const;
  std::int64_t parameter_count() const;
};

ModelState init_model(const NetConfig& cfg, std::uint64_t seed);

// Scalar count as a pure function of the configuration.
std::int64_t parameter_count(const NetConfig& cfg);
// Human-readable per-block derivation of that count.
std::string parameter_count_breakdown(const NetConfig& cfg);

struct ForwardResult {
  Tensor restored;
  std::optional<Tensor> mask;
};

// Runs the network on one image (values in [0,1], dimensions divisible by
// 2^depth). Mask is returned for the dwt/map variants; plain and wwm return
// the raw network output with no mask (wwm fusion is post-hoc).
ForwardResult forward(const Tensor& img, const ModelState& state);

// Builds the recorded graph for one (input, target) pair and returns the
// variant loss with parameter gradients (indexed like state.params; empty
// tensors for untouched parameters).
struct LossGrads {
  double loss = 0.0;
  std::vector<Tensor> grads;
  Tensor restored;
  std::optional<Tensor> mask;
  double mask_grad_abs_sum = 0.0;  // diagnostic: |d loss / d mask| mass
};
LossGrads loss_and_grads(const Tensor& img, const Tensor& target,
                         const ModelState& state);

// Graph-level builder shared by forward / loss_and_grads; exposed for tests.
struct BuiltForward {
  ag::Var raw;
  ag::Var restored;
  std::optional<ag::Var> mask;
};
BuiltForward build_forward(ag::Graph& g, ag::Var img, const ModelState& state);

// Single blocks on an existing graph, addressed by parameter prefix
// (e.g. "enc1.lfssb"). Used by the tests to pin the block equations.
namespace detail {
ag::Var lfssb_block(ag::Graph& g, const ModelState& st, const std::string& prefix,
                    ag::Var f);
ag::Var skff_block(ag::Graph& g, const ModelState& st, const std::string& prefix,
                   ag::Var h, ag::Var v, ag::Var d);
ag::Var hfeb_block(ag::Graph& g, const ModelState& st, const std::string& prefix,
                   ag::Var fh, ag::Var flow);
}  // namespace detail

}  // namespace deband::net
