// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#pragma once

#include <optional>

#include "deband/network.hpp"
#include "deband/tensor.hpp"

namespace deband::pipe {

// True when a checkpoint trained as `have` may serve requests for `want`
// (wwm runs on a plain checkpoint; everything else must match).
bool variant_compatible(net::Variant want, net::Variant have);

struct InferOut {
  Tensor restored;  // original resolution; unclamped for plain
  std::optional<Tensor> mask;
};

// Pads the image to a multiple of 2^depth, runs the requested variant and
// crops back. For wwm the mask is computed on the padded input and the
// fusion applied after cropping.
InferOut infer_image(const net::ModelState& model, net::Variant requested,
                     const Tensor& img);

}  // namespace deband::pipe
