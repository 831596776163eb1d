// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#include "deband/pipeline.hpp"

#include "deband/banddata.hpp"
#include "deband/freqmask.hpp"

namespace deband::pipe {

bool variant_compatible(net::Variant want, net::Variant have) {
  if (want == have) return true;
  return want == net::Variant::wwm && have == net::Variant::plain;
}

InferOut infer_image(const net::ModelState& model, net::Variant requested,
                     const Tensor& img) {
  if (!variant_compatible(requested, model.config.variant))
    throw ArgumentError("checkpoint variant '" +
                        net::variant_name(model.config.variant) +
                        "' is incompatible with requested variant '" +
                        net::variant_name(requested) + "'");
  const int div = 1 << model.config.depth;
  data::Padded pad = data::pad_to_multiple(img, div);

  InferOut out;
  if (requested == net::Variant::wwm) {
    net::ForwardResult fr = net::forward(pad.padded, model);
    const Tensor raw = data::crop(fr.restored, img.h(), img.w());
    const Tensor mask_full = freqmask::wwm_mask(pad.padded, model.config.depth);
    out.mask = data::crop(mask_full, img.h(), img.w());
    out.restored = freqmask::fuse(img, raw, *out.mask);
  } else {
    net::ForwardResult fr = net::forward(pad.padded, model);
    out.restored = data::crop(fr.restored, img.h(), img.w());
    if (fr.mask) out.mask = data::crop(*fr.mask, img.h(), img.w());
  }
  return out;
}

}  // namespace deband::pipe
