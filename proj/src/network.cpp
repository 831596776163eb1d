// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#include "deband/network.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace deband::net {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::plain: return "plain";
    case Variant::wwm: return "wwm";
    case Variant::dwt: return "dwt";
    case Variant::map: return "map";
  }
  return "plain";
}

Variant variant_from(const std::string& s) {
  if (s == "plain") return Variant::plain;
  if (s == "wwm") return Variant::wwm;
  if (s == "dwt") return Variant::dwt;
  if (s == "map") return Variant::map;
  throw ArgumentError("unknown variant '" + s + "' (plain|wwm|dwt|map)");
}

void NetConfig::validate() const {
  if (depth < 1) throw ArgumentError("depth must be >= 1");
  if (base_channels < 4) throw ArgumentError("base_channels must be >= 4");
  if (state_dim < 1) throw ArgumentError("state_dim must be >= 1");
  if (ffn_expansion < 1) throw ArgumentError("ffn_expansion must be >= 1");
  if (attention_heads < 1 || base_channels % attention_heads != 0)
    throw ArgumentError("attention_heads must divide base_channels");
  if (base_channels % 2 != 0)
    throw ArgumentError("base_channels must be even");
}

namespace {

using EmitFn = std::function<void(const std::string&, const std::vector<int>&, Init)>;

void emit_lfssb(const std::string& p, int c, int s, int hdim, const EmitFn& fn) {
  fn(p + ".ln.g", {c}, Init::ones);
  fn(p + ".ln.b", {c}, Init::zeros);
  fn(p + ".ssm.dt.w", {c, c}, Init::uniform_fan);
  fn(p + ".ssm.dt.b", {c}, Init::dt_bias);
  fn(p + ".ssm.b.w", {c, s}, Init::uniform_fan);
  fn(p + ".ssm.c.w", {c, s}, Init::uniform_fan);
  fn(p + ".ssm.a_log", {c, s}, Init::a_log_ladder);
  fn(p + ".ssm.d", {c}, Init::ones);
  fn(p + ".ssm.out.w", {c, c}, Init::zeros);
  fn(p + ".ssm.out.b", {c}, Init::zeros);
  fn(p + ".ffn.w1", {c, 2 * hdim}, Init::uniform_fan);
  fn(p + ".ffn.b1", {2 * hdim}, Init::zeros);
  fn(p + ".ffn.w2", {hdim, c}, Init::zeros);
  fn(p + ".ffn.b2", {c}, Init::zeros);
  fn(p + ".beta", {1}, Init::ones);
  fn(p + ".gamma", {1}, Init::ones);
}

void emit_skff(const std::string& p, int c, const EmitFn& fn) {
  const int r = c / 2;
  fn(p + ".sq.w", {c, r}, Init::uniform_fan);
  fn(p + ".sq.b", {r}, Init::zeros);
  for (int k = 0; k < 3; ++k) {
    fn(p + ".br" + std::to_string(k) + ".w", {r, c}, Init::uniform_fan);
    fn(p + ".br" + std::to_string(k) + ".b", {c}, Init::zeros);
  }
}

void emit_hfeb(const std::string& p, int c, int heads, int hdim, const EmitFn& fn) {
  fn(p + ".ln1.g", {c}, Init::ones);
  fn(p + ".ln1.b", {c}, Init::zeros);
  fn(p + ".q.w", {c, c}, Init::uniform_fan);
  fn(p + ".q.b", {c}, Init::zeros);
  fn(p + ".k.w", {c, c}, Init::uniform_fan);
  fn(p + ".k.b", {c}, Init::zeros);
  fn(p + ".v.w", {c, c}, Init::uniform_fan);
  fn(p + ".v.b", {c}, Init::zeros);
  fn(p + ".tau", {heads}, Init::ones);
  fn(p + ".proj.w", {c, c}, Init::zeros);
  fn(p + ".proj.b", {c}, Init::zeros);
  fn(p + ".ln2.g", {c}, Init::ones);
  fn(p + ".ln2.b", {c}, Init::zeros);
  fn(p + ".ffn.w1", {2 * c, 2 * hdim}, Init::uniform_fan);
  fn(p + ".ffn.b1", {2 * hdim}, Init::zeros);
  fn(p + ".ffn.w2", {hdim, c}, Init::zeros);
  fn(p + ".ffn.b2", {c}, Init::zeros);
}

}  // namespace

void for_each_param(const NetConfig& cfg, const EmitFn& fn) {
  cfg.validate();
  const int c = cfg.base_channels;
  const int hdim = cfg.ffn_expansion * c;
  fn("shallow.w", {3, 3, 3, c}, Init::uniform_fan);
  fn("shallow.b", {c}, Init::zeros);
  for (int i = 1; i <= cfg.depth; ++i) {
    const std::string e = "enc" + std::to_string(i);
    emit_lfssb(e + ".lfssb", c, cfg.state_dim, hdim, fn);
    emit_skff(e + ".skff", c, fn);
    emit_hfeb(e + ".hfeb", c, cfg.attention_heads, hdim, fn);
  }
  for (int i = cfg.depth; i >= 1; --i) {
    const std::string d = "dec" + std::to_string(i);
    emit_lfssb(d + ".lfssb", c, cfg.state_dim, hdim, fn);
    emit_hfeb(d + ".hfeb", c, cfg.attention_heads, hdim, fn);
    fn(d + ".expand.w", {c, 3 * c}, Init::zeros);
    fn(d + ".expand.b", {3 * c}, Init::zeros);
  }
  fn("final.w", {3, 3, c, 3}, Init::zeros);
  fn("final.b", {3}, Init::zeros);
}

int ModelState::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw ArgumentError("unknown parameter '" + name + "'");
}

std::int64_t ModelState::parameter_count() const {
  std::int64_t n = 0;
  for (const Tensor& t : params) n += static_cast<std::int64_t>(t.numel());
  return n;
}

ModelState init_model(const NetConfig& cfg, std::uint64_t seed) {
  ModelState st;
  st.config = cfg;
  Rng rng(Rng::derive(seed, 0xdeb4d));
  for_each_param(cfg, [&](const std::string& name, const std::vector<int>& shape,
                          Init init) {
    Tensor t(shape);
    switch (init) {
      case Init::zeros:
        break;
      case Init::ones:
        t.fill(1.0f);
        break;
      case Init::uniform_fan: {
        std::size_t fan = t.numel() / shape.back();
        const float k = 1.0f / std::sqrt(static_cast<float>(fan));
        for (float& v : t.v) v = rng.uniform(-k, k);
        break;
      }
      case Init::a_log_ladder: {
        // shape {c, s}: A = -(1..s) per channel
        const int s = shape[1];
        for (int ch = 0; ch < shape[0]; ++ch)
          for (int j = 0; j < s; ++j)
            t.v[static_cast<std::size_t>(ch) * s + j] =
                std::log(static_cast<float>(j + 1));
        break;
      }
      case Init::dt_bias: {
        // softplus(b) log-uniform in [1e-3, 1e-1]
        for (float& v : t.v) {
          const float dt0 = std::exp(rng.uniform(std::log(1e-3f), std::log(1e-1f)));
          v = std::log(std::exp(dt0) - 1.0f);
        }
        break;
      }
    }
    st.names.push_back(name);
    st.params.push_back(std::move(t));
  });
  return st;
}

std::int64_t parameter_count(const NetConfig& cfg) {
  std::int64_t n = 0;
  for_each_param(cfg, [&](const std::string&, const std::vector<int>& shape, Init) {
    n += static_cast<std::int64_t>(Tensor::numel_of(shape));
  });
  return n;
}

std::string parameter_count_breakdown(const NetConfig& cfg) {
  const int c = cfg.base_channels, s = cfg.state_dim, l = cfg.depth;
  const int hd = cfg.ffn_expansion * c, heads = cfg.attention_heads;
  const std::int64_t lfssb = 2LL * c + (1LL * c * c + c) + 2LL * c * s +
                             1LL * c * s + c + (1LL * c * c + c) +
                             (1LL * c * 2 * hd + 2 * hd) + (1LL * hd * c + c) + 2;
  const std::int64_t skff = (1LL * c * (c / 2) + c / 2) + 3LL * ((c / 2) * c + c);
  const std::int64_t hfeb = 4LL * c + 3LL * (1LL * c * c + c) + heads +
                            (1LL * c * c + c) +
                            (2LL * c * 2 * hd + 2 * hd) + (1LL * hd * c + c);
  const std::int64_t expand = 1LL * c * 3 * c + 3 * c;
  const std::int64_t shallow = 3LL * 3 * 3 * c + c;
  const std::int64_t fin = 3LL * 3 * c * 3 + 3;
  std::ostringstream os;
  os << "parameter count for C=" << c << " L=" << l << " S=" << s
     << " E=" << cfg.ffn_expansion << " heads=" << heads << "\n"
     << "  shallow conv (3*3*3*C + C)            = " << shallow << "\n"
     << "  LFSSB per block                        = " << lfssb << "\n"
     << "  SKFF per encoder level                 = " << skff << "\n"
     << "  HFEB per block                         = " << hfeb << "\n"
     << "  decoder band expansion (C*3C + 3C)     = " << expand << "\n"
     << "  final conv (3*3*C*3 + 3)               = " << fin << "\n"
     << "  total = shallow + L*(2*LFSSB + 2*HFEB + SKFF + expand) + final\n"
     << "        = " << shallow << " + " << l << "*(2*" << lfssb << " + 2*" << hfeb
     << " + " << skff << " + " << expand << ") + " << fin << "\n"
     << "        = "
     << shallow + l * (2 * lfssb + 2 * hfeb + skff + expand) + fin << "\n";
  return os.str();
}

// ------------------------------------------------------------------- forward

namespace {

using ag::Var;

// Caches one leaf per parameter so reuse accumulates onto a single node.
struct ParamCtx {
  ag::Graph* g;
  const ModelState* state;
  std::vector<Var> leaves;

  explicit ParamCtx(ag::Graph& gg, const ModelState& st)
      : g(&gg), state(&st), leaves(st.params.size()) {}

  Var operator()(const std::string& name) {
    const int idx = state->index_of(name);
    if (!leaves[idx].valid()) leaves[idx] = g->param(state->params[idx], idx);
    return leaves[idx];
  }
};

Var gated_ffn(ParamCtx& P, const std::string& p, Var x, int hdim) {
  Var e = ag::conv1x1(x, P(p + ".w1"), P(p + ".b1"));
  Var val = ag::slice_c(e, 0, hdim);
  Var gate = ag::slice_c(e, hdim, hdim);
  Var gv = ag::mul(val, ag::silu(gate));
  return ag::conv1x1(gv, P(p + ".w2"), P(p + ".b2"));
}

Var lfssb(ParamCtx& P, const std::string& p, Var f, int hdim) {
  Var xn = ag::layer_norm(f, P(p + ".ln.g"), P(p + ".ln.b"));
  Var delta = ag::softplus(ag::conv1x1(xn, P(p + ".ssm.dt.w"), P(p + ".ssm.dt.b")));
  Var bsel = ag::conv1x1(xn, P(p + ".ssm.b.w"), Var{});
  Var csel = ag::conv1x1(xn, P(p + ".ssm.c.w"), Var{});
  Var a_log = P(p + ".ssm.a_log");
  Var dskip = P(p + ".ssm.d");
  Var y0 = ag::scan(xn, delta, bsel, csel, a_log, dskip, false);
  Var y1 = ag::scan(xn, delta, bsel, csel, a_log, dskip, true);
  Var y = ag::scale(ag::add(y0, y1), 0.5f);
  Var s_out = ag::conv1x1(y, P(p + ".ssm.out.w"), P(p + ".ssm.out.b"));
  Var u = ag::add(s_out, ag::scalar_scale(f, P(p + ".beta")));
  Var gout = gated_ffn(P, p + ".ffn", u, hdim);
  return ag::add(gout, ag::scalar_scale(u, P(p + ".gamma")));
}

Var skff(ParamCtx& P, const std::string& p, Var h, Var v, Var d, int c) {
  Var u = ag::add(ag::add(h, v), d);
  Var stat = ag::gap(u);
  Var z = ag::silu(ag::conv1x1(stat, P(p + ".sq.w"), P(p + ".sq.b")));
  std::vector<Var> logits;
  for (int k = 0; k < 3; ++k) {
    const std::string br = p + ".br" + std::to_string(k);
    logits.push_back(ag::conv1x1(z, P(br + ".w"), P(br + ".b")));
  }
  Var w = ag::softmax_groups(ag::concat_c(logits), 3);
  Var out = ag::bcast_mul(h, ag::slice_c(w, 0, c));
  out = ag::add(out, ag::bcast_mul(v, ag::slice_c(w, c, c)));
  return ag::add(out, ag::bcast_mul(d, ag::slice_c(w, 2 * c, c)));
}

Var cross_attention(ParamCtx& P, const std::string& p, Var hn, Var flow, int c,
                    int heads) {
  // copy the dims up front: node storage reallocates as ops are added
  const int fh = hn.g->val(hn).h(), fw = hn.g->val(hn).w();
  Var q = ag::conv1x1(hn, P(p + ".q.w"), P(p + ".q.b"));
  Var k = ag::conv1x1(flow, P(p + ".k.w"), P(p + ".k.b"));
  Var v = ag::conv1x1(flow, P(p + ".v.w"), P(p + ".v.b"));
  const int d = c / heads;
  std::vector<Var> outs;
  for (int hd = 0; hd < heads; ++hd) {
    Var qm = ag::l2norm_cols(ag::head_mat(q, hd * d, d));
    Var km = ag::l2norm_cols(ag::head_mat(k, hd * d, d));
    Var vm = ag::head_mat(v, hd * d, d);
    Var logits = ag::scale_by_elem(ag::matmul_tn(qm, km), P(p + ".tau"), hd);
    Var attn = ag::softmax_rows(logits);
    outs.push_back(ag::matmul_bt(vm, attn));
  }
  Var o = ag::heads_to_hwc(outs, fh, fw);
  return ag::conv1x1(o, P(p + ".proj.w"), P(p + ".proj.b"));
}

Var hfeb(ParamCtx& P, const std::string& p, Var fh, Var flow, int c, int heads,
         int hdim) {
  Var hn = ag::layer_norm(fh, P(p + ".ln1.g"), P(p + ".ln1.b"));
  Var m = cross_attention(P, p, hn, flow, c, heads);
  Var ft = ag::add(m, fh);
  Var tn = ag::layer_norm(ft, P(p + ".ln2.g"), P(p + ".ln2.b"));
  Var cc = ag::concat_c({tn, flow});
  Var co = gated_ffn(P, p + ".ffn", cc, hdim);
  return ag::add(co, ft);
}

// upsampled channel mean of an absolute-magnitude feature map
Var level_map(Var mag, int full_h, int full_w) {
  return ag::bilinear_up(ag::channel_mean(mag), full_h, full_w);
}

}  // namespace

BuiltForward build_forward(ag::Graph& g, ag::Var img, const ModelState& state) {
  const NetConfig& cfg = state.config;
  cfg.validate();
  const Tensor& t = g.val(img);
  if (t.shape.size() != 3 || t.c() != 3)
    throw DimensionError("forward expects an HxWx3 image");
  const int div = 1 << cfg.depth;
  if (t.h() % div != 0 || t.w() % div != 0)
    throw DimensionError("forward requires dimensions divisible by 2^depth (" +
                         std::to_string(div) + "), got " + std::to_string(t.h()) +
                         "x" + std::to_string(t.w()));
  const int c = cfg.base_channels, heads = cfg.attention_heads;
  const int hdim = cfg.ffn_expansion * c;
  const int full_h = t.h(), full_w = t.w();

  ParamCtx P(g, state);
  Var cur = ag::conv3x3(img, P("shallow.w"), P("shallow.b"));

  std::vector<Var> skip_lh, skip_hl, skip_hh, enh;
  for (int i = 1; i <= cfg.depth; ++i) {
    const std::string e = "enc" + std::to_string(i);
    Var s4 = ag::dwt2_stack(cur);
    Var ll = ag::slice_c(s4, 0, c);
    Var lh = ag::slice_c(s4, c, c);
    Var hl = ag::slice_c(s4, 2 * c, c);
    Var hh = ag::slice_c(s4, 3 * c, c);
    Var low = lfssb(P, e + ".lfssb", ll, hdim);
    Var fused = skff(P, e + ".skff", lh, hl, hh, c);
    enh.push_back(hfeb(P, e + ".hfeb", fused, low, c, heads, hdim));
    skip_lh.push_back(lh);
    skip_hl.push_back(hl);
    skip_hh.push_back(hh);
    cur = low;
  }

  for (int i = cfg.depth; i >= 1; --i) {
    const std::string d = "dec" + std::to_string(i);
    Var dlow = lfssb(P, d + ".lfssb", cur, hdim);
    Var dhigh = hfeb(P, d + ".hfeb", enh[i - 1], dlow, c, heads, hdim);
    Var ex = ag::conv1x1(dhigh, P(d + ".expand.w"), P(d + ".expand.b"));
    Var dlh = ag::add(ag::slice_c(ex, 0, c), skip_lh[i - 1]);
    Var dhl = ag::add(ag::slice_c(ex, c, c), skip_hl[i - 1]);
    Var dhh = ag::add(ag::slice_c(ex, 2 * c, c), skip_hh[i - 1]);
    cur = ag::idwt2_stack(ag::concat_c({dlow, dlh, dhl, dhh}));
  }

  Var resid = ag::conv3x3(cur, P("final.w"), P("final.b"));
  Var raw = ag::add(img, resid);

  BuiltForward out;
  out.raw = raw;
  if (cfg.variant == Variant::dwt || cfg.variant == Variant::map) {
    std::vector<Var> maps;
    for (int i = 0; i < cfg.depth; ++i) {
      Var mag;
      if (cfg.variant == Variant::dwt) {
        mag = ag::add(ag::add(ag::abs_val(skip_lh[i]), ag::abs_val(skip_hl[i])),
                      ag::abs_val(skip_hh[i]));
      } else {
        mag = ag::abs_val(enh[i]);
      }
      maps.push_back(level_map(mag, full_h, full_w));
    }
    Var mask = ag::minmax_norm(ag::mean_vars(maps));
    out.mask = mask;
    out.restored = ag::fuse_mask(img, raw, mask);
  } else {
    out.restored = raw;
  }
  return out;
}

namespace detail {

ag::Var lfssb_block(ag::Graph& g, const ModelState& st, const std::string& prefix,
                    ag::Var f) {
  ParamCtx P(g, st);
  return lfssb(P, prefix, f, st.config.ffn_expansion * st.config.base_channels);
}

ag::Var skff_block(ag::Graph& g, const ModelState& st, const std::string& prefix,
                   ag::Var h, ag::Var v, ag::Var d) {
  ParamCtx P(g, st);
  return skff(P, prefix, h, v, d, st.config.base_channels);
}

ag::Var hfeb_block(ag::Graph& g, const ModelState& st, const std::string& prefix,
                   ag::Var fh, ag::Var flow) {
  ParamCtx P(g, st);
  return hfeb(P, prefix, fh, flow, st.config.base_channels,
              st.config.attention_heads,
              st.config.ffn_expansion * st.config.base_channels);
}

}  // namespace detail

ForwardResult forward(const Tensor& img, const ModelState& state) {
  if (!img.all_finite()) throw ArgumentError("forward input has non-finite values");
  ag::Graph g(/*record=*/false);
  ag::Var in = g.input(img);
  BuiltForward bf = build_forward(g, in, state);
  ForwardResult r;
  r.restored = g.val(bf.restored);
  if (bf.mask) r.mask = g.val(*bf.mask);
  return r;
}

LossGrads loss_and_grads(const Tensor& img, const Tensor& target,
                         const ModelState& state) {
  ag::Graph g(/*record=*/true);
  ag::Var in = g.input(img);
  ag::Var tgt = g.input(target);
  BuiltForward bf = build_forward(g, in, state);
  ag::Var loss = ag::l1(bf.restored, tgt);
  g.backward(loss);

  LossGrads out;
  out.loss = g.val(loss).v[0];
  out.grads.assign(state.params.size(), Tensor());
  g.add_param_grads_to(out.grads);
  out.restored = g.val(bf.restored);
  if (bf.mask) {
    out.mask = g.val(*bf.mask);
    if (g.has_grad(*bf.mask)) {
      const Tensor& mg = g.grad_ref(*bf.mask);
      double acc = 0.0;
      for (float v : mg.v) acc += std::fabs(v);
      out.mask_grad_abs_sum = acc;
    }
  }
  return out;
}

}  // namespace deband::net
