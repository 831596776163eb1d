// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#include "deband/graph.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "deband/freqmask.hpp"
#include "deband/kernels.hpp"
#include "deband/wavelet.hpp"

namespace deband::ag {

Var Graph::input(Tensor t) {
  Node n;
  n.val = std::move(t);
  n.needs_grad = false;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(const Tensor& t, int param_id) {
  Node n;
  n.val = t;
  n.needs_grad = record_;
  n.param_id = param_id;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_ref(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.v.empty()) n.grad = Tensor(n.val.shape);
  return n.grad;
}

int Graph::make_node(Tensor val, const std::vector<int>& parents,
                     std::function<void(Graph&, int)> back) {
  Node n;
  n.val = std::move(val);
  for (int p : parents)
    if (nodes_[p].needs_grad) n.needs_grad = true;
  if (record_ && n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Graph::backward(Var loss) {
  if (nodes_[loss.id].val.numel() != 1)
    throw ArgumentError("backward expects a scalar loss node");
  grad_ref(loss).v[0] = 1.0f;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.back && !n.grad.v.empty()) n.back(*this, id);
  }
}

void Graph::add_param_grads_to(std::vector<Tensor>& acc) const {
  for (const Node& n : nodes_) {
    if (n.param_id < 0 || n.grad.v.empty()) continue;
    Tensor& slot = acc[n.param_id];
    if (slot.v.empty()) slot = Tensor(n.val.shape);
    for (std::size_t i = 0; i < slot.v.size(); ++i) slot.v[i] += n.grad.v[i];
  }
}

namespace {

Graph& same_graph(Var a, Var b) {
  if (a.g != b.g) throw ArgumentError("vars belong to different graphs");
  return *a.g;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": operand shapes differ");
}

// last-dim channel count and leading element count
int last_dim(const Tensor& t) { return t.shape.back(); }
std::size_t lead_count(const Tensor& t) { return t.numel() / last_dim(t); }

}  // namespace

// ---------------------------------------------------------------- elementwise

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor &ta = g.val(a), &tb = g.val(b);
  require_same_shape(ta, tb, "add");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] = ta.v[i] + tb.v[i];
  const int ia = a.id, ib = b.id;
  int id = g.make_node(std::move(out), {ia, ib}, [ia, ib](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    if (gg.node_needs_grad(ia)) {
      Tensor& da = gg.grad_ref(Var{&gg, ia});
      for (std::size_t i = 0; i < dy.numel(); ++i) da.v[i] += dy.v[i];
    }
    if (gg.node_needs_grad(ib)) {
      Tensor& db = gg.grad_ref(Var{&gg, ib});
      for (std::size_t i = 0; i < dy.numel(); ++i) db.v[i] += dy.v[i];
    }
  });
  return Var{&g, id};
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor &ta = g.val(a), &tb = g.val(b);
  require_same_shape(ta, tb, "sub");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] = ta.v[i] - tb.v[i];
  const int ia = a.id, ib = b.id;
  int id = g.make_node(std::move(out), {ia, ib}, [ia, ib](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    if (gg.node_needs_grad(ia)) {
      Tensor& da = gg.grad_ref(Var{&gg, ia});
      for (std::size_t i = 0; i < dy.numel(); ++i) da.v[i] += dy.v[i];
    }
    if (gg.node_needs_grad(ib)) {
      Tensor& db = gg.grad_ref(Var{&gg, ib});
      for (std::size_t i = 0; i < dy.numel(); ++i) db.v[i] -= dy.v[i];
    }
  });
  return Var{&g, id};
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor &ta = g.val(a), &tb = g.val(b);
  require_same_shape(ta, tb, "mul");
  Tensor out = ta;
  for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] = ta.v[i] * tb.v[i];
  const int ia = a.id, ib = b.id;
  int id = g.make_node(std::move(out), {ia, ib}, [ia, ib](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    const Tensor& va = gg.val(Var{&gg, ia});
    const Tensor& vb = gg.val(Var{&gg, ib});
    if (gg.node_needs_grad(ia)) {
      Tensor& da = gg.grad_ref(Var{&gg, ia});
      for (std::size_t i = 0; i < dy.numel(); ++i) da.v[i] += dy.v[i] * vb.v[i];
    }
    if (gg.node_needs_grad(ib)) {
      Tensor& db = gg.grad_ref(Var{&gg, ib});
      for (std::size_t i = 0; i < dy.numel(); ++i) db.v[i] += dy.v[i] * va.v[i];
    }
  });
  return Var{&g, id};
}

Var scale(Var a, float s) {
  Graph& g = *a.g;
  Tensor out = g.val(a);
  for (float& x : out.v) x *= s;
  const int ia = a.id;
  int id = g.make_node(std::move(out), {ia}, [ia, s](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    Tensor& da = gg.grad_ref(Var{&gg, ia});
    for (std::size_t i = 0; i < dy.numel(); ++i) da.v[i] += dy.v[i] * s;
  });
  return Var{&g, id};
}

Var scalar_scale(Var x, Var s) {
  Graph& g = same_graph(x, s);
  if (g.val(s).numel() != 1) throw DimensionError("scalar_scale: s must be scalar");
  const float sv = g.val(s).v[0];
  Tensor out = g.val(x);
  for (float& v : out.v) v *= sv;
  const int ix = x.id, is = s.id;
  int id = g.make_node(std::move(out), {ix, is}, [ix, is](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    const Tensor& vx = gg.val(Var{&gg, ix});
    const float svv = gg.val(Var{&gg, is}).v[0];
    if (gg.node_needs_grad(ix)) {
      Tensor& dx = gg.grad_ref(Var{&gg, ix});
      for (std::size_t i = 0; i < dy.numel(); ++i) dx.v[i] += dy.v[i] * svv;
    }
    if (gg.node_needs_grad(is)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < dy.numel(); ++i)
        acc += static_cast<double>(dy.v[i]) * vx.v[i];
      gg.grad_ref(Var{&gg, is}).v[0] += static_cast<float>(acc);
    }
  });
  return Var{&g, id};
}

Var one_minus(Var x) {
  Graph& g = *x.g;
  Tensor out = g.val(x);
  for (float& v : out.v) v = 1.0f - v;
  const int ix = x.id;
  int id = g.make_node(std::move(out), {ix}, [ix](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    Tensor& dx = gg.grad_ref(Var{&gg, ix});
    for (std::size_t i = 0; i < dy.numel(); ++i) dx.v[i] -= dy.v[i];
  });
  return Var{&g, id};
}

Var abs_val(Var x) {
  Graph& g = *x.g;
  Tensor out = g.val(x);
  for (float& v : out.v) v = std::fabs(v);
  const int ix = x.id;
  int id = g.make_node(std::move(out), {ix}, [ix](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    const Tensor& vx = gg.val(Var{&gg, ix});
    Tensor& dx = gg.grad_ref(Var{&gg, ix});
    for (std::size_t i = 0; i < dy.numel(); ++i) {
      const float sgn = vx.v[i] > 0.0f ? 1.0f : (vx.v[i] < 0.0f ? -1.0f : 0.0f);
      dx.v[i] += dy.v[i] * sgn;
    }
  });
  return Var{&g, id};
}

Var silu(Var x) {
  Graph& g = *x.g;
  const Tensor& vx = g.val(x);
  Tensor out = vx;
  const std::size_t n = out.numel();
#pragma omp parallel for
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    const float sig = 1.0f / (1.0f + std::exp(-vx.v[i]));
    out.v[i] = vx.v[i] * sig;
  }
  const int ix = x.id;
  int id = g.make_node(std::move(out), {ix}, [ix](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    const Tensor& vx2 = gg.val(Var{&gg, ix});
    Tensor& dx = gg.grad_ref(Var{&gg, ix});
    const std::size_t nn = dy.numel();
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(nn); ++i) {
      const float sig = 1.0f / (1.0f + std::exp(-vx2.v[i]));
      dx.v[i] += dy.v[i] * sig * (1.0f + vx2.v[i] * (1.0f - sig));
    }
  });
  return Var{&g, id};
}

Var softplus(Var x) {
  Graph& g = *x.g;
  const Tensor& vx = g.val(x);
  Tensor out = vx;
  const std::size_t n = out.numel();
#pragma omp parallel for
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    const float v = vx.v[i];
    out.v[i] = v > 20.0f ? v : std::log1p(std::exp(v));
  }
  const int ix = x.id;
  int id = g.make_node(std::move(out), {ix}, [ix](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    const Tensor& vx2 = gg.val(Var{&gg, ix});
    Tensor& dx = gg.grad_ref(Var{&gg, ix});
    const std::size_t nn = dy.numel();
#pragma omp parallel for
    for (long long i = 0; i < static_cast<long long>(nn); ++i) {
      const float sig = 1.0f / (1.0f + std::exp(-vx2.v[i]));
      dx.v[i] += dy.v[i] * sig;
    }
  });
  return Var{&g, id};
}

Var clamp01(Var x) {
  Graph& g = *x.g;
  const Tensor& vx = g.val(x);
  Tensor out = vx;
  for (float& v : out.v) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  const int ix = x.id;
  int id = g.make_node(std::move(out), {ix}, [ix](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    const Tensor& vx2 = gg.val(Var{&gg, ix});
    Tensor& dx = gg.grad_ref(Var{&gg, ix});
    for (std::size_t i = 0; i < dy.numel(); ++i)
      if (vx2.v[i] >= 0.0f && vx2.v[i] <= 1.0f) dx.v[i] += dy.v[i];
  });
  return Var{&g, id};
}

// ------------------------------------------------------------ shape / channel

Var slice_c(Var x, int from, int count) {
  Graph& g = *x.g;
  const Tensor& vx = g.val(x);
  const int c = last_dim(vx);
  if (from < 0 || from + count > c) throw DimensionError("slice_c out of range");
  const std::size_t n = lead_count(vx);
  std::vector<int> shp = vx.shape;
  shp.back() = count;
  Tensor out(shp);
  for (std::size_t p = 0; p < n; ++p)
    for (int i = 0; i < count; ++i) out.v[p * count + i] = vx.v[p * c + from + i];
  const int ix = x.id;
  int id = g.make_node(std::move(out), {ix},
                       [ix, from, count, c, n](Graph& gg, int self) {
                         const Tensor& dy = gg.grad_ref(Var{&gg, self});
                         Tensor& dx = gg.grad_ref(Var{&gg, ix});
                         for (std::size_t p = 0; p < n; ++p)
                           for (int i = 0; i < count; ++i)
                             dx.v[p * c + from + i] += dy.v[p * count + i];
                       });
  return Var{&g, id};
}

Var concat_c(const std::vector<Var>& xs) {
  if (xs.empty()) throw ArgumentError("concat_c on empty list");
  Graph& g = *xs.front().g;
  int ctot = 0;
  const std::size_t n = lead_count(g.val(xs.front()));
  for (Var v : xs) {
    if (lead_count(g.val(v)) != n)
      throw DimensionError("concat_c: leading dims differ");
    ctot += last_dim(g.val(v));
  }
  std::vector<int> shp = g.val(xs.front()).shape;
  shp.back() = ctot;
  Tensor out(shp);
  std::vector<int> ids, cs;
  int off = 0;
  for (Var v : xs) {
    const Tensor& t = g.val(v);
    const int c = last_dim(t);
    for (std::size_t p = 0; p < n; ++p)
      for (int i = 0; i < c; ++i) out.v[p * ctot + off + i] = t.v[p * c + i];
    ids.push_back(v.id);
    cs.push_back(c);
    off += c;
  }
  int id = g.make_node(std::move(out), ids, [ids, cs, ctot, n](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    int o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const int c = cs[k];
      if (gg.node_needs_grad(ids[k])) {
        Tensor& dx = gg.grad_ref(Var{&gg, ids[k]});
        for (std::size_t p = 0; p < n; ++p)
          for (int i = 0; i < c; ++i) dx.v[p * c + i] += dy.v[p * ctot + o + i];
      }
      o += c;
    }
  });
  return Var{&g, id};
}

// -------------------------------------------------------------- dense layers

Var conv3x3(Var x, Var w, Var b) {
  Graph& g = same_graph(x, w);
  const Tensor& vx = g.val(x);
  const Tensor& vw = g.val(w);
  if (vx.shape.size() != 3 || vw.shape.size() != 4 || vw.shape[0] != 3 ||
      vw.shape[1] != 3 || vw.shape[2] != vx.c())
    throw DimensionError("conv3x3: bad shapes");
  const int h = vx.h(), ww = vx.w(), ci = vx.c(), co = vw.shape[3];
  Tensor out = Tensor::hwc(h, ww, co);
  const float* bias = b.valid() ? g.val(b).v.data() : nullptr;
  kern::conv3x3_fwd(vx.v.data(), h, ww, ci, vw.v.data(), bias, co, out.v.data());
  const int ix = x.id, iw = w.id, ib = b.valid() ? b.id : -1;
  int id = g.make_node(std::move(out), ib >= 0 ? std::vector<int>{ix, iw, ib}
                                               : std::vector<int>{ix, iw},
                       [ix, iw, ib, h, ww, ci, co](Graph& gg, int self) {
                         const Tensor& dy = gg.grad_ref(Var{&gg, self});
                         const Tensor& vx2 = gg.val(Var{&gg, ix});
                         const Tensor& vw2 = gg.val(Var{&gg, iw});
                         if (gg.node_needs_grad(ix)) {
                           Tensor& dx = gg.grad_ref(Var{&gg, ix});
                           kern::conv3x3_bwd_input(dy.v.data(), h, ww, co,
                                                   vw2.v.data(), ci, dx.v.data());
                         }
                         Tensor& dw = gg.grad_ref(Var{&gg, iw});
                         float* db =
                             ib >= 0 ? gg.grad_ref(Var{&gg, ib}).v.data() : nullptr;
                         kern::conv3x3_bwd_weight(vx2.v.data(), dy.v.data(), h, ww,
                                                  ci, co, dw.v.data(), db);
                       });
  return Var{&g, id};
}

Var conv1x1(Var x, Var w, Var b) {
  Graph& g = same_graph(x, w);
  const Tensor& vx = g.val(x);
  const Tensor& vw = g.val(w);
  if (vw.shape.size() != 2 || vw.shape[0] != last_dim(vx))
    throw DimensionError("conv1x1: weight shape mismatch");
  const int ci = vw.shape[0], co = vw.shape[1];
  const std::size_t n = lead_count(vx);
  std::vector<int> shp = vx.shape;
  shp.back() = co;
  Tensor out(shp);
  const float* bias = b.valid() ? g.val(b).v.data() : nullptr;
  kern::conv1x1_fwd(vx.v.data(), n, ci, vw.v.data(), bias, co, out.v.data());
  const int ix = x.id, iw = w.id, ib = b.valid() ? b.id : -1;
  int id = g.make_node(std::move(out), ib >= 0 ? std::vector<int>{ix, iw, ib}
                                               : std::vector<int>{ix, iw},
                       [ix, iw, ib, n, ci, co](Graph& gg, int self) {
                         const Tensor& dy = gg.grad_ref(Var{&gg, self});
                         const Tensor& vx2 = gg.val(Var{&gg, ix});
                         const Tensor& vw2 = gg.val(Var{&gg, iw});
                         if (gg.node_needs_grad(ix)) {
                           Tensor& dx = gg.grad_ref(Var{&gg, ix});
                           kern::conv1x1_bwd_input(dy.v.data(), n, co,
                                                   vw2.v.data(), ci, dx.v.data());
                         }
                         Tensor& dw = gg.grad_ref(Var{&gg, iw});
                         float* db =
                             ib >= 0 ? gg.grad_ref(Var{&gg, ib}).v.data() : nullptr;
                         kern::conv1x1_bwd_weight(vx2.v.data(), dy.v.data(), n, ci,
                                                  co, dw.v.data(), db);
                       });
  return Var{&g, id};
}

Var layer_norm(Var x, Var gain, Var bias) {
  Graph& g = same_graph(x, gain);
  const Tensor& vx = g.val(x);
  const int c = last_dim(vx);
  if (g.val(gain).numel() != static_cast<std::size_t>(c) ||
      g.val(bias).numel() != static_cast<std::size_t>(c))
    throw DimensionError("layer_norm: gain/bias size mismatch");
  const std::size_t n = lead_count(vx);
  Tensor out(vx.shape);
  auto mu = std::make_shared<std::vector<float>>(n);
  auto rstd = std::make_shared<std::vector<float>>(n);
  kern::layernorm_fwd(vx.v.data(), n, c, g.val(gain).v.data(),
                      g.val(bias).v.data(), out.v.data(), mu->data(),
                      rstd->data());
  const int ix = x.id, ig = gain.id, ibs = bias.id;
  int id = g.make_node(
      std::move(out), {ix, ig, ibs},
      [ix, ig, ibs, n, c, mu, rstd](Graph& gg, int self) {
        const Tensor& dy = gg.grad_ref(Var{&gg, self});
        const Tensor& vx2 = gg.val(Var{&gg, ix});
        Tensor& dx = gg.grad_ref(Var{&gg, ix});
        Tensor& dg = gg.grad_ref(Var{&gg, ig});
        Tensor& db = gg.grad_ref(Var{&gg, ibs});
        kern::layernorm_bwd(vx2.v.data(), dy.v.data(), n, c,
                            gg.val(Var{&gg, ig}).v.data(), mu->data(),
                            rstd->data(), dx.v.data(), dg.v.data(), db.v.data());
      });
  return Var{&g, id};
}

// ------------------------------------------------------------------- wavelet

Var dwt2_stack(Var x) {
  Graph& g = *x.g;
  const Tensor& vx = g.val(x);
  if (vx.h() % 2 != 0 || vx.w() % 2 != 0)
    throw DimensionError("dwt2_stack requires even dimensions");
  const int h = vx.h(), w = vx.w(), c = vx.c();
  Tensor out = Tensor::hwc(h / 2, w / 2, 4 * c);
  wavelet::dwt2_stacked(vx.v.data(), h, w, c, out.v.data());
  const int ix = x.id;
  int id = g.make_node(std::move(out), {ix}, [ix, h, w, c](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    Tensor& dx = gg.grad_ref(Var{&gg, ix});
    Tensor tmp = Tensor::hwc(h, w, c);
    // orthonormal transform: adjoint = inverse
    wavelet::idwt2_stacked(dy.v.data(), h / 2, w / 2, c, tmp.v.data());
    for (std::size_t i = 0; i < dx.numel(); ++i) dx.v[i] += tmp.v[i];
  });
  return Var{&g, id};
}

Var idwt2_stack(Var x) {
  Graph& g = *x.g;
  const Tensor& vx = g.val(x);
  if (vx.c() % 4 != 0) throw DimensionError("idwt2_stack needs 4k channels");
  const int h2 = vx.h(), w2 = vx.w(), c = vx.c() / 4;
  Tensor out = Tensor::hwc(2 * h2, 2 * w2, c);
  wavelet::idwt2_stacked(vx.v.data(), h2, w2, c, out.v.data());
  const int ix = x.id;
  int id = g.make_node(std::move(out), {ix}, [ix, h2, w2, c](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    Tensor& dx = gg.grad_ref(Var{&gg, ix});
    Tensor tmp = Tensor::hwc(h2, w2, 4 * c);
    wavelet::dwt2_stacked(dy.v.data(), 2 * h2, 2 * w2, c, tmp.v.data());
    for (std::size_t i = 0; i < dx.numel(); ++i) dx.v[i] += tmp.v[i];
  });
  return Var{&g, id};
}

// ---------------------------------------------------------------------- scan

Var scan(Var x, Var delta, Var bsel, Var csel, Var a_log, Var dskip,
         bool col_major) {
  Graph& g = same_graph(x, delta);
  const Tensor& vx = g.val(x);
  const int h = vx.h(), w = vx.w(), c = vx.c();
  const int s = g.val(a_log).shape[1];
  const int n = h * w;
  std::shared_ptr<std::vector<int>> perm;
  if (col_major) {
    perm = std::make_shared<std::vector<int>>(n);
    int t = 0;
    for (int xx = 0; xx < w; ++xx)
      for (int yy = 0; yy < h; ++yy) (*perm)[t++] = yy * w + xx;
  }
  Tensor out(vx.shape);
  std::shared_ptr<std::vector<float>> hstate;
  if (g.recording())
    hstate = std::make_shared<std::vector<float>>(
        static_cast<std::size_t>(n) * c * s);
  kern::scan_fwd(vx.v.data(), g.val(delta).v.data(), g.val(bsel).v.data(),
                 g.val(csel).v.data(), g.val(a_log).v.data(),
                 g.val(dskip).v.data(), n, c, s, perm ? perm->data() : nullptr,
                 out.v.data(), hstate ? hstate->data() : nullptr);
  const int ix = x.id, idl = delta.id, ibs = bsel.id, ics = csel.id,
            ial = a_log.id, ids = dskip.id;
  int id = g.make_node(
      std::move(out), {ix, idl, ibs, ics, ial, ids},
      [ix, idl, ibs, ics, ial, ids, n, c, s, perm, hstate](Graph& gg, int self) {
        const Tensor& dy = gg.grad_ref(Var{&gg, self});
        Tensor& dx = gg.grad_ref(Var{&gg, ix});
        Tensor& ddl = gg.grad_ref(Var{&gg, idl});
        Tensor& dbs = gg.grad_ref(Var{&gg, ibs});
        Tensor& dcs = gg.grad_ref(Var{&gg, ics});
        Tensor& dal = gg.grad_ref(Var{&gg, ial});
        Tensor& dds = gg.grad_ref(Var{&gg, ids});
        kern::scan_bwd(gg.val(Var{&gg, ix}).v.data(),
                       gg.val(Var{&gg, idl}).v.data(),
                       gg.val(Var{&gg, ibs}).v.data(),
                       gg.val(Var{&gg, ics}).v.data(),
                       gg.val(Var{&gg, ial}).v.data(),
                       gg.val(Var{&gg, ids}).v.data(), hstate->data(),
                       dy.v.data(), n, c, s, perm ? perm->data() : nullptr,
                       dx.v.data(), ddl.v.data(), dbs.v.data(), dcs.v.data(),
                       dal.v.data(), dds.v.data());
      });
  return Var{&g, id};
}

// --------------------------------------------------- attention building blocks

Var gap(Var x) {
  Graph& g = *x.g;
  const Tensor& vx = g.val(x);
  const int c = vx.c();
  const std::size_t n = lead_count(vx);
  Tensor out = Tensor::hwc(1, 1, c);
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t p = 0; p < n; ++p) acc += vx.v[p * c + ch];
    out.v[ch] = static_cast<float>(acc / static_cast<double>(n));
  }
  const int ix = x.id;
  int id = g.make_node(std::move(out), {ix}, [ix, c, n](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    Tensor& dx = gg.grad_ref(Var{&gg, ix});
    const float inv = 1.0f / static_cast<float>(n);
    for (std::size_t p = 0; p < n; ++p)
      for (int ch = 0; ch < c; ++ch) dx.v[p * c + ch] += dy.v[ch] * inv;
  });
  return Var{&g, id};
}

Var bcast_mul(Var x, Var s) {
  Graph& g = same_graph(x, s);
  const Tensor& vx = g.val(x);
  const Tensor& vs = g.val(s);
  const int c = vx.c();
  const std::size_t n = lead_count(vx);
  const bool chan_mode = vs.h() == 1 && vs.w() == 1 && vs.c() == c;
  const bool mask_mode = vs.h() == vx.h() && vs.w() == vx.w() && vs.c() == 1;
  if (!chan_mode && !mask_mode) throw DimensionError("bcast_mul: bad broadcast");
  Tensor out(vx.shape);
  if (chan_mode) {
    for (std::size_t p = 0; p < n; ++p)
      for (int ch = 0; ch < c; ++ch) out.v[p * c + ch] = vx.v[p * c + ch] * vs.v[ch];
  } else {
    for (std::size_t p = 0; p < n; ++p)
      for (int ch = 0; ch < c; ++ch) out.v[p * c + ch] = vx.v[p * c + ch] * vs.v[p];
  }
  const int ix = x.id, is = s.id;
  int id = g.make_node(
      std::move(out), {ix, is}, [ix, is, c, n, chan_mode](Graph& gg, int self) {
        const Tensor& dy = gg.grad_ref(Var{&gg, self});
        const Tensor& vx2 = gg.val(Var{&gg, ix});
        const Tensor& vs2 = gg.val(Var{&gg, is});
        if (gg.node_needs_grad(ix)) {
          Tensor& dx = gg.grad_ref(Var{&gg, ix});
          for (std::size_t p = 0; p < n; ++p)
            for (int ch = 0; ch < c; ++ch)
              dx.v[p * c + ch] += dy.v[p * c + ch] * (chan_mode ? vs2.v[ch] : vs2.v[p]);
        }
        if (gg.node_needs_grad(is)) {
          Tensor& ds = gg.grad_ref(Var{&gg, is});
          if (chan_mode) {
            for (int ch = 0; ch < c; ++ch) {
              double acc = 0.0;
              for (std::size_t p = 0; p < n; ++p)
                acc += static_cast<double>(dy.v[p * c + ch]) * vx2.v[p * c + ch];
              ds.v[ch] += static_cast<float>(acc);
            }
          } else {
            for (std::size_t p = 0; p < n; ++p) {
              double acc = 0.0;
              for (int ch = 0; ch < c; ++ch)
                acc += static_cast<double>(dy.v[p * c + ch]) * vx2.v[p * c + ch];
              ds.v[p] += static_cast<float>(acc);
            }
          }
        }
      });
  return Var{&g, id};
}

Var softmax_groups(Var x, int groups) {
  Graph& g = *x.g;
  const Tensor& vx = g.val(x);
  const int gc = last_dim(vx);
  if (gc % groups != 0) throw DimensionError("softmax_groups: channels % groups");
  const int c = gc / groups;
  if (lead_count(vx) != 1) throw DimensionError("softmax_groups expects (1,1,g*c)");
  Tensor out(vx.shape);
  for (int ch = 0; ch < c; ++ch) {
    float mx = vx.v[ch];
    for (int k = 1; k < groups; ++k) mx = std::max(mx, vx.v[k * c + ch]);
    double z = 0.0;
    for (int k = 0; k < groups; ++k) {
      out.v[k * c + ch] = std::exp(vx.v[k * c + ch] - mx);
      z += out.v[k * c + ch];
    }
    for (int k = 0; k < groups; ++k)
      out.v[k * c + ch] = static_cast<float>(out.v[k * c + ch] / z);
  }
  const int ix = x.id;
  int id = g.make_node(std::move(out), {ix}, [ix, groups, c](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    const Tensor& y = gg.val(Var{&gg, self});
    Tensor& dx = gg.grad_ref(Var{&gg, ix});
    for (int ch = 0; ch < c; ++ch) {
      double dot = 0.0;
      for (int k = 0; k < groups; ++k)
        dot += static_cast<double>(dy.v[k * c + ch]) * y.v[k * c + ch];
      for (int k = 0; k < groups; ++k)
        dx.v[k * c + ch] += y.v[k * c + ch] *
                            (dy.v[k * c + ch] - static_cast<float>(dot));
    }
  });
  return Var{&g, id};
}

Var head_mat(Var x, int c0, int d) {
  Graph& g = *x.g;
  const Tensor& vx = g.val(x);
  const int c = vx.c();
  if (c0 < 0 || c0 + d > c) throw DimensionError("head_mat out of range");
  const std::size_t n = lead_count(vx);
  Tensor out({static_cast<int>(n), d});
  for (std::size_t p = 0; p < n; ++p)
    for (int i = 0; i < d; ++i) out.v[p * d + i] = vx.v[p * c + c0 + i];
  const int ix = x.id;
  int id = g.make_node(std::move(out), {ix}, [ix, c0, d, c, n](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    Tensor& dx = gg.grad_ref(Var{&gg, ix});
    for (std::size_t p = 0; p < n; ++p)
      for (int i = 0; i < d; ++i) dx.v[p * c + c0 + i] += dy.v[p * d + i];
  });
  return Var{&g, id};
}

Var heads_to_hwc(const std::vector<Var>& heads, int h, int w) {
  if (heads.empty()) throw ArgumentError("heads_to_hwc on empty list");
  Graph& g = *heads.front().g;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  int ctot = 0;
  for (Var v : heads) {
    const Tensor& t = g.val(v);
    if (static_cast<std::size_t>(t.shape[0]) != n)
      throw DimensionError("heads_to_hwc: row count mismatch");
    ctot += t.shape[1];
  }
  Tensor out = Tensor::hwc(h, w, ctot);
  std::vector<int> ids, ds;
  int off = 0;
  for (Var v : heads) {
    const Tensor& t = g.val(v);
    const int d = t.shape[1];
    for (std::size_t p = 0; p < n; ++p)
      for (int i = 0; i < d; ++i) out.v[p * ctot + off + i] = t.v[p * d + i];
    ids.push_back(v.id);
    ds.push_back(d);
    off += d;
  }
  int id = g.make_node(std::move(out), ids, [ids, ds, ctot, n](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    int o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const int d = ds[k];
      Tensor& dx = gg.grad_ref(Var{&gg, ids[k]});
      for (std::size_t p = 0; p < n; ++p)
        for (int i = 0; i < d; ++i) dx.v[p * d + i] += dy.v[p * ctot + o + i];
      o += d;
    }
  });
  return Var{&g, id};
}

Var l2norm_cols(Var m) {
  Graph& g = *m.g;
  const Tensor& vm = g.val(m);
  const int n = vm.shape[0], d = vm.shape[1];
  Tensor out(vm.shape);
  auto nrm = std::make_shared<std::vector<float>>(d);
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int p = 0; p < n; ++p) {
      const float v = vm.v[static_cast<std::size_t>(p) * d + j];
      s += static_cast<double>(v) * v;
    }
    const float r = static_cast<float>(std::sqrt(s + 1e-12));
    (*nrm)[j] = r;
    for (int p = 0; p < n; ++p)
      out.v[static_cast<std::size_t>(p) * d + j] =
          vm.v[static_cast<std::size_t>(p) * d + j] / r;
  }
  const int im = m.id;
  int id = g.make_node(std::move(out), {im}, [im, n, d, nrm](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    const Tensor& y = gg.val(Var{&gg, self});
    Tensor& dm = gg.grad_ref(Var{&gg, im});
    for (int j = 0; j < d; ++j) {
      double dot = 0.0;
      for (int p = 0; p < n; ++p)
        dot += static_cast<double>(dy.v[static_cast<std::size_t>(p) * d + j]) *
               y.v[static_cast<std::size_t>(p) * d + j];
      const float r = (*nrm)[j];
      for (int p = 0; p < n; ++p)
        dm.v[static_cast<std::size_t>(p) * d + j] +=
            (dy.v[static_cast<std::size_t>(p) * d + j] -
             static_cast<float>(dot) * y.v[static_cast<std::size_t>(p) * d + j]) /
            r;
    }
  });
  return Var{&g, id};
}

Var matmul_tn(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& va = g.val(a);
  const Tensor& vb = g.val(b);
  if (va.shape[0] != vb.shape[0]) throw DimensionError("matmul_tn: rows differ");
  const int n = va.shape[0], p = va.shape[1], q = vb.shape[1];
  Tensor out({p, q});
#pragma omp parallel for
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j) {
      double acc = 0.0;
      for (int t = 0; t < n; ++t)
        acc += static_cast<double>(va.v[static_cast<std::size_t>(t) * p + i]) *
               vb.v[static_cast<std::size_t>(t) * q + j];
      out.v[static_cast<std::size_t>(i) * q + j] = static_cast<float>(acc);
    }
  const int ia = a.id, ib = b.id;
  int id = g.make_node(std::move(out), {ia, ib}, [ia, ib, n, p, q](Graph& gg,
                                                                   int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    const Tensor& va2 = gg.val(Var{&gg, ia});
    const Tensor& vb2 = gg.val(Var{&gg, ib});
    if (gg.node_needs_grad(ia)) {
      Tensor& da = gg.grad_ref(Var{&gg, ia});
#pragma omp parallel for
      for (int t = 0; t < n; ++t)
        for (int i = 0; i < p; ++i) {
          float acc = 0.0f;
          for (int j = 0; j < q; ++j)
            acc += dy.v[static_cast<std::size_t>(i) * q + j] *
                   vb2.v[static_cast<std::size_t>(t) * q + j];
          da.v[static_cast<std::size_t>(t) * p + i] += acc;
        }
    }
    if (gg.node_needs_grad(ib)) {
      Tensor& db = gg.grad_ref(Var{&gg, ib});
#pragma omp parallel for
      for (int t = 0; t < n; ++t)
        for (int j = 0; j < q; ++j) {
          float acc = 0.0f;
          for (int i = 0; i < p; ++i)
            acc += va2.v[static_cast<std::size_t>(t) * p + i] *
                   dy.v[static_cast<std::size_t>(i) * q + j];
          db.v[static_cast<std::size_t>(t) * q + j] += acc;
        }
    }
  });
  return Var{&g, id};
}

Var matmul_bt(Var v, Var a) {
  Graph& g = same_graph(v, a);
  const Tensor& vv = g.val(v);
  const Tensor& va = g.val(a);
  if (vv.shape[1] != va.shape[1]) throw DimensionError("matmul_bt: cols differ");
  const int n = vv.shape[0], d = vv.shape[1], p = va.shape[0];
  Tensor out({n, p});
#pragma omp parallel for
  for (int t = 0; t < n; ++t)
    for (int i = 0; i < p; ++i) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j)
        acc += static_cast<double>(vv.v[static_cast<std::size_t>(t) * d + j]) *
               va.v[static_cast<std::size_t>(i) * d + j];
      out.v[static_cast<std::size_t>(t) * p + i] = static_cast<float>(acc);
    }
  const int iv = v.id, ia = a.id;
  int id = g.make_node(std::move(out), {iv, ia}, [iv, ia, n, d, p](Graph& gg,
                                                                   int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    const Tensor& vv2 = gg.val(Var{&gg, iv});
    const Tensor& va2 = gg.val(Var{&gg, ia});
    if (gg.node_needs_grad(iv)) {
      Tensor& dv = gg.grad_ref(Var{&gg, iv});
#pragma omp parallel for
      for (int t = 0; t < n; ++t)
        for (int j = 0; j < d; ++j) {
          float acc = 0.0f;
          for (int i = 0; i < p; ++i)
            acc += dy.v[static_cast<std::size_t>(t) * p + i] *
                   va2.v[static_cast<std::size_t>(i) * d + j];
          dv.v[static_cast<std::size_t>(t) * d + j] += acc;
        }
    }
    if (gg.node_needs_grad(ia)) {
      Tensor& da = gg.grad_ref(Var{&gg, ia});
#pragma omp parallel for
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int t = 0; t < n; ++t)
            acc += static_cast<double>(dy.v[static_cast<std::size_t>(t) * p + i]) *
                   vv2.v[static_cast<std::size_t>(t) * d + j];
          da.v[static_cast<std::size_t>(i) * d + j] += static_cast<float>(acc);
        }
    }
  });
  return Var{&g, id};
}

Var softmax_rows(Var m) {
  Graph& g = *m.g;
  const Tensor& vm = g.val(m);
  const int n = vm.shape[0], d = vm.shape[1];
  Tensor out(vm.shape);
  for (int i = 0; i < n; ++i) {
    const float* row = vm.v.data() + static_cast<std::size_t>(i) * d;
    float* orow = out.v.data() + static_cast<std::size_t>(i) * d;
    float mx = row[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < d; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (int j = 0; j < d; ++j) orow[j] = static_cast<float>(orow[j] / z);
  }
  const int im = m.id;
  int id = g.make_node(std::move(out), {im}, [im, n, d](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    const Tensor& y = gg.val(Var{&gg, self});
    Tensor& dm = gg.grad_ref(Var{&gg, im});
    for (int i = 0; i < n; ++i) {
      const float* yr = y.v.data() + static_cast<std::size_t>(i) * d;
      const float* dr = dy.v.data() + static_cast<std::size_t>(i) * d;
      float* or_ = dm.v.data() + static_cast<std::size_t>(i) * d;
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += static_cast<double>(dr[j]) * yr[j];
      for (int j = 0; j < d; ++j)
        or_[j] += yr[j] * (dr[j] - static_cast<float>(dot));
    }
  });
  return Var{&g, id};
}

Var scale_by_elem(Var m, Var vec, int idx) {
  Graph& g = same_graph(m, vec);
  const float s = g.val(vec).v[idx];
  Tensor out = g.val(m);
  for (float& x : out.v) x *= s;
  const int im = m.id, iv = vec.id;
  int id = g.make_node(std::move(out), {im, iv}, [im, iv, idx](Graph& gg,
                                                               int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    const Tensor& vm = gg.val(Var{&gg, im});
    const float sv = gg.val(Var{&gg, iv}).v[idx];
    if (gg.node_needs_grad(im)) {
      Tensor& dm = gg.grad_ref(Var{&gg, im});
      for (std::size_t i = 0; i < dy.numel(); ++i) dm.v[i] += dy.v[i] * sv;
    }
    if (gg.node_needs_grad(iv)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < dy.numel(); ++i)
        acc += static_cast<double>(dy.v[i]) * vm.v[i];
      gg.grad_ref(Var{&gg, iv}).v[idx] += static_cast<float>(acc);
    }
  });
  return Var{&g, id};
}

// ------------------------------------------------------------------ mask path

Var channel_mean(Var x) {
  Graph& g = *x.g;
  const Tensor& vx = g.val(x);
  const int c = vx.c();
  const std::size_t n = lead_count(vx);
  Tensor out = Tensor::hwc(vx.h(), vx.w(), 1);
  for (std::size_t p = 0; p < n; ++p) {
    double acc = 0.0;
    for (int ch = 0; ch < c; ++ch) acc += vx.v[p * c + ch];
    out.v[p] = static_cast<float>(acc / c);
  }
  const int ix = x.id;
  int id = g.make_node(std::move(out), {ix}, [ix, c, n](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    Tensor& dx = gg.grad_ref(Var{&gg, ix});
    const float inv = 1.0f / static_cast<float>(c);
    for (std::size_t p = 0; p < n; ++p)
      for (int ch = 0; ch < c; ++ch) dx.v[p * c + ch] += dy.v[p] * inv;
  });
  return Var{&g, id};
}

Var bilinear_up(Var x, int oh, int ow) {
  Graph& g = *x.g;
  const Tensor& vx = g.val(x);
  const int h = vx.h(), w = vx.w(), c = vx.c();
  Tensor out = Tensor::hwc(oh, ow, c);
  kern::bilinear_fwd(vx.v.data(), h, w, c, out.v.data(), oh, ow);
  const int ix = x.id;
  int id = g.make_node(std::move(out), {ix}, [ix, h, w, c, oh, ow](Graph& gg,
                                                                   int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    Tensor& dx = gg.grad_ref(Var{&gg, ix});
    kern::bilinear_bwd(dy.v.data(), oh, ow, c, dx.v.data(), h, w);
  });
  return Var{&g, id};
}

Var minmax_norm(Var x) {
  Graph& g = *x.g;
  const Tensor& vx = g.val(x);
  std::size_t imin = 0, imax = 0;
  for (std::size_t i = 1; i < vx.numel(); ++i) {
    if (vx.v[i] < vx.v[imin]) imin = i;
    if (vx.v[i] > vx.v[imax]) imax = i;
  }
  const float mn = vx.v[imin], mx = vx.v[imax];
  const float r = mx - mn;
  Tensor out(vx.shape);
  const bool degenerate = !(r > 1e-12f);
  if (!degenerate)
    for (std::size_t i = 0; i < vx.numel(); ++i) out.v[i] = (vx.v[i] - mn) / r;
  const int ix = x.id;
  int id = g.make_node(
      std::move(out), {ix}, [ix, imin, imax, r, degenerate](Graph& gg, int self) {
        if (degenerate) return;
        const Tensor& dy = gg.grad_ref(Var{&gg, self});
        const Tensor& y = gg.val(Var{&gg, self});
        Tensor& dx = gg.grad_ref(Var{&gg, ix});
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < dy.numel(); ++i) {
          s1 += dy.v[i];
          s2 += static_cast<double>(dy.v[i]) * y.v[i];
        }
        for (std::size_t i = 0; i < dy.numel(); ++i) dx.v[i] += dy.v[i] / r;
        dx.v[imin] += static_cast<float>((-s1 + s2) / r);
        dx.v[imax] -= static_cast<float>(s2 / r);
      });
  return Var{&g, id};
}

Var mean_vars(const std::vector<Var>& xs) {
  if (xs.empty()) throw ArgumentError("mean_vars on empty list");
  Graph& g = *xs.front().g;
  Tensor out = g.val(xs.front());
  for (std::size_t k = 1; k < xs.size(); ++k) {
    const Tensor& t = g.val(xs[k]);
    require_same_shape(out, t, "mean_vars");
    for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] += t.v[i];
  }
  const float inv = 1.0f / static_cast<float>(xs.size());
  for (float& v : out.v) v *= inv;
  std::vector<int> ids;
  for (Var v : xs) ids.push_back(v.id);
  int id = g.make_node(std::move(out), ids, [ids, inv](Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    for (int pid : ids) {
      if (!gg.node_needs_grad(pid)) continue;
      Tensor& dx = gg.grad_ref(Var{&gg, pid});
      for (std::size_t i = 0; i < dy.numel(); ++i) dx.v[i] += dy.v[i] * inv;
    }
  });
  return Var{&g, id};
}

Var fuse_mask(Var banded, Var restored, Var m) {
  Graph& g = same_graph(banded, restored);
  const Tensor& vb = g.val(banded);
  const Tensor& vr = g.val(restored);
  const Tensor& vm = g.val(m);
  require_same_shape(vb, vr, "fuse_mask");
  if (vm.h() != vb.h() || vm.w() != vb.w() || vm.c() != 1)
    throw DimensionError("fuse_mask: mask must be HxWx1");
  const int c = vb.c();
  const std::size_t n = lead_count(vb);
  Tensor out(vb.shape);
  for (std::size_t p = 0; p < n; ++p)
    for (int ch = 0; ch < c; ++ch)
      out.v[p * c + ch] =
          freqmask::fuse_px(vb.v[p * c + ch], vr.v[p * c + ch], vm.v[p]);
  const int ib = banded.id, ir = restored.id, im = m.id;
  int id = g.make_node(std::move(out), {ib, ir, im}, [ib, ir, im, c, n](
                                                         Graph& gg, int self) {
    const Tensor& dy = gg.grad_ref(Var{&gg, self});
    const Tensor& vb2 = gg.val(Var{&gg, ib});
    const Tensor& vr2 = gg.val(Var{&gg, ir});
    const Tensor& vm2 = gg.val(Var{&gg, im});
    const bool nb = gg.node_needs_grad(ib), nr = gg.node_needs_grad(ir),
               nm = gg.node_needs_grad(im);
    Tensor* db = nb ? &gg.grad_ref(Var{&gg, ib}) : nullptr;
    Tensor* dr = nr ? &gg.grad_ref(Var{&gg, ir}) : nullptr;
    Tensor* dm = nm ? &gg.grad_ref(Var{&gg, im}) : nullptr;
    for (std::size_t p = 0; p < n; ++p) {
      const float mv = vm2.v[p];
      double macc = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const float bv = vb2.v[p * c + ch], rv = vr2.v[p * c + ch];
        const float pre = freqmask::fuse_px_raw(bv, rv, mv);
        if (pre < 0.0f || pre > 1.0f) continue;  // clamped, no gradient
        const float gch = dy.v[p * c + ch];
        if (db) db->v[p * c + ch] += gch * mv;
        if (dr) dr->v[p * c + ch] += gch * (1.0f - mv);
        if (dm) macc += static_cast<double>(gch) * (bv - rv);
      }
      if (dm) dm->v[p] += static_cast<float>(macc);
    }
  });
  return Var{&g, id};
}

// ----------------------------------------------------------------- reductions

Var l1(Var pred, Var target) {
  Graph& g = same_graph(pred, target);
  const Tensor& vp = g.val(pred);
  const Tensor& vt = g.val(target);
  require_same_shape(vp, vt, "l1");
  double acc = 0.0;
  for (std::size_t i = 0; i < vp.numel(); ++i)
    acc += std::fabs(static_cast<double>(vp.v[i]) - vt.v[i]);
  Tensor out({1});
  out.v[0] = static_cast<float>(acc / static_cast<double>(vp.numel()));
  const int ip = pred.id, it = target.id;
  int id = g.make_node(std::move(out), {ip, it}, [ip, it](Graph& gg, int self) {
    const float gy = gg.grad_ref(Var{&gg, self}).v[0];
    const Tensor& vp2 = gg.val(Var{&gg, ip});
    const Tensor& vt2 = gg.val(Var{&gg, it});
    const float inv = gy / static_cast<float>(vp2.numel());
    if (gg.node_needs_grad(ip)) {
      Tensor& dp = gg.grad_ref(Var{&gg, ip});
      for (std::size_t i = 0; i < vp2.numel(); ++i) {
        const float d = vp2.v[i] - vt2.v[i];
        dp.v[i] += inv * (d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f));
      }
    }
    if (gg.node_needs_grad(it)) {
      Tensor& dt = gg.grad_ref(Var{&gg, it});
      for (std::size_t i = 0; i < vp2.numel(); ++i) {
        const float d = vp2.v[i] - vt2.v[i];
        dt.v[i] -= inv * (d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f));
      }
    }
  });
  return Var{&g, id};
}

Var mean_all(Var x) {
  Graph& g = *x.g;
  const Tensor& vx = g.val(x);
  double acc = 0.0;
  for (float v : vx.v) acc += v;
  Tensor out({1});
  out.v[0] = static_cast<float>(acc / static_cast<double>(vx.numel()));
  const int ix = x.id;
  int id = g.make_node(std::move(out), {ix}, [ix](Graph& gg, int self) {
    const float gy = gg.grad_ref(Var{&gg, self}).v[0];
    const Tensor& vx2 = gg.val(Var{&gg, ix});
    Tensor& dx = gg.grad_ref(Var{&gg, ix});
    const float inv = gy / static_cast<float>(vx2.numel());
    for (std::size_t i = 0; i < vx2.numel(); ++i) dx.v[i] += inv;
  });
  return Var{&g, id};
}

}  // namespace deband::ag
