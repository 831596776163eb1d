// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 the deband contributors

#pragma once

#include <functional>
#include <vector>

#include "deband/tensor.hpp"

namespace deband::ag {

class Graph;

// Handle into a Graph. Cheap to copy.
struct Var {
  Graph* g = nullptr;
  int id = -1;
  bool valid() const { return g != nullptr && id >= 0; }
};

// Reverse-mode tape. Each op appends a node holding its output value and a
// closure that scatters the node's gradient to its parents. With
// record=false the closures are skipped and only values are computed.
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}

  bool recording() const { return record_; }

  Var input(Tensor t);                       // constant leaf
  Var param(const Tensor& t, int param_id);  // learnable leaf

  const Tensor& val(Var v) const { return nodes_[v.id].val; }
  Tensor& grad_ref(Var v);  // allocates (zeroed) on first access
  bool has_grad(Var v) const { return !nodes_[v.id].grad.v.empty(); }

  // Seeds d(loss)=1 and walks the tape in reverse.
  void backward(Var loss);

  // Accumulates parameter-leaf gradients into acc (indexed by param_id),
  // in tape order.
  void add_param_grads_to(std::vector<Tensor>& acc) const;

  // internal: used by the op builders. The closure receives this graph and
  // the id of the node it backs.
  int make_node(Tensor val, const std::vector<int>& parents,
                std::function<void(Graph&, int)> back);
  bool node_needs_grad(int id) const { return nodes_[id].needs_grad; }
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool needs_grad = false;
    int param_id = -1;
    std::function<void(Graph&, int)> back;
  };
  std::vector<Node> nodes_;
  bool record_;
};

// ---- elementwise / scalar ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float s);
Var scalar_scale(Var x, Var s);  // s is a 1-element parameter
Var one_minus(Var x);
Var abs_val(Var x);
Var silu(Var x);
Var softplus(Var x);
Var clamp01(Var x);

// ---- shape / channel ----
Var slice_c(Var x, int from, int count);
Var concat_c(const std::vector<Var>& xs);

// ---- dense layers ----
Var conv3x3(Var x, Var w, Var b);
Var conv1x1(Var x, Var w, Var b);  // b may be invalid (no bias)
Var layer_norm(Var x, Var gain, Var bias);

// ---- wavelet ----
Var dwt2_stack(Var x);   // (h,w,c) -> (h/2,w/2,4c), bands ll|lh|hl|hh
Var idwt2_stack(Var x);  // inverse

// ---- state space scan ----
// x/delta: (h,w,c); bsel/csel: (h,w,s); a_log: (c,s); dskip: (c).
Var scan(Var x, Var delta, Var bsel, Var csel, Var a_log, Var dskip,
         bool col_major);

// ---- attention / fusion building blocks ----
Var gap(Var x);                         // (h,w,c) -> (1,1,c)
Var bcast_mul(Var x, Var s);            // s: (1,1,c) or (h,w,1)
Var softmax_groups(Var x, int groups);  // (1,1,g*c), softmax across groups
Var head_mat(Var x, int c0, int d);     // channels [c0,c0+d) -> (n,d) matrix
Var heads_to_hwc(const std::vector<Var>& heads, int h, int w);
Var l2norm_cols(Var m);                 // per-column normalize over rows
Var matmul_tn(Var a, Var b);            // a^T b : (n,p),(n,q) -> (p,q)
Var matmul_bt(Var v, Var a);            // v a^T : (n,d),(p,d) -> (n,p)
Var softmax_rows(Var m);
Var scale_by_elem(Var m, Var vec, int idx);

// ---- mask path ----
Var channel_mean(Var x);              // (h,w,c) -> (h,w,1)
Var bilinear_up(Var x, int oh, int ow);
Var minmax_norm(Var x);               // degenerate input -> zeros
Var mean_vars(const std::vector<Var>& xs);
Var fuse_mask(Var banded, Var restored, Var m);  // clamped convex blend

// ---- reductions ----
Var l1(Var pred, Var target);  // mean |a-b| -> (1)
Var mean_all(Var x);           // -> (1)

}  // namespace deband::ag
