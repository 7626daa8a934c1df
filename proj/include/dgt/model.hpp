#pragma once

// The forecasting models, expressed as tape programs. Parameter containers are
// templated on the stored handle: T = Matrix holds host values, T = NodeId
// holds the tape leaves for one forward/backward pass. map() converts between
// the two; for_each() enumerates tensors in a fixed declaration order shared
// by the optimizer and the checkpoint format.

#include "dgt/corr.hpp"
#include "dgt/tape.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dgt {

enum class Arch : std::uint8_t { kDgt, kGru };

const char* arch_name(Arch a);
Arch parse_arch(const std::string& s);

struct ModelDims {
  int d = 32;      // embedding width; divisible by heads
  int heads = 4;
  int window = 64;  // L
  int depth = 1;    // temporal+graph block pairs
};

template <typename T>
struct TemporalLayerT {
  std::vector<T> wq, wk, wv;          // per head, d x (d/H)
  T wo;                               // d x d
  T ln_gain, ln_bias;                 // 1 x d
  T ffn_w1, ffn_b1, ffn_w2, ffn_b2;   // d -> 4d -> d

  template <typename U, typename Fn>
  TemporalLayerT<U> map(Fn&& fn) const {
    TemporalLayerT<U> o;
    for (const T& m : wq) o.wq.push_back(fn(m));
    for (const T& m : wk) o.wk.push_back(fn(m));
    for (const T& m : wv) o.wv.push_back(fn(m));
    o.wo = fn(wo);
    o.ln_gain = fn(ln_gain);
    o.ln_bias = fn(ln_bias);
    o.ffn_w1 = fn(ffn_w1);
    o.ffn_b1 = fn(ffn_b1);
    o.ffn_w2 = fn(ffn_w2);
    o.ffn_b2 = fn(ffn_b2);
    return o;
  }

  template <typename Self, typename Fn>
  static void visit(Self& self, const std::string& prefix, Fn&& fn) {
    for (std::size_t h = 0; h < self.wq.size(); ++h)
      fn(prefix + "wq" + std::to_string(h), self.wq[h]);
    for (std::size_t h = 0; h < self.wk.size(); ++h)
      fn(prefix + "wk" + std::to_string(h), self.wk[h]);
    for (std::size_t h = 0; h < self.wv.size(); ++h)
      fn(prefix + "wv" + std::to_string(h), self.wv[h]);
    fn(prefix + "wo", self.wo);
    fn(prefix + "ln_gain", self.ln_gain);
    fn(prefix + "ln_bias", self.ln_bias);
    fn(prefix + "ffn_w1", self.ffn_w1);
    fn(prefix + "ffn_b1", self.ffn_b1);
    fn(prefix + "ffn_w2", self.ffn_w2);
    fn(prefix + "ffn_b2", self.ffn_b2);
  }
};

template <typename T>
struct GraphLayerT {
  std::vector<T> wq, wk;              // per head, d x (2*d/H): the paired splits
  std::vector<T> wv;                  // per head, d x (d/H)
  std::vector<T> lq1, lk1, lq2, lk2;  // per head, 1 x (d/H)
  T wo;                               // d x d
  T rms_gain;                         // 1 x d
  T ffn_w1, ffn_b1, ffn_w2, ffn_b2;   // d -> 4d -> d

  template <typename U, typename Fn>
  GraphLayerT<U> map(Fn&& fn) const {
    GraphLayerT<U> o;
    for (const T& m : wq) o.wq.push_back(fn(m));
    for (const T& m : wk) o.wk.push_back(fn(m));
    for (const T& m : wv) o.wv.push_back(fn(m));
    for (const T& m : lq1) o.lq1.push_back(fn(m));
    for (const T& m : lk1) o.lk1.push_back(fn(m));
    for (const T& m : lq2) o.lq2.push_back(fn(m));
    for (const T& m : lk2) o.lk2.push_back(fn(m));
    o.wo = fn(wo);
    o.rms_gain = fn(rms_gain);
    o.ffn_w1 = fn(ffn_w1);
    o.ffn_b1 = fn(ffn_b1);
    o.ffn_w2 = fn(ffn_w2);
    o.ffn_b2 = fn(ffn_b2);
    return o;
  }

  template <typename Self, typename Fn>
  static void visit(Self& self, const std::string& prefix, Fn&& fn) {
    for (std::size_t h = 0; h < self.wq.size(); ++h)
      fn(prefix + "wq" + std::to_string(h), self.wq[h]);
    for (std::size_t h = 0; h < self.wk.size(); ++h)
      fn(prefix + "wk" + std::to_string(h), self.wk[h]);
    for (std::size_t h = 0; h < self.wv.size(); ++h)
      fn(prefix + "wv" + std::to_string(h), self.wv[h]);
    for (std::size_t h = 0; h < self.lq1.size(); ++h)
      fn(prefix + "lq1_" + std::to_string(h), self.lq1[h]);
    for (std::size_t h = 0; h < self.lk1.size(); ++h)
      fn(prefix + "lk1_" + std::to_string(h), self.lk1[h]);
    for (std::size_t h = 0; h < self.lq2.size(); ++h)
      fn(prefix + "lq2_" + std::to_string(h), self.lq2[h]);
    for (std::size_t h = 0; h < self.lk2.size(); ++h)
      fn(prefix + "lk2_" + std::to_string(h), self.lk2[h]);
    fn(prefix + "wo", self.wo);
    fn(prefix + "rms_gain", self.rms_gain);
    fn(prefix + "ffn_w1", self.ffn_w1);
    fn(prefix + "ffn_b1", self.ffn_b1);
    fn(prefix + "ffn_w2", self.ffn_w2);
    fn(prefix + "ffn_b2", self.ffn_b2);
  }
};

template <typename T>
struct DgtParamsT {
  ModelDims dims;
  int n_stocks = 0;
  double lambda_init = 0.2;           // constant offset, shared by every layer
  T in_w1, in_b1, in_w2, in_b2;       // scalar price -> d -> d
  T stock_embed;                      // N x d
  T time_embed;                       // L x d, position within the window
  std::vector<TemporalLayerT<T>> temporal;  // depth entries
  std::vector<GraphLayerT<T>> graph;        // depth entries
  T head_w1, head_b1, head_w2, head_b2;     // d -> d -> 1

  template <typename U, typename Fn>
  DgtParamsT<U> map(Fn&& fn) const {
    DgtParamsT<U> o;
    o.dims = dims;
    o.n_stocks = n_stocks;
    o.lambda_init = lambda_init;
    o.in_w1 = fn(in_w1);
    o.in_b1 = fn(in_b1);
    o.in_w2 = fn(in_w2);
    o.in_b2 = fn(in_b2);
    o.stock_embed = fn(stock_embed);
    o.time_embed = fn(time_embed);
    for (const auto& l : temporal) o.temporal.push_back(l.template map<U>(fn));
    for (const auto& l : graph) o.graph.push_back(l.template map<U>(fn));
    o.head_w1 = fn(head_w1);
    o.head_b1 = fn(head_b1);
    o.head_w2 = fn(head_w2);
    o.head_b2 = fn(head_b2);
    return o;
  }

  // fn(name, tensor) over every learnable tensor, declaration order.
  template <typename Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn&& fn) {
    fn(std::string("in_w1"), self.in_w1);
    fn(std::string("in_b1"), self.in_b1);
    fn(std::string("in_w2"), self.in_w2);
    fn(std::string("in_b2"), self.in_b2);
    fn(std::string("stock_embed"), self.stock_embed);
    fn(std::string("time_embed"), self.time_embed);
    for (std::size_t l = 0; l < self.temporal.size(); ++l)
      TemporalLayerT<T>::visit(self.temporal[l], "t" + std::to_string(l) + ".", fn);
    for (std::size_t l = 0; l < self.graph.size(); ++l)
      GraphLayerT<T>::visit(self.graph[l], "g" + std::to_string(l) + ".", fn);
    fn(std::string("head_w1"), self.head_w1);
    fn(std::string("head_b1"), self.head_b1);
    fn(std::string("head_w2"), self.head_w2);
    fn(std::string("head_b2"), self.head_b2);
  }
};

template <typename T>
struct GruParamsT {
  int d = 0;
  T wz, uz, bz;      // update gate: 1 x d, d x d, 1 x d
  T wr, ur, br;      // reset gate
  T wh, uh, bh;      // candidate
  T head_w, head_b;  // d x 1, 1 x 1

  template <typename U, typename Fn>
  GruParamsT<U> map(Fn&& fn) const {
    GruParamsT<U> o;
    o.d = d;
    o.wz = fn(wz);
    o.uz = fn(uz);
    o.bz = fn(bz);
    o.wr = fn(wr);
    o.ur = fn(ur);
    o.br = fn(br);
    o.wh = fn(wh);
    o.uh = fn(uh);
    o.bh = fn(bh);
    o.head_w = fn(head_w);
    o.head_b = fn(head_b);
    return o;
  }

  template <typename Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn&& fn) {
    fn(std::string("wz"), self.wz);
    fn(std::string("uz"), self.uz);
    fn(std::string("bz"), self.bz);
    fn(std::string("wr"), self.wr);
    fn(std::string("ur"), self.ur);
    fn(std::string("br"), self.br);
    fn(std::string("wh"), self.wh);
    fn(std::string("uh"), self.uh);
    fn(std::string("bh"), self.bh);
    fn(std::string("head_w"), self.head_w);
    fn(std::string("head_b"), self.head_b);
  }
};

using DgtParams = DgtParamsT<Matrix>;
using DgtNodes = DgtParamsT<NodeId>;
using GruParams = GruParamsT<Matrix>;
using GruNodes = GruParamsT<NodeId>;

// Xavier-uniform weights, zero biases, unit gains, N(0, 0.02^2) embeddings.
// Lambda vectors are drawn N(0, 0.1^2) as tied pairs (lq1 == lq2, lk1 == lk2):
// the exp terms cancel bit-exactly so lambda starts at lambda_init, while the
// gradients stay live. Deterministic in seed.
DgtParams init_dgt_params(const ModelDims& dims, int n_stocks, std::uint64_t seed);
GruParams init_gru_params(int d, std::uint64_t seed);

template <typename P>
auto load_params(Tape& t, const P& params) {
  return params.template map<NodeId>([&t](const Matrix& m) { return t.leaf(m); });
}

template <typename P>
std::vector<Matrix> flatten_params(const P& params) {
  std::vector<Matrix> out;
  params.for_each([&out](const std::string&, const Matrix& m) { out.push_back(m); });
  return out;
}

template <typename P>
std::vector<NodeId> flatten_nodes(const P& nodes) {
  std::vector<NodeId> out;
  nodes.for_each([&out](const std::string&, const NodeId& id) { out.push_back(id); });
  return out;
}

template <typename P>
void assign_params(P& params, const std::vector<Matrix>& values) {
  std::size_t i = 0;
  params.for_each([&](const std::string& name, Matrix& m) {
    if (i >= values.size()) throw std::invalid_argument("assign_params: too few tensors");
    if (values[i].rows() != m.rows() || values[i].cols() != m.cols())
      throw std::invalid_argument("assign_params: shape mismatch at " + name);
    m = values[i++];
  });
  if (i != values.size()) throw std::invalid_argument("assign_params: too many tensors");
}

// 0 on and below the diagonal, -inf strictly above: step i attends keys <= i.
Matrix causal_mask(int len);

// Multi-head causal self-attention over one stock's L x d sequence:
// concat_h(softmax(Q K^T / sqrt(d/H) + M) V) W_O. Pre-residual output.
NodeId temporal_attention(Tape& t, const TemporalLayerT<NodeId>& layer, int d, int heads,
                          NodeId x_ld, NodeId mask);

// One lambda node per head: exp(lq1.lk1) - exp(lq2.lk2) + lambda_init.
std::vector<NodeId> lambda_values(Tape& t, const GraphLayerT<NodeId>& layer, int heads,
                                  double lambda_init);

// Multi-head differential graph attention over the N x d cross-section of one
// time step: concat_h((softmax(Q1 K1^T / sqrt(d/H)) .* A_h
//                      - lambda_h * softmax(Q2 K2^T / sqrt(d/H))) V_h) W_O.
// adj[h] and lambdas[h] are built once per layer and shared across steps.
NodeId diff_graph_attention(Tape& t, const GraphLayerT<NodeId>& layer, int d, int heads,
                            NodeId x_nd, const std::vector<NodeId>& adj,
                            const std::vector<NodeId>& lambdas);

// Single-map diagnostic variant: softmax(Q K^T / sqrt(d_k) + lambda * delta) V
// with the differential graph as an additive logit bias. Not part of the
// default forward path.
NodeId additive_prior_attention(Tape& t, NodeId x_nd, NodeId wq, NodeId wk, NodeId wv,
                                NodeId lambda_scalar, NodeId delta_nn);

// Full forward pass over one window. prices is the N x L z-unit slice; span
// its day range (used to pick local graphs). Returns an L x N node: row j
// holds every stock's prediction for day span.begin + 1 + j. With use_spatial
// false the graph stage is skipped; with a null graph set the adjacency is
// all-ones.
NodeId dgt_forward(Tape& t, const DgtNodes& params, const Matrix& prices,
                   const GraphSet* graphs, IndexRange span, bool use_spatial);

// GRU baseline, all stocks batched through the shared recurrence. Same output
// contract as dgt_forward.
NodeId gru_forward(Tape& t, const GruNodes& params, const Matrix& prices);

}  // namespace dgt
