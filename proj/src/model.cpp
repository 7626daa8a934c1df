#include "dgt/model.hpp"

#include <cmath>
#include <limits>

namespace dgt {

const char* arch_name(Arch a) { return a == Arch::kDgt ? "dgt" : "gru"; }

Arch parse_arch(const std::string& s) {
  if (s == "dgt") return Arch::kDgt;
  if (s == "gru") return Arch::kGru;
  throw ConfigError("unknown architecture '" + s + "' (dgt|gru)");
}

namespace {

void check_dims(const ModelDims& dims) {
  if (dims.d < 1 || dims.heads < 1 || dims.window < 1 || dims.depth < 1)
    throw ConfigError("model dims must be positive");
  if (dims.d % dims.heads != 0)
    throw ConfigError("embedding width " + std::to_string(dims.d) +
                      " is not divisible by " + std::to_string(dims.heads) + " heads");
}

Matrix xavier(Rng& rng, int rows, int cols) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-limit, limit);
  return m;
}

Matrix gaussian(Rng& rng, int rows, int cols, double stddev) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, stddev);
  return m;
}

// relu(x w1 + b1) w2 + b2; the shape every FFN in the model shares.
NodeId ffn2(Tape& t, NodeId x, NodeId w1, NodeId b1, NodeId w2, NodeId b2) {
  return t.add(t.matmul(t.relu(t.add(t.matmul(x, w1), b1)), w2), b2);
}

}  // namespace

DgtParams init_dgt_params(const ModelDims& dims, int n_stocks, std::uint64_t seed) {
  check_dims(dims);
  if (n_stocks < 1) throw ConfigError("init_dgt_params: need at least one stock");
  const int d = dims.d;
  const int dh = d / dims.heads;
  Rng rng(seed);

  DgtParams p;
  p.dims = dims;
  p.n_stocks = n_stocks;
  p.in_w1 = xavier(rng, 1, d);
  p.in_b1 = Matrix::Zero(1, d);
  p.in_w2 = xavier(rng, d, d);
  p.in_b2 = Matrix::Zero(1, d);
  p.stock_embed = gaussian(rng, n_stocks, d, 0.02);
  p.time_embed = gaussian(rng, dims.window, d, 0.02);
  for (int l = 0; l < dims.depth; ++l) {
    TemporalLayerT<Matrix> tl;
    for (int h = 0; h < dims.heads; ++h) {
      tl.wq.push_back(xavier(rng, d, dh));
      tl.wk.push_back(xavier(rng, d, dh));
      tl.wv.push_back(xavier(rng, d, dh));
    }
    tl.wo = xavier(rng, d, d);
    tl.ln_gain = Matrix::Ones(1, d);
    tl.ln_bias = Matrix::Zero(1, d);
    tl.ffn_w1 = xavier(rng, d, 4 * d);
    tl.ffn_b1 = Matrix::Zero(1, 4 * d);
    tl.ffn_w2 = xavier(rng, 4 * d, d);
    tl.ffn_b2 = Matrix::Zero(1, d);
    p.temporal.push_back(std::move(tl));

    GraphLayerT<Matrix> gl;
    for (int h = 0; h < dims.heads; ++h) {
      gl.wq.push_back(xavier(rng, d, 2 * dh));
      gl.wk.push_back(xavier(rng, d, 2 * dh));
      gl.wv.push_back(xavier(rng, d, dh));
      // Tied pairs: identical dots make the two exp terms cancel bit-exactly,
      // so lambda starts at exactly lambda_init, yet every vector still has a
      // nonzero gradient partner. All-zero vectors would sit on a stationary
      // point and never train.
      Matrix vq = gaussian(rng, 1, dh, 0.1);
      Matrix vk = gaussian(rng, 1, dh, 0.1);
      gl.lq1.push_back(vq);
      gl.lk1.push_back(vk);
      gl.lq2.push_back(vq);
      gl.lk2.push_back(vk);
    }
    gl.wo = xavier(rng, d, d);
    gl.rms_gain = Matrix::Ones(1, d);
    gl.ffn_w1 = xavier(rng, d, 4 * d);
    gl.ffn_b1 = Matrix::Zero(1, 4 * d);
    gl.ffn_w2 = xavier(rng, 4 * d, d);
    gl.ffn_b2 = Matrix::Zero(1, d);
    p.graph.push_back(std::move(gl));
  }
  p.head_w1 = xavier(rng, d, d);
  p.head_b1 = Matrix::Zero(1, d);
  p.head_w2 = xavier(rng, d, 1);
  p.head_b2 = Matrix::Zero(1, 1);
  return p;
}

GruParams init_gru_params(int d, std::uint64_t seed) {
  if (d < 1) throw ConfigError("init_gru_params: hidden width must be positive");
  Rng rng(seed);
  GruParams p;
  p.d = d;
  p.wz = xavier(rng, 1, d);
  p.uz = xavier(rng, d, d);
  p.bz = Matrix::Zero(1, d);
  p.wr = xavier(rng, 1, d);
  p.ur = xavier(rng, d, d);
  p.br = Matrix::Zero(1, d);
  p.wh = xavier(rng, 1, d);
  p.uh = xavier(rng, d, d);
  p.bh = Matrix::Zero(1, d);
  p.head_w = xavier(rng, d, 1);
  p.head_b = Matrix::Zero(1, 1);
  return p;
}

Matrix causal_mask(int len) {
  if (len < 1) throw std::invalid_argument("causal_mask: length must be positive");
  Matrix m = Matrix::Zero(len, len);
  const double inf = std::numeric_limits<double>::infinity();
  for (int i = 0; i < len; ++i)
    for (int j = i + 1; j < len; ++j) m(i, j) = -inf;
  return m;
}

NodeId temporal_attention(Tape& t, const TemporalLayerT<NodeId>& layer, int d, int heads,
                          NodeId x_ld, NodeId mask) {
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<NodeId> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto hh = static_cast<std::size_t>(h);
    NodeId q = t.matmul(x_ld, layer.wq[hh]);
    NodeId k = t.matmul(x_ld, layer.wk[hh]);
    NodeId v = t.matmul(x_ld, layer.wv[hh]);
    NodeId scores = t.scalar_mul(t.matmul(q, t.transpose(k)), scale);
    NodeId weights = t.row_softmax(t.masked_add(scores, mask));
    outs.push_back(t.matmul(weights, v));
  }
  return t.matmul(t.concat_cols(outs), layer.wo);
}

std::vector<NodeId> lambda_values(Tape& t, const GraphLayerT<NodeId>& layer, int heads,
                                  double lambda_init) {
  NodeId offset = t.constant(Matrix::Constant(1, 1, lambda_init));
  std::vector<NodeId> lambdas;
  lambdas.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto hh = static_cast<std::size_t>(h);
    NodeId e1 = t.exp(t.sum(t.hadamard(layer.lq1[hh], layer.lk1[hh])));
    NodeId e2 = t.exp(t.sum(t.hadamard(layer.lq2[hh], layer.lk2[hh])));
    lambdas.push_back(t.add(t.sub(e1, e2), offset));
  }
  return lambdas;
}

NodeId diff_graph_attention(Tape& t, const GraphLayerT<NodeId>& layer, int d, int heads,
                            NodeId x_nd, const std::vector<NodeId>& adj,
                            const std::vector<NodeId>& lambdas) {
  if (static_cast<int>(adj.size()) != heads || static_cast<int>(lambdas.size()) != heads)
    throw std::invalid_argument("diff_graph_attention: need one adjacency and lambda per head");
  const int n = static_cast<int>(t.value(x_nd).rows());
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<NodeId> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto hh = static_cast<std::size_t>(h);
    NodeId qpair = t.matmul(x_nd, layer.wq[hh]);  // N x 2dh
    NodeId kpair = t.matmul(x_nd, layer.wk[hh]);
    NodeId q1 = t.slice(qpair, 0, n, 0, dh);
    NodeId q2 = t.slice(qpair, 0, n, dh, dh);
    NodeId k1 = t.slice(kpair, 0, n, 0, dh);
    NodeId k2 = t.slice(kpair, 0, n, dh, dh);
    NodeId s1 = t.row_softmax(t.scalar_mul(t.matmul(q1, t.transpose(k1)), scale));
    NodeId s2 = t.row_softmax(t.scalar_mul(t.matmul(q2, t.transpose(k2)), scale));
    NodeId mixed = t.sub(t.hadamard(s1, adj[hh]), t.scale(lambdas[hh], s2));
    outs.push_back(t.matmul(mixed, t.matmul(x_nd, layer.wv[hh])));
  }
  return t.matmul(t.concat_cols(outs), layer.wo);
}

NodeId additive_prior_attention(Tape& t, NodeId x_nd, NodeId wq, NodeId wk, NodeId wv,
                                NodeId lambda_scalar, NodeId delta_nn) {
  const int dk = static_cast<int>(t.value(wq).cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  NodeId q = t.matmul(x_nd, wq);
  NodeId k = t.matmul(x_nd, wk);
  NodeId scores = t.scalar_mul(t.matmul(q, t.transpose(k)), scale);
  NodeId biased = t.add(scores, t.scale(lambda_scalar, delta_nn));
  return t.matmul(t.row_softmax(biased), t.matmul(x_nd, wv));
}

namespace {

// attention + the two residual rules: inner FFN(LayerNorm(A + X)) + A, then
// the outer skip back onto X.
NodeId temporal_block(Tape& t, const TemporalLayerT<NodeId>& layer, int d, int heads,
                      NodeId x, NodeId mask) {
  NodeId a = temporal_attention(t, layer, d, heads, x, mask);
  NodeId normed = t.layer_norm(t.add(a, x), layer.ln_gain, layer.ln_bias);
  NodeId block = t.add(ffn2(t, normed, layer.ffn_w1, layer.ffn_b1, layer.ffn_w2, layer.ffn_b2), a);
  return t.add(block, x);
}

NodeId graph_block(Tape& t, const GraphLayerT<NodeId>& layer, int d, int heads, NodeId y,
                   const std::vector<NodeId>& adj, const std::vector<NodeId>& lambdas) {
  NodeId g = diff_graph_attention(t, layer, d, heads, y, adj, lambdas);
  NodeId normed = t.rms_norm(t.add(g, y), layer.rms_gain);
  NodeId block = t.add(ffn2(t, normed, layer.ffn_w1, layer.ffn_b1, layer.ffn_w2, layer.ffn_b2), g);
  return t.add(block, y);
}

}  // namespace

NodeId dgt_forward(Tape& t, const DgtNodes& params, const Matrix& prices,
                   const GraphSet* graphs, IndexRange span, bool use_spatial) {
  const int n = static_cast<int>(prices.rows());
  const int len = static_cast<int>(prices.cols());
  const int d = params.dims.d;
  const int heads = params.dims.heads;
  if (len != params.dims.window)
    throw std::invalid_argument("dgt_forward: window of " + std::to_string(len) +
                                " days does not match model length " +
                                std::to_string(params.dims.window));
  if (n != params.n_stocks)
    throw std::invalid_argument("dgt_forward: panel has " + std::to_string(n) +
                                " stocks, model embeds " + std::to_string(params.n_stocks));
  if (use_spatial && graphs && graphs->heads != heads)
    throw ConfigError("dgt_forward: graph set built for " + std::to_string(graphs->heads) +
                      " heads, model has " + std::to_string(heads));

  NodeId mask = t.constant(causal_mask(len));

  // Per-stock L x d sequences for the temporal stage.
  std::vector<NodeId> xs(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    NodeId price_col = t.constant(prices.row(s).transpose());  // L x 1
    NodeId projected = ffn2(t, price_col, params.in_w1, params.in_b1, params.in_w2, params.in_b2);
    NodeId stock_row = t.rows_lookup(params.stock_embed, {s});  // 1 x d
    xs[static_cast<std::size_t>(s)] =
        t.add(t.add(projected, params.time_embed), stock_row);
  }

  for (int layer = 0; layer < params.dims.depth; ++layer) {
    const auto ll = static_cast<std::size_t>(layer);
    for (auto& x : xs) x = temporal_block(t, params.temporal[ll], d, heads, x, mask);

    if (!use_spatial) continue;
    const auto& gl = params.graph[ll];
    std::vector<NodeId> lambdas = lambda_values(t, gl, heads, params.lambda_init);
    std::vector<NodeId> adj(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h)
      adj[static_cast<std::size_t>(h)] =
          t.constant(graphs ? graphs->matrix_for(span, h) : Matrix::Ones(n, n));

    // Re-group to per-step N x d cross-sections; graph attention mixes stocks
    // within a step only, which is what keeps teacher forcing causal.
    std::vector<NodeId> ys(static_cast<std::size_t>(len));
    std::vector<std::pair<NodeId, int>> rows(static_cast<std::size_t>(n));
    for (int step = 0; step < len; ++step) {
      for (int s = 0; s < n; ++s) rows[static_cast<std::size_t>(s)] = {xs[static_cast<std::size_t>(s)], step};
      ys[static_cast<std::size_t>(step)] = graph_block(t, gl, d, heads, t.row_stack(rows), adj, lambdas);
    }
    std::vector<std::pair<NodeId, int>> steps(static_cast<std::size_t>(len));
    for (int s = 0; s < n; ++s) {
      for (int step = 0; step < len; ++step)
        steps[static_cast<std::size_t>(step)] = {ys[static_cast<std::size_t>(step)], s};
      xs[static_cast<std::size_t>(s)] = t.row_stack(steps);
    }
  }

  std::vector<NodeId> preds(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s)
    preds[static_cast<std::size_t>(s)] =
        ffn2(t, xs[static_cast<std::size_t>(s)], params.head_w1, params.head_b1,
             params.head_w2, params.head_b2);  // L x 1
  return t.concat_cols(preds);                 // L x N
}

NodeId gru_forward(Tape& t, const GruNodes& params, const Matrix& prices) {
  const int n = static_cast<int>(prices.rows());
  const int len = static_cast<int>(prices.cols());
  if (n < 1 || len < 1) throw std::invalid_argument("gru_forward: empty window");

  NodeId h = t.constant(Matrix::Zero(n, params.d));
  std::vector<NodeId> step_preds;
  step_preds.reserve(static_cast<std::size_t>(len));
  for (int step = 0; step < len; ++step) {
    NodeId x = t.constant(prices.col(step));  // N x 1
    NodeId z = t.sigmoid(t.add(t.add(t.matmul(x, params.wz), t.matmul(h, params.uz)), params.bz));
    NodeId r = t.sigmoid(t.add(t.add(t.matmul(x, params.wr), t.matmul(h, params.ur)), params.br));
    NodeId cand = t.tanh(
        t.add(t.add(t.matmul(x, params.wh), t.matmul(t.hadamard(r, h), params.uh)), params.bh));
    // (1 - z) .* h + z .* cand
    h = t.add(t.sub(h, t.hadamard(z, h)), t.hadamard(z, cand));
    step_preds.push_back(t.add(t.matmul(h, params.head_w), params.head_b));  // N x 1
  }
  return t.transpose(t.concat_cols(step_preds));  // L x N
}

}  // namespace dgt
