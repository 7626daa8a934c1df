#pragma once

// Reverse-mode autodiff over a linear tape of dense matrices. Eager forward:
// every builder computes its value immediately and appends one node; backward
// replays the tape once in reverse. Tensors are rank-2 (vectors are 1 x n or
// n x 1); the model decomposes anything higher-rank into per-step or per-stock
// matrices before it touches the tape.

#include "dgt/common.hpp"

#include <array>
#include <cstdint>
#include <ostream>
#include <utility>
#include <vector>

namespace dgt {

using NodeId = int;

// Raised when a forward value comes out NaN/inf. Training maps this to a
// diverged run; everything else treats it as a hard numeric fault.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Op : std::uint8_t {
  kLeaf,
  kConst,
  kMatMul,
  kTranspose,
  kAdd,
  kSub,
  kScalarMul,   // constant scalar
  kScale,       // 1x1 node scalar times matrix
  kHadamard,
  kRowSoftmax,
  kMaskedAdd,
  kLayerNorm,
  kRmsNorm,
  kRelu,
  kTanh,
  kSigmoid,
  kExp,
  kConcatCols,
  kSlice,
  kRowsLookup,
  kRowStack,
  kSum,
  kSumSqErr,
};

const char* op_name(Op op);

// Epsilon inside both normalization denominators.
inline constexpr double kNormEps = 1e-8;

class Tape {
 public:
  // Learnable or data input; values must be finite.
  NodeId leaf(Matrix v);
  // Non-learnable constant; -inf permitted (mask sentinel), NaN/+inf rejected.
  NodeId constant(Matrix v);

  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  // add/sub accept equal shapes, or b of shape 1 x cols(a) broadcast down rows.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId scalar_mul(NodeId a, double c);
  // s must be 1x1; result is value(s) * value(a).
  NodeId scale(NodeId s, NodeId a);
  NodeId hadamard(NodeId a, NodeId b);
  // Row-wise softmax; -inf entries act as mask sentinels. A fully masked row
  // is an error.
  NodeId row_softmax(NodeId a);
  // a + mask where mask is a constant node of zeros and -inf.
  NodeId masked_add(NodeId a, NodeId mask);
  // Row-wise (x - mean) / sqrt(var + eps) .* gain + bias; gain/bias are 1 x d.
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias);
  // Row-wise x / sqrt(mean(x^2) + eps) .* gain; gain is 1 x d.
  NodeId rms_norm(NodeId x, NodeId gain);
  NodeId relu(NodeId a);
  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId exp(NodeId a);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  NodeId slice(NodeId a, int row0, int rows, int col0, int cols);
  // Embedding lookup: selected table rows, one output row per index.
  // Duplicate indices accumulate gradient into the same table row.
  NodeId rows_lookup(NodeId table, std::vector<int> indices);
  // Output row k is row entries[k].second of node entries[k].first. All source
  // rows must share a column count.
  NodeId row_stack(const std::vector<std::pair<NodeId, int>>& entries);
  NodeId sum(NodeId a);
  // sum((a - b)^2) as a 1x1 node; the training loss reduction.
  NodeId sum_sq_err(NodeId a, NodeId b);

  const Matrix& value(NodeId id) const;
  // Valid only after backward().
  const Matrix& grad(NodeId id) const;

  // Seeds d(root)/d(root) = 1 and accumulates adjoints for every node at or
  // below root. root must be 1x1. A second call without reset_grads() throws.
  void backward(NodeId root);
  void reset_grads();

  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }
  void dump(std::ostream& os) const;

 private:
  struct Node {
    Op op;
    Matrix value;
    Matrix grad;
    int a = -1;
    int b = -1;
    int c = -1;
    std::vector<int> list;   // concat / row-stack parents
    std::vector<int> ints;   // slice coords, lookup indices, stack rows
    double scalar = 0.0;
    Matrix aux;              // saved row stats for the norm ops
  };

  NodeId push(Node n);
  void check_value(const Node& n, NodeId id) const;
  const Node& at(NodeId id) const;
  void backward_one(NodeId id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Central-difference gradient verification. build must construct the same
// scalar-valued graph from any parameter values handed to it; returns the worst
// relative error  |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)  over every
// parameter component.
double grad_check(const std::vector<Matrix>& params,
                  const std::function<NodeId(Tape&, const std::vector<NodeId>&)>& build,
                  double eps = 1e-5);

}  // namespace dgt
