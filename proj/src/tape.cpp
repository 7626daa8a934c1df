#include "dgt/tape.hpp"

#include <limits>
#include <sstream>

namespace dgt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                              " vs " + shape_str(b));
}

bool broadcasts_down(const Matrix& a, const Matrix& b) {
  return b.rows() == 1 && a.rows() > 1 && b.cols() == a.cols();
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConst: return "const";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kScalarMul: return "scalar_mul";
    case Op::kScale: return "scale";
    case Op::kHadamard: return "hadamard";
    case Op::kRowSoftmax: return "row_softmax";
    case Op::kMaskedAdd: return "masked_add";
    case Op::kLayerNorm: return "layer_norm";
    case Op::kRmsNorm: return "rms_norm";
    case Op::kRelu: return "relu";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kExp: return "exp";
    case Op::kConcatCols: return "concat_cols";
    case Op::kSlice: return "slice";
    case Op::kRowsLookup: return "rows_lookup";
    case Op::kRowStack: return "row_stack";
    case Op::kSum: return "sum";
    case Op::kSumSqErr: return "sum_sq_err";
  }
  return "?";
}

const Tape::Node& Tape::at(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw std::out_of_range("tape: node id " + std::to_string(id) + " out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

void Tape::check_value(const Node& n, NodeId id) const {
  const bool allow_neg_inf = n.op == Op::kConst || n.op == Op::kMaskedAdd;
  bool bad;
  if (allow_neg_inf)
    bad = n.value.hasNaN() || (n.value.array() == kInf).any();
  else
    bad = !n.value.allFinite();
  if (bad)
    throw NonFiniteError(std::string("non-finite value in ") + op_name(n.op) + " node " +
                         std::to_string(id));
}

NodeId Tape::push(Node n) {
  const NodeId id = static_cast<NodeId>(nodes_.size());
  check_value(n, id);
  nodes_.push_back(std::move(n));
  return id;
}

NodeId Tape::leaf(Matrix v) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Tape::constant(Matrix v) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Matrix& va = at(a).value;
  const Matrix& vb = at(b).value;
  if (va.cols() != vb.rows()) shape_fail("matmul", va, vb);
  Node n;
  n.op = Op::kMatMul;
  n.a = a;
  n.b = b;
  n.value = va * vb;
  return push(std::move(n));
}

NodeId Tape::transpose(NodeId a) {
  Node n;
  n.op = Op::kTranspose;
  n.a = a;
  n.value = at(a).value.transpose();
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Matrix& va = at(a).value;
  const Matrix& vb = at(b).value;
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  if (va.rows() == vb.rows() && va.cols() == vb.cols())
    n.value = va + vb;
  else if (broadcasts_down(va, vb))
    n.value = va.rowwise() + vb.row(0);
  else
    shape_fail("add", va, vb);
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Matrix& va = at(a).value;
  const Matrix& vb = at(b).value;
  Node n;
  n.op = Op::kSub;
  n.a = a;
  n.b = b;
  if (va.rows() == vb.rows() && va.cols() == vb.cols())
    n.value = va - vb;
  else if (broadcasts_down(va, vb))
    n.value = va.rowwise() - vb.row(0);
  else
    shape_fail("sub", va, vb);
  return push(std::move(n));
}

NodeId Tape::scalar_mul(NodeId a, double c) {
  Node n;
  n.op = Op::kScalarMul;
  n.a = a;
  n.scalar = c;
  n.value = at(a).value * c;
  return push(std::move(n));
}

NodeId Tape::scale(NodeId s, NodeId a) {
  const Matrix& vs = at(s).value;
  if (vs.rows() != 1 || vs.cols() != 1)
    throw std::invalid_argument("scale: scalar operand must be 1x1, got " + shape_str(vs));
  Node n;
  n.op = Op::kScale;
  n.a = s;
  n.b = a;
  n.value = vs(0, 0) * at(a).value;
  return push(std::move(n));
}

NodeId Tape::hadamard(NodeId a, NodeId b) {
  const Matrix& va = at(a).value;
  const Matrix& vb = at(b).value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_fail("hadamard", va, vb);
  Node n;
  n.op = Op::kHadamard;
  n.a = a;
  n.b = b;
  n.value = va.cwiseProduct(vb);
  return push(std::move(n));
}

NodeId Tape::row_softmax(NodeId a) {
  const Matrix& x = at(a).value;
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double m = -kInf;
    for (Eigen::Index c = 0; c < x.cols(); ++c) m = std::max(m, x(r, c));
    if (m == -kInf)
      throw std::invalid_argument("row_softmax: row " + std::to_string(r) +
                                  " is fully masked");
    double s = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double e = std::exp(x(r, c) - m);
      y(r, c) = e;
      s += e;
    }
    y.row(r) /= s;
  }
  Node n;
  n.op = Op::kRowSoftmax;
  n.a = a;
  n.value = std::move(y);
  return push(std::move(n));
}

NodeId Tape::masked_add(NodeId a, NodeId mask) {
  const Matrix& va = at(a).value;
  const Matrix& vm = at(mask).value;
  if (at(mask).op != Op::kConst)
    throw std::invalid_argument("masked_add: mask must be a constant node");
  if (va.rows() != vm.rows() || va.cols() != vm.cols()) shape_fail("masked_add", va, vm);
  Node n;
  n.op = Op::kMaskedAdd;
  n.a = a;
  n.b = mask;
  n.value = va + vm;
  return push(std::move(n));
}

NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias) {
  const Matrix& vx = at(x).value;
  const Matrix& vg = at(gain).value;
  const Matrix& vb = at(bias).value;
  if (vg.rows() != 1 || vg.cols() != vx.cols()) shape_fail("layer_norm gain", vx, vg);
  if (vb.rows() != 1 || vb.cols() != vx.cols()) shape_fail("layer_norm bias", vx, vb);
  const double d = static_cast<double>(vx.cols());
  Matrix y(vx.rows(), vx.cols());
  Matrix aux(vx.rows(), 2);  // per-row mean, inv std
  for (Eigen::Index r = 0; r < vx.rows(); ++r) {
    const double mean = vx.row(r).mean();
    const double var = (vx.row(r).array() - mean).square().sum() / d;
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    aux(r, 0) = mean;
    aux(r, 1) = inv;
    y.row(r) = (((vx.row(r).array() - mean) * inv) * vg.row(0).array()) + vb.row(0).array();
  }
  Node n;
  n.op = Op::kLayerNorm;
  n.a = x;
  n.b = gain;
  n.c = bias;
  n.value = std::move(y);
  n.aux = std::move(aux);
  return push(std::move(n));
}

NodeId Tape::rms_norm(NodeId x, NodeId gain) {
  const Matrix& vx = at(x).value;
  const Matrix& vg = at(gain).value;
  if (vg.rows() != 1 || vg.cols() != vx.cols()) shape_fail("rms_norm gain", vx, vg);
  const double d = static_cast<double>(vx.cols());
  Matrix y(vx.rows(), vx.cols());
  Matrix aux(vx.rows(), 1);  // per-row inv rms
  for (Eigen::Index r = 0; r < vx.rows(); ++r) {
    const double ms = vx.row(r).array().square().sum() / d;
    const double inv = 1.0 / std::sqrt(ms + kNormEps);
    aux(r, 0) = inv;
    y.row(r) = (vx.row(r).array() * inv) * vg.row(0).array();
  }
  Node n;
  n.op = Op::kRmsNorm;
  n.a = x;
  n.b = gain;
  n.value = std::move(y);
  n.aux = std::move(aux);
  return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
  Node n;
  n.op = Op::kRelu;
  n.a = a;
  n.value = at(a).value.cwiseMax(0.0);
  return push(std::move(n));
}

NodeId Tape::tanh(NodeId a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a;
  n.value = at(a).value.array().tanh();
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId a) {
  const Matrix& x = at(a).value;
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double v = x(r, c);
      if (v >= 0.0) {
        y(r, c) = 1.0 / (1.0 + std::exp(-v));
      } else {
        const double e = std::exp(v);
        y(r, c) = e / (1.0 + e);
      }
    }
  Node n;
  n.op = Op::kSigmoid;
  n.a = a;
  n.value = std::move(y);
  return push(std::move(n));
}

NodeId Tape::exp(NodeId a) {
  Node n;
  n.op = Op::kExp;
  n.a = a;
  n.value = at(a).value.array().exp();
  return push(std::move(n));
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const Eigen::Index rows = at(parts[0]).value.rows();
  Eigen::Index cols = 0;
  for (NodeId p : parts) {
    if (at(p).value.rows() != rows) shape_fail("concat_cols", at(parts[0]).value, at(p).value);
    cols += at(p).value.cols();
  }
  Matrix y(rows, cols);
  Eigen::Index off = 0;
  for (NodeId p : parts) {
    y.middleCols(off, at(p).value.cols()) = at(p).value;
    off += at(p).value.cols();
  }
  Node n;
  n.op = Op::kConcatCols;
  n.list = parts;
  n.value = std::move(y);
  return push(std::move(n));
}

NodeId Tape::slice(NodeId a, int row0, int rows, int col0, int cols) {
  const Matrix& v = at(a).value;
  if (row0 < 0 || col0 < 0 || rows < 1 || cols < 1 || row0 + rows > v.rows() ||
      col0 + cols > v.cols())
    throw std::invalid_argument("slice: block (" + std::to_string(row0) + "," +
                                std::to_string(rows) + "," + std::to_string(col0) + "," +
                                std::to_string(cols) + ") outside " + shape_str(v));
  Node n;
  n.op = Op::kSlice;
  n.a = a;
  n.ints = {row0, rows, col0, cols};
  n.value = v.block(row0, col0, rows, cols);
  return push(std::move(n));
}

NodeId Tape::rows_lookup(NodeId table, std::vector<int> indices) {
  const Matrix& v = at(table).value;
  if (indices.empty()) throw std::invalid_argument("rows_lookup: empty index list");
  Matrix y(static_cast<Eigen::Index>(indices.size()), v.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] < 0 || indices[k] >= v.rows())
      throw std::invalid_argument("rows_lookup: index " + std::to_string(indices[k]) +
                                  " outside table with " + std::to_string(v.rows()) + " rows");
    y.row(static_cast<Eigen::Index>(k)) = v.row(indices[k]);
  }
  Node n;
  n.op = Op::kRowsLookup;
  n.a = table;
  n.ints = std::move(indices);
  n.value = std::move(y);
  return push(std::move(n));
}

NodeId Tape::row_stack(const std::vector<std::pair<NodeId, int>>& entries) {
  if (entries.empty()) throw std::invalid_argument("row_stack: empty entry list");
  const Eigen::Index cols = at(entries[0].first).value.cols();
  Matrix y(static_cast<Eigen::Index>(entries.size()), cols);
  Node n;
  n.op = Op::kRowStack;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Matrix& src = at(entries[k].first).value;
    if (src.cols() != cols) shape_fail("row_stack", at(entries[0].first).value, src);
    if (entries[k].second < 0 || entries[k].second >= src.rows())
      throw std::invalid_argument("row_stack: row " + std::to_string(entries[k].second) +
                                  " outside " + shape_str(src));
    y.row(static_cast<Eigen::Index>(k)) = src.row(entries[k].second);
    n.list.push_back(entries[k].first);
    n.ints.push_back(entries[k].second);
  }
  n.value = std::move(y);
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
  Node n;
  n.op = Op::kSum;
  n.a = a;
  n.value = Matrix::Constant(1, 1, at(a).value.sum());
  return push(std::move(n));
}

NodeId Tape::sum_sq_err(NodeId a, NodeId b) {
  const Matrix& va = at(a).value;
  const Matrix& vb = at(b).value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) shape_fail("sum_sq_err", va, vb);
  Node n;
  n.op = Op::kSumSqErr;
  n.a = a;
  n.b = b;
  n.value = Matrix::Constant(1, 1, (va - vb).squaredNorm());
  return push(std::move(n));
}

const Matrix& Tape::value(NodeId id) const { return at(id).value; }

const Matrix& Tape::grad(NodeId id) const {
  if (!backward_done_) throw std::logic_error("tape: grad() before backward()");
  return at(id).grad;
}

void Tape::reset_grads() {
  for (auto& n : nodes_) n.grad.resize(0, 0);
  backward_done_ = false;
}

void Tape::backward(NodeId root) {
  if (backward_done_)
    throw std::logic_error("tape: second backward() without reset_grads()");
  const Node& r = at(root);
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw std::invalid_argument("tape: backward root must be 1x1, got " + shape_str(r.value));
  for (auto& n : nodes_) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  nodes_[static_cast<std::size_t>(root)].grad(0, 0) = 1.0;
  for (NodeId id = root; id >= 0; --id) backward_one(id);
  backward_done_ = true;
}

void Tape::backward_one(NodeId id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  const Matrix& g = n.grad;
  switch (n.op) {
    case Op::kLeaf:
    case Op::kConst:
      break;
    case Op::kMatMul:
      nodes_[n.a].grad.noalias() += g * nodes_[n.b].value.transpose();
      nodes_[n.b].grad.noalias() += nodes_[n.a].value.transpose() * g;
      break;
    case Op::kTranspose:
      nodes_[n.a].grad += g.transpose();
      break;
    case Op::kAdd:
      nodes_[n.a].grad += g;
      if (nodes_[n.b].value.rows() == 1 && g.rows() > 1)
        nodes_[n.b].grad += g.colwise().sum();
      else
        nodes_[n.b].grad += g;
      break;
    case Op::kSub:
      nodes_[n.a].grad += g;
      if (nodes_[n.b].value.rows() == 1 && g.rows() > 1)
        nodes_[n.b].grad -= g.colwise().sum();
      else
        nodes_[n.b].grad -= g;
      break;
    case Op::kScalarMul:
      nodes_[n.a].grad += n.scalar * g;
      break;
    case Op::kScale:
      nodes_[n.a].grad(0, 0) += g.cwiseProduct(nodes_[n.b].value).sum();
      nodes_[n.b].grad += nodes_[n.a].value(0, 0) * g;
      break;
    case Op::kHadamard:
      nodes_[n.a].grad += g.cwiseProduct(nodes_[n.b].value);
      nodes_[n.b].grad += g.cwiseProduct(nodes_[n.a].value);
      break;
    case Op::kRowSoftmax: {
      Matrix& ga = nodes_[n.a].grad;
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const double dot = g.row(r).cwiseProduct(n.value.row(r)).sum();
        ga.row(r) += n.value.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
      }
      break;
    }
    case Op::kMaskedAdd: {
      const Matrix& mask = nodes_[n.b].value;
      Matrix& ga = nodes_[n.a].grad;
      for (Eigen::Index r = 0; r < g.rows(); ++r)
        for (Eigen::Index c = 0; c < g.cols(); ++c)
          if (mask(r, c) != -kInf) ga(r, c) += g(r, c);
      break;
    }
    case Op::kLayerNorm: {
      const Matrix& x = nodes_[n.a].value;
      const Matrix& gain = nodes_[n.b].value;
      const double d = static_cast<double>(x.cols());
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = n.aux(r, 0);
        const double inv = n.aux(r, 1);
        Eigen::RowVectorXd xhat = (x.row(r).array() - mean).matrix() * inv;
        Eigen::RowVectorXd gh = g.row(r).cwiseProduct(gain.row(0));
        const double m_gh = gh.sum() / d;
        const double m_ghx = gh.cwiseProduct(xhat).sum() / d;
        nodes_[n.a].grad.row(r) +=
            inv * (gh.array() - m_gh - xhat.array() * m_ghx).matrix();
        nodes_[n.b].grad.row(0) += g.row(r).cwiseProduct(xhat);
        nodes_[n.c].grad.row(0) += g.row(r);
      }
      break;
    }
    case Op::kRmsNorm: {
      const Matrix& x = nodes_[n.a].value;
      const Matrix& gain = nodes_[n.b].value;
      const double d = static_cast<double>(x.cols());
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double inv = n.aux(r, 0);
        Eigen::RowVectorXd gh = g.row(r).cwiseProduct(gain.row(0));
        const double s = gh.cwiseProduct(x.row(r)).sum();
        nodes_[n.a].grad.row(r) +=
            inv * gh - (inv * inv * inv * s / d) * x.row(r);
        nodes_[n.b].grad.row(0) += g.row(r).cwiseProduct(x.row(r) * inv);
      }
      break;
    }
    case Op::kRelu: {
      const Matrix& x = nodes_[n.a].value;
      nodes_[n.a].grad += (x.array() > 0.0).select(g, Matrix::Zero(g.rows(), g.cols()));
      break;
    }
    case Op::kTanh:
      nodes_[n.a].grad.array() += g.array() * (1.0 - n.value.array().square());
      break;
    case Op::kSigmoid:
      nodes_[n.a].grad.array() += g.array() * n.value.array() * (1.0 - n.value.array());
      break;
    case Op::kExp:
      nodes_[n.a].grad.array() += g.array() * n.value.array();
      break;
    case Op::kConcatCols: {
      Eigen::Index off = 0;
      for (NodeId p : n.list) {
        const Eigen::Index w = nodes_[p].value.cols();
        nodes_[p].grad += g.middleCols(off, w);
        off += w;
      }
      break;
    }
    case Op::kSlice:
      nodes_[n.a].grad.block(n.ints[0], n.ints[2], n.ints[1], n.ints[3]) += g;
      break;
    case Op::kRowsLookup:
      for (std::size_t k = 0; k < n.ints.size(); ++k)
        nodes_[n.a].grad.row(n.ints[k]) += g.row(static_cast<Eigen::Index>(k));
      break;
    case Op::kRowStack:
      for (std::size_t k = 0; k < n.list.size(); ++k)
        nodes_[n.list[k]].grad.row(n.ints[k]) += g.row(static_cast<Eigen::Index>(k));
      break;
    case Op::kSum:
      nodes_[n.a].grad.array() += g(0, 0);
      break;
    case Op::kSumSqErr: {
      const Matrix diff = nodes_[n.a].value - nodes_[n.b].value;
      nodes_[n.a].grad += 2.0 * g(0, 0) * diff;
      nodes_[n.b].grad -= 2.0 * g(0, 0) * diff;
      break;
    }
  }
}

void Tape::dump(std::ostream& os) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    os << i << "\t" << op_name(n.op) << "\t" << n.value.rows() << "x" << n.value.cols();
    if (n.a >= 0) os << "\t<- " << n.a;
    if (n.b >= 0) os << " " << n.b;
    if (n.c >= 0) os << " " << n.c;
    if (!n.list.empty()) {
      os << "\t<- [";
      for (std::size_t k = 0; k < n.list.size(); ++k) os << (k ? " " : "") << n.list[k];
      os << "]";
    }
    os << "\n";
  }
}

double grad_check(const std::vector<Matrix>& params,
                  const std::function<NodeId(Tape&, const std::vector<NodeId>&)>& build,
                  double eps) {
  Tape tape;
  std::vector<NodeId> ids;
  ids.reserve(params.size());
  for (const auto& p : params) ids.push_back(tape.leaf(p));
  const NodeId loss = build(tape, ids);
  tape.backward(loss);
  std::vector<Matrix> g_ad;
  g_ad.reserve(params.size());
  for (NodeId id : ids) g_ad.push_back(tape.grad(id));

  auto eval = [&](const std::vector<Matrix>& pv) {
    Tape t;
    std::vector<NodeId> ii;
    ii.reserve(pv.size());
    for (const auto& p : pv) ii.push_back(t.leaf(p));
    return t.value(build(t, ii))(0, 0);
  };

  double worst = 0.0;
  std::vector<Matrix> probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (Eigen::Index r = 0; r < params[i].rows(); ++r)
      for (Eigen::Index c = 0; c < params[i].cols(); ++c) {
        const double orig = probe[i](r, c);
        probe[i](r, c) = orig + eps;
        const double up = eval(probe);
        probe[i](r, c) = orig - eps;
        const double down = eval(probe);
        probe[i](r, c) = orig;
        const double fd = (up - down) / (2.0 * eps);
        const double ad = g_ad[i](r, c);
        const double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
        worst = std::max(worst, rel);
      }
  }
  return worst;
}

}  // namespace dgt
