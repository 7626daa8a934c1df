#pragma once

// Randomized gradient-check cases, one per differentiable tape op. Shared by
// the unit tests (few instances) and the acceptance suite (many instances).
// Every case reduces to a scalar through a random constant weighting so that
// each output entry carries a distinct adjoint.

#include "dgt/tape.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dgt::testing {

inline Matrix rand_mat(Rng& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Entries bounded away from zero so finite differences never cross the relu kink.
inline Matrix rand_mat_nonzero(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      m(i, j) = sign * rng.uniform(0.1, 1.0);
    }
  return m;
}

struct OpCase {
  std::string name;
  // Worst grad_check error over one random instance drawn from rng.
  double (*run)(Rng& rng);
};

namespace detail {

// Weighted scalar reduction: sum(expr .* C) with C a fixed random constant.
inline NodeId weighted_sum(Tape& t, NodeId expr, const Matrix& c) {
  return t.sum(t.hadamard(expr, t.constant(c)));
}

inline double case_matmul(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 2, 3), rand_mat(rng, 3, 2)};
  Matrix c = rand_mat(rng, 2, 2);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.matmul(p[0], p[1]), c);
  });
}

inline double case_transpose(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 2, 4)};
  Matrix c = rand_mat(rng, 4, 2);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.transpose(p[0]), c);
  });
}

inline double case_add(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 2, 3), rand_mat(rng, 2, 3)};
  Matrix c = rand_mat(rng, 2, 3);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.add(p[0], p[1]), c);
  });
}

inline double case_add_broadcast(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 3, 4), rand_mat(rng, 1, 4)};
  Matrix c = rand_mat(rng, 3, 4);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.add(p[0], p[1]), c);
  });
}

inline double case_sub(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 2, 3), rand_mat(rng, 2, 3)};
  Matrix c = rand_mat(rng, 2, 3);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.sub(p[0], p[1]), c);
  });
}

inline double case_sub_broadcast(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 3, 4), rand_mat(rng, 1, 4)};
  Matrix c = rand_mat(rng, 3, 4);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.sub(p[0], p[1]), c);
  });
}

inline double case_scalar_mul(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 2, 3)};
  double k = rng.uniform(-2.0, 2.0);
  Matrix c = rand_mat(rng, 2, 3);
  return grad_check(params, [c, k](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.scalar_mul(p[0], k), c);
  });
}

inline double case_scale(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 1, 1), rand_mat(rng, 2, 3)};
  Matrix c = rand_mat(rng, 2, 3);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.scale(p[0], p[1]), c);
  });
}

inline double case_hadamard(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 3, 3), rand_mat(rng, 3, 3)};
  Matrix c = rand_mat(rng, 3, 3);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.hadamard(p[0], p[1]), c);
  });
}

inline double case_row_softmax(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 3, 4, -2.0, 2.0)};
  Matrix c = rand_mat(rng, 3, 4);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.row_softmax(p[0]), c);
  });
}

inline double case_masked_add(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 4, 4, -2.0, 2.0)};
  Matrix mask = Matrix::Zero(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) mask(i, j) = -std::numeric_limits<double>::infinity();
  Matrix c = rand_mat(rng, 4, 4);
  return grad_check(params, [c, mask](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.row_softmax(t.masked_add(p[0], t.constant(mask))), c);
  });
}

inline double case_layer_norm(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 3, 5), rand_mat(rng, 1, 5), rand_mat(rng, 1, 5)};
  Matrix c = rand_mat(rng, 3, 5);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.layer_norm(p[0], p[1], p[2]), c);
  });
}

inline double case_rms_norm(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 3, 5), rand_mat(rng, 1, 5)};
  Matrix c = rand_mat(rng, 3, 5);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.rms_norm(p[0], p[1]), c);
  });
}

inline double case_relu(Rng& rng) {
  std::vector<Matrix> params{rand_mat_nonzero(rng, 3, 4)};
  Matrix c = rand_mat(rng, 3, 4);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.relu(p[0]), c);
  });
}

inline double case_tanh(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 3, 4, -2.0, 2.0)};
  Matrix c = rand_mat(rng, 3, 4);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.tanh(p[0]), c);
  });
}

inline double case_sigmoid(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 3, 4, -2.0, 2.0)};
  Matrix c = rand_mat(rng, 3, 4);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.sigmoid(p[0]), c);
  });
}

inline double case_exp(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 3, 4, -2.0, 2.0)};
  Matrix c = rand_mat(rng, 3, 4);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.exp(p[0]), c);
  });
}

inline double case_concat_cols(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 2, 2), rand_mat(rng, 2, 3), rand_mat(rng, 2, 1)};
  Matrix c = rand_mat(rng, 2, 6);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.concat_cols({p[0], p[1], p[2]}), c);
  });
}

inline double case_slice(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 4, 5)};
  Matrix c = rand_mat(rng, 2, 3);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.slice(p[0], 1, 2, 2, 3), c);
  });
}

inline double case_rows_lookup(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 5, 3)};
  std::vector<int> idx{4, 0, 2, 2};  // duplicate exercises accumulation
  Matrix c = rand_mat(rng, 4, 3);
  return grad_check(params, [c, idx](Tape& t, const std::vector<NodeId>& p) {
    return weighted_sum(t, t.rows_lookup(p[0], idx), c);
  });
}

inline double case_row_stack(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 3, 4), rand_mat(rng, 2, 4)};
  Matrix c = rand_mat(rng, 5, 4);
  return grad_check(params, [c](Tape& t, const std::vector<NodeId>& p) {
    std::vector<std::pair<NodeId, int>> entries{
        {p[0], 1}, {p[1], 0}, {p[0], 2}, {p[1], 1}, {p[0], 0}};
    return weighted_sum(t, t.row_stack(entries), c);
  });
}

inline double case_sum(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 3, 4)};
  return grad_check(params,
                    [](Tape& t, const std::vector<NodeId>& p) { return t.sum(p[0]); });
}

inline double case_sum_sq_err(Rng& rng) {
  std::vector<Matrix> params{rand_mat(rng, 3, 4), rand_mat(rng, 3, 4)};
  return grad_check(params, [](Tape& t, const std::vector<NodeId>& p) {
    return t.sum_sq_err(p[0], p[1]);
  });
}

}  // namespace detail

inline const std::vector<OpCase>& op_cases() {
  static const std::vector<OpCase> cases{
      {"matmul", detail::case_matmul},
      {"transpose", detail::case_transpose},
      {"add", detail::case_add},
      {"add_broadcast", detail::case_add_broadcast},
      {"sub", detail::case_sub},
      {"sub_broadcast", detail::case_sub_broadcast},
      {"scalar_mul", detail::case_scalar_mul},
      {"scale", detail::case_scale},
      {"hadamard", detail::case_hadamard},
      {"row_softmax", detail::case_row_softmax},
      {"masked_add", detail::case_masked_add},
      {"layer_norm", detail::case_layer_norm},
      {"rms_norm", detail::case_rms_norm},
      {"relu", detail::case_relu},
      {"tanh", detail::case_tanh},
      {"sigmoid", detail::case_sigmoid},
      {"exp", detail::case_exp},
      {"concat_cols", detail::case_concat_cols},
      {"slice", detail::case_slice},
      {"rows_lookup", detail::case_rows_lookup},
      {"row_stack", detail::case_row_stack},
      {"sum", detail::case_sum},
      {"sum_sq_err", detail::case_sum_sq_err},
  };
  return cases;
}

// Worst error over `instances` random draws of one case.
inline double run_op_case(const OpCase& c, int instances, std::uint64_t seed) {
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    Rng rng(splitmix64(seed ^ (0x9e37ull * static_cast<std::uint64_t>(i + 1))));
    worst = std::max(worst, c.run(rng));
  }
  return worst;
}

}  // namespace dgt::testing
