#include "dgt/corr.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace dgt {

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::kPearson: return "pearson";
    case Metric::kSpearman: return "spearman";
    case Metric::kKendall: return "kendall";
    case Metric::kMutualInfo: return "mi";
    case Metric::kNone: return "none";
  }
  return "?";
}

const char* scope_name(Scope s) {
  switch (s) {
    case Scope::kGlobal: return "global";
    case Scope::kLocal: return "local";
    case Scope::kDual: return "dual";
    case Scope::kNone: return "none";
  }
  return "?";
}

Metric parse_metric(const std::string& s) {
  if (s == "pearson") return Metric::kPearson;
  if (s == "spearman") return Metric::kSpearman;
  if (s == "kendall") return Metric::kKendall;
  if (s == "mi") return Metric::kMutualInfo;
  if (s == "none") return Metric::kNone;
  throw ConfigError("unknown correlation metric '" + s + "' (pearson|spearman|kendall|mi)");
}

Scope parse_scope(const std::string& s) {
  if (s == "global") return Scope::kGlobal;
  if (s == "local") return Scope::kLocal;
  if (s == "dual") return Scope::kDual;
  if (s == "none") return Scope::kNone;
  throw ConfigError("unknown graph scope '" + s + "' (global|local|dual)");
}

namespace {

std::string row_label(const std::vector<std::string>& tickers, int i) {
  if (i < static_cast<int>(tickers.size())) return tickers[static_cast<std::size_t>(i)];
  return "row " + std::to_string(i);
}

void check_slice(const Matrix& slice, const std::vector<std::string>& tickers) {
  if (slice.rows() < 2) throw DataError("correlation: need at least 2 series");
  if (slice.cols() < 3)
    throw DataError("correlation: window of " + std::to_string(slice.cols()) +
                    " days is too short (need >= 3)");
  if (!tickers.empty() && static_cast<int>(tickers.size()) != slice.rows())
    throw std::invalid_argument("correlation: ticker list does not match slice rows");
}

// Upper-triangle pair loop, mirrored writes; deterministic regardless of the
// worker count because every (i, j) owns its two cells.
template <typename PairFn>
Matrix pairwise_symmetric(Eigen::Index n, PairFn&& fn) {
  Matrix out = Matrix::Zero(n, n);
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  parallel_for(pairs.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t p = lo; p < hi; ++p) {
      const auto [i, j] = pairs[p];
      const double v = fn(i, j);
      out(i, j) = v;
      out(j, i) = v;
    }
  });
  out.diagonal().setOnes();
  return out;
}

struct CenteredRows {
  Matrix centered;
  Vector norm;  // sqrt of centered sum of squares
};

CenteredRows center_rows(const Matrix& slice, const std::vector<std::string>& tickers,
                         const char* what) {
  CenteredRows c;
  c.centered = slice;
  c.norm.resize(slice.rows());
  for (Eigen::Index i = 0; i < slice.rows(); ++i) {
    // Exact check: the rounded mean of identical values can sit 1 ulp off, so
    // a norm-based test would let constant rows through with garbage norms.
    if ((slice.row(i).array() == slice(i, 0)).all())
      throw DataError(std::string(what) + ": constant series for ticker " +
                      row_label(tickers, static_cast<int>(i)));
    c.centered.row(i).array() -= slice.row(i).mean();
    c.norm(i) = c.centered.row(i).norm();
  }
  return c;
}

double clamp_unit(double v) { return std::min(1.0, std::max(-1.0, v)); }

Matrix pearson_values(const Matrix& slice, const std::vector<std::string>& tickers,
                      const char* what) {
  CenteredRows c = center_rows(slice, tickers, what);
  return pairwise_symmetric(slice.rows(), [&](int i, int j) {
    return clamp_unit(c.centered.row(i).dot(c.centered.row(j)) / (c.norm(i) * c.norm(j)));
  });
}

}  // namespace

std::vector<double> average_ranks(const double* values, int count) {
  std::vector<int> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [values](int a, int b) { return values[a] < values[b]; });
  std::vector<double> ranks(static_cast<std::size_t>(count));
  int i = 0;
  while (i < count) {
    int j = i;
    while (j + 1 < count && values[order[j + 1]] == values[order[i]]) ++j;
    const double mean_rank = 0.5 * (i + j) + 1.0;  // 1-based
    for (int k = i; k <= j; ++k) ranks[static_cast<std::size_t>(order[k])] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

namespace {

// Merge sort over y counting inversions; the discordant-pair count of Knight's
// tau algorithm.
long long count_inversions(std::vector<double>& y, std::vector<double>& tmp, std::size_t lo,
                           std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = (lo + hi) / 2;
  long long inv = count_inversions(y, tmp, lo, mid) + count_inversions(y, tmp, mid, hi);
  std::size_t a = lo, b = mid, k = lo;
  while (a < mid && b < hi) {
    if (y[b] < y[a]) {
      inv += static_cast<long long>(mid - a);
      tmp[k++] = y[b++];
    } else {
      tmp[k++] = y[a++];
    }
  }
  while (a < mid) tmp[k++] = y[a++];
  while (b < hi) tmp[k++] = y[b++];
  std::copy(tmp.begin() + static_cast<std::ptrdiff_t>(lo),
            tmp.begin() + static_cast<std::ptrdiff_t>(hi),
            y.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

long long tie_pair_count(const std::vector<double>& sorted) {
  long long total = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    const long long run = static_cast<long long>(j - i + 1);
    total += run * (run - 1) / 2;
    i = j + 1;
  }
  return total;
}

}  // namespace

double kendall_tau_b(const double* x, const double* y, int count) {
  const std::size_t w = static_cast<std::size_t>(count);
  std::vector<int> order(w);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });

  const long long n0 = static_cast<long long>(count) * (count - 1) / 2;

  // Tied-x pairs (n1) and joint-tie pairs (n3) from runs in the sorted order.
  long long n1 = 0, n3 = 0;
  {
    std::size_t i = 0;
    while (i < w) {
      std::size_t j = i;
      while (j + 1 < w && x[order[j + 1]] == x[order[i]]) ++j;
      const long long run = static_cast<long long>(j - i + 1);
      n1 += run * (run - 1) / 2;
      std::size_t a = i;
      while (a <= j) {
        std::size_t b = a;
        while (b + 1 <= j && y[order[b + 1]] == y[order[a]]) ++b;
        const long long jr = static_cast<long long>(b - a + 1);
        n3 += jr * (jr - 1) / 2;
        a = b + 1;
      }
      i = j + 1;
    }
  }

  std::vector<double> y_in_x_order(w), tmp(w);
  for (std::size_t i = 0; i < w; ++i) y_in_x_order[i] = y[order[i]];
  const long long discordant = count_inversions(y_in_x_order, tmp, 0, w);
  // y_in_x_order is sorted now; reuse it for the tied-y count.
  const long long n2 = tie_pair_count(y_in_x_order);

  const long long numerator = n0 - n1 - n2 + n3 - 2 * discordant;
  const double denom_sq =
      static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2);
  if (!(denom_sq > 0.0)) return std::nan("");  // all-tied series; caller names the ticker
  return static_cast<double>(numerator) / std::sqrt(denom_sq);
}

CorrMatrix pearson_matrix(const Matrix& slice, const std::vector<std::string>& tickers) {
  check_slice(slice, tickers);
  CorrMatrix m;
  m.metric = Metric::kPearson;
  m.span = {0, static_cast<int>(slice.cols())};
  m.tickers = tickers;
  m.values = pearson_values(slice, tickers, "pearson");
  return m;
}

CorrMatrix spearman_matrix(const Matrix& slice, const std::vector<std::string>& tickers) {
  check_slice(slice, tickers);
  Matrix ranked(slice.rows(), slice.cols());
  for (Eigen::Index i = 0; i < slice.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(slice.cols()));
    for (Eigen::Index c = 0; c < slice.cols(); ++c) row[static_cast<std::size_t>(c)] = slice(i, c);
    std::vector<double> ranks = average_ranks(row.data(), static_cast<int>(row.size()));
    for (Eigen::Index c = 0; c < slice.cols(); ++c) ranked(i, c) = ranks[static_cast<std::size_t>(c)];
  }
  CorrMatrix m;
  m.metric = Metric::kSpearman;
  m.span = {0, static_cast<int>(slice.cols())};
  m.tickers = tickers;
  m.values = pearson_values(ranked, tickers, "spearman");
  return m;
}

CorrMatrix kendall_matrix(const Matrix& slice, const std::vector<std::string>& tickers) {
  check_slice(slice, tickers);
  const Eigen::Index n = slice.rows();
  const int w = static_cast<int>(slice.cols());
  // Row-major copies so pair workers read contiguous series.
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(n),
                                        std::vector<double>(static_cast<std::size_t>(w)));
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < w; ++c) rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = slice(i, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    if (std::all_of(r.begin(), r.end(), [&](double v) { return v == r[0]; }))
      throw DataError("kendall: all values tied for ticker " +
                      row_label(tickers, static_cast<int>(i)));
  }
  CorrMatrix m;
  m.metric = Metric::kKendall;
  m.span = {0, w};
  m.tickers = tickers;
  m.values = pairwise_symmetric(n, [&](int i, int j) {
    const double v = kendall_tau_b(rows[static_cast<std::size_t>(i)].data(),
                                   rows[static_cast<std::size_t>(j)].data(), w);
    return clamp_unit(v);
  });
  return m;
}

CorrMatrix mutual_info_matrix(const Matrix& slice, int bins,
                              const std::vector<std::string>& tickers) {
  check_slice(slice, tickers);
  if (bins < 2) throw ConfigError("mutual information: need at least 2 bins");
  const Eigen::Index n = slice.rows();
  const int w = static_cast<int>(slice.cols());
  const int b = bins;

  // Bin index per observation depends only on its own series.
  std::vector<std::vector<int>> binned(static_cast<std::size_t>(n),
                                       std::vector<int>(static_cast<std::size_t>(w)));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lo = slice.row(i).minCoeff();
    const double hi = slice.row(i).maxCoeff();
    if (!(hi > lo))
      throw DataError("mutual information: constant series (zero-width bins) for ticker " +
                      row_label(tickers, static_cast<int>(i)));
    for (int c = 0; c < w; ++c) {
      const int idx = static_cast<int>((slice(i, c) - lo) / (hi - lo) * b);
      binned[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = std::min(idx, b - 1);
    }
  }

  const double log_b = std::log(static_cast<double>(b));
  CorrMatrix m;
  m.metric = Metric::kMutualInfo;
  m.span = {0, w};
  m.tickers = tickers;
  m.values = pairwise_symmetric(n, [&](int i, int j) {
    std::vector<double> joint(static_cast<std::size_t>(b * b), 0.0);
    std::vector<double> px(static_cast<std::size_t>(b), 0.0), py(static_cast<std::size_t>(b), 0.0);
    const auto& bi = binned[static_cast<std::size_t>(i)];
    const auto& bj = binned[static_cast<std::size_t>(j)];
    const double inv_w = 1.0 / w;
    for (int c = 0; c < w; ++c) {
      joint[static_cast<std::size_t>(bi[static_cast<std::size_t>(c)] * b +
                                     bj[static_cast<std::size_t>(c)])] += inv_w;
      px[static_cast<std::size_t>(bi[static_cast<std::size_t>(c)])] += inv_w;
      py[static_cast<std::size_t>(bj[static_cast<std::size_t>(c)])] += inv_w;
    }
    double mi = 0.0;
    for (int r = 0; r < b; ++r)
      for (int c = 0; c < b; ++c) {
        const double p = joint[static_cast<std::size_t>(r * b + c)];
        if (p > 0.0)
          mi += p * std::log(p / (px[static_cast<std::size_t>(r)] * py[static_cast<std::size_t>(c)]));
      }
    return std::min(1.0, std::max(0.0, mi / log_b));
  });
  return m;
}

CorrMatrix correlation_matrix(Metric metric, const Matrix& slice,
                              const std::vector<std::string>& tickers, int bins) {
  switch (metric) {
    case Metric::kPearson: return pearson_matrix(slice, tickers);
    case Metric::kSpearman: return spearman_matrix(slice, tickers);
    case Metric::kKendall: return kendall_matrix(slice, tickers);
    case Metric::kMutualInfo: return mutual_info_matrix(slice, bins, tickers);
    case Metric::kNone: break;
  }
  throw ConfigError("correlation_matrix: no estimator for metric 'none'");
}

const Matrix& GraphSet::matrix_for(IndexRange window_span, int head) const {
  if (head < 0 || head >= heads)
    throw std::invalid_argument("GraphSet: head " + std::to_string(head) + " out of range");
  const bool wants_global = scope == Scope::kGlobal || (scope == Scope::kDual && head % 2 == 0);
  if (wants_global) return global.values;
  auto it = by_span.find({window_span.begin, window_span.end});
  if (it == by_span.end())
    throw DataError("GraphSet: no local graph for window [" + std::to_string(window_span.begin) +
                    ", " + std::to_string(window_span.end) + ")");
  return locals[it->second].values;
}

GraphSet build_graph_set(const PricePanel& panel, Metric metric, Scope scope, int heads,
                         IndexRange global_span, const std::vector<IndexRange>& window_spans,
                         int bins) {
  if (!panel.normalized)
    throw DataError("build_graph_set: panel must be normalized first");
  if (scope == Scope::kDual && heads < 2)
    throw ConfigError("build_graph_set: dual scope needs at least 2 heads");
  if (scope == Scope::kNone || metric == Metric::kNone)
    throw ConfigError("build_graph_set: metric and scope must be concrete");

  GraphSet gs;
  gs.scope = scope;
  gs.metric = metric;
  gs.heads = heads;

  auto slice_matrix = [&](IndexRange span, Scope tag) {
    if (span.begin < 0 || span.end > panel.t() || span.size() < 3)
      throw DataError("build_graph_set: bad window span [" + std::to_string(span.begin) + ", " +
                      std::to_string(span.end) + ")");
    CorrMatrix m;
    try {
      m = correlation_matrix(metric, panel.prices.middleCols(span.begin, span.size()),
                             panel.tickers, bins);
    } catch (const DataError& e) {
      throw DataError("window [" + std::to_string(span.begin) + ", " +
                      std::to_string(span.end) + "): " + e.what());
    }
    m.span = span;
    m.scope_tag = tag;
    return m;
  };

  if (scope == Scope::kGlobal || scope == Scope::kDual)
    gs.global = slice_matrix(global_span, Scope::kGlobal);
  if (scope == Scope::kLocal || scope == Scope::kDual) {
    for (IndexRange span : window_spans) {
      const std::pair<int, int> key{span.begin, span.end};
      if (gs.by_span.count(key)) continue;
      gs.by_span[key] = gs.locals.size();
      gs.locals.push_back(slice_matrix(span, Scope::kLocal));
    }
    if (gs.locals.empty())
      throw ConfigError("build_graph_set: local scope requested with no window spans");
  }
  return gs;
}

DeltaMatrix delta_graph(const CorrMatrix& a_t, const CorrMatrix& a_prev) {
  if (a_t.metric != a_prev.metric)
    throw std::invalid_argument("delta_graph: metric mismatch (" +
                                std::string(metric_name(a_t.metric)) + " vs " +
                                metric_name(a_prev.metric) + ")");
  if (a_t.values.rows() != a_prev.values.rows() || a_t.values.cols() != a_prev.values.cols())
    throw std::invalid_argument("delta_graph: dimension mismatch");
  DeltaMatrix d;
  d.values = a_t.values - a_prev.values;
  return d;
}

std::vector<RankedTicker> top_correlated(const CorrMatrix& matrix, const std::string& ticker,
                                         int k) {
  const auto it = std::find(matrix.tickers.begin(), matrix.tickers.end(), ticker);
  if (it == matrix.tickers.end())
    throw ConfigError("top_correlated: unknown ticker '" + ticker + "'");
  const int i = static_cast<int>(it - matrix.tickers.begin());
  const int n = static_cast<int>(matrix.values.rows());
  if (k < 1 || k >= n)
    throw ConfigError("top_correlated: k must be in [1, " + std::to_string(n - 1) + "]");
  std::vector<RankedTicker> all;
  all.reserve(static_cast<std::size_t>(n - 1));
  for (int j = 0; j < n; ++j)
    if (j != i) all.push_back({matrix.tickers[static_cast<std::size_t>(j)], matrix.values(i, j)});
  std::sort(all.begin(), all.end(), [](const RankedTicker& a, const RankedTicker& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.ticker < b.ticker;
  });
  all.resize(static_cast<std::size_t>(k));
  return all;
}

namespace {
constexpr char kGraphMagic[4] = {'D', 'G', 'T', 'G'};
constexpr std::uint32_t kGraphVersion = 1;

void put_corr(std::ostream& os, const CorrMatrix& m) {
  put_u8(os, static_cast<std::uint8_t>(m.scope_tag));
  put_u32(os, static_cast<std::uint32_t>(m.span.begin));
  put_u32(os, static_cast<std::uint32_t>(m.span.end));
  put_matrix(os, m.values);
}

CorrMatrix get_corr(std::istream& is, Metric metric, std::size_t n) {
  CorrMatrix m;
  m.metric = metric;
  m.scope_tag = static_cast<Scope>(get_u8(is, "graph scope tag"));
  m.span.begin = static_cast<int>(get_u32(is, "graph span"));
  m.span.end = static_cast<int>(get_u32(is, "graph span"));
  m.values = get_matrix(is, n, n, "graph values");
  return m;
}
}  // namespace

void save_graphs(const GraphSet& graphs, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write graphs file: " + path);
  put_bytes(os, kGraphMagic, 4);
  put_u32(os, kGraphVersion);
  put_u8(os, static_cast<std::uint8_t>(graphs.metric));
  put_u8(os, static_cast<std::uint8_t>(graphs.scope));
  put_u32(os, static_cast<std::uint32_t>(graphs.heads));
  const std::uint32_t n = static_cast<std::uint32_t>(
      graphs.scope == Scope::kLocal ? graphs.locals.front().values.rows()
                                    : graphs.global.values.rows());
  put_u32(os, n);
  const bool has_global = graphs.scope == Scope::kGlobal || graphs.scope == Scope::kDual;
  put_u32(os, static_cast<std::uint32_t>(graphs.locals.size() + (has_global ? 1 : 0)));
  if (has_global) put_corr(os, graphs.global);
  for (const auto& m : graphs.locals) put_corr(os, m);
  if (!os) throw DataError("write failed: " + path);
}

GraphSet load_graphs(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open graphs file: " + path);
  char magic[4];
  get_bytes(is, magic, 4, "graphs magic");
  if (std::memcmp(magic, kGraphMagic, 4) != 0)
    throw DataError(path + ": not a graphs file (bad magic)");
  const std::uint32_t version = get_u32(is, "graphs version");
  if (version != kGraphVersion)
    throw DataError(path + ": unsupported graphs version " + std::to_string(version));
  GraphSet gs;
  gs.metric = static_cast<Metric>(get_u8(is, "graphs metric"));
  gs.scope = static_cast<Scope>(get_u8(is, "graphs scope"));
  gs.heads = static_cast<int>(get_u32(is, "graphs head count"));
  const std::uint32_t n = get_u32(is, "graphs N");
  const std::uint32_t count = get_u32(is, "graphs matrix count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CorrMatrix m = get_corr(is, gs.metric, n);
    if (m.scope_tag == Scope::kGlobal) {
      gs.global = std::move(m);
    } else {
      gs.by_span[{m.span.begin, m.span.end}] = gs.locals.size();
      gs.locals.push_back(std::move(m));
    }
  }
  return gs;
}

}  // namespace dgt
