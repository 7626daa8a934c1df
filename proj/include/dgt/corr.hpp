#pragma once

#include "dgt/panel.hpp"

#include <map>
#include <string>
#include <vector>

namespace dgt {

enum class Metric : std::uint8_t { kPearson, kSpearman, kKendall, kMutualInfo, kNone };
enum class Scope : std::uint8_t { kGlobal, kLocal, kDual, kNone };

const char* metric_name(Metric m);
const char* scope_name(Scope s);
Metric parse_metric(const std::string& s);
Scope parse_scope(const std::string& s);

struct CorrMatrix {
  Metric metric = Metric::kPearson;
  Scope scope_tag = Scope::kGlobal;
  IndexRange span;
  std::vector<std::string> tickers;  // row labels; may be empty for anonymous slices
  Matrix values;                     // N x N, symmetric, unit diagonal
};

struct DeltaMatrix {
  Matrix values;
  int t = -1;  // window index; -1 when the caller has no window context
};

// slice is N x W (stocks by days). tickers may be empty; they only label error
// messages and top-k output. All four enforce symmetry by computing the upper
// triangle once and mirroring it.
CorrMatrix pearson_matrix(const Matrix& slice, const std::vector<std::string>& tickers = {});
CorrMatrix spearman_matrix(const Matrix& slice, const std::vector<std::string>& tickers = {});
CorrMatrix kendall_matrix(const Matrix& slice, const std::vector<std::string>& tickers = {});
CorrMatrix mutual_info_matrix(const Matrix& slice, int bins = 16,
                              const std::vector<std::string>& tickers = {});

CorrMatrix correlation_matrix(Metric metric, const Matrix& slice,
                              const std::vector<std::string>& tickers = {}, int bins = 16);

// Average ranks (ties get the mean rank), 1-based. Exposed for the
// Spearman-vs-Pearson-of-ranks identity check.
std::vector<double> average_ranks(const double* values, int count);

// Tie-corrected tau-b via merge counting, O(W log W).
double kendall_tau_b(const double* x, const double* y, int count);

struct GraphSet {
  Scope scope = Scope::kGlobal;
  Metric metric = Metric::kPearson;
  int heads = 1;
  CorrMatrix global;                                 // present unless scope == local
  std::vector<CorrMatrix> locals;                    // one per distinct window span
  std::map<std::pair<int, int>, std::size_t> by_span;

  // Head-to-matrix assignment: global scope serves every head the train-span
  // matrix; local serves the window's own matrix; dual serves even heads the
  // global matrix and odd heads the local one.
  const Matrix& matrix_for(IndexRange window_span, int head) const;
};

// window_spans are the input-day ranges of every window that training or
// evaluation will request; only local/dual scopes read them.
GraphSet build_graph_set(const PricePanel& panel, Metric metric, Scope scope, int heads,
                         IndexRange global_span, const std::vector<IndexRange>& window_spans,
                         int bins = 16);

DeltaMatrix delta_graph(const CorrMatrix& a_t, const CorrMatrix& a_prev);

struct RankedTicker {
  std::string ticker;
  double value;
};

// k highest off-diagonal entries of the ticker's row, descending, ties broken
// by ticker name.
std::vector<RankedTicker> top_correlated(const CorrMatrix& matrix, const std::string& ticker,
                                         int k);

void save_graphs(const GraphSet& graphs, const std::string& path);
GraphSet load_graphs(const std::string& path);

}  // namespace dgt
