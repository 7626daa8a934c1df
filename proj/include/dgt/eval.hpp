#pragma once

#include <string>
#include <vector>

#include "dgt/common.hpp"
#include "dgt/corr.hpp"
#include "dgt/panel.hpp"
#include "dgt/train.hpp"

namespace dgt {

// Pooled error metrics over equally shaped matrices, so vectors and
// (window x stock) grids share one definition. invalid_argument on shape
// mismatch or empty input. rmse >= mae always, equal iff all |errors| match.
double rmse(const Matrix& pred, const Matrix& actual);
double mae(const Matrix& pred, const Matrix& actual);

// One scored prediction: stock `stock` at day `target_date`, produced from
// the input window starting at `window_start`. Values are z-units unless the
// report was built denormalized.
struct EvalCell {
  int stock = 0;         // row into EvalReport::tickers
  int window_start = 0;  // day index of the window's first input
  int target_date = 0;   // day index being predicted
  double actual = 0.0;
  double predicted = 0.0;
  double error = 0.0;  // predicted - actual
};

// Backtest output: the per-cell error table, pooled aggregates, and the
// config tags needed to attribute the run.
struct EvalReport {
  Arch architecture = Arch::kDgt;
  bool use_spatial = false;
  Metric metric = Metric::kNone;
  Scope scope = Scope::kNone;
  bool denormalized = false;
  std::vector<std::string> tickers;
  std::vector<std::string> dates;  // panel dates; cells index into these
  std::vector<EvalCell> cells;     // window-major, stocks inner
  double rmse = 0.0;
  double mae = 0.0;
};

// Many-to-one backtest. For each window the checkpoint's model runs forward
// and the last prediction row is scored against the target day, one cell per
// stock. Aggregates pool every cell. Metrics are z-units by default;
// `denormalized` maps each cell back to currency units through the
// checkpoint's normalization stats before scoring.
// DataError: unnormalized panel, ticker or stats mismatch, no windows.
// ConfigError: windows not many-to-one, or a spatial checkpoint evaluated
// without the graph set it was trained against.
EvalReport backtest(const Checkpoint& ckpt, const PricePanel& panel, const GraphSet* graphs,
                    const WindowSet& windows, bool denormalized = false);

// One row per cell: ticker,window_start,target_date,actual,predicted,error.
// Day indices are written as their date strings.
void write_report_csv(const EvalReport& report, const std::string& path);

// Regularized incomplete beta I_x(a, b), the CDF of Beta(a, b) at x.
// Continued-fraction evaluation; requires a, b > 0 and x in [0, 1].
double regularized_incomplete_beta(double a, double b, double x);

// P(|T| >= |t|) for Student's t with df > 0 degrees of freedom.
double student_t_two_sided_p(double t, double df);

struct TwoSampleTest {
  double statistic = 0.0;  // t for welch_t_test, z for rank_sum_test
  double df = 0.0;         // Welch-Satterthwaite estimate; 0 for the rank test
  double p = 1.0;          // two-sided
};

// Unequal-variance two-sample t-test. Each side needs at least two values.
// Degenerate zero-variance inputs resolve to p = 1 on equal means and p = 0
// otherwise rather than dividing by zero.
TwoSampleTest welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Rank-sum location test under the normal approximation with tie-corrected
// variance and no continuity correction. Each side needs at least two
// values; an all-tied pool resolves to p = 1.
TwoSampleTest rank_sum_test(const std::vector<double>& a, const std::vector<double>& b);

// Error comparison between exactly two clusters of stocks.
struct ClusterComparison {
  int label_a = 0;  // smaller of the two labels
  int label_b = 0;
  int stocks_a = 0;
  int stocks_b = 0;
  int cells_a = 0;
  int cells_b = 0;
  double rmse_a = 0.0;
  double mae_a = 0.0;
  double rmse_b = 0.0;
  double mae_b = 0.0;
  double p_rmse = 1.0;  // significance of the squared-error difference
  double p_mae = 1.0;   // significance of the absolute-error difference
};

// Splits the report's cells by cluster label (labels align with
// report.tickers) and compares the two groups. RMSE/MAE pool each cluster's
// cells; the cluster cell sets partition the report, so the pooled totals
// recombine to the report aggregates. Significance comes from a two-sample
// location test on per-stock mean squared errors (p_rmse) and per-stock mean
// absolute errors (p_mae): Welch by default, rank-sum when rank_based.
// invalid_argument: label count mismatch, anything but exactly two distinct
// labels, a cluster with fewer than two stocks, or a stock with no cells.
ClusterComparison compare_clusters(const EvalReport& report, const std::vector<int>& labels,
                                   bool rank_based = false);

}  // namespace dgt
