#include "dgt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dgt/model.hpp"
#include "dgt/tape.hpp"

namespace dgt {

namespace {

void check_pair(const Matrix& pred, const Matrix& actual, const char* what) {
  if (pred.rows() != actual.rows() || pred.cols() != actual.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
  if (pred.size() == 0) {
    throw std::invalid_argument(std::string(what) + ": empty input");
  }
}

}  // namespace

double rmse(const Matrix& pred, const Matrix& actual) {
  check_pair(pred, actual, "rmse");
  return std::sqrt((pred - actual).squaredNorm() / static_cast<double>(pred.size()));
}

double mae(const Matrix& pred, const Matrix& actual) {
  check_pair(pred, actual, "mae");
  return (pred - actual).cwiseAbs().sum() / static_cast<double>(pred.size());
}

namespace {

// Last prediction row for one window, as plain values.
Vector predict_last_row(const Checkpoint& ckpt, const PricePanel& panel, const Window& w,
                        const GraphSet* graphs) {
  Tape t;
  const Matrix win = panel.prices.middleCols(w.start, w.len);
  NodeId preds;
  if (ckpt.config.architecture == Arch::kDgt) {
    auto nodes = load_params(t, ckpt.dgt_params());
    preds = dgt_forward(t, nodes, win, graphs, w.span(), ckpt.config.use_spatial);
  } else {
    auto nodes = load_params(t, ckpt.gru_params());
    preds = gru_forward(t, nodes, win);
  }
  return t.value(preds).row(w.len - 1).transpose();
}

}  // namespace

EvalReport backtest(const Checkpoint& ckpt, const PricePanel& panel, const GraphSet* graphs,
                    const WindowSet& windows, bool denormalized) {
  if (!panel.normalized) {
    throw DataError("backtest: panel must be normalized");
  }
  if (ckpt.tickers != panel.tickers) {
    throw DataError("backtest: checkpoint tickers do not match the panel");
  }
  if (ckpt.stats.mean.size() != panel.n()) {
    throw DataError("backtest: checkpoint stats do not match the panel");
  }
  if (windows.mode != Mode::kManyToOne) {
    throw ConfigError("backtest: expected many-to-one windows");
  }
  if (windows.windows.empty()) {
    throw DataError("backtest: no windows to evaluate");
  }
  if (ckpt.config.use_spatial) {
    if (graphs == nullptr) {
      throw ConfigError("backtest: spatial checkpoint needs its correlation graphs");
    }
    if (graphs->metric != ckpt.config.metric || graphs->scope != ckpt.config.scope) {
      throw ConfigError("backtest: graph set does not match the checkpoint config");
    }
  }

  EvalReport rep;
  rep.architecture = ckpt.config.architecture;
  rep.use_spatial = ckpt.config.use_spatial;
  rep.metric = ckpt.config.metric;
  rep.scope = ckpt.config.scope;
  rep.denormalized = denormalized;
  rep.tickers = panel.tickers;
  rep.dates = panel.dates;
  rep.cells.reserve(windows.windows.size() * static_cast<std::size_t>(panel.n()));

  const GraphSet* g = ckpt.config.use_spatial ? graphs : nullptr;
  for (const Window& w : windows.windows) {
    const Vector last = predict_last_row(ckpt, panel, w, g);
    const int target = w.targets.front();
    for (int s = 0; s < panel.n(); ++s) {
      EvalCell cell;
      cell.stock = s;
      cell.window_start = w.start;
      cell.target_date = target;
      cell.predicted = last(s);
      cell.actual = panel.prices(s, target);
      if (denormalized) {
        cell.predicted = denormalize(ckpt.stats, s, cell.predicted);
        cell.actual = denormalize(ckpt.stats, s, cell.actual);
      }
      cell.error = cell.predicted - cell.actual;
      rep.cells.push_back(cell);
    }
  }

  double sse = 0.0;
  double sae = 0.0;
  for (const EvalCell& c : rep.cells) {
    sse += c.error * c.error;
    sae += std::abs(c.error);
  }
  const double cells = static_cast<double>(rep.cells.size());
  rep.rmse = std::sqrt(sse / cells);
  rep.mae = sae / cells;
  return rep;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw DataError("write_report_csv: cannot open " + path);
  }
  out << "ticker,window_start,target_date,actual,predicted,error\n";
  for (const EvalCell& c : report.cells) {
    out << report.tickers.at(static_cast<std::size_t>(c.stock)) << ','
        << report.dates.at(static_cast<std::size_t>(c.window_start)) << ','
        << report.dates.at(static_cast<std::size_t>(c.target_date)) << ','
        << fmt_double(c.actual) << ',' << fmt_double(c.predicted) << ','
        << fmt_double(c.error) << '\n';
  }
}

namespace {

// Continued fraction for I_x(a, b) via the modified Lentz scheme. Converges
// quickly when x < (a + 1) / (a + b + 2); the caller flips to the symmetric
// form otherwise.
double beta_cf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-15;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("regularized_incomplete_beta: no convergence");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::invalid_argument("regularized_incomplete_beta: a and b must be positive");
  }
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::invalid_argument("regularized_incomplete_beta: x must lie in [0, 1]");
  }
  if (x == 0.0 || x == 1.0) return x;
  if (x > (a + 1.0) / (a + b + 2.0)) {
    return 1.0 - regularized_incomplete_beta(b, a, 1.0 - x);
  }
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  return std::exp(ln_front) * beta_cf(a, b, x) / a;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) {
    throw std::invalid_argument("student_t_two_sided_p: df must be positive");
  }
  if (std::isinf(t)) return 0.0;
  return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Unbiased sample variance (n - 1 denominator).
double sample_var(const std::vector<double>& v, double mean) {
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(v.size() - 1);
}

void check_samples(const std::vector<double>& a, const std::vector<double>& b,
                   const char* what) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument(std::string(what) + ": each sample needs at least 2 values");
  }
}

}  // namespace

TwoSampleTest welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  check_samples(a, b, "welch_t_test");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  const double sa = sample_var(a, ma) / na;
  const double sb = sample_var(b, mb) / nb;

  TwoSampleTest out;
  out.df = na + nb - 2.0;
  if (sa + sb == 0.0) {
    // Both samples constant: the location difference is exact.
    out.statistic = ma == mb ? 0.0
                             : std::copysign(std::numeric_limits<double>::infinity(), ma - mb);
    out.p = ma == mb ? 1.0 : 0.0;
    return out;
  }
  out.statistic = (ma - mb) / std::sqrt(sa + sb);
  out.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  out.p = student_t_two_sided_p(out.statistic, out.df);
  return out;
}

TwoSampleTest rank_sum_test(const std::vector<double>& a, const std::vector<double>& b) {
  check_samples(a, b, "rank_sum_test");
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::vector<double> ranks = average_ranks(pooled.data(), static_cast<int>(pooled.size()));

  double ra = 0.0;
  for (std::size_t i = 0; i < na; ++i) ra += ranks[i];
  const double dna = static_cast<double>(na);
  const double dnb = static_cast<double>(nb);
  const double n = dna + dnb;
  const double u = ra - dna * (dna + 1.0) / 2.0;

  // Tie correction: sum t^3 - t over tie groups of the pooled values.
  std::vector<double> sorted(pooled);
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }

  TwoSampleTest out;
  out.df = 0.0;
  const double var_u = dna * dnb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (var_u <= 0.0) {
    // Every pooled value tied: no evidence of a location difference.
    out.statistic = 0.0;
    out.p = 1.0;
    return out;
  }
  out.statistic = (u - dna * dnb / 2.0) / std::sqrt(var_u);
  out.p = std::erfc(std::abs(out.statistic) / std::sqrt(2.0));
  return out;
}

ClusterComparison compare_clusters(const EvalReport& report, const std::vector<int>& labels,
                                   bool rank_based) {
  const std::size_t n = report.tickers.size();
  if (labels.size() != n) {
    throw std::invalid_argument("compare_clusters: one label per stock required");
  }
  std::vector<int> distinct(labels);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() != 2) {
    throw std::invalid_argument("compare_clusters: exactly two distinct labels required");
  }

  ClusterComparison out;
  out.label_a = distinct[0];
  out.label_b = distinct[1];

  std::vector<double> stock_sse(n, 0.0);
  std::vector<double> stock_sae(n, 0.0);
  std::vector<int> stock_cells(n, 0);
  double sse[2] = {0.0, 0.0};
  double sae[2] = {0.0, 0.0};
  int cells[2] = {0, 0};
  for (const EvalCell& c : report.cells) {
    const std::size_t s = static_cast<std::size_t>(c.stock);
    if (s >= n) {
      throw std::invalid_argument("compare_clusters: cell stock out of range");
    }
    const int side = labels[s] == out.label_a ? 0 : 1;
    stock_sse[s] += c.error * c.error;
    stock_sae[s] += std::abs(c.error);
    ++stock_cells[s];
    sse[side] += c.error * c.error;
    sae[side] += std::abs(c.error);
    ++cells[side];
  }

  // Per-stock error summaries feed the significance tests.
  std::vector<double> mse_by_side[2];
  std::vector<double> mad_by_side[2];
  for (std::size_t s = 0; s < n; ++s) {
    if (stock_cells[s] == 0) {
      throw std::invalid_argument("compare_clusters: stock without cells: " +
                                  report.tickers[s]);
    }
    const int side = labels[s] == out.label_a ? 0 : 1;
    mse_by_side[side].push_back(stock_sse[s] / stock_cells[s]);
    mad_by_side[side].push_back(stock_sae[s] / stock_cells[s]);
  }
  out.stocks_a = static_cast<int>(mse_by_side[0].size());
  out.stocks_b = static_cast<int>(mse_by_side[1].size());
  if (out.stocks_a < 2 || out.stocks_b < 2) {
    throw std::invalid_argument("compare_clusters: each cluster needs at least two stocks");
  }

  out.cells_a = cells[0];
  out.cells_b = cells[1];
  out.rmse_a = std::sqrt(sse[0] / cells[0]);
  out.mae_a = sae[0] / cells[0];
  out.rmse_b = std::sqrt(sse[1] / cells[1]);
  out.mae_b = sae[1] / cells[1];

  auto run = rank_based ? rank_sum_test : welch_t_test;
  out.p_rmse = run(mse_by_side[0], mse_by_side[1]).p;
  out.p_mae = run(mad_by_side[0], mad_by_side[1]).p;
  return out;
}

}  // namespace dgt
