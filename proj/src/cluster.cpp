#include "dgt/cluster.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

namespace dgt {

FeatureMatrix stock_features(const PricePanel& panel, IndexRange span) {
  if (panel.normalized) {
    throw DataError("stock_features: expected raw prices");
  }
  if (span.begin < 0 || span.end > panel.t() || span.begin >= span.end) {
    throw DataError("stock_features: span out of bounds");
  }
  if (span.size() < 30) {
    throw DataError("stock_features: span of " + std::to_string(span.size()) +
                    " days is shorter than 30");
  }

  const int n = panel.n();
  const int days = span.size() - 1;  // returns consume one day
  Matrix returns(n, days);
  for (int s = 0; s < n; ++s) {
    for (int t = 0; t < days; ++t) {
      const double prev = panel.prices(s, span.begin + t);
      const double cur = panel.prices(s, span.begin + t + 1);
      if (prev == 0.0) {
        throw DataError("stock_features: zero price for " + panel.tickers[s]);
      }
      returns(s, t) = cur / prev - 1.0;
    }
  }

  // Equal-weight market return per day; beta is covariance against it.
  const Vector market = returns.colwise().mean().transpose();
  const double mkt_mean = market.mean();
  const Vector mkt_centered = market.array() - mkt_mean;
  const double mkt_var = mkt_centered.squaredNorm() / days;
  if (mkt_var == 0.0) {
    throw DataError("stock_features: market return has zero variance");
  }

  FeatureMatrix out;
  out.tickers = panel.tickers;
  out.feature_names = {"mean_return", "return_vol", "beta"};
  out.values.resize(n, 3);
  for (int s = 0; s < n; ++s) {
    const double mean_r = returns.row(s).mean();
    const Vector centered = returns.row(s).transpose().array() - mean_r;
    const double var = centered.squaredNorm() / days;
    if (var == 0.0) {
      throw DataError("stock_features: constant price series for " + panel.tickers[s]);
    }
    out.values(s, 0) = mean_r;
    out.values(s, 1) = std::sqrt(var);
    out.values(s, 2) = centered.dot(mkt_centered) / days / mkt_var;
  }

  out.raw_mean = out.values.colwise().mean().transpose();
  out.raw_stddev.resize(3);
  for (int f = 0; f < 3; ++f) {
    const double var =
        (out.values.col(f).array() - out.raw_mean(f)).square().sum() / n;
    out.raw_stddev(f) = std::sqrt(var);
    if (out.raw_stddev(f) < 1e-12) {
      throw DataError("stock_features: feature " + out.feature_names[f] +
                      " has no cross-stock spread");
    }
    out.values.col(f) = (out.values.col(f).array() - out.raw_mean(f)) / out.raw_stddev(f);
  }
  return out;
}

namespace {

// Squared Euclidean distance from every row of x to the given centroid row.
Vector sq_dist_to(const Matrix& x, const Matrix& centroids, int c) {
  return (x.rowwise() - centroids.row(c)).rowwise().squaredNorm();
}

}  // namespace

Assignment kmeans(const FeatureMatrix& features, int k, std::uint64_t seed, int max_iters) {
  const Matrix& x = features.values;
  const int n = static_cast<int>(x.rows());
  const int f = static_cast<int>(x.cols());
  if (k < 2) {
    throw std::invalid_argument("kmeans: k must be at least 2");
  }
  if (k > n) {
    throw std::invalid_argument("kmeans: more clusters than points");
  }
  if (!x.allFinite()) {
    throw std::invalid_argument("kmeans: features must be finite");
  }

  Assignment out;
  out.k = k;
  out.seed = seed;
  out.centroids.resize(k, f);

  // k-means++: first centroid uniform, the rest weighted by squared distance
  // to the nearest centroid chosen so far.
  Rng rng(seed);
  out.centroids.row(0) = x.row(rng.below(n));
  Vector best_sq = sq_dist_to(x, out.centroids, 0);
  for (int c = 1; c < k; ++c) {
    const double total = best_sq.sum();
    int pick;
    if (total == 0.0) {
      // Every point already sits on a centroid; any choice is equivalent.
      pick = rng.below(n);
    } else {
      double u = rng.uniform() * total;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        u -= best_sq(i);
        if (u <= 0.0) {
          pick = i;
          break;
        }
      }
    }
    out.centroids.row(c) = x.row(pick);
    best_sq = best_sq.cwiseMin(sq_dist_to(x, out.centroids, c));
  }

  std::vector<int> labels(n, -1);
  Vector dist(n);
  double prev_inertia = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    // Assignment step; ties go to the lowest cluster index.
    std::vector<int> next(n, 0);
    Matrix sq(n, k);
    for (int c = 0; c < k; ++c) sq.col(c) = sq_dist_to(x, out.centroids, c);
    for (int i = 0; i < n; ++i) {
      int best = 0;
      for (int c = 1; c < k; ++c) {
        if (sq(i, c) < sq(i, best)) best = c;
      }
      next[i] = best;
      dist(i) = sq(i, best);
    }

    // Re-seed any emptied cluster at the point farthest from its centroid.
    // Points that are their cluster's last member stay put, so the fix never
    // empties another cluster; with k <= n a donor always exists.
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) ++counts[next[i]];
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      int far = -1;
      for (int i = 0; i < n; ++i) {
        if (counts[next[i]] <= 1) continue;
        if (far == -1 || dist(i) > dist(far)) far = i;
      }
      --counts[next[far]];
      next[far] = c;
      ++counts[c];
      out.centroids.row(c) = x.row(far);
      dist(far) = 0.0;
    }

    // Update step.
    Matrix sums = Matrix::Zero(k, f);
    for (int i = 0; i < n; ++i) sums.row(next[i]) += x.row(i);
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) out.centroids.row(c) = sums.row(c) / counts[c];
    }

    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      inertia += (x.row(i) - out.centroids.row(next[i])).squaredNorm();
    }
    if (inertia > prev_inertia * (1.0 + 1e-12) + 1e-15) {
      throw std::logic_error("kmeans: inertia increased across an iteration");
    }
    prev_inertia = inertia;
    out.inertia = inertia;

    if (next == labels) break;
    labels = std::move(next);
  }
  out.labels = std::move(labels);
  return out;
}

double silhouette(const FeatureMatrix& features, const Assignment& assignment) {
  const Matrix& x = features.values;
  const int n = static_cast<int>(x.rows());
  const int k = assignment.k;
  if (k < 2) {
    throw std::invalid_argument("silhouette: need at least 2 clusters");
  }
  if (static_cast<int>(assignment.labels.size()) != n) {
    throw std::invalid_argument("silhouette: label count does not match the points");
  }
  std::vector<int> counts(k, 0);
  for (int label : assignment.labels) {
    if (label < 0 || label >= k) {
      throw std::invalid_argument("silhouette: label out of range");
    }
    ++counts[label];
  }
  for (int c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      throw std::invalid_argument("silhouette: empty cluster " + std::to_string(c));
    }
  }

  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const int own = assignment.labels[i];
    if (counts[own] == 1) continue;  // singleton scores 0

    // Mean distance from i to every cluster.
    std::vector<double> mean_dist(k, 0.0);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      mean_dist[assignment.labels[j]] += (x.row(i) - x.row(j)).norm();
    }
    for (int c = 0; c < k; ++c) {
      const int denom = c == own ? counts[c] - 1 : counts[c];
      mean_dist[c] /= denom;
    }

    const double a = mean_dist[own];
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c != own) b = std::min(b, mean_dist[c]);
    }
    const double denom = std::max(a, b);
    total += denom == 0.0 ? 0.0 : (b - a) / denom;
  }
  return total / n;
}

std::uint64_t curve_seed(std::uint64_t seed, int k) {
  return splitmix64(seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(k));
}

std::vector<InertiaPoint> inertia_curve(const FeatureMatrix& features, IndexRange k_range,
                                        std::uint64_t seed) {
  const int n = static_cast<int>(features.values.rows());
  if (k_range.begin < 2 || k_range.begin >= k_range.end || k_range.end > n) {
    throw std::invalid_argument("inertia_curve: k range must satisfy 2 <= begin < end <= N");
  }
  std::vector<InertiaPoint> out;
  out.reserve(static_cast<std::size_t>(k_range.size()));
  for (int k = k_range.begin; k < k_range.end; ++k) {
    out.push_back({k, kmeans(features, k, curve_seed(seed, k)).inertia});
  }
  return out;
}

Matrix pca2(const FeatureMatrix& features) {
  const Matrix& x = features.values;
  const int n = static_cast<int>(x.rows());
  const int f = static_cast<int>(x.cols());
  if (n < 2 || f < 2) {
    throw std::invalid_argument("pca2: need at least 2 rows and 2 columns");
  }
  const Matrix centered = x.rowwise() - x.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("pca2: eigendecomposition failed");
  }

  // Eigenvalues come back ascending; take the top two and pin each sign by
  // making the largest-magnitude loading positive.
  Matrix proj(n, 2);
  for (int out_col = 0; out_col < 2; ++out_col) {
    Vector v = solver.eigenvectors().col(f - 1 - out_col);
    int arg = 0;
    for (int i = 1; i < f; ++i) {
      if (std::abs(v(i)) > std::abs(v(arg))) arg = i;
    }
    if (v(arg) < 0.0) v = -v;
    proj.col(out_col) = centered * v;
  }
  return proj;
}

void write_clusters_csv(const FeatureMatrix& features, const Assignment& assignment,
                        const std::string& path) {
  if (features.tickers.size() != assignment.labels.size()) {
    throw std::invalid_argument("write_clusters_csv: label count does not match tickers");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw DataError("write_clusters_csv: cannot open " + path);
  }
  out << "ticker,cluster\n";
  for (std::size_t i = 0; i < features.tickers.size(); ++i) {
    out << features.tickers[i] << ',' << assignment.labels[i] << '\n';
  }
}

void write_scan_csv(const std::vector<ScanRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw DataError("write_scan_csv: cannot open " + path);
  }
  out << "k,silhouette,inertia\n";
  for (const ScanRow& r : rows) {
    out << r.k << ',' << fmt_double(r.silhouette) << ',' << fmt_double(r.inertia) << '\n';
  }
}

void write_scatter_csv(const FeatureMatrix& features, const Matrix& projection,
                       const Assignment& assignment, const std::string& path) {
  const std::size_t n = features.tickers.size();
  if (static_cast<std::size_t>(projection.rows()) != n || projection.cols() != 2 ||
      assignment.labels.size() != n) {
    throw std::invalid_argument("write_scatter_csv: rows do not line up");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw DataError("write_scatter_csv: cannot open " + path);
  }
  out << "ticker,pc1,pc2,cluster\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int r = static_cast<int>(i);
    out << features.tickers[i] << ',' << fmt_double(projection(r, 0)) << ','
        << fmt_double(projection(r, 1)) << ',' << assignment.labels[i] << '\n';
  }
}

}  // namespace dgt
