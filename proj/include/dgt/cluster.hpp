#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgt/common.hpp"
#include "dgt/panel.hpp"

namespace dgt {

// Per-stock feature rows, z-scored across stocks so no single feature
// dominates the Euclidean distances downstream.
struct FeatureMatrix {
  std::vector<std::string> tickers;        // row order
  std::vector<std::string> feature_names;  // column order
  Matrix values;                           // N x F, standardized per column
  Vector raw_mean;                         // per feature, before standardization
  Vector raw_stddev;
};

// Extracts mean daily simple return, the population standard deviation of
// daily returns, and beta against the equal-weight market return, computed
// over `span` of the raw panel, then z-scores each feature across stocks.
// DataError: normalized panel, span out of bounds or shorter than 30 days, a
// stock with zero return variance (constant prices), zero market variance,
// or a feature whose cross-stock spread vanishes (named in the message).
FeatureMatrix stock_features(const PricePanel& panel, IndexRange span);

struct Assignment {
  std::vector<int> labels;  // point -> cluster id in [0, k)
  Matrix centroids;         // k x F
  double inertia = 0.0;     // sum of squared distances to assigned centroids
  int k = 0;
  std::uint64_t seed = 0;
};

// K-means with k-means++ seeding, then Lloyd iterations until the labels
// stop changing or max_iters passes. Ties in the assignment step go to the
// lowest cluster index; a cluster emptied by an update is re-seeded at the
// point farthest from its current centroid rather than dropped. Inertia is
// checked to be non-increasing every iteration. Deterministic in
// (features, k, seed). invalid_argument: k < 2 or k > N.
Assignment kmeans(const FeatureMatrix& features, int k, std::uint64_t seed,
                  int max_iters = 300);

// Mean silhouette score over all points under Euclidean distance. Points in
// singleton clusters score 0, as does a point whose a and b both vanish.
// invalid_argument: k < 2, label count mismatch, or an empty cluster.
double silhouette(const FeatureMatrix& features, const Assignment& assignment);

struct InertiaPoint {
  int k = 0;
  double inertia = 0.0;
};

// The per-k seed used by inertia_curve, exposed so scans that also want
// silhouettes can reproduce the exact same kmeans runs.
std::uint64_t curve_seed(std::uint64_t seed, int k);

// One kmeans run per k in [k_range.begin, k_range.end), each seeded by
// curve_seed(seed, k). invalid_argument unless 2 <= begin < end <= N.
std::vector<InertiaPoint> inertia_curve(const FeatureMatrix& features, IndexRange k_range,
                                        std::uint64_t seed);

// First two principal components of the feature rows (N x 2, rows align with
// tickers). Components are ordered by explained variance; each one's sign is
// fixed by making its largest-magnitude loading positive.
// invalid_argument: fewer than 2 rows or columns.
Matrix pca2(const FeatureMatrix& features);

// ticker,cluster rows. DataError on an unwritable path.
void write_clusters_csv(const FeatureMatrix& features, const Assignment& assignment,
                        const std::string& path);

struct ScanRow {
  int k = 0;
  double silhouette = 0.0;
  double inertia = 0.0;
};

// k,silhouette,inertia rows.
void write_scan_csv(const std::vector<ScanRow>& rows, const std::string& path);

// ticker,pc1,pc2,cluster rows; projection is the pca2 output.
void write_scatter_csv(const FeatureMatrix& features, const Matrix& projection,
                       const Assignment& assignment, const std::string& path);

}  // namespace dgt
