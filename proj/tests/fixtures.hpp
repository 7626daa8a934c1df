#pragma once

// Synthetic panels with planted structure, shared by the training and
// evaluation tests and the acceptance suite.

#include "dgt/panel.hpp"

#include <cstdio>
#include <utility>

namespace dgt::testing {

inline std::vector<std::string> seq_dates(int days) {
  std::vector<std::string> dates;
  dates.reserve(static_cast<std::size_t>(days));
  char buf[16];
  for (int t = 0; t < days; ++t) {
    std::snprintf(buf, sizeof buf, "d%05d", t);
    dates.emplace_back(buf);
  }
  return dates;
}

// Stock 0 walks randomly; every other stock echoes the leader's previous-day
// move plus a little noise. Next-day moves are nearly unpredictable from a
// single series but well predicted from the leader's latest step, so the
// cross-section carries real signal.
inline PricePanel leader_follower_panel(int n, int days, std::uint64_t seed,
                                        double noise = 0.05, int block_len = 64) {
  Rng rng(seed);
  PricePanel p;
  for (int s = 0; s < n; ++s) p.tickers.push_back("S" + std::to_string(s));
  p.dates = seq_dates(days);
  p.prices.resize(n, days);
  for (int s = 0; s < n; ++s) p.prices(s, 0) = 100.0 + 5.0 * s;
  double prev_step = 0.0;
  for (int t = 1; t < days; ++t) {
    const double step = rng.normal(0.0, 1.0);
    p.prices(0, t) = p.prices(0, t - 1) + step;
    for (int s = 1; s < n; ++s)
      p.prices(s, t) = p.prices(s, t - 1) + 0.9 * prev_step + noise * rng.normal(0.0, 1.0);
    prev_step = step;
  }
  p.block_len = block_len;
  return p;
}

// Smooth deterministic mixture of phase-shifted sinusoids; trivially
// memorizable, for overfitting checks.
inline PricePanel sinusoid_panel(int n, int days, int block_len = 64) {
  PricePanel p;
  for (int s = 0; s < n; ++s) p.tickers.push_back("S" + std::to_string(s));
  p.dates = seq_dates(days);
  p.prices.resize(n, days);
  for (int s = 0; s < n; ++s)
    for (int t = 0; t < days; ++t)
      p.prices(s, t) = 100.0 + static_cast<double>(s) +
                       10.0 * std::sin(2.0 * 3.141592653589793 * (t + 7.0 * s) / 25.0);
  p.block_len = block_len;
  return p;
}

// Two Gaussian blobs in f dimensions: rows [0, n_a) scatter around the
// origin, rows [n_a, n_a + n_b) around (separation, 0, ...). Row order is the
// membership oracle.
inline Matrix two_blobs(int n_a, int n_b, int f, double separation, double spread,
                        std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n_a + n_b, f);
  for (int i = 0; i < n_a + n_b; ++i) {
    for (int j = 0; j < f; ++j) m(i, j) = rng.normal(0.0, spread);
    if (i >= n_a) m(i, 0) += separation;
  }
  return m;
}

struct Prepared {
  PricePanel panel;  // normalized
  NormStats stats;
  SplitSpec split;
};

// Partition + split + z-score with the panel's own ingest settings.
inline Prepared prepare(PricePanel raw) {
  const BlockPartition part = partition_blocks(raw, raw.block_len);
  const SplitSpec split = split_blocks(part, raw.ratios);
  const NormStats stats = zscore_normalize(raw, split.train_days);
  return {std::move(raw), stats, split};
}

}  // namespace dgt::testing
