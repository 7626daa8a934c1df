#pragma once

#include "dgt/common.hpp"

#include <array>
#include <string>
#include <vector>

namespace dgt {

// Half-open [begin, end) range of day indices (or block indices, by context).
struct IndexRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
  bool contains(int i) const { return i >= begin && i < end; }
};

struct PricePanel {
  std::vector<std::string> tickers;  // length N, row order
  std::vector<std::string> dates;    // length T, ascending ISO-8601
  Matrix prices;                     // N x T; currency units, or z-units once normalized
  bool normalized = false;
  // Partition settings chosen at ingest; downstream stages re-derive the
  // partition, split and train-span stats from these instead of persisting
  // anything derivable.
  int block_len = 64;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};

  int n() const { return static_cast<int>(tickers.size()); }
  int t() const { return static_cast<int>(dates.size()); }
  int ticker_index(const std::string& name) const;
};

struct CsvLoad {
  PricePanel panel;
  std::vector<std::string> dropped_tickers;  // incomplete history, in header order
};

struct NormStats {
  Vector mean;    // per stock, currency units
  Vector stddev;  // per stock, population formula, > 0
  IndexRange span;
};

struct BlockPartition {
  int block_len = 64;
  std::vector<IndexRange> blocks;  // contiguous, covering [0, T)
};

struct SplitSpec {
  IndexRange train_blocks, val_blocks, test_blocks;  // block indices
  IndexRange train_days, val_days, test_days;        // derived day ranges
};

enum class Mode { kManyToMany, kManyToOne };

struct Window {
  int start = 0;  // first input day
  int len = 0;    // input length, == window_len
  // Absolute target day indices. Many-to-many: position j predicts day
  // start+1+j (the last position is dropped when its successor is off the end
  // of the panel). Many-to-one: exactly one entry, the day after the window.
  std::vector<int> targets;
  IndexRange span() const { return {start, start + len}; }
};

struct WindowSet {
  int window_len = 64;
  Mode mode = Mode::kManyToMany;
  std::vector<Window> windows;
};

// CSV layout: header `date,<TICKER>,...`, rows ascending by date. A ticker
// with any missing cell is dropped and reported rather than imputed.
CsvLoad load_price_csv(const std::string& path);

// Standardizes each stock by its train-span mean and population std, in place.
NormStats zscore_normalize(PricePanel& panel, IndexRange train_span);

// z-units back to currency units for one stock.
double denormalize(const NormStats& stats, int stock, double z);

BlockPartition partition_blocks(int total_days, int block_len);
inline BlockPartition partition_blocks(const PricePanel& panel, int block_len) {
  return partition_blocks(panel.t(), block_len);
}

// Contiguous time-ordered split with cumulative-rounding boundaries; any empty
// side is an error.
SplitSpec split_blocks(const BlockPartition& partition, const std::array<double, 3>& ratios);

// Many-to-many: one window per block in block_range; a block longer than L
// (the merged tail) contributes its last L days.
WindowSet make_windows(const PricePanel& panel, const BlockPartition& partition,
                       IndexRange block_range, int window_len, Mode mode);
// Many-to-one: one trailing-L window per day in day_range that has L days of
// history; history may reach before day_range.
WindowSet make_windows(const PricePanel& panel, IndexRange day_range, int window_len,
                       Mode mode);

// Convenience: partition + split from the panel's own ingest settings.
SplitSpec derive_split(const PricePanel& panel, const BlockPartition& partition);

void save_panel(const PricePanel& panel, const std::string& path);
PricePanel load_panel(const std::string& path);

}  // namespace dgt
