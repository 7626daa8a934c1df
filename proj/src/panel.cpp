#include "dgt/panel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>

namespace dgt {

namespace {

bool iequals(const std::string& a, const char* b) {
  std::size_t i = 0;
  for (; i < a.size() && b[i]; ++i)
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(b[i])) return false;
  return i == a.size() && b[i] == '\0';
}

bool parse_price(const std::string& field, double* out) {
  const char* begin = field.c_str();
  char* end = nullptr;
  *out = std::strtod(begin, &end);
  return end == begin + field.size() && !field.empty();
}

}  // namespace

int PricePanel::ticker_index(const std::string& name) const {
  auto it = std::find(tickers.begin(), tickers.end(), name);
  return it == tickers.end() ? -1 : static_cast<int>(it - tickers.begin());
}

CsvLoad load_price_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open price CSV: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 2 || !iequals(header[0], "date"))
    throw DataError(path + ": header must be date,<TICKER>,...");

  const std::size_t n_cols = header.size() - 1;
  std::vector<std::string> col_tickers(header.begin() + 1, header.end());
  {
    std::set<std::string> seen;
    for (const auto& t : col_tickers)
      if (t.empty() || !seen.insert(t).second)
        throw DataError(path + ": duplicate or empty ticker column '" + t + "'");
  }

  std::vector<std::string> dates;
  std::vector<std::vector<double>> cols(n_cols);  // per ticker, NaN = missing cell
  std::vector<bool> incomplete(n_cols, false);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    if (!dates.empty() && fields[0] <= dates.back())
      throw DataError(path + ":" + std::to_string(line_no) + ": dates not strictly increasing ('" +
                      fields[0] + "' after '" + dates.back() + "')");
    dates.push_back(fields[0]);
    for (std::size_t c = 0; c < n_cols; ++c) {
      double v;
      if (fields[c + 1].empty()) {
        incomplete[c] = true;
        v = std::nan("");
      } else if (!parse_price(fields[c + 1], &v) || !std::isfinite(v)) {
        throw DataError(path + ":" + std::to_string(line_no) + ": unparseable price '" +
                        fields[c + 1] + "' for " + col_tickers[c]);
      }
      cols[c].push_back(v);
    }
  }
  if (dates.empty()) throw DataError(path + ": no data rows");

  CsvLoad out;
  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < n_cols; ++c) {
    if (incomplete[c])
      out.dropped_tickers.push_back(col_tickers[c]);
    else
      kept.push_back(c);
  }
  if (kept.empty()) throw DataError(path + ": no ticker spans the full date range");

  PricePanel& p = out.panel;
  p.dates = std::move(dates);
  p.prices.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(p.dates.size()));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    p.tickers.push_back(col_tickers[kept[r]]);
    for (std::size_t t = 0; t < p.dates.size(); ++t)
      p.prices(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = cols[kept[r]][t];
  }
  return out;
}

NormStats zscore_normalize(PricePanel& panel, IndexRange train_span) {
  if (panel.normalized) throw DataError("zscore_normalize: panel is already normalized");
  if (train_span.begin < 0 || train_span.end > panel.t() || train_span.size() < 1)
    throw DataError("zscore_normalize: empty or out-of-range train span");

  const int n = panel.n();
  const double w = static_cast<double>(train_span.size());
  NormStats stats;
  stats.mean.resize(n);
  stats.stddev.resize(n);
  stats.span = train_span;
  for (int i = 0; i < n; ++i) {
    const auto row = panel.prices.row(i).segment(train_span.begin, train_span.size());
    const double mu = row.mean();
    const double sigma = std::sqrt((row.array() - mu).square().sum() / w);
    if (!(sigma > 0.0))
      throw DataError("zscore_normalize: zero variance in train span for ticker " +
                      panel.tickers[static_cast<std::size_t>(i)]);
    stats.mean(i) = mu;
    stats.stddev(i) = sigma;
    panel.prices.row(i) = (panel.prices.row(i).array() - mu) / sigma;
  }
  panel.normalized = true;
  return stats;
}

double denormalize(const NormStats& stats, int stock, double z) {
  return stats.mean(stock) + z * stats.stddev(stock);
}

BlockPartition partition_blocks(int total_days, int block_len) {
  if (block_len < 2) throw ConfigError("partition_blocks: block_len must be at least 2");
  if (total_days < block_len)
    throw DataError("partition_blocks: panel has " + std::to_string(total_days) +
                    " days, need at least " + std::to_string(block_len));
  BlockPartition part;
  part.block_len = block_len;
  for (int start = 0; start < total_days; start += block_len)
    part.blocks.push_back({start, std::min(total_days, start + block_len)});
  // A short tail carries too few days to stand as its own evaluation block.
  if (part.blocks.size() >= 2 && 2 * part.blocks.back().size() < block_len) {
    const int end = part.blocks.back().end;
    part.blocks.pop_back();
    part.blocks.back().end = end;
  }
  return part;
}

SplitSpec split_blocks(const BlockPartition& partition, const std::array<double, 3>& ratios) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (!(ratios[0] > 0.0) || !(ratios[1] > 0.0) || !(ratios[2] > 0.0) ||
      std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split_blocks: ratios must be positive and sum to 1");
  const int b = static_cast<int>(partition.blocks.size());
  const int cut1 = static_cast<int>(std::llround(b * ratios[0]));
  const int cut2 = static_cast<int>(std::llround(b * (ratios[0] + ratios[1])));
  SplitSpec s;
  s.train_blocks = {0, cut1};
  s.val_blocks = {cut1, cut2};
  s.test_blocks = {cut2, b};
  if (s.train_blocks.size() < 1 || s.val_blocks.size() < 1 || s.test_blocks.size() < 1)
    throw DataError("split_blocks: a split is empty after rounding (" +
                    std::to_string(s.train_blocks.size()) + "/" +
                    std::to_string(s.val_blocks.size()) + "/" +
                    std::to_string(s.test_blocks.size()) + " of " + std::to_string(b) +
                    " blocks)");
  auto days = [&partition](IndexRange blocks) {
    return IndexRange{partition.blocks[static_cast<std::size_t>(blocks.begin)].begin,
                      partition.blocks[static_cast<std::size_t>(blocks.end - 1)].end};
  };
  s.train_days = days(s.train_blocks);
  s.val_days = days(s.val_blocks);
  s.test_days = days(s.test_blocks);
  return s;
}

SplitSpec derive_split(const PricePanel& panel, const BlockPartition& partition) {
  return split_blocks(partition, panel.ratios);
}

WindowSet make_windows(const PricePanel& panel, const BlockPartition& partition,
                       IndexRange block_range, int window_len, Mode mode) {
  if (block_range.begin < 0 || block_range.end > static_cast<int>(partition.blocks.size()) ||
      block_range.size() < 1)
    throw DataError("make_windows: block range out of bounds");
  if (mode == Mode::kManyToOne) {
    const IndexRange days{partition.blocks[static_cast<std::size_t>(block_range.begin)].begin,
                          partition.blocks[static_cast<std::size_t>(block_range.end - 1)].end};
    return make_windows(panel, days, window_len, mode);
  }
  WindowSet ws;
  ws.window_len = window_len;
  ws.mode = mode;
  for (int b = block_range.begin; b < block_range.end; ++b) {
    const IndexRange& blk = partition.blocks[static_cast<std::size_t>(b)];
    if (blk.size() < window_len)
      throw DataError("make_windows: block " + std::to_string(b) + " has " +
                      std::to_string(blk.size()) + " days, shorter than window length " +
                      std::to_string(window_len));
    Window w;
    w.start = blk.end - window_len;  // a merged tail contributes its last L days
    w.len = window_len;
    for (int j = 0; j < window_len; ++j) {
      const int day = w.start + 1 + j;
      if (day < panel.t()) w.targets.push_back(day);
    }
    ws.windows.push_back(std::move(w));
  }
  return ws;
}

WindowSet make_windows(const PricePanel& panel, IndexRange day_range, int window_len,
                       Mode mode) {
  if (mode != Mode::kManyToOne)
    throw std::invalid_argument(
        "make_windows: many-to-many windows are block-aligned; pass a block range");
  if (day_range.begin < 0 || day_range.end > panel.t())
    throw DataError("make_windows: day range out of bounds");
  if (day_range.size() < window_len)
    throw DataError("make_windows: span of " + std::to_string(day_range.size()) +
                    " days is shorter than window length " + std::to_string(window_len));
  WindowSet ws;
  ws.window_len = window_len;
  ws.mode = mode;
  for (int day = day_range.begin; day < day_range.end; ++day) {
    if (day < window_len) continue;  // not enough history
    Window w;
    w.start = day - window_len;
    w.len = window_len;
    w.targets = {day};
    ws.windows.push_back(std::move(w));
  }
  if (ws.windows.empty())
    throw DataError("make_windows: no evaluation day in span has enough history");
  return ws;
}

namespace {
constexpr char kPanelMagic[4] = {'D', 'G', 'T', 'P'};
constexpr std::uint32_t kPanelVersion = 1;
}  // namespace

void save_panel(const PricePanel& panel, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write panel file: " + path);
  put_bytes(os, kPanelMagic, 4);
  put_u32(os, kPanelVersion);
  put_u8(os, panel.normalized ? 1 : 0);
  put_u32(os, static_cast<std::uint32_t>(panel.block_len));
  for (double r : panel.ratios) put_f64(os, r);
  put_u32(os, static_cast<std::uint32_t>(panel.n()));
  put_u32(os, static_cast<std::uint32_t>(panel.t()));
  for (const auto& s : panel.tickers) put_str(os, s);
  for (const auto& s : panel.dates) put_str(os, s);
  put_matrix(os, panel.prices);
  if (!os) throw DataError("write failed: " + path);
}

PricePanel load_panel(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open panel file: " + path);
  char magic[4];
  get_bytes(is, magic, 4, "panel magic");
  if (std::memcmp(magic, kPanelMagic, 4) != 0)
    throw DataError(path + ": not a panel file (bad magic)");
  const std::uint32_t version = get_u32(is, "panel version");
  if (version != kPanelVersion)
    throw DataError(path + ": unsupported panel version " + std::to_string(version));
  PricePanel p;
  p.normalized = get_u8(is, "panel flags") != 0;
  p.block_len = static_cast<int>(get_u32(is, "panel block_len"));
  for (double& r : p.ratios) r = get_f64(is, "panel ratios");
  const std::uint32_t n = get_u32(is, "panel N");
  const std::uint32_t t = get_u32(is, "panel T");
  p.tickers.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) p.tickers.push_back(get_str(is, "panel ticker"));
  p.dates.reserve(t);
  for (std::uint32_t i = 0; i < t; ++i) p.dates.push_back(get_str(is, "panel date"));
  p.prices = get_matrix(is, n, t, "panel prices");
  return p;
}

}  // namespace dgt
