#include "dgt/cli.hpp"

#include "dgt/cluster.hpp"
#include "dgt/common.hpp"
#include "dgt/corr.hpp"
#include "dgt/eval.hpp"
#include "dgt/panel.hpp"
#include "dgt/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace dgt {

namespace {

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("DGT_SEED");
  if (s == nullptr || *s == '\0') return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (errno != 0 || end == s || *end != '\0')
    throw ConfigError("DGT_SEED must be an unsigned integer, got \"" + std::string(s) + "\"");
  return v;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string item =
        text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (errno != 0 || end == item.c_str() || *end != '\0')
      throw ConfigError(std::string(what) + ": cannot parse \"" + item + "\" as a number");
    out.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::array<double, 3> parse_ratios(const std::string& text) {
  const std::vector<double> v = parse_double_list(text, "ratios");
  if (v.size() != 3) throw ConfigError("ratios: expected three comma-separated values");
  return {v[0], v[1], v[2]};
}

// "2..10", both ends inclusive.
std::pair<int, int> parse_k_range(const std::string& text) {
  const std::size_t dots = text.find("..");
  if (dots == std::string::npos)
    throw ConfigError("k-range: expected the form LO..HI, got \"" + text + "\"");
  int lo = 0, hi = 0;
  try {
    std::size_t used = 0;
    lo = std::stoi(text.substr(0, dots), &used);
    if (used != dots) throw std::invalid_argument("");
    const std::string rest = text.substr(dots + 2);
    hi = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw ConfigError("k-range: expected the form LO..HI, got \"" + text + "\"");
  }
  if (lo < 2 || hi < lo) throw ConfigError("k-range: need 2 <= LO <= HI");
  return {lo, hi};
}

// ---- config file -----------------------------------------------------------

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const char* ctx) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* key : allowed) ok = ok || item.key() == key;
    if (!ok) throw ConfigError(std::string(ctx) + ": unknown key \"" + item.key() + "\"");
  }
}

const json& need(const json& obj, const char* key, const char* ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(std::string(ctx) + ": missing key \"" + key + "\"");
  return *it;
}

std::string need_string(const json& obj, const char* key, const char* ctx) {
  const json& v = need(obj, key, ctx);
  if (!v.is_string())
    throw ConfigError(std::string(ctx) + ": \"" + key + "\" must be a string");
  return v.get<std::string>();
}

int opt_int(const json& obj, const char* key, int fallback, const char* ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number_integer())
    throw ConfigError(std::string(ctx) + ": \"" + key + "\" must be an integer");
  return it->get<int>();
}

std::uint64_t opt_u64(const json& obj, const char* key, std::uint64_t fallback, const char* ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number_integer() || (it->is_number_integer() && it->get<std::int64_t>() < 0 &&
                                   !it->is_number_unsigned()))
    throw ConfigError(std::string(ctx) + ": \"" + key + "\" must be a non-negative integer");
  return it->get<std::uint64_t>();
}

bool opt_bool(const json& obj, const char* key, bool fallback, const char* ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_boolean())
    throw ConfigError(std::string(ctx) + ": \"" + key + "\" must be a boolean");
  return it->get<bool>();
}

std::string opt_string(const json& obj, const char* key, const std::string& fallback,
                       const char* ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_string())
    throw ConfigError(std::string(ctx) + ": \"" + key + "\" must be a string");
  return it->get<std::string>();
}

}  // namespace

std::string row_tag(const GridRow& row) {
  std::string tag = arch_name(row.architecture);
  if (row.use_spatial)
    tag += std::string("_") + metric_name(row.metric) + "_" + scope_name(row.scope);
  return tag;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  check_keys(j, {"input_csv", "work_dir", "ingest", "grid", "train", "cluster"}, "config");

  RunConfig c;
  c.input_csv = need_string(j, "input_csv", "config");
  c.work_dir = need_string(j, "work_dir", "config");

  if (j.contains("ingest")) {
    const json& g = j["ingest"];
    if (!g.is_object()) throw ConfigError("config.ingest must be an object");
    check_keys(g, {"block_len", "ratios"}, "config.ingest");
    c.block_len = opt_int(g, "block_len", c.block_len, "config.ingest");
    if (g.contains("ratios")) {
      const json& r = g["ratios"];
      if (!r.is_array() || r.size() != 3)
        throw ConfigError("config.ingest.ratios must be an array of three numbers");
      for (int i = 0; i < 3; ++i) {
        if (!r[i].is_number()) throw ConfigError("config.ingest.ratios must hold numbers");
        c.ratios[static_cast<std::size_t>(i)] = r[i].get<double>();
      }
    }
  }

  const json& grid = need(j, "grid", "config");
  if (!grid.is_array()) throw ConfigError("config.grid must be an array");
  for (const json& row_j : grid) {
    if (!row_j.is_object()) throw ConfigError("config.grid rows must be objects");
    check_keys(row_j, {"architecture", "use_spatial", "metric", "scope"}, "config.grid row");
    GridRow row;
    row.architecture = parse_arch(need_string(row_j, "architecture", "config.grid row"));
    row.use_spatial = opt_bool(row_j, "use_spatial", false, "config.grid row");
    row.metric = parse_metric(opt_string(row_j, "metric", "none", "config.grid row"));
    row.scope = parse_scope(opt_string(row_j, "scope", "none", "config.grid row"));
    c.grid.push_back(row);
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    if (!t.is_object()) throw ConfigError("config.train must be an object");
    check_keys(t, {"lr_grid", "epochs", "eval_every", "seed", "dims"}, "config.train");
    if (t.contains("lr_grid")) {
      const json& g = t["lr_grid"];
      if (!g.is_array() || g.empty())
        throw ConfigError("config.train.lr_grid must be a non-empty array");
      c.lr_grid.clear();
      for (const json& v : g) {
        if (!v.is_number()) throw ConfigError("config.train.lr_grid must hold numbers");
        c.lr_grid.push_back(v.get<double>());
      }
    }
    c.epochs = opt_int(t, "epochs", c.epochs, "config.train");
    c.eval_every = opt_int(t, "eval_every", c.eval_every, "config.train");
    c.seed = opt_u64(t, "seed", c.seed, "config.train");
    if (t.contains("dims")) {
      const json& d = t["dims"];
      if (!d.is_object()) throw ConfigError("config.train.dims must be an object");
      check_keys(d, {"d", "heads", "window", "depth"}, "config.train.dims");
      c.dims.d = opt_int(d, "d", c.dims.d, "config.train.dims");
      c.dims.heads = opt_int(d, "heads", c.dims.heads, "config.train.dims");
      c.dims.window = opt_int(d, "window", c.dims.window, "config.train.dims");
      c.dims.depth = opt_int(d, "depth", c.dims.depth, "config.train.dims");
    }
  }

  if (j.contains("cluster")) {
    const json& cl = j["cluster"];
    if (!cl.is_object()) throw ConfigError("config.cluster must be an object");
    check_keys(cl, {"k", "seed", "scan_max", "rank_based"}, "config.cluster");
    c.cluster_k = opt_int(cl, "k", c.cluster_k, "config.cluster");
    c.cluster_seed = opt_u64(cl, "seed", c.cluster_seed, "config.cluster");
    c.scan_max = opt_int(cl, "scan_max", c.scan_max, "config.cluster");
    c.rank_based = opt_bool(cl, "rank_based", c.rank_based, "config.cluster");
  }

  if (const auto seed = env_seed()) c.seed = *seed;
  if (!fs::exists(c.input_csv))
    throw ConfigError("config: input_csv not found: " + c.input_csv);
  return c;
}

void validate_run_config(const RunConfig& c) {
  if (c.input_csv.empty() || c.work_dir.empty())
    throw ConfigError("config: input_csv and work_dir must be non-empty");
  if (c.block_len < 2) throw ConfigError("config: block_len must be >= 2");
  double sum = 0.0;
  for (double r : c.ratios) {
    if (r <= 0.0) throw ConfigError("config: ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("config: ratios must sum to 1");

  if (c.grid.empty()) throw ConfigError("config: grid must list at least one row");
  std::set<std::string> seen;
  for (const GridRow& row : c.grid) {
    const std::string tag = row_tag(row);
    if (!seen.insert(tag).second) throw ConfigError("config: duplicate grid row " + tag);
    if (row.use_spatial) {
      if (row.architecture == Arch::kGru)
        throw ConfigError("config: grid row " + tag +
                          ": the recurrent baseline has no graph stage, use_spatial must be false");
      if (row.metric == Metric::kNone || row.scope == Scope::kNone)
        throw ConfigError("config: grid row " + tag + ": use_spatial needs metric and scope");
    } else {
      if (row.scope != Scope::kNone)
        throw ConfigError("config: grid row " + tag + ": scope requires use_spatial");
      if (row.metric != Metric::kNone)
        throw ConfigError("config: grid row " + tag + ": metric requires scope and use_spatial");
    }
  }

  if (c.lr_grid.empty()) throw ConfigError("config: lr_grid must be non-empty");
  for (double lr : c.lr_grid)
    if (!(lr > 0.0)) throw ConfigError("config: learning rates must be positive");
  if (c.eval_every < 1 || c.epochs < c.eval_every)
    throw ConfigError("config: need epochs >= eval_every >= 1");
  if (c.dims.d < 1 || c.dims.heads < 1 || c.dims.d % c.dims.heads != 0)
    throw ConfigError("config: dims.d must be a positive multiple of dims.heads");
  if (c.dims.window < 2) throw ConfigError("config: dims.window must be >= 2");
  if (c.dims.depth < 1) throw ConfigError("config: dims.depth must be >= 1");
  if (c.dims.window > c.block_len)
    throw ConfigError("config: dims.window exceeds block_len; training windows are block-aligned");
  if (c.cluster_k < 2) throw ConfigError("config: cluster k must be >= 2");
  if (c.scan_max < 2) throw ConfigError("config: cluster scan_max must be >= 2");
}

namespace {

// ---- shared pipeline pieces -------------------------------------------------

struct PreparedPanel {
  PricePanel panel;  // normalized in place
  BlockPartition part;
  SplitSpec split;
  NormStats stats;
};

PreparedPanel prepare_panel(PricePanel raw) {
  PreparedPanel p;
  p.part = partition_blocks(raw, raw.block_len);
  p.split = split_blocks(p.part, raw.ratios);
  p.stats = zscore_normalize(raw, p.split.train_days);
  p.panel = std::move(raw);
  return p;
}

// Every span training or evaluation will ask a graph set for: block-aligned
// training windows plus trailing windows for each validation and test day.
std::vector<IndexRange> graph_spans(const PricePanel& panel, const BlockPartition& part,
                                    const SplitSpec& split, int window_len) {
  std::vector<IndexRange> spans;
  const auto add = [&spans](const WindowSet& ws) {
    for (const Window& w : ws.windows) spans.push_back(w.span());
  };
  add(make_windows(panel, part, split.train_blocks, window_len, Mode::kManyToMany));
  add(make_windows(panel, split.val_days, window_len, Mode::kManyToOne));
  add(make_windows(panel, split.test_days, window_len, Mode::kManyToOne));
  std::sort(spans.begin(), spans.end(), [](IndexRange a, IndexRange b) {
    return a.begin != b.begin ? a.begin < b.begin : a.end < b.end;
  });
  spans.erase(std::unique(spans.begin(), spans.end(),
                          [](IndexRange a, IndexRange b) {
                            return a.begin == b.begin && a.end == b.end;
                          }),
              spans.end());
  return spans;
}

TrainConfig to_train_config(const RunConfig& c, const GridRow& row) {
  TrainConfig tc;
  tc.architecture = row.architecture;
  tc.use_spatial = row.use_spatial;
  tc.metric = row.metric;
  tc.scope = row.scope;
  tc.lr_grid = c.lr_grid;
  tc.epochs = c.epochs;
  tc.eval_every = c.eval_every;
  tc.seed = c.seed;
  tc.dims = c.dims;
  return tc;
}

// Experiment identity for the manifest: ingest, grid, train and cluster
// settings plus a content hash of the input CSV. Paths are excluded so a
// relocated work directory or input file still matches its own artifacts.
std::string run_config_digest(const RunConfig& c) {
  std::ifstream in(c.input_csv, std::ios::binary);
  if (!in.good()) throw ConfigError("config: cannot open " + c.input_csv);
  std::uint64_t input_hash = 0xcbf29ce484222325ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    input_hash = fnv1a64(reinterpret_cast<const unsigned char*>(buf),
                         static_cast<std::size_t>(in.gcount()), input_hash);
    if (!in.good()) break;
  }

  json j;
  j["block_len"] = c.block_len;
  j["ratios"] = {c.ratios[0], c.ratios[1], c.ratios[2]};
  json grid = json::array();
  for (const GridRow& row : c.grid) grid.push_back(row_tag(row));
  j["grid"] = grid;
  j["lr_grid"] = c.lr_grid;
  j["epochs"] = c.epochs;
  j["eval_every"] = c.eval_every;
  j["seed"] = c.seed;
  j["dims"] = {c.dims.d, c.dims.heads, c.dims.window, c.dims.depth};
  j["cluster"] = {c.cluster_k, c.cluster_seed, c.scan_max, c.rank_based};
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(input_hash));
  j["input_fnv"] = hex;

  const std::string dump = j.dump();
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(
                    reinterpret_cast<const unsigned char*>(dump.data()), dump.size())));
  return hex;
}

// ---- report JSON ------------------------------------------------------------

json report_to_json(const EvalReport& r) {
  json cells = json::array();
  for (const EvalCell& c : r.cells) {
    json jc;
    jc["ticker"] = r.tickers.at(static_cast<std::size_t>(c.stock));
    jc["window_start"] = r.dates.at(static_cast<std::size_t>(c.window_start));
    jc["target_date"] = r.dates.at(static_cast<std::size_t>(c.target_date));
    jc["actual"] = c.actual;
    jc["predicted"] = c.predicted;
    jc["error"] = c.error;
    cells.push_back(std::move(jc));
  }
  json j;
  j["architecture"] = arch_name(r.architecture);
  j["use_spatial"] = r.use_spatial;
  j["correlation"] = metric_name(r.metric);
  j["scope"] = scope_name(r.scope);
  j["denormalized"] = r.denormalized;
  j["rmse"] = r.rmse;
  j["mae"] = r.mae;
  j["tickers"] = r.tickers;
  j["dates"] = r.dates;
  j["cells"] = std::move(cells);
  return j;
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os.good()) throw DataError("cannot open " + path + " for writing");
  os << j.dump(2) << '\n';
  if (!os.good()) throw DataError("failed writing " + path);
}

EvalReport report_from_json(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw DataError("report: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("report " + path + ": " + e.what());
  }
  try {
    EvalReport r;
    r.architecture = parse_arch(j.at("architecture").get<std::string>());
    r.use_spatial = j.at("use_spatial").get<bool>();
    r.metric = parse_metric(j.at("correlation").get<std::string>());
    r.scope = parse_scope(j.at("scope").get<std::string>());
    r.denormalized = j.at("denormalized").get<bool>();
    r.rmse = j.at("rmse").get<double>();
    r.mae = j.at("mae").get<double>();
    r.tickers = j.at("tickers").get<std::vector<std::string>>();
    r.dates = j.at("dates").get<std::vector<std::string>>();
    std::map<std::string, int> ticker_ix, date_ix;
    for (std::size_t i = 0; i < r.tickers.size(); ++i)
      ticker_ix[r.tickers[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < r.dates.size(); ++i) date_ix[r.dates[i]] = static_cast<int>(i);
    for (const json& jc : j.at("cells")) {
      EvalCell c;
      c.stock = ticker_ix.at(jc.at("ticker").get<std::string>());
      c.window_start = date_ix.at(jc.at("window_start").get<std::string>());
      c.target_date = date_ix.at(jc.at("target_date").get<std::string>());
      c.actual = jc.at("actual").get<double>();
      c.predicted = jc.at("predicted").get<double>();
      c.error = jc.at("error").get<double>();
      r.cells.push_back(c);
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError("report " + path + " is malformed: " + e.what());
  } catch (const std::out_of_range&) {
    throw DataError("report " + path + " is malformed: cell references unknown ticker or date");
  }
}

void write_corr_plot(const CorrMatrix& m, const std::vector<std::string>& tickers,
                     const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os.good()) throw DataError("cannot open " + path + " for writing");
  os << "ticker_a,ticker_b,value\n";
  const int n = static_cast<int>(m.values.rows());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      os << tickers.at(static_cast<std::size_t>(i)) << ','
         << tickers.at(static_cast<std::size_t>(j)) << ',' << fmt_double(m.values(i, j))
         << '\n';
  if (!os.good()) throw DataError("failed writing " + path);
}

// ---- manifest ---------------------------------------------------------------

// Stage ledger for the pipeline. Written after every stage so a failed run
// leaves a record of what completed; reruns skip stages whose artifacts are
// all still present. No timestamps, so reruns are byte-identical.
class Manifest {
 public:
  struct Failure {
    std::string stage;
    std::string error;
    int exit_code = kExitData;
  };

  Manifest(fs::path dir, std::string digest) : dir_(std::move(dir)), digest_(std::move(digest)) {
    const fs::path file = dir_ / "manifest.json";
    if (!fs::exists(file)) return;
    json j;
    std::ifstream in(file);
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("manifest.json is unreadable: " + std::string(e.what()));
    }
    if (!j.is_object() || !j.contains("config_digest") || !j["config_digest"].is_string())
      throw ConfigError("manifest.json is malformed");
    if (j["config_digest"].get<std::string>() != digest_)
      throw ConfigError(
          "work dir holds artifacts for a different config or input; use a clean directory");
    if (j.contains("stages") && j["stages"].is_object()) stages_ = j["stages"];
    // Failures are rebuilt on every run: failed stages are re-attempted.
  }

  bool done(const std::string& stage) const {
    auto it = stages_.find(stage);
    if (it == stages_.end() || !it->is_object()) return false;
    if (it->value("status", std::string()) != "done") return false;
    if (!it->contains("artifacts")) return false;
    for (const json& a : (*it)["artifacts"])
      if (!a.is_string() || !fs::exists(dir_ / a.get<std::string>())) return false;
    return true;
  }

  void mark(const std::string& stage, const std::vector<std::string>& artifacts) {
    json rec;
    rec["status"] = "done";
    rec["artifacts"] = artifacts;
    stages_[stage] = std::move(rec);
    write();
  }

  void skip_stage(const std::string& stage, const std::string& note) {
    json rec;
    rec["status"] = "skipped";
    rec["note"] = note;
    stages_[stage] = std::move(rec);
    write();
  }

  void fail(const std::string& stage, const std::string& error, int exit_code) {
    json rec;
    rec["status"] = "failed";
    rec["error"] = error;
    stages_[stage] = std::move(rec);
    failures_.push_back({stage, error, exit_code});
    write();
  }

  const std::vector<Failure>& failures() const { return failures_; }

 private:
  void write() const {
    json j;
    j["config_digest"] = digest_;
    j["stages"] = stages_;
    json fl = json::array();
    for (const Failure& f : failures_) {
      json jf;
      jf["stage"] = f.stage;
      jf["error"] = f.error;
      jf["exit_code"] = f.exit_code;
      fl.push_back(std::move(jf));
    }
    j["failures"] = std::move(fl);
    const fs::path tmp = dir_ / "manifest.json.tmp";
    write_json_file(j, tmp.string());
    fs::rename(tmp, dir_ / "manifest.json");
  }

  fs::path dir_;
  std::string digest_;
  json stages_ = json::object();
  std::vector<Failure> failures_;
};

// ---- subcommands ------------------------------------------------------------

void cmd_ingest(const std::string& input, int block_len, const std::string& ratios_text,
                const std::string& out) {
  if (block_len < 2) throw ConfigError("ingest: block-len must be >= 2");
  const std::array<double, 3> ratios = parse_ratios(ratios_text);
  CsvLoad load = load_price_csv(input);
  PricePanel panel = std::move(load.panel);
  panel.block_len = block_len;
  panel.ratios = ratios;
  // Surface partition/split problems now rather than at train time.
  derive_split(panel, partition_blocks(panel, block_len));
  save_panel(panel, out);
  for (const std::string& t : load.dropped_tickers)
    std::printf("dropped %s (incomplete history)\n", t.c_str());
  std::printf("%s: %d tickers, %d days, block_len %d\n", out.c_str(), panel.n(), panel.t(),
              block_len);
}

void cmd_corr_build(const std::string& panel_path, const std::string& metric_s,
                    const std::string& scope_s, int heads, int bins, int window,
                    const std::string& out) {
  if (metric_s.empty() || scope_s.empty())
    throw ConfigError("corr: --metric and --scope are required");
  const Metric metric = parse_metric(metric_s);
  const Scope scope = parse_scope(scope_s);
  PreparedPanel p = prepare_panel(load_panel(panel_path));
  const std::vector<IndexRange> spans = graph_spans(p.panel, p.part, p.split, window);
  const GraphSet gs =
      build_graph_set(p.panel, metric, scope, heads, p.split.train_days, spans, bins);
  save_graphs(gs, out);
  std::printf("%s: %s/%s, %d heads, %zu local matrices\n", out.c_str(), metric_name(metric),
              scope_name(scope), heads, gs.locals.size());
}

void cmd_corr_top(const std::string& graphs_path, const std::string& panel_path,
                  const std::string& ticker, int k, const std::string& out) {
  GraphSet gs = load_graphs(graphs_path);
  if (gs.scope == Scope::kLocal)
    throw ConfigError("corr top: graphs file has no global matrix (scope is local)");
  // Graph files store matrices anonymously; the panel supplies row labels.
  const PricePanel panel = load_panel(panel_path);
  if (panel.n() != static_cast<int>(gs.global.values.rows()))
    throw ConfigError("corr top: panel has " + std::to_string(panel.n()) +
                      " tickers but the graphs hold " +
                      std::to_string(gs.global.values.rows()));
  gs.global.tickers = panel.tickers;
  const std::vector<RankedTicker> ranked = top_correlated(gs.global, ticker, k);
  std::string text = "rank,ticker,value\n";
  for (std::size_t i = 0; i < ranked.size(); ++i)
    text += std::to_string(i + 1) + "," + ranked[i].ticker + "," +
            fmt_double(ranked[i].value) + "\n";
  if (out.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    std::ofstream os(out, std::ios::binary);
    if (!os.good()) throw DataError("cannot open " + out + " for writing");
    os << text;
  }
}

struct TrainOpts {
  std::string panel, graphs, arch = "dgt", metric = "none", scope = "none";
  std::string lr_grid = "0.01,0.1", out, log;
  bool spatial = false;
  int epochs = 100, eval_every = 10, d = 32, heads = 4, window = 64, depth = 1;
  std::uint64_t seed = 7;
};

void cmd_train(const TrainOpts& o) {
  TrainConfig tc;
  tc.architecture = parse_arch(o.arch);
  tc.use_spatial = o.spatial;
  tc.metric = parse_metric(o.metric);
  tc.scope = parse_scope(o.scope);
  tc.lr_grid = parse_double_list(o.lr_grid, "lr-grid");
  tc.epochs = o.epochs;
  tc.eval_every = o.eval_every;
  tc.seed = o.seed;
  if (const auto seed = env_seed()) tc.seed = *seed;
  tc.dims = ModelDims{o.d, o.heads, o.window, o.depth};

  if (tc.use_spatial) {
    if (tc.architecture == Arch::kGru)
      throw ConfigError("train: the recurrent baseline has no graph stage; drop --spatial");
    if (tc.metric == Metric::kNone || tc.scope == Scope::kNone)
      throw ConfigError("train: --spatial needs --metric and --scope");
    if (o.graphs.empty()) throw ConfigError("train: --spatial needs --graphs");
  } else {
    if (tc.scope != Scope::kNone) throw ConfigError("train: scope requires --spatial");
    if (tc.metric != Metric::kNone)
      throw ConfigError("train: metric requires scope and --spatial");
    if (!o.graphs.empty()) throw ConfigError("train: --graphs given without --spatial");
  }
  validate_config(tc);

  PreparedPanel p = prepare_panel(load_panel(o.panel));
  GraphSet gs;
  const GraphSet* gptr = nullptr;
  if (tc.use_spatial) {
    gs = load_graphs(o.graphs);
    if (gs.metric != tc.metric || gs.scope != tc.scope)
      throw ConfigError(std::string("train: graphs file is ") + metric_name(gs.metric) + "/" +
                        scope_name(gs.scope) + ", config wants " + metric_name(tc.metric) +
                        "/" + scope_name(tc.scope));
    if (gs.heads != tc.dims.heads)
      throw ConfigError("train: graphs file has " + std::to_string(gs.heads) +
                        " heads, config wants " + std::to_string(tc.dims.heads));
    gptr = &gs;
  }

  const GridResult g = grid_search(tc, p.panel, p.split, p.stats, gptr);
  for (const GridEntry& e : g.entries) {
    if (e.diverged)
      std::printf("lr %s: diverged at epoch %d\n", fmt_double(e.lr).c_str(), e.diverged_epoch);
    else
      std::printf("lr %s: val rmse %s\n", fmt_double(e.lr).c_str(),
                  fmt_double(e.val_rmse).c_str());
  }
  save_checkpoint(g.best.checkpoint, o.out);
  write_train_log(g.best.log, o.log.empty() ? o.out + ".log.csv" : o.log);
  std::printf("best lr %s, val rmse %s (epoch %d) -> %s\n", fmt_double(g.best_lr).c_str(),
              fmt_double(g.best.checkpoint.best_val_rmse).c_str(),
              g.best.checkpoint.best_epoch, o.out.c_str());
}

void cmd_eval(const std::string& ckpt_path, const std::string& panel_path,
              const std::string& graphs_path, bool denormalized, const std::string& out,
              const std::string& csv) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  PreparedPanel p = prepare_panel(load_panel(panel_path));
  GraphSet gs;
  const GraphSet* gptr = nullptr;
  if (ck.config.use_spatial) {
    if (graphs_path.empty())
      throw ConfigError("eval: checkpoint was trained with graphs; --graphs is required");
    gs = load_graphs(graphs_path);
    gptr = &gs;
  }
  const WindowSet ws =
      make_windows(p.panel, p.split.test_days, ck.config.dims.window, Mode::kManyToOne);
  const EvalReport r = backtest(ck, p.panel, gptr, ws, denormalized);
  write_json_file(report_to_json(r), out);
  write_report_csv(r, csv.empty() ? out + ".cells.csv" : csv);
  std::printf("rmse %s, mae %s over %zu cells -> %s\n", fmt_double(r.rmse).c_str(),
              fmt_double(r.mae).c_str(), r.cells.size(), out.c_str());
}

// Feature span is the panel's own train split: test-period errors are later
// compared across clusters formed without looking at test data.
FeatureMatrix features_for(const PricePanel& raw) {
  const BlockPartition part = partition_blocks(raw, raw.block_len);
  const SplitSpec split = split_blocks(part, raw.ratios);
  return stock_features(raw, split.train_days);
}

void cmd_cluster(const std::string& panel_path, int k, std::uint64_t seed,
                 const std::string& out, const std::string& scatter) {
  const PricePanel raw = load_panel(panel_path);
  const FeatureMatrix f = features_for(raw);
  const Assignment a = kmeans(f, k, seed);
  write_clusters_csv(f, a, out);
  if (!scatter.empty()) write_scatter_csv(f, pca2(f), a, scatter);
  std::printf("k %d, inertia %s, silhouette %s -> %s\n", k, fmt_double(a.inertia).c_str(),
              fmt_double(silhouette(f, a)).c_str(), out.c_str());
}

std::vector<ScanRow> scan_rows(const FeatureMatrix& f, int lo, int hi, std::uint64_t seed) {
  std::vector<ScanRow> rows;
  for (int k = lo; k <= hi; ++k) {
    const Assignment a = kmeans(f, k, curve_seed(seed, k));
    rows.push_back({k, silhouette(f, a), a.inertia});
  }
  return rows;
}

void cmd_cluster_scan(const std::string& panel_path, const std::string& k_range,
                      std::uint64_t seed, const std::string& out) {
  const auto [lo, hi] = parse_k_range(k_range);
  const PricePanel raw = load_panel(panel_path);
  const FeatureMatrix f = features_for(raw);
  const int n = static_cast<int>(f.values.rows());
  if (hi > n - 1)
    throw std::invalid_argument("cluster scan: k range reaches " + std::to_string(hi) +
                                " but the panel has only " + std::to_string(n) + " stocks");
  const std::vector<ScanRow> rows = scan_rows(f, lo, hi, seed);
  write_scan_csv(rows, out);
  const auto best = std::max_element(rows.begin(), rows.end(),
                                     [](const ScanRow& a, const ScanRow& b) {
                                       return a.silhouette < b.silhouette;
                                     });
  std::printf("best silhouette %s at k %d -> %s\n", fmt_double(best->silhouette).c_str(),
              best->k, out.c_str());
}

void cmd_config_validate(const std::string& path) {
  const RunConfig c = load_run_config(path);
  validate_run_config(c);
  std::printf("config ok: %zu grid rows, digest %s\n", c.grid.size(),
              run_config_digest(c).c_str());
}

int cmd_pipeline(const std::string& config_path) {
  const RunConfig cfg = load_run_config(config_path);
  validate_run_config(cfg);
  const fs::path work(cfg.work_dir);
  fs::create_directories(work);
  Manifest man(work, run_config_digest(cfg));
  const auto at = [&work](const std::string& name) { return (work / name).string(); };

  // ingest
  PricePanel raw;
  if (man.done("ingest")) {
    raw = load_panel(at("panel.bin"));
    std::printf("[ingest] skip (done)\n");
  } else {
    CsvLoad load = load_price_csv(cfg.input_csv);
    raw = std::move(load.panel);
    raw.block_len = cfg.block_len;
    raw.ratios = cfg.ratios;
    for (const std::string& t : load.dropped_tickers)
      std::printf("[ingest] dropped %s (incomplete history)\n", t.c_str());
    save_panel(raw, at("panel.bin"));
    man.mark("ingest", {"panel.bin"});
    std::printf("[ingest] panel.bin (%d tickers, %d days)\n", raw.n(), raw.t());
  }

  PreparedPanel p = prepare_panel(PricePanel(raw));
  const WindowSet test_ws =
      make_windows(p.panel, p.split.test_days, cfg.dims.window, Mode::kManyToOne);

  // graphs, one set per distinct (metric, scope)
  std::map<std::pair<int, int>, GraphSet> graphs;
  for (const GridRow& row : cfg.grid) {
    if (!row.use_spatial) continue;
    const std::pair<int, int> key{static_cast<int>(row.metric), static_cast<int>(row.scope)};
    if (graphs.count(key) != 0) continue;
    const std::string gtag = std::string(metric_name(row.metric)) + "_" + scope_name(row.scope);
    const std::string stage = "graphs:" + gtag;
    const std::string gfile = "graphs_" + gtag + ".bin";
    if (man.done(stage)) {
      graphs.emplace(key, load_graphs(at(gfile)));
      std::printf("[%s] skip (done)\n", stage.c_str());
      continue;
    }
    GraphSet gs = build_graph_set(p.panel, row.metric, row.scope, cfg.dims.heads,
                                  p.split.train_days,
                                  graph_spans(p.panel, p.part, p.split, cfg.dims.window));
    save_graphs(gs, at(gfile));
    std::vector<std::string> artifacts{gfile};
    if (row.scope != Scope::kLocal) {
      const std::string plot = "corr_" + gtag + ".csv";
      write_corr_plot(gs.global, p.panel.tickers, at(plot));
      artifacts.push_back(plot);
    }
    man.mark(stage, artifacts);
    std::printf("[%s] %s (%zu local matrices)\n", stage.c_str(), gfile.c_str(),
                gs.locals.size());
    graphs.emplace(key, std::move(gs));
  }

  // train + backtest per grid row
  struct RowOutcome {
    GridRow row;
    EvalReport report;
  };
  std::vector<RowOutcome> results;
  for (const GridRow& row : cfg.grid) {
    const std::string tag = row_tag(row);
    const GraphSet* gptr = nullptr;
    if (row.use_spatial)
      gptr = &graphs.at({static_cast<int>(row.metric), static_cast<int>(row.scope)});

    const std::string train_stage = "train:" + tag;
    const std::string ckpt_file = "ckpt_" + tag + ".bin";
    const std::string log_file = "train_log_" + tag + ".csv";
    Checkpoint ck;
    if (man.done(train_stage)) {
      ck = load_checkpoint(at(ckpt_file));
      std::printf("[%s] skip (done)\n", train_stage.c_str());
    } else {
      try {
        const GridResult g = grid_search(to_train_config(cfg, row), p.panel, p.split, p.stats,
                                         gptr);
        ck = g.best.checkpoint;
        save_checkpoint(ck, at(ckpt_file));
        write_train_log(g.best.log, at(log_file));
        man.mark(train_stage, {ckpt_file, log_file});
        std::printf("[%s] best lr %s, val rmse %s (epoch %d)\n", train_stage.c_str(),
                    fmt_double(g.best_lr).c_str(), fmt_double(ck.best_val_rmse).c_str(),
                    ck.best_epoch);
      } catch (const DivergenceError& e) {
        man.fail(train_stage, e.what(), kExitDivergence);
        std::printf("[%s] failed: %s\n", train_stage.c_str(), e.what());
        continue;
      }
    }

    const std::string eval_stage = "eval:" + tag;
    const std::string rep_json = "report_" + tag + ".json";
    const std::string rep_csv = "report_" + tag + ".csv";
    EvalReport rep;
    if (man.done(eval_stage)) {
      rep = report_from_json(at(rep_json));
      std::printf("[%s] skip (done)\n", eval_stage.c_str());
    } else {
      rep = backtest(ck, p.panel, gptr, test_ws, false);
      write_json_file(report_to_json(rep), at(rep_json));
      write_report_csv(rep, at(rep_csv));
      man.mark(eval_stage, {rep_json, rep_csv});
      std::printf("[%s] rmse %s, mae %s\n", eval_stage.c_str(), fmt_double(rep.rmse).c_str(),
                  fmt_double(rep.mae).c_str());
    }
    results.push_back({row, std::move(rep)});
  }

  // leaderboard, worst RMSE first
  std::vector<const RowOutcome*> order;
  for (const RowOutcome& r : results) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const RowOutcome* a, const RowOutcome* b) {
    return a->report.rmse > b->report.rmse;
  });
  if (man.done("leaderboard")) {
    std::printf("[leaderboard] skip (done)\n");
  } else {
    std::string csv = "architecture,use_spatial,correlation,scope,rmse,mae\n";
    json rows = json::array();
    for (const RowOutcome* r : order) {
      csv += std::string(arch_name(r->row.architecture)) + "," +
             (r->row.use_spatial ? "true" : "false") + "," + metric_name(r->row.metric) + "," +
             scope_name(r->row.scope) + "," + fmt_double(r->report.rmse) + "," +
             fmt_double(r->report.mae) + "\n";
      json jr;
      jr["architecture"] = arch_name(r->row.architecture);
      jr["use_spatial"] = r->row.use_spatial;
      jr["correlation"] = metric_name(r->row.metric);
      jr["scope"] = scope_name(r->row.scope);
      jr["rmse"] = r->report.rmse;
      jr["mae"] = r->report.mae;
      rows.push_back(std::move(jr));
    }
    {
      std::ofstream os(at("leaderboard.csv"), std::ios::binary);
      if (!os.good()) throw DataError("cannot open leaderboard.csv for writing");
      os << csv;
    }
    write_json_file(rows, at("leaderboard.json"));
    man.mark("leaderboard", {"leaderboard.csv", "leaderboard.json"});
    std::printf("[leaderboard] %zu rows\n", order.size());
  }

  // cluster analysis on the raw panel
  bool have_assignment = false;
  FeatureMatrix feats;
  Assignment asg;
  try {
    feats = stock_features(raw, p.split.train_days);
    asg = kmeans(feats, cfg.cluster_k, cfg.cluster_seed);
    have_assignment = true;
    if (man.done("cluster")) {
      std::printf("[cluster] skip (done)\n");
    } else {
      write_clusters_csv(feats, asg, at("clusters.csv"));
      std::vector<std::string> artifacts{"clusters.csv"};
      const int n = static_cast<int>(feats.values.rows());
      const int hi = std::min(cfg.scan_max, n - 1);
      if (hi >= 2) {
        write_scan_csv(scan_rows(feats, 2, hi, cfg.cluster_seed), at("cluster_scan.csv"));
        artifacts.push_back("cluster_scan.csv");
      }
      write_scatter_csv(feats, pca2(feats), asg, at("cluster_scatter.csv"));
      artifacts.push_back("cluster_scatter.csv");
      man.mark("cluster", artifacts);
      std::printf("[cluster] k %d, silhouette %s\n", cfg.cluster_k,
                  fmt_double(silhouette(feats, asg)).c_str());
    }
  } catch (const DataError& e) {
    man.fail("cluster", e.what(), kExitData);
    std::printf("[cluster] failed: %s\n", e.what());
  } catch (const std::invalid_argument& e) {
    man.fail("cluster", e.what(), kExitConfig);
    std::printf("[cluster] failed: %s\n", e.what());
  }

  // error comparison between the two clusters, on the best row
  if (man.done("compare")) {
    std::printf("[compare] skip (done)\n");
  } else if (!have_assignment) {
    man.skip_stage("compare", "cluster stage failed");
    std::printf("[compare] skip (cluster stage failed)\n");
  } else if (cfg.cluster_k != 2) {
    man.skip_stage("compare",
                   "comparison needs k=2, config has k=" + std::to_string(cfg.cluster_k));
    std::printf("[compare] skip (k != 2)\n");
  } else if (results.empty()) {
    man.skip_stage("compare", "no evaluated rows");
    std::printf("[compare] skip (no evaluated rows)\n");
  } else {
    const RowOutcome* best = &results.front();
    for (const RowOutcome& r : results)
      if (r.report.rmse < best->report.rmse) best = &r;
    try {
      const ClusterComparison cmp = compare_clusters(best->report, asg.labels, cfg.rank_based);
      const std::string tag = row_tag(best->row);
      std::string csv =
          "row,label_a,label_b,stocks_a,stocks_b,cells_a,cells_b,"
          "rmse_a,rmse_b,p_rmse,mae_a,mae_b,p_mae\n";
      csv += tag + "," + std::to_string(cmp.label_a) + "," + std::to_string(cmp.label_b) +
             "," + std::to_string(cmp.stocks_a) + "," + std::to_string(cmp.stocks_b) + "," +
             std::to_string(cmp.cells_a) + "," + std::to_string(cmp.cells_b) + "," +
             fmt_double(cmp.rmse_a) + "," + fmt_double(cmp.rmse_b) + "," +
             fmt_double(cmp.p_rmse) + "," + fmt_double(cmp.mae_a) + "," +
             fmt_double(cmp.mae_b) + "," + fmt_double(cmp.p_mae) + "\n";
      {
        std::ofstream os(at("comparison.csv"), std::ios::binary);
        if (!os.good()) throw DataError("cannot open comparison.csv for writing");
        os << csv;
      }
      json j;
      j["row"] = tag;
      j["label_a"] = cmp.label_a;
      j["label_b"] = cmp.label_b;
      j["stocks_a"] = cmp.stocks_a;
      j["stocks_b"] = cmp.stocks_b;
      j["cells_a"] = cmp.cells_a;
      j["cells_b"] = cmp.cells_b;
      j["rmse_a"] = cmp.rmse_a;
      j["rmse_b"] = cmp.rmse_b;
      j["p_rmse"] = cmp.p_rmse;
      j["mae_a"] = cmp.mae_a;
      j["mae_b"] = cmp.mae_b;
      j["p_mae"] = cmp.p_mae;
      write_json_file(j, at("comparison.json"));
      man.mark("compare", {"comparison.csv", "comparison.json"});
      std::printf("[compare] %s: p_rmse %s, p_mae %s\n", tag.c_str(),
                  fmt_double(cmp.p_rmse).c_str(), fmt_double(cmp.p_mae).c_str());
    } catch (const std::invalid_argument& e) {
      man.fail("compare", e.what(), kExitEval);
      std::printf("[compare] failed: %s\n", e.what());
    }
  }

  if (man.failures().empty()) {
    std::printf("pipeline done\n");
    return kExitOk;
  }
  std::printf("pipeline finished with %zu failure(s):\n", man.failures().size());
  for (const Manifest::Failure& f : man.failures())
    std::printf("  %s: %s\n", f.stage.c_str(), f.error.c_str());
  return man.failures().front().exit_code;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"correlation-graph transformer forecasting pipeline"};
  app.require_subcommand(1);
  app.footer(
      "environment: DGT_SEED overrides the training seed; DGT_THREADS caps worker threads");

  std::string in_input, in_out, in_ratios = "0.8,0.1,0.1";
  int in_block = 64;
  CLI::App* ingest = app.add_subcommand("ingest", "load a price CSV into a panel file");
  ingest->add_option("--input", in_input, "price CSV: header date,TICKER,...")->required();
  ingest->add_option("--block-len", in_block, "days per block (default 64)");
  ingest->add_option("--ratios", in_ratios, "train,val,test block ratios");
  ingest->add_option("--out", in_out, "panel file to write")->required();

  std::string co_panel, co_metric, co_scope, co_out;
  int co_heads = 4, co_bins = 16, co_window = 64;
  CLI::App* corr = app.add_subcommand("corr", "build correlation graphs from a panel");
  corr->add_option("--panel", co_panel, "panel file from ingest");
  corr->add_option("--metric", co_metric, "pearson|spearman|kendall|mutual_info");
  corr->add_option("--scope", co_scope, "global|local|dual");
  corr->add_option("--heads", co_heads, "attention heads the graphs will serve");
  corr->add_option("--bins", co_bins, "histogram bins for mutual_info");
  corr->add_option("--window", co_window, "training window length (must match train)");
  corr->add_option("--out", co_out, "graphs file to write");

  std::string ct_graphs, ct_panel, ct_ticker, ct_out;
  int ct_k = 3;
  CLI::App* corr_top = corr->add_subcommand("top", "most correlated tickers for one ticker");
  corr_top->add_option("--graphs", ct_graphs, "graphs file")->required();
  corr_top->add_option("--panel", ct_panel, "panel file (labels the rows)")->required();
  corr_top->add_option("--ticker", ct_ticker, "ticker to query")->required();
  corr_top->add_option("--k", ct_k, "how many neighbours");
  corr_top->add_option("--out", ct_out, "CSV file (default: stdout)");

  TrainOpts to;
  CLI::App* train = app.add_subcommand("train", "grid-search and train one model");
  train->add_option("--panel", to.panel, "panel file")->required();
  train->add_option("--graphs", to.graphs, "graphs file (required with --spatial)");
  train->add_option("--arch", to.arch, "dgt|gru");
  train->add_flag("--spatial", to.spatial, "enable the graph attention prior");
  train->add_option("--metric", to.metric, "graph metric (with --spatial)");
  train->add_option("--scope", to.scope, "graph scope (with --spatial)");
  train->add_option("--lr-grid", to.lr_grid, "comma-separated learning rates");
  train->add_option("--epochs", to.epochs, "training epochs");
  train->add_option("--eval-every", to.eval_every, "validation cadence in epochs");
  train->add_option("--seed", to.seed, "run seed");
  train->add_option("--d", to.d, "embedding width");
  train->add_option("--heads", to.heads, "attention heads");
  train->add_option("--window", to.window, "input window length");
  train->add_option("--depth", to.depth, "block pairs");
  train->add_option("--out", to.out, "checkpoint file to write")->required();
  train->add_option("--log", to.log, "training log CSV (default: <out>.log.csv)");

  std::string ev_ckpt, ev_panel, ev_graphs, ev_out, ev_csv;
  bool ev_denorm = false;
  CLI::App* eval = app.add_subcommand("eval", "backtest a checkpoint on the test split");
  eval->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  eval->add_option("--panel", ev_panel, "panel file")->required();
  eval->add_option("--graphs", ev_graphs, "graphs file (required for spatial checkpoints)");
  eval->add_flag("--denormalized", ev_denorm, "report in currency units instead of z-units");
  eval->add_option("--out", ev_out, "report JSON to write")->required();
  eval->add_option("--csv", ev_csv, "per-cell CSV (default: <out>.cells.csv)");

  std::string cl_panel, cl_out, cl_scatter;
  int cl_k = 2;
  std::uint64_t cl_seed = 7;
  CLI::App* cluster = app.add_subcommand("cluster", "group stocks by return features");
  cluster->add_option("--panel", cl_panel, "raw panel file");
  cluster->add_option("--k", cl_k, "cluster count");
  cluster->add_option("--seed", cl_seed, "k-means seed");
  cluster->add_option("--out", cl_out, "ticker,cluster CSV to write");
  cluster->add_option("--scatter", cl_scatter, "also write a 2-D projection CSV");

  std::string cs_range = "2..10", cs_out;
  CLI::App* cluster_scan = cluster->add_subcommand("scan", "sweep k and report quality");
  cluster_scan->add_option("--panel", cl_panel, "raw panel file")->required();
  cluster_scan->add_option("--k-range", cs_range, "inclusive range, e.g. 2..10");
  cluster_scan->add_option("--seed", cl_seed, "base seed for the per-k runs");
  cluster_scan->add_option("--out", cs_out, "k,silhouette,inertia CSV to write")->required();

  std::string cv_config;
  CLI::App* config = app.add_subcommand("config", "configuration helpers");
  config->require_subcommand(1);
  CLI::App* config_validate =
      config->add_subcommand("validate", "check a pipeline config file");
  config_validate->add_option("--config", cv_config, "config JSON")->required();

  std::string pl_config;
  CLI::App* pipeline =
      app.add_subcommand("pipeline", "run ingest, graphs, training grid, backtests, clustering");
  pipeline->add_option("--config", pl_config, "config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (ingest->parsed()) {
      cmd_ingest(in_input, in_block, in_ratios, in_out);
    } else if (corr->parsed()) {
      if (corr_top->parsed()) {
        cmd_corr_top(ct_graphs, ct_panel, ct_ticker, ct_k, ct_out);
      } else {
        if (co_panel.empty() || co_out.empty())
          throw ConfigError("corr: --panel and --out are required");
        cmd_corr_build(co_panel, co_metric, co_scope, co_heads, co_bins, co_window, co_out);
      }
    } else if (train->parsed()) {
      cmd_train(to);
    } else if (eval->parsed()) {
      cmd_eval(ev_ckpt, ev_panel, ev_graphs, ev_denorm, ev_out, ev_csv);
    } else if (cluster->parsed()) {
      if (cluster_scan->parsed()) {
        cmd_cluster_scan(cl_panel, cs_range, cl_seed, cs_out);
      } else {
        if (cl_panel.empty() || cl_out.empty())
          throw ConfigError("cluster: --panel and --out are required");
        cmd_cluster(cl_panel, cl_k, cl_seed, cl_out, cl_scatter);
      }
    } else if (config->parsed()) {
      cmd_config_validate(cv_config);
    } else if (pipeline->parsed()) {
      return cmd_pipeline(pl_config);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const EvalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitEval;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
}

}  // namespace dgt
