#pragma once

// Command-line surface: ingest, corr (+ corr top), train, eval, cluster
// (+ cluster scan), config validate, and the all-in-one pipeline driver.

#include "dgt/model.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dgt {

// Process exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;
inline constexpr int kExitEval = 5;

// One experiment: an architecture plus its graph wiring; one leaderboard row.
struct GridRow {
  Arch architecture = Arch::kGru;
  bool use_spatial = false;
  Metric metric = Metric::kNone;
  Scope scope = Scope::kNone;
};

// Artifact key for a row: "gru", "dgt", or "dgt_<metric>_<scope>".
std::string row_tag(const GridRow& row);

// Pipeline configuration. JSON schema with defaults:
// {
//   "input_csv": "prices.csv",                     required
//   "work_dir": "out",                             required
//   "ingest": {"block_len": 64, "ratios": [0.8, 0.1, 0.1]},
//   "grid": [{"architecture": "dgt", "use_spatial": true,
//             "metric": "kendall", "scope": "global"}, ...],   required
//   "train": {"lr_grid": [0.01, 0.1], "epochs": 100, "eval_every": 10,
//             "seed": 7,
//             "dims": {"d": 32, "heads": 4, "window": 64, "depth": 1}},
//   "cluster": {"k": 2, "seed": 7, "scan_max": 10, "rank_based": false}
// }
// Unknown keys are rejected so typos fail loudly.
struct RunConfig {
  std::string input_csv;
  std::string work_dir;
  int block_len = 64;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::vector<GridRow> grid;
  std::vector<double> lr_grid{0.01, 0.1};
  int epochs = 100;
  int eval_every = 10;
  std::uint64_t seed = 7;
  ModelDims dims;
  int cluster_k = 2;
  std::uint64_t cluster_seed = 7;
  int scan_max = 10;
  bool rank_based = false;
};

// Parses a config file and applies the DGT_SEED override to the train seed.
// ConfigError on malformed JSON, schema violations, or a missing input file.
RunConfig load_run_config(const std::string& path);

// Invariants shared by `config validate` and `pipeline`: non-empty grid with
// no duplicate rows; spatial rows carry metric and scope, plain rows carry
// neither, GRU rows are never spatial; positive lr grid;
// epochs >= eval_every >= 1; d divisible by heads; window <= block_len;
// positive ratios summing to 1; cluster k >= 2. Throws ConfigError.
void validate_run_config(const RunConfig& config);

int run_cli(int argc, char** argv);

}  // namespace dgt
