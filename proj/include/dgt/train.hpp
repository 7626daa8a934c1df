#pragma once

// Teacher-forcing training loop: per-window MSE, Adam updates, periodic
// many-to-one validation, best-checkpoint retention, and a learning-rate grid
// search. One run is strictly sequential and fully determined by (seed,
// config, data).

#include "dgt/model.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace dgt {

struct TrainConfig {
  Arch architecture = Arch::kDgt;
  bool use_spatial = true;
  Metric metric = Metric::kPearson;  // kNone for runs without a graph prior
  Scope scope = Scope::kGlobal;      // kNone likewise
  std::vector<double> lr_grid{0.01, 0.1};
  int epochs = 100;
  int eval_every = 10;
  std::uint64_t seed = 7;
  ModelDims dims;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

// ConfigError unless lr_grid is non-empty and positive and
// epochs >= eval_every >= 1.
void validate_config(const TrainConfig& config);

struct AdamState {
  std::vector<Matrix> m, v;  // shapes mirror the flattened parameters
  std::int64_t step = 0;
};

AdamState make_adam_state(const std::vector<Matrix>& params);

// Standard bias-corrected Adam, in place, one shared step counter. names
// label gradient diagnostics only. lr = 0 is a legal no-op update.
void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads,
               const std::vector<std::string>& names, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Sum of squared errors against a constant target; shapes must match exactly.
NodeId mse_loss(Tape& t, NodeId pred, const Matrix& target);

// Actual values for a window's target days, one row per target, one column
// per stock; row j aligns with prediction row j.
Matrix window_targets(const PricePanel& panel, const Window& w);

// One teacher-forcing pass over one window: sum of squared errors over the
// target cells, plus the gradient in flatten order when requested.
struct WindowPass {
  double sse = 0.0;
  std::int64_t cells = 0;
  std::vector<Matrix> grads;
};
WindowPass window_pass(const DgtParams& params, const PricePanel& panel, const Window& w,
                       const GraphSet* graphs, bool use_spatial, bool with_grads);
WindowPass window_pass(const GruParams& params, const PricePanel& panel, const Window& w,
                       bool with_grads);

struct Checkpoint {
  TrainConfig config;
  double lr = 0.0;  // the rate that produced these parameters
  DgtParams dgt;    // filled for the architecture in config; the other is empty
  GruParams gru;
  NormStats stats;
  std::vector<std::string> tickers;
  double best_val_rmse = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  // ConfigError when the checkpoint holds the other architecture.
  const DgtParams& dgt_params() const;
  const GruParams& gru_params() const;
};

struct EpochLog {
  int epoch = 0;           // 0 is the pre-training evaluation
  double train_loss = 0;   // pooled per-cell MSE over the epoch's windows
  double val_rmse = std::numeric_limits<double>::quiet_NaN();  // NaN off-schedule
  double val_mae = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;  // epoch 0 first, then one row per epoch
};

// Trains one model at one learning rate. Validation runs at epoch 0, at every
// eval_every-th epoch, and at the final epoch; the best (earliest on ties)
// validation RMSE decides the returned parameters. Non-finite values anywhere
// in an epoch raise DivergenceError carrying that epoch.
TrainResult train_model(const TrainConfig& config, const PricePanel& panel,
                        const SplitSpec& split, const NormStats& stats, const GraphSet* graphs,
                        double lr);

struct GridEntry {
  double lr = 0.0;
  bool diverged = false;
  int diverged_epoch = -1;
  double val_rmse = std::numeric_limits<double>::infinity();
};

struct GridResult {
  double best_lr = 0.0;
  TrainResult best;
  std::vector<GridEntry> entries;  // ascending by lr
};

// Index of the winning entry: lowest validation RMSE, ties to the smaller lr.
// Caller guarantees at least one non-diverged entry.
std::size_t best_entry(const std::vector<GridEntry>& entries);

// One train_model run per grid rate; divergence disqualifies a rate rather
// than failing the search. DivergenceError only if every rate diverged.
GridResult grid_search(const TrainConfig& config, const PricePanel& panel,
                       const SplitSpec& split, const NormStats& stats, const GraphSet* graphs);

// Binary checkpoint: magic DGTC, version, config block, norm stats, tickers,
// named tensor directory, trailing FNV-1a checksum. Round-trips bit-exactly.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// CSV `epoch,train_loss,val_rmse,val_mae`; off-schedule cells are left blank.
void write_train_log(const std::vector<EpochLog>& log, const std::string& path);

}  // namespace dgt
