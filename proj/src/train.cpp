#include "dgt/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <type_traits>

namespace dgt {

void validate_config(const TrainConfig& config) {
  if (config.lr_grid.empty()) throw ConfigError("lr_grid must not be empty");
  for (double lr : config.lr_grid)
    if (!(lr > 0.0)) throw ConfigError("lr_grid entries must be positive, got " + fmt_double(lr));
  if (config.eval_every < 1) throw ConfigError("eval_every must be at least 1");
  if (config.epochs < config.eval_every)
    throw ConfigError("epochs (" + std::to_string(config.epochs) +
                      ") must be at least eval_every (" + std::to_string(config.eval_every) + ")");
  if (!(config.beta1 >= 0 && config.beta1 < 1) || !(config.beta2 >= 0 && config.beta2 < 1) ||
      !(config.adam_eps > 0))
    throw ConfigError("Adam constants out of range");
}

AdamState make_adam_state(const std::vector<Matrix>& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const Matrix& p : params) {
    s.m.push_back(Matrix::Zero(p.rows(), p.cols()));
    s.v.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  return s;
}

void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads,
               const std::vector<std::string>& names, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
  if (lr < 0.0) throw std::invalid_argument("adam_step: negative learning rate");
  state.step += 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.rows() != params[i].rows() || g.cols() != params[i].cols())
      throw std::invalid_argument("adam_step: gradient shape mismatch at index " +
                                  std::to_string(i));
    if (!g.allFinite()) {
      const std::string label = i < names.size() ? names[i] : std::to_string(i);
      throw NonFiniteError("adam_step: non-finite gradient for " + label);
    }
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g.cwiseProduct(g);
    params[i].array() -= lr * (state.m[i].array() / c1) /
                         ((state.v[i].array() / c2).sqrt() + eps);
  }
}

NodeId mse_loss(Tape& t, NodeId pred, const Matrix& target) {
  const Matrix& p = t.value(pred);
  if (p.rows() != target.rows() || p.cols() != target.cols())
    throw std::invalid_argument("mse_loss: prediction is " + std::to_string(p.rows()) + "x" +
                                std::to_string(p.cols()) + ", target is " +
                                std::to_string(target.rows()) + "x" +
                                std::to_string(target.cols()));
  return t.sum_sq_err(pred, t.constant(target));
}

Matrix window_targets(const PricePanel& panel, const Window& w) {
  Matrix out(static_cast<int>(w.targets.size()), panel.n());
  for (std::size_t j = 0; j < w.targets.size(); ++j)
    out.row(static_cast<int>(j)) = panel.prices.col(w.targets[j]).transpose();
  return out;
}

namespace {

NodeId forward_any(Tape& t, const DgtParamsT<NodeId>& nodes, const Matrix& win,
                   const GraphSet* graphs, IndexRange span, bool use_spatial) {
  return dgt_forward(t, nodes, win, graphs, span, use_spatial);
}
NodeId forward_any(Tape& t, const GruParamsT<NodeId>& nodes, const Matrix& win,
                   const GraphSet*, IndexRange, bool) {
  return gru_forward(t, nodes, win);
}

template <typename Params>
WindowPass window_pass_impl(const Params& params, const PricePanel& panel, const Window& w,
                            const GraphSet* graphs, bool use_spatial, bool with_grads) {
  Tape t;
  auto nodes = load_params(t, params);
  const Matrix win = panel.prices.middleCols(w.start, w.len);
  NodeId preds = forward_any(t, nodes, win, graphs, w.span(), use_spatial);
  const Matrix target = window_targets(panel, w);
  NodeId loss = mse_loss(
      t, t.slice(preds, 0, static_cast<int>(target.rows()), 0, panel.n()), target);

  WindowPass out;
  out.sse = t.value(loss)(0, 0);
  out.cells = target.size();
  if (with_grads) {
    t.backward(loss);
    for (NodeId id : flatten_nodes(nodes)) out.grads.push_back(t.grad(id));
  }
  return out;
}

struct ValMetrics {
  double rmse = 0.0;
  double mae = 0.0;
};

// Many-to-one validation: only the final prediction row of each window is
// scored, against that window's single target day.
template <typename Params>
ValMetrics val_metrics(const Params& params, const PricePanel& panel, const WindowSet& ws,
                       const GraphSet* graphs, bool use_spatial) {
  double sq = 0.0;
  double ab = 0.0;
  std::int64_t cells = 0;
  for (const Window& w : ws.windows) {
    Tape t;
    auto nodes = load_params(t, params);
    const Matrix win = panel.prices.middleCols(w.start, w.len);
    const Matrix preds = t.value(forward_any(t, nodes, win, graphs, w.span(), use_spatial));
    const Eigen::RowVectorXd err =
        preds.row(w.len - 1) - panel.prices.col(w.targets.at(0)).transpose();
    sq += err.squaredNorm();
    ab += err.cwiseAbs().sum();
    cells += err.size();
  }
  ValMetrics v;
  v.rmse = std::sqrt(sq / static_cast<double>(cells));
  v.mae = ab / static_cast<double>(cells);
  return v;
}

template <typename Params>
TrainResult train_impl(const TrainConfig& config, const PricePanel& panel,
                       const SplitSpec& split, const NormStats& stats, const GraphSet* graphs,
                       double lr, Params params) {
  const BlockPartition part = partition_blocks(panel, panel.block_len);
  const WindowSet train_ws =
      make_windows(panel, part, split.train_blocks, config.dims.window, Mode::kManyToMany);
  const WindowSet val_ws =
      make_windows(panel, split.val_days, config.dims.window, Mode::kManyToOne);
  if (train_ws.windows.empty()) throw DataError("train_model: no training windows");
  if (val_ws.windows.empty()) throw DataError("train_model: no validation windows");

  std::vector<std::string> names;
  params.for_each([&names](const std::string& n, const Matrix&) { names.push_back(n); });
  std::vector<Matrix> flat = flatten_params(params);
  AdamState state = make_adam_state(flat);

  TrainResult result;
  std::vector<Matrix> best_flat;
  auto record_eval = [&](int epoch, const ValMetrics& v) {
    if (v.rmse < result.checkpoint.best_val_rmse) {
      result.checkpoint.best_val_rmse = v.rmse;
      result.checkpoint.best_epoch = epoch;
      best_flat = flat;
    }
  };

  try {
    double sse = 0.0;
    std::int64_t cells = 0;
    for (const Window& w : train_ws.windows) {
      WindowPass p = window_pass_impl(params, panel, w, graphs, config.use_spatial, false);
      sse += p.sse;
      cells += p.cells;
    }
    const ValMetrics v0 = val_metrics(params, panel, val_ws, graphs, config.use_spatial);
    record_eval(0, v0);
    result.log.push_back({0, sse / static_cast<double>(cells), v0.rmse, v0.mae});
  } catch (const NonFiniteError& e) {
    throw DivergenceError("lr " + fmt_double(lr) + " diverged at epoch 0: " + e.what(), 0);
  }

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochLog row;
    row.epoch = epoch;
    try {
      double sse = 0.0;
      std::int64_t cells = 0;
      for (const Window& w : train_ws.windows) {
        WindowPass p = window_pass_impl(params, panel, w, graphs, config.use_spatial, true);
        sse += p.sse;
        cells += p.cells;
        adam_step(flat, p.grads, names, state, lr, config.beta1, config.beta2,
                  config.adam_eps);
        assign_params(params, flat);
      }
      row.train_loss = sse / static_cast<double>(cells);
      if (epoch % config.eval_every == 0 || epoch == config.epochs) {
        const ValMetrics v = val_metrics(params, panel, val_ws, graphs, config.use_spatial);
        row.val_rmse = v.rmse;
        row.val_mae = v.mae;
        record_eval(epoch, v);
      }
    } catch (const NonFiniteError& e) {
      throw DivergenceError("lr " + fmt_double(lr) + " diverged at epoch " +
                                std::to_string(epoch) + ": " + e.what(),
                            epoch);
    }
    result.log.push_back(row);
  }

  assign_params(params, best_flat);
  Checkpoint& ck = result.checkpoint;
  ck.config = config;
  ck.lr = lr;
  if constexpr (std::is_same_v<Params, DgtParams>)
    ck.dgt = std::move(params);
  else
    ck.gru = std::move(params);
  ck.stats = stats;
  ck.tickers = panel.tickers;
  return result;
}

}  // namespace

WindowPass window_pass(const DgtParams& params, const PricePanel& panel, const Window& w,
                       const GraphSet* graphs, bool use_spatial, bool with_grads) {
  return window_pass_impl(params, panel, w, graphs, use_spatial, with_grads);
}
WindowPass window_pass(const GruParams& params, const PricePanel& panel, const Window& w,
                       bool with_grads) {
  return window_pass_impl(params, panel, w, nullptr, false, with_grads);
}

const DgtParams& Checkpoint::dgt_params() const {
  if (config.architecture != Arch::kDgt)
    throw ConfigError("checkpoint holds a gru model, not dgt");
  return dgt;
}
const GruParams& Checkpoint::gru_params() const {
  if (config.architecture != Arch::kGru)
    throw ConfigError("checkpoint holds a dgt model, not gru");
  return gru;
}

TrainResult train_model(const TrainConfig& config, const PricePanel& panel,
                        const SplitSpec& split, const NormStats& stats, const GraphSet* graphs,
                        double lr) {
  validate_config(config);
  if (!(lr > 0.0)) throw ConfigError("train_model: learning rate must be positive");
  if (!panel.normalized) throw DataError("train_model: panel must be normalized");
  if (stats.mean.size() != panel.n())
    throw DataError("train_model: normalization stats cover " +
                    std::to_string(stats.mean.size()) + " stocks, panel has " +
                    std::to_string(panel.n()));
  if (graphs && config.use_spatial) {
    if (graphs->scope != config.scope)
      throw ConfigError(std::string("graph set scope ") + scope_name(graphs->scope) +
                        " does not match configured scope " + scope_name(config.scope));
    if (graphs->metric != config.metric)
      throw ConfigError(std::string("graph set metric ") + metric_name(graphs->metric) +
                        " does not match configured metric " + metric_name(config.metric));
  }

  if (config.architecture == Arch::kDgt)
    return train_impl(config, panel, split, stats, graphs, lr,
                      init_dgt_params(config.dims, panel.n(), config.seed));
  return train_impl(config, panel, split, stats, nullptr, lr,
                    init_gru_params(config.dims.d, config.seed));
}

std::size_t best_entry(const std::vector<GridEntry>& entries) {
  std::size_t best = entries.size();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].diverged) continue;
    if (best == entries.size() || entries[i].val_rmse < entries[best].val_rmse ||
        (entries[i].val_rmse == entries[best].val_rmse && entries[i].lr < entries[best].lr))
      best = i;
  }
  if (best == entries.size()) throw std::invalid_argument("best_entry: every entry diverged");
  return best;
}

GridResult grid_search(const TrainConfig& config, const PricePanel& panel,
                       const SplitSpec& split, const NormStats& stats, const GraphSet* graphs) {
  validate_config(config);
  std::vector<double> grid = config.lr_grid;
  std::sort(grid.begin(), grid.end());

  GridResult result;
  std::vector<TrainResult> runs(grid.size());
  int last_fail_epoch = -1;
  for (double lr : grid) {
    GridEntry entry;
    entry.lr = lr;
    try {
      runs[result.entries.size()] = train_model(config, panel, split, stats, graphs, lr);
      entry.val_rmse = runs[result.entries.size()].checkpoint.best_val_rmse;
    } catch (const DivergenceError& e) {
      entry.diverged = true;
      entry.diverged_epoch = e.epoch;
      last_fail_epoch = e.epoch;
    }
    result.entries.push_back(entry);
  }

  bool any_ok = false;
  for (const GridEntry& e : result.entries) any_ok |= !e.diverged;
  if (!any_ok)
    throw DivergenceError("grid_search: every learning rate diverged", last_fail_epoch);

  const std::size_t win = best_entry(result.entries);
  result.best_lr = result.entries[win].lr;
  result.best = std::move(runs[win]);
  return result;
}

// ---- checkpoint persistence ------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'G', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename Params>
void put_tensors(std::ostream& os, const Params& params) {
  std::uint32_t count = 0;
  params.for_each([&count](const std::string&, const Matrix&) { ++count; });
  put_u32(os, count);
  params.for_each([&os](const std::string& name, const Matrix& m) {
    put_str(os, name);
    put_matrix(os, m);
  });
}

template <typename Params>
void get_tensors(std::istream& is, Params& params) {
  std::uint32_t count = 0;
  params.for_each([&count](const std::string&, const Matrix&) { ++count; });
  const std::uint32_t stored = get_u32(is, "checkpoint tensor count");
  if (stored != count)
    throw DataError("checkpoint holds " + std::to_string(stored) + " tensors, expected " +
                    std::to_string(count));
  params.for_each([&is](const std::string& name, Matrix& m) {
    const std::string stored_name = get_str(is, "checkpoint tensor name");
    if (stored_name != name)
      throw DataError("checkpoint tensor order mismatch: expected " + name + ", found " +
                      stored_name);
    m = get_matrix(is, static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
                   name.c_str());
  });
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ostringstream buf(std::ios::binary);
  buf.write(kMagic, 4);
  put_u32(buf, kVersion);

  const TrainConfig& c = ckpt.config;
  put_u8(buf, static_cast<std::uint8_t>(c.architecture));
  put_u8(buf, c.use_spatial ? 1 : 0);
  put_u8(buf, static_cast<std::uint8_t>(c.metric));
  put_u8(buf, static_cast<std::uint8_t>(c.scope));
  put_u32(buf, static_cast<std::uint32_t>(c.lr_grid.size()));
  for (double lr : c.lr_grid) put_f64(buf, lr);
  put_u32(buf, static_cast<std::uint32_t>(c.epochs));
  put_u32(buf, static_cast<std::uint32_t>(c.eval_every));
  put_u64(buf, c.seed);
  put_u32(buf, static_cast<std::uint32_t>(c.dims.d));
  put_u32(buf, static_cast<std::uint32_t>(c.dims.heads));
  put_u32(buf, static_cast<std::uint32_t>(c.dims.window));
  put_u32(buf, static_cast<std::uint32_t>(c.dims.depth));
  put_f64(buf, c.beta1);
  put_f64(buf, c.beta2);
  put_f64(buf, c.adam_eps);

  put_f64(buf, ckpt.lr);
  put_f64(buf, ckpt.best_val_rmse);
  put_u32(buf, static_cast<std::uint32_t>(ckpt.best_epoch));

  put_u32(buf, static_cast<std::uint32_t>(ckpt.stats.span.begin));
  put_u32(buf, static_cast<std::uint32_t>(ckpt.stats.span.end));
  const auto n = static_cast<std::uint32_t>(ckpt.stats.mean.size());
  put_u32(buf, n);
  for (std::uint32_t i = 0; i < n; ++i) put_f64(buf, ckpt.stats.mean(i));
  for (std::uint32_t i = 0; i < n; ++i) put_f64(buf, ckpt.stats.stddev(i));

  put_u32(buf, static_cast<std::uint32_t>(ckpt.tickers.size()));
  for (const std::string& t : ckpt.tickers) put_str(buf, t);

  if (c.architecture == Arch::kDgt) {
    put_u32(buf, static_cast<std::uint32_t>(ckpt.dgt.n_stocks));
    put_f64(buf, ckpt.dgt.lambda_init);
    put_tensors(buf, ckpt.dgt);
  } else {
    put_u32(buf, static_cast<std::uint32_t>(ckpt.gru.d));
    put_tensors(buf, ckpt.gru);
  }

  const std::string payload = buf.str();
  const std::uint64_t sum =
      fnv1a64(reinterpret_cast<const unsigned char*>(payload.data()), payload.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  put_u64(out, sum);
  out.flush();
  if (!out) throw DataError("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw DataError("checkpoint " + path + " is truncated");

  const std::string payload = bytes.substr(0, bytes.size() - 8);
  std::uint64_t stored_sum = 0;
  std::memcpy(&stored_sum, bytes.data() + bytes.size() - 8, 8);
  const std::uint64_t sum =
      fnv1a64(reinterpret_cast<const unsigned char*>(payload.data()), payload.size());
  if (sum != stored_sum) throw DataError("checkpoint " + path + " failed its checksum");

  std::istringstream is(payload, std::ios::binary);
  char magic[4];
  get_bytes(is, magic, 4, "checkpoint magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(path + " is not a checkpoint file");
  const std::uint32_t version = get_u32(is, "checkpoint version");
  if (version != kVersion)
    throw DataError("checkpoint version " + std::to_string(version) + " unsupported");

  Checkpoint ck;
  TrainConfig& c = ck.config;
  const std::uint8_t arch = get_u8(is, "architecture");
  if (arch > 1) throw DataError("checkpoint architecture tag out of range");
  c.architecture = static_cast<Arch>(arch);
  c.use_spatial = get_u8(is, "use_spatial") != 0;
  const std::uint8_t metric = get_u8(is, "metric");
  if (metric > static_cast<std::uint8_t>(Metric::kNone))
    throw DataError("checkpoint metric tag out of range");
  c.metric = static_cast<Metric>(metric);
  const std::uint8_t scope = get_u8(is, "scope");
  if (scope > static_cast<std::uint8_t>(Scope::kNone))
    throw DataError("checkpoint scope tag out of range");
  c.scope = static_cast<Scope>(scope);
  c.lr_grid.resize(get_u32(is, "lr grid size"));
  for (double& lr : c.lr_grid) lr = get_f64(is, "lr grid entry");
  c.epochs = static_cast<int>(get_u32(is, "epochs"));
  c.eval_every = static_cast<int>(get_u32(is, "eval_every"));
  c.seed = get_u64(is, "seed");
  c.dims.d = static_cast<int>(get_u32(is, "dims.d"));
  c.dims.heads = static_cast<int>(get_u32(is, "dims.heads"));
  c.dims.window = static_cast<int>(get_u32(is, "dims.window"));
  c.dims.depth = static_cast<int>(get_u32(is, "dims.depth"));
  c.beta1 = get_f64(is, "beta1");
  c.beta2 = get_f64(is, "beta2");
  c.adam_eps = get_f64(is, "adam_eps");

  ck.lr = get_f64(is, "lr");
  ck.best_val_rmse = get_f64(is, "best_val_rmse");
  ck.best_epoch = static_cast<int>(get_u32(is, "best_epoch"));

  ck.stats.span.begin = static_cast<int>(get_u32(is, "stats span begin"));
  ck.stats.span.end = static_cast<int>(get_u32(is, "stats span end"));
  const std::uint32_t n = get_u32(is, "stats size");
  ck.stats.mean.resize(n);
  ck.stats.stddev.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) ck.stats.mean(i) = get_f64(is, "stats mean");
  for (std::uint32_t i = 0; i < n; ++i) ck.stats.stddev(i) = get_f64(is, "stats stddev");

  ck.tickers.resize(get_u32(is, "ticker count"));
  for (std::string& t : ck.tickers) t = get_str(is, "ticker");

  if (c.architecture == Arch::kDgt) {
    const int n_stocks = static_cast<int>(get_u32(is, "n_stocks"));
    const double lambda_init = get_f64(is, "lambda_init");
    ck.dgt = init_dgt_params(c.dims, n_stocks, 0);  // shape only; tensors overwritten
    ck.dgt.lambda_init = lambda_init;
    get_tensors(is, ck.dgt);
  } else {
    const int d = static_cast<int>(get_u32(is, "gru width"));
    ck.gru = init_gru_params(d, 0);
    get_tensors(is, ck.gru);
  }
  return ck;
}

void write_train_log(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "epoch,train_loss,val_rmse,val_mae\n";
  for (const EpochLog& row : log) {
    out << row.epoch << ',' << fmt_double(row.train_loss) << ',';
    if (!std::isnan(row.val_rmse)) out << fmt_double(row.val_rmse);
    out << ',';
    if (!std::isnan(row.val_mae)) out << fmt_double(row.val_mae);
    out << '\n';
  }
  if (!out) throw DataError("short write to " + path);
}

}  // namespace dgt
