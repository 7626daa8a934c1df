#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dgt/train.hpp"
#include "fixtures.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using dgt::AdamState;
using dgt::Arch;
using dgt::Checkpoint;
using dgt::GridEntry;
using dgt::Matrix;
using dgt::ModelDims;
using dgt::NodeId;
using dgt::Rng;
using dgt::Tape;
using dgt::TrainConfig;
using dgt::TrainResult;
using dgt::Window;

namespace {

Matrix rand_mat(Rng& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

TrainConfig small_config(Arch arch, bool spatial) {
  TrainConfig c;
  c.architecture = arch;
  c.use_spatial = spatial;
  c.metric = spatial ? dgt::Metric::kPearson : dgt::Metric::kNone;
  c.scope = spatial ? dgt::Scope::kGlobal : dgt::Scope::kNone;
  c.lr_grid = {0.01};
  c.epochs = 4;
  c.eval_every = 2;
  c.seed = 11;
  c.dims.d = 8;
  c.dims.heads = 2;
  c.dims.window = 16;
  c.dims.depth = 1;
  return c;
}

// 128 days at block 16 gives 8 blocks and a 6/1/1 split.
dgt::testing::Prepared small_data(std::uint64_t seed = 5) {
  return dgt::testing::prepare(dgt::testing::leader_follower_panel(4, 128, seed, 0.05, 16));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* tmp_path(const char* name) {
  static std::string p;
  p = (std::filesystem::temp_directory_path() / (std::string("dgt_ckpt_") + name))
          .string();
  return p.c_str();
}

}  // namespace

TEST_CASE("config validation rejects unusable settings") {
  TrainConfig c = small_config(Arch::kDgt, false);
  CHECK_NOTHROW(dgt::validate_config(c));
  c.lr_grid.clear();
  CHECK_THROWS_AS(dgt::validate_config(c), dgt::ConfigError);
  c.lr_grid = {0.01, 0.0};
  CHECK_THROWS_AS(dgt::validate_config(c), dgt::ConfigError);
  c.lr_grid = {-0.1};
  CHECK_THROWS_AS(dgt::validate_config(c), dgt::ConfigError);
  c = small_config(Arch::kDgt, false);
  c.eval_every = 0;
  CHECK_THROWS_AS(dgt::validate_config(c), dgt::ConfigError);
  c = small_config(Arch::kDgt, false);
  c.epochs = 1;  // below eval_every = 2
  CHECK_THROWS_AS(dgt::validate_config(c), dgt::ConfigError);
  c = small_config(Arch::kDgt, false);
  c.beta1 = 1.0;
  CHECK_THROWS_AS(dgt::validate_config(c), dgt::ConfigError);
}

TEST_CASE("adam state mirrors parameter shapes at zero") {
  std::vector<Matrix> params = {Matrix::Ones(2, 3), Matrix::Ones(1, 1)};
  AdamState s = dgt::make_adam_state(params);
  REQUIRE(s.m.size() == 2);
  CHECK(s.m[0].rows() == 2);
  CHECK(s.m[0].cols() == 3);
  CHECK(s.m[0].isZero(0.0));
  CHECK(s.v[1].isZero(0.0));
  CHECK(s.step == 0);
}

TEST_CASE("first adam step has magnitude close to the learning rate") {
  std::vector<Matrix> params = {scalar(1.0)};
  std::vector<Matrix> grads = {scalar(0.5)};
  AdamState s = dgt::make_adam_state(params);
  dgt::adam_step(params, grads, {"w"}, s, 0.1);
  // m-hat = g, v-hat = g^2, so the update is lr * g / (|g| + eps) = almost lr.
  CHECK(params[0](0, 0) == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(params[0](0, 0) > 0.9);  // eps shaves a hair off the full step
  CHECK(s.step == 1);
}

TEST_CASE("adam trajectory matches a scalar reimplementation") {
  const double lr = 0.05;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> gs = {1.0, -1.0, 0.3, 0.0, 2.5};

  double w = 0.2, m = 0.0, v = 0.0;
  for (std::size_t k = 0; k < gs.size(); ++k) {
    const double g = gs[k];
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double c1 = 1 - std::pow(b1, static_cast<double>(k + 1));
    const double c2 = 1 - std::pow(b2, static_cast<double>(k + 1));
    w -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
  }

  std::vector<Matrix> params = {scalar(0.2)};
  AdamState s = dgt::make_adam_state(params);
  for (double g : gs) {
    std::vector<Matrix> grads = {scalar(g)};
    dgt::adam_step(params, grads, {"w"}, s, lr);
  }
  CHECK(params[0](0, 0) == doctest::Approx(w).epsilon(1e-12));
  CHECK(s.step == 5);
}

TEST_CASE("adam edge behavior") {
  Rng rng(7);
  std::vector<Matrix> params = {rand_mat(rng, 2, 2), rand_mat(rng, 1, 3)};
  const std::vector<Matrix> orig = params;
  AdamState s = dgt::make_adam_state(params);

  SUBCASE("zero gradient leaves parameters unchanged but advances the step") {
    std::vector<Matrix> grads = {Matrix::Zero(2, 2), Matrix::Zero(1, 3)};
    dgt::adam_step(params, grads, {}, s, 0.1);
    CHECK(params[0] == orig[0]);
    CHECK(params[1] == orig[1]);
    CHECK(s.step == 1);
  }

  SUBCASE("lr zero is a no-op for any gradients") {
    for (int k = 0; k < 5; ++k) {
      std::vector<Matrix> grads = {rand_mat(rng, 2, 2), rand_mat(rng, 1, 3)};
      dgt::adam_step(params, grads, {}, s, 0.0);
    }
    CHECK(params[0] == orig[0]);
    CHECK(params[1] == orig[1]);
    CHECK(s.step == 5);
  }

  SUBCASE("identical runs produce identical parameters") {
    std::vector<Matrix> params2 = orig;
    AdamState s2 = dgt::make_adam_state(params2);
    Rng ra(3), rb(3);
    for (int k = 0; k < 4; ++k) {
      std::vector<Matrix> ga = {rand_mat(ra, 2, 2), rand_mat(ra, 1, 3)};
      std::vector<Matrix> gb = {rand_mat(rb, 2, 2), rand_mat(rb, 1, 3)};
      dgt::adam_step(params, ga, {}, s, 0.02);
      dgt::adam_step(params2, gb, {}, s2, 0.02);
    }
    CHECK(params[0] == params2[0]);
    CHECK(params[1] == params2[1]);
  }

  SUBCASE("non-finite gradient names the tensor") {
    std::vector<Matrix> grads = {Matrix::Zero(2, 2), Matrix::Zero(1, 3)};
    grads[1](0, 2) = std::numeric_limits<double>::quiet_NaN();
    try {
      dgt::adam_step(params, grads, {"alpha", "beta"}, s, 0.1);
      FAIL("expected NonFiniteError");
    } catch (const dgt::NonFiniteError& e) {
      CHECK(std::string(e.what()).find("beta") != std::string::npos);
    }
  }

  SUBCASE("mismatched shapes and counts are rejected") {
    std::vector<Matrix> grads = {Matrix::Zero(2, 2)};
    CHECK_THROWS_AS(dgt::adam_step(params, grads, {}, s, 0.1), std::invalid_argument);
    grads = {Matrix::Zero(2, 2), Matrix::Zero(3, 1)};
    CHECK_THROWS_AS(dgt::adam_step(params, grads, {}, s, 0.1), std::invalid_argument);
    grads = {Matrix::Zero(2, 2), Matrix::Zero(1, 3)};
    CHECK_THROWS_AS(dgt::adam_step(params, grads, {}, s, -0.5), std::invalid_argument);
  }
}

TEST_CASE("mse loss is the plain sum of squared errors") {
  Tape t;
  Matrix pred(1, 2);
  pred << 3.0, 4.0;
  NodeId loss = dgt::mse_loss(t, t.leaf(pred), Matrix::Zero(1, 2));
  CHECK(t.value(loss)(0, 0) == 25.0);

  NodeId zero = dgt::mse_loss(t, t.leaf(pred), pred);
  CHECK(t.value(zero)(0, 0) == 0.0);

  SUBCASE("doubling every error quadruples the loss") {
    Rng rng(19);
    Matrix a = rand_mat(rng, 2, 3);
    Matrix b = rand_mat(rng, 2, 3);
    Tape t2;
    const double one = t2.value(dgt::mse_loss(t2, t2.leaf(a), b))(0, 0);
    Matrix doubled = b + 2.0 * (a - b);  // error vector times two
    const double four = t2.value(dgt::mse_loss(t2, t2.leaf(doubled), b))(0, 0);
    CHECK(four == doctest::Approx(4.0 * one).epsilon(1e-12));
  }

  SUBCASE("shape mismatch is rejected") {
    Tape t3;
    CHECK_THROWS_AS(dgt::mse_loss(t3, t3.leaf(Matrix::Zero(2, 2)), Matrix::Zero(1, 2)),
                    std::invalid_argument);
  }
}

TEST_CASE("window targets pick the day after each position") {
  dgt::PricePanel p;
  p.tickers = {"A", "B"};
  p.dates = dgt::testing::seq_dates(6);
  p.prices.resize(2, 6);
  p.prices << 0, 1, 2, 3, 4, 5, 10, 11, 12, 13, 14, 15;

  Window w;
  w.start = 1;
  w.len = 3;
  w.targets = {2, 3, 4};
  Matrix t = dgt::window_targets(p, w);
  REQUIRE(t.rows() == 3);
  REQUIRE(t.cols() == 2);
  CHECK(t(0, 0) == 2.0);
  CHECK(t(0, 1) == 12.0);
  CHECK(t(2, 0) == 4.0);
  CHECK(t(2, 1) == 14.0);
}

TEST_CASE("window pass with a zeroed output head hits the closed-form loss") {
  dgt::testing::Prepared data = small_data();
  const dgt::PricePanel& panel = data.panel;
  const dgt::BlockPartition part = dgt::partition_blocks(panel, panel.block_len);
  const dgt::WindowSet ws =
      dgt::make_windows(panel, part, data.split.train_blocks, 16, dgt::Mode::kManyToMany);
  REQUIRE(ws.windows.size() == 6);

  ModelDims dims;
  dims.d = 8;
  dims.heads = 2;
  dims.window = 16;
  dgt::DgtParams p = dgt::init_dgt_params(dims, panel.n(), 3);
  p.head_w2.setZero();
  p.head_b2(0, 0) = 0.3;

  for (bool spatial : {false, true}) {
    CAPTURE(spatial);
    double want = 0.0;
    std::int64_t cells = 0;
    for (const Window& w : ws.windows) {
      Matrix target = dgt::window_targets(panel, w);
      want += (target.array() - 0.3).square().sum();
      cells += target.size();
    }
    double got = 0.0;
    std::int64_t got_cells = 0;
    for (const Window& w : ws.windows) {
      dgt::WindowPass pass = dgt::window_pass(p, panel, w, nullptr, spatial, false);
      got += pass.sse;
      got_cells += pass.cells;
      CHECK(pass.grads.empty());
    }
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    CHECK(got_cells == cells);
  }

  SUBCASE("gru with zero weights predicts its bias the same way") {
    dgt::GruParams g = dgt::init_gru_params(8, 3);
    std::vector<Matrix> flat = dgt::flatten_params(g);
    for (Matrix& m : flat) m.setZero();
    dgt::assign_params(g, flat);
    g.head_b(0, 0) = 0.3;
    const Window& w = ws.windows[0];
    dgt::WindowPass pass = dgt::window_pass(g, panel, w, false);
    Matrix target = dgt::window_targets(panel, w);
    CHECK(pass.sse == doctest::Approx((target.array() - 0.3).square().sum()).epsilon(1e-12));
  }

  SUBCASE("gradients come back in flatten order with matching shapes") {
    const Window& w = ws.windows[0];
    dgt::WindowPass pass = dgt::window_pass(p, panel, w, nullptr, true, true);
    std::vector<Matrix> flat = dgt::flatten_params(p);
    REQUIRE(pass.grads.size() == flat.size());
    for (std::size_t i = 0; i < flat.size(); ++i) {
      CHECK(pass.grads[i].rows() == flat[i].rows());
      CHECK(pass.grads[i].cols() == flat[i].cols());
    }
  }
}

TEST_CASE("training descends and retains the best validation checkpoint") {
  dgt::testing::Prepared data = small_data();
  TrainConfig config = small_config(Arch::kDgt, false);
  config.epochs = 6;
  config.eval_every = 2;

  TrainResult r = dgt::train_model(config, data.panel, data.split, data.stats, nullptr, 0.01);

  REQUIRE(r.log.size() == 7);  // epoch 0 plus six epochs
  CHECK(r.log.front().epoch == 0);
  CHECK(r.log.back().epoch == 6);
  CHECK(r.log.back().train_loss < r.log.front().train_loss);

  SUBCASE("evaluation schedule: epoch 0, every second epoch, final epoch") {
    CHECK(!std::isnan(r.log[0].val_rmse));
    CHECK(std::isnan(r.log[1].val_rmse));
    CHECK(!std::isnan(r.log[2].val_rmse));
    CHECK(std::isnan(r.log[3].val_rmse));
    CHECK(!std::isnan(r.log[6].val_rmse));
  }

  SUBCASE("checkpoint is the best recorded evaluation") {
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
    for (const auto& row : r.log)
      if (!std::isnan(row.val_rmse) && row.val_rmse < best) {
        best = row.val_rmse;
        best_epoch = row.epoch;
      }
    CHECK(r.checkpoint.best_val_rmse == best);
    CHECK(r.checkpoint.best_epoch == best_epoch);
    CHECK(r.checkpoint.lr == 0.01);
    CHECK(r.checkpoint.config.epochs == 6);
    CHECK(r.checkpoint.tickers == data.panel.tickers);
    CHECK(r.checkpoint.stats.mean == data.stats.mean);
    CHECK(r.checkpoint.dgt_params().n_stocks == 4);
    CHECK_THROWS_AS(r.checkpoint.gru_params(), dgt::ConfigError);
  }

  SUBCASE("identical runs give identical checkpoints and logs") {
    TrainResult r2 = dgt::train_model(config, data.panel, data.split, data.stats, nullptr, 0.01);
    std::vector<Matrix> a = dgt::flatten_params(r.checkpoint.dgt_params());
    std::vector<Matrix> b = dgt::flatten_params(r2.checkpoint.dgt_params());
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    REQUIRE(r.log.size() == r2.log.size());
    for (std::size_t i = 0; i < r.log.size(); ++i) {
      CHECK(r.log[i].train_loss == r2.log[i].train_loss);
      CHECK((std::isnan(r.log[i].val_rmse)
                 ? std::isnan(r2.log[i].val_rmse)
                 : r.log[i].val_rmse == r2.log[i].val_rmse));
    }
  }
}

TEST_CASE("the gru baseline trains through the same loop") {
  dgt::testing::Prepared data = small_data();
  TrainConfig config = small_config(Arch::kGru, false);
  config.epochs = 4;
  TrainResult r = dgt::train_model(config, data.panel, data.split, data.stats, nullptr, 0.01);
  CHECK(r.log.back().train_loss < r.log.front().train_loss);
  CHECK(r.checkpoint.gru_params().d == 8);
  CHECK_THROWS_AS(r.checkpoint.dgt_params(), dgt::ConfigError);
}

TEST_CASE("one spatial training step moves the lambda vectors") {
  dgt::testing::Prepared data = small_data();
  TrainConfig config = small_config(Arch::kDgt, true);
  config.epochs = 1;
  config.eval_every = 1;

  TrainResult r = dgt::train_model(config, data.panel, data.split, data.stats, nullptr, 0.01);
  const dgt::DgtParams init = dgt::init_dgt_params(config.dims, data.panel.n(), config.seed);
  const auto& trained = r.checkpoint.dgt_params().graph[0];
  const auto& before = init.graph[0];
  bool moved = false;
  for (std::size_t h = 0; h < trained.lq1.size(); ++h) {
    moved |= trained.lq1[h] != before.lq1[h];
    moved |= trained.lk1[h] != before.lk1[h];
    moved |= trained.lq2[h] != before.lq2[h];
    moved |= trained.lk2[h] != before.lk2[h];
  }
  CHECK(moved);
}

TEST_CASE("train_model rejects bad inputs") {
  dgt::testing::Prepared data = small_data();
  TrainConfig config = small_config(Arch::kDgt, false);

  CHECK_THROWS_AS(
      dgt::train_model(config, data.panel, data.split, data.stats, nullptr, 0.0),
      dgt::ConfigError);

  SUBCASE("unnormalized panel") {
    dgt::PricePanel raw = dgt::testing::leader_follower_panel(4, 128, 5, 0.05, 16);
    CHECK_THROWS_AS(dgt::train_model(config, raw, data.split, data.stats, nullptr, 0.01),
                    dgt::DataError);
  }

  SUBCASE("stats for the wrong stock count") {
    dgt::NormStats bad = data.stats;
    bad.mean.resize(2);
    CHECK_THROWS_AS(dgt::train_model(config, data.panel, data.split, bad, nullptr, 0.01),
                    dgt::DataError);
  }

  SUBCASE("validation span too short for any window") {
    dgt::SplitSpec split = data.split;
    split.val_days = {0, 10};
    CHECK_THROWS_AS(dgt::train_model(config, data.panel, split, data.stats, nullptr, 0.01),
                    dgt::DataError);
  }

  SUBCASE("graph scope must match the config") {
    std::vector<dgt::IndexRange> spans;
    dgt::GraphSet graphs =
        dgt::build_graph_set(data.panel, dgt::Metric::kPearson, dgt::Scope::kGlobal, 2,
                             data.split.train_days, spans);
    TrainConfig spatial = small_config(Arch::kDgt, true);
    spatial.scope = dgt::Scope::kLocal;
    CHECK_THROWS_AS(
        dgt::train_model(spatial, data.panel, data.split, data.stats, &graphs, 0.01),
        dgt::ConfigError);
    spatial.scope = dgt::Scope::kGlobal;
    spatial.metric = dgt::Metric::kKendall;
    CHECK_THROWS_AS(
        dgt::train_model(spatial, data.panel, data.split, data.stats, &graphs, 0.01),
        dgt::ConfigError);
  }
}

TEST_CASE("an absurd learning rate diverges with the failing epoch attached") {
  dgt::testing::Prepared data = small_data();
  TrainConfig config = small_config(Arch::kDgt, true);
  try {
    dgt::train_model(config, data.panel, data.split, data.stats, nullptr, 3.0e4);
    FAIL("expected DivergenceError");
  } catch (const dgt::DivergenceError& e) {
    CHECK(e.epoch >= 1);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("grid search picks the surviving rate when the other diverges") {
  dgt::testing::Prepared data = small_data();
  TrainConfig config = small_config(Arch::kDgt, true);
  config.lr_grid = {3.0e4, 0.02};  // deliberately unsorted
  config.epochs = 2;
  config.eval_every = 2;

  dgt::GridResult g = dgt::grid_search(config, data.panel, data.split, data.stats, nullptr);
  REQUIRE(g.entries.size() == 2);
  CHECK(g.entries[0].lr == 0.02);  // report sorted ascending
  CHECK(g.entries[1].lr == 3.0e4);
  CHECK(!g.entries[0].diverged);
  CHECK(g.entries[1].diverged);
  CHECK(g.entries[1].diverged_epoch >= 1);
  CHECK(g.best_lr == 0.02);
  CHECK(g.best.checkpoint.lr == 0.02);
  CHECK(g.best.checkpoint.best_val_rmse == g.entries[0].val_rmse);
}

TEST_CASE("grid search over two working rates returns the argmin") {
  dgt::testing::Prepared data = small_data();
  TrainConfig config = small_config(Arch::kGru, false);
  config.lr_grid = {0.005, 0.05};
  config.epochs = 2;
  config.eval_every = 2;

  dgt::GridResult g = dgt::grid_search(config, data.panel, data.split, data.stats, nullptr);
  REQUIRE(g.entries.size() == 2);
  CHECK(!g.entries[0].diverged);
  CHECK(!g.entries[1].diverged);
  const double lo = std::min(g.entries[0].val_rmse, g.entries[1].val_rmse);
  CHECK(g.best.checkpoint.best_val_rmse == lo);

  SUBCASE("singleton grid returns its only rate") {
    config.lr_grid = {0.01};
    dgt::GridResult one = dgt::grid_search(config, data.panel, data.split, data.stats, nullptr);
    CHECK(one.best_lr == 0.01);
    CHECK(one.entries.size() == 1);
  }
}

TEST_CASE("grid search fails only when every rate diverges") {
  dgt::testing::Prepared data = small_data();
  TrainConfig config = small_config(Arch::kDgt, true);
  config.lr_grid = {3.0e4, 1.0e5};
  CHECK_THROWS_AS(dgt::grid_search(config, data.panel, data.split, data.stats, nullptr),
                  dgt::DivergenceError);
}

TEST_CASE("best entry selection breaks ties toward the smaller rate") {
  std::vector<GridEntry> entries(3);
  entries[0] = {0.01, false, -1, 2.0};
  entries[1] = {0.05, false, -1, 1.5};
  entries[2] = {0.1, false, -1, 1.5};
  CHECK(dgt::best_entry(entries) == 1);

  entries[1].diverged = true;
  CHECK(dgt::best_entry(entries) == 2);

  entries[0].val_rmse = 1.5;
  CHECK(dgt::best_entry(entries) == 0);

  for (auto& e : entries) e.diverged = true;
  CHECK_THROWS_AS(dgt::best_entry(entries), std::invalid_argument);
}

TEST_CASE("checkpoints round trip bit for bit") {
  dgt::testing::Prepared data = small_data();
  TrainConfig config = small_config(Arch::kDgt, true);
  config.epochs = 2;
  config.eval_every = 1;
  TrainResult r = dgt::train_model(config, data.panel, data.split, data.stats, nullptr, 0.01);

  const char* path = tmp_path("roundtrip.bin");
  dgt::save_checkpoint(r.checkpoint, path);
  Checkpoint back = dgt::load_checkpoint(path);

  CHECK(back.config.architecture == Arch::kDgt);
  CHECK(back.config.use_spatial == true);
  CHECK(back.config.metric == dgt::Metric::kPearson);
  CHECK(back.config.scope == dgt::Scope::kGlobal);
  CHECK(back.config.lr_grid == config.lr_grid);
  CHECK(back.config.epochs == 2);
  CHECK(back.config.eval_every == 1);
  CHECK(back.config.seed == config.seed);
  CHECK(back.config.dims.d == 8);
  CHECK(back.config.dims.window == 16);
  CHECK(back.config.beta2 == config.beta2);
  CHECK(back.lr == r.checkpoint.lr);
  CHECK(back.best_val_rmse == r.checkpoint.best_val_rmse);
  CHECK(back.best_epoch == r.checkpoint.best_epoch);
  CHECK(back.stats.mean == r.checkpoint.stats.mean);
  CHECK(back.stats.stddev == r.checkpoint.stats.stddev);
  CHECK(back.stats.span.begin == r.checkpoint.stats.span.begin);
  CHECK(back.tickers == r.checkpoint.tickers);
  CHECK(back.dgt.lambda_init == r.checkpoint.dgt.lambda_init);

  std::vector<Matrix> a = dgt::flatten_params(r.checkpoint.dgt_params());
  std::vector<Matrix> b = dgt::flatten_params(back.dgt_params());
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  SUBCASE("gru checkpoints too") {
    TrainConfig gc = small_config(Arch::kGru, false);
    gc.epochs = 2;
    gc.eval_every = 1;
    TrainResult gr = dgt::train_model(gc, data.panel, data.split, data.stats, nullptr, 0.01);
    const char* gpath = tmp_path("gru.bin");
    dgt::save_checkpoint(gr.checkpoint, gpath);
    Checkpoint gback = dgt::load_checkpoint(gpath);
    std::vector<Matrix> ga = dgt::flatten_params(gr.checkpoint.gru_params());
    std::vector<Matrix> gb = dgt::flatten_params(gback.gru_params());
    REQUIRE(ga.size() == gb.size());
    for (std::size_t i = 0; i < ga.size(); ++i) CHECK(ga[i] == gb[i]);
    CHECK_THROWS_AS(gback.dgt_params(), dgt::ConfigError);
  }

  SUBCASE("truncation breaks the checksum") {
    std::string bytes = slurp(path);
    std::ofstream out(tmp_path("trunc.bin"), std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
    out.close();
    CHECK_THROWS_AS(dgt::load_checkpoint(tmp_path("trunc.bin")), dgt::DataError);
  }

  SUBCASE("a flipped byte breaks the checksum") {
    std::string bytes = slurp(path);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
    std::ofstream out(tmp_path("flip.bin"), std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_AS(dgt::load_checkpoint(tmp_path("flip.bin")), dgt::DataError);
  }

  SUBCASE("garbage and missing files are data errors") {
    std::ofstream out(tmp_path("junk.bin"), std::ios::binary | std::ios::trunc);
    out << "not a checkpoint at all, clearly";
    out.close();
    CHECK_THROWS_AS(dgt::load_checkpoint(tmp_path("junk.bin")), dgt::DataError);
    CHECK_THROWS_AS(dgt::load_checkpoint("no_such_file.bin"), dgt::DataError);
  }
}

TEST_CASE("train log format freezes") {
  std::vector<dgt::EpochLog> log;
  log.push_back({0, 1.5, 2.0, 1.0});
  dgt::EpochLog row;
  row.epoch = 1;
  row.train_loss = 1.25;
  log.push_back(row);
  log.push_back({2, 0.5, 0.75, 0.5});

  const char* path = tmp_path("log.csv");
  dgt::write_train_log(log, path);
  CHECK(slurp(path) ==
        "epoch,train_loss,val_rmse,val_mae\n"
        "0,1.5,2,1\n"
        "1,1.25,,\n"
        "2,0.5,0.75,0.5\n");
}
