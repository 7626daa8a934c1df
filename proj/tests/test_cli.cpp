#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dgt/cli.hpp"
#include "dgt/common.hpp"
#include "dgt/panel.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_dgt(std::vector<std::string> args) {
  args.insert(args.begin(), "dgt");
  std::vector<char*> argv;
  for (std::string& s : args) argv.push_back(s.data());
  return dgt::run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  REQUIRE(os.good());
  os << text;
}

// Fresh directory under the system temp root; wiped when recreated so stale
// artifacts from an earlier run can't satisfy this one.
fs::path tmp_root(const char* name) {
  const fs::path p = fs::temp_directory_path() / (std::string("dgt_cli_") + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

json read_json(const std::string& path) { return json::parse(slurp(path)); }

void write_price_csv(const dgt::PricePanel& panel, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  REQUIRE(os.good());
  os << "date";
  for (const std::string& t : panel.tickers) os << ',' << t;
  os << '\n';
  for (int d = 0; d < panel.t(); ++d) {
    os << panel.dates[static_cast<std::size_t>(d)];
    for (int i = 0; i < panel.n(); ++i) os << ',' << dgt::fmt_double(panel.prices(i, d));
    os << '\n';
  }
}

// Two-row grid over the six-stock panel; lr is the only knob the tests vary.
json pipeline_config(const std::string& input_csv, const std::string& work_dir, double lr) {
  json j;
  j["input_csv"] = input_csv;
  j["work_dir"] = work_dir;
  j["ingest"] = {{"block_len", 16}};
  j["grid"] = json::array({json{{"architecture", "gru"}},
                           json{{"architecture", "dgt"},
                                {"use_spatial", true},
                                {"metric", "pearson"},
                                {"scope", "global"}}});
  j["train"] = {{"lr_grid", json::array({lr})},
                {"epochs", 12},
                {"eval_every", 5},
                {"seed", 11},
                {"dims", {{"d", 8}, {"heads", 2}, {"window", 16}, {"depth", 1}}}};
  j["cluster"] = {{"k", 2}, {"seed", 7}};
  return j;
}

std::map<std::string, std::string> snapshot_dir(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::directory_iterator(dir))
    out[entry.path().filename().string()] = slurp(entry.path().string());
  return out;
}

}  // namespace

TEST_CASE("pipeline runs the grid end to end") {
  const fs::path root = tmp_root("pipeline");
  const std::string csv = (root / "input.csv").string();
  write_price_csv(dgt::testing::leader_follower_panel(6, 128, 5, 0.05, 16), csv);
  const fs::path work = root / "run";
  const std::string cfg_path = (root / "config.json").string();
  spit(cfg_path, pipeline_config(csv, work.string(), 0.02).dump(2));

  REQUIRE(run_dgt({"config", "validate", "--config", cfg_path}) == dgt::kExitOk);
  REQUIRE(run_dgt({"pipeline", "--config", cfg_path}) == dgt::kExitOk);

  const std::vector<std::string> expected = {
      "panel.bin",           "graphs_pearson_global.bin",
      "corr_pearson_global.csv", "ckpt_gru.bin",
      "train_log_gru.csv",   "report_gru.json",
      "report_gru.csv",      "ckpt_dgt_pearson_global.bin",
      "train_log_dgt_pearson_global.csv", "report_dgt_pearson_global.json",
      "report_dgt_pearson_global.csv", "leaderboard.csv",
      "leaderboard.json",    "clusters.csv",
      "cluster_scan.csv",    "cluster_scatter.csv",
      "comparison.csv",      "comparison.json",
      "manifest.json"};
  for (const std::string& name : expected) {
    CAPTURE(name);
    CHECK(fs::exists(work / name));
  }

  // Leaderboard: worst RMSE first, so the graph-aware model sits last.
  const std::vector<std::string> lb = lines(slurp((work / "leaderboard.csv").string()));
  REQUIRE(lb.size() == 3);
  CHECK(lb[0] == "architecture,use_spatial,correlation,scope,rmse,mae");
  CHECK(lb[1].rfind("gru,false,none,none,", 0) == 0);
  CHECK(lb[2].rfind("dgt,true,pearson,global,", 0) == 0);

  const json lbj = read_json((work / "leaderboard.json").string());
  REQUIRE(lbj.size() == 2);
  const double gru_rmse = lbj[0]["rmse"].get<double>();
  const double gru_mae = lbj[0]["mae"].get<double>();
  const double dgt_rmse = lbj[1]["rmse"].get<double>();
  const double dgt_mae = lbj[1]["mae"].get<double>();
  CHECK(dgt_rmse < gru_rmse);
  CHECK(dgt_mae < gru_mae);
  CHECK(gru_rmse == doctest::Approx(0.6986507125034186).epsilon(1e-6));
  CHECK(gru_mae == doctest::Approx(0.6147662628525875).epsilon(1e-6));
  CHECK(dgt_rmse == doctest::Approx(0.34229097891984206).epsilon(1e-6));
  CHECK(dgt_mae == doctest::Approx(0.2795854613700331).epsilon(1e-6));

  // CSV carries the same doubles: shortest-repr formatting parses back exactly.
  {
    const std::string& row = lb[1];
    const std::size_t tail = row.find(",none,none,") + 11;
    const std::size_t comma = row.find(',', tail);
    CHECK(std::stod(row.substr(tail, comma - tail)) == gru_rmse);
    CHECK(std::stod(row.substr(comma + 1)) == gru_mae);
  }

  const json man = read_json((work / "manifest.json").string());
  CHECK(man["config_digest"].get<std::string>().size() == 16);
  CHECK(man["failures"].empty());
  for (const char* stage :
       {"ingest", "graphs:pearson_global", "train:gru", "eval:gru",
        "train:dgt_pearson_global", "eval:dgt_pearson_global", "leaderboard", "cluster",
        "compare"}) {
    CAPTURE(stage);
    REQUIRE(man["stages"].contains(stage));
    CHECK(man["stages"][stage]["status"] == "done");
  }

  // Comparison ran on the best row and pooled every stock's cells.
  const json cmp = read_json((work / "comparison.json").string());
  CHECK(cmp["row"] == "dgt_pearson_global");
  CHECK(cmp["stocks_a"].get<int>() + cmp["stocks_b"].get<int>() == 6);
  CHECK(cmp["cells_a"].get<int>() + cmp["cells_b"].get<int>() == 96);
  CHECK(cmp["p_rmse"].get<double>() == doctest::Approx(0.11429472748370753).epsilon(1e-6));
  CHECK(cmp["p_rmse"].get<double>() > 0.0);
  CHECK(cmp["p_rmse"].get<double>() <= 1.0);

  const json rep = read_json((work / "report_dgt_pearson_global.json").string());
  CHECK(rep["rmse"].get<double>() == dgt_rmse);
  CHECK(rep["cells"].size() == 96);

  CHECK(lines(slurp((work / "clusters.csv").string())).size() == 7);
  // scan covers k = 2..min(scan_max, N-1) = 2..5
  CHECK(lines(slurp((work / "cluster_scan.csv").string())).size() == 5);

  // Rerun: every stage skips, every byte stays put.
  const auto before = snapshot_dir(work);
  REQUIRE(run_dgt({"pipeline", "--config", cfg_path}) == dgt::kExitOk);
  const auto after = snapshot_dir(work);
  REQUIRE(after.size() == before.size());
  for (const auto& [name, bytes] : before) {
    CAPTURE(name);
    CHECK(after.at(name) == bytes);
  }

  // Same experiment in a second work dir reproduces every artifact,
  // manifest included: the digest covers settings and input bytes, not paths.
  const fs::path work2 = root / "run2";
  const std::string cfg2 = (root / "config2.json").string();
  spit(cfg2, pipeline_config(csv, work2.string(), 0.02).dump(2));
  REQUIRE(run_dgt({"pipeline", "--config", cfg2}) == dgt::kExitOk);
  const auto other = snapshot_dir(work2);
  REQUIRE(other.size() == before.size());
  for (const auto& [name, bytes] : before) {
    CAPTURE(name);
    CHECK(other.at(name) == bytes);
  }

  // A settings change makes the work dir unusable rather than inconsistent.
  json changed = pipeline_config(csv, work.string(), 0.02);
  changed["train"]["seed"] = 12;
  spit(cfg_path, changed.dump(2));
  CHECK(run_dgt({"pipeline", "--config", cfg_path}) == dgt::kExitConfig);
}

TEST_CASE("pipeline records a diverged row and keeps the survivors") {
  const fs::path root = tmp_root("diverge");
  const std::string csv = (root / "input.csv").string();
  write_price_csv(dgt::testing::leader_follower_panel(6, 128, 5, 0.05, 16), csv);
  const fs::path work = root / "run";
  const std::string cfg_path = (root / "config.json").string();
  // Step size large enough to blow up the differential attention exponentials;
  // the recurrent baseline saturates instead of diverging.
  spit(cfg_path, pipeline_config(csv, work.string(), 30000.0).dump(2));

  CHECK(run_dgt({"pipeline", "--config", cfg_path}) == dgt::kExitDivergence);

  const std::vector<std::string> lb = lines(slurp((work / "leaderboard.csv").string()));
  REQUIRE(lb.size() == 2);
  CHECK(lb[1].rfind("gru,", 0) == 0);
  CHECK_FALSE(fs::exists(work / "report_dgt_pearson_global.json"));

  const json man = read_json((work / "manifest.json").string());
  CHECK(man["stages"]["train:dgt_pearson_global"]["status"] == "failed");
  REQUIRE(man["failures"].size() == 1);
  CHECK(man["failures"][0]["stage"] == "train:dgt_pearson_global");
  CHECK(man["failures"][0]["exit_code"].get<int>() == dgt::kExitDivergence);
  // Later stages still ran; the comparison fell back to the surviving row.
  CHECK(man["stages"]["compare"]["status"] == "done");
  CHECK(read_json((work / "comparison.json").string())["row"] == "gru");
}

TEST_CASE("run config loading and validation reject malformed files") {
  const fs::path root = tmp_root("config");
  const std::string csv = (root / "input.csv").string();
  write_price_csv(dgt::testing::leader_follower_panel(4, 128, 5, 0.05, 16), csv);
  const std::string path = (root / "c.json").string();

  const auto load_text = [&](const json& j) {
    spit(path, j.dump(2));
    dgt::RunConfig c = dgt::load_run_config(path);
    dgt::validate_run_config(c);
    return c;
  };
  json base = pipeline_config(csv, (root / "w").string(), 0.02);

  CHECK(load_text(base).grid.size() == 2);
  CHECK(dgt::row_tag(load_text(base).grid[1]) == "dgt_pearson_global");

  SUBCASE("spatial wiring must be a complete chain") {
    json j = base;
    j["grid"][1] = {{"architecture", "dgt"}, {"metric", "kendall"}};
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
    j["grid"][1] = {{"architecture", "dgt"}, {"metric", "kendall"}, {"scope", "global"}};
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
    j["grid"][1] = {{"architecture", "gru"}, {"use_spatial", true},
                    {"metric", "pearson"}, {"scope", "global"}};
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
    j["grid"][1] = {{"architecture", "dgt"}, {"use_spatial", true}, {"metric", "pearson"}};
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
  }

  SUBCASE("grid must be present, non-empty, and free of duplicates") {
    json j = base;
    j["grid"] = json::array();
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
    j = base;
    j.erase("grid");
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
    j = base;
    j["grid"].push_back(json{{"architecture", "gru"}});
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
  }

  SUBCASE("typos and type errors fail loudly") {
    json j = base;
    j["grids"] = j["grid"];
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
    j = base;
    j["train"]["epochs"] = "many";
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
    j = base;
    j["train"]["lr_grid"] = json::array();
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
    j = base;
    j["grid"][0]["spatial"] = true;  // the key is use_spatial
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
    spit(path, "{not json");
    CHECK_THROWS_AS(dgt::load_run_config(path), dgt::ConfigError);
  }

  SUBCASE("numeric ranges are enforced") {
    json j = base;
    j["ingest"]["ratios"] = {0.5, 0.4, 0.2};
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
    j = base;
    j["train"]["dims"]["window"] = 32;  // block_len is 16
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
    j = base;
    j["train"]["dims"]["d"] = 10;  // not a multiple of heads = 4
    j["train"]["dims"]["heads"] = 4;
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
    j = base;
    j["train"]["eval_every"] = 0;
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
    j = base;
    j["cluster"]["k"] = 1;
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
    j = base;
    j["train"]["lr_grid"] = {0.1, -0.2};
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
  }

  SUBCASE("missing input file is a config error") {
    json j = base;
    j["input_csv"] = (root / "nope.csv").string();
    CHECK_THROWS_AS(load_text(j), dgt::ConfigError);
  }

  SUBCASE("an invalid grid fails the pipeline before any work") {
    json j = base;
    j["grid"][1] = {{"architecture", "dgt"}, {"metric", "kendall"}};
    const std::string bad = (root / "bad.json").string();
    spit(bad, j.dump(2));
    const fs::path work(j["work_dir"].get<std::string>());
    CHECK(run_dgt({"pipeline", "--config", bad}) == dgt::kExitConfig);
    CHECK_FALSE(fs::exists(work));
    CHECK(run_dgt({"config", "validate", "--config", bad}) == dgt::kExitConfig);
  }
}

TEST_CASE("DGT_SEED overrides the configured training seed") {
  const fs::path root = tmp_root("seedenv");
  const std::string csv = (root / "input.csv").string();
  write_price_csv(dgt::testing::leader_follower_panel(4, 128, 5, 0.05, 16), csv);
  const std::string path = (root / "c.json").string();
  spit(path, pipeline_config(csv, (root / "w").string(), 0.02).dump(2));

  CHECK(dgt::load_run_config(path).seed == 11);
  setenv("DGT_SEED", "123", 1);
  CHECK(dgt::load_run_config(path).seed == 123);
  setenv("DGT_SEED", "12x", 1);
  CHECK_THROWS_AS(dgt::load_run_config(path), dgt::ConfigError);
  unsetenv("DGT_SEED");
  CHECK(dgt::load_run_config(path).seed == 11);
}

TEST_CASE("single-step subcommands round trip a panel") {
  const fs::path root = tmp_root("steps");
  const std::string csv = (root / "input.csv").string();
  write_price_csv(dgt::testing::leader_follower_panel(4, 128, 5, 0.05, 16), csv);
  const auto at = [&root](const char* name) { return (root / name).string(); };

  REQUIRE(run_dgt({"ingest", "--input", csv, "--block-len", "16", "--out", at("panel.bin")}) ==
          dgt::kExitOk);
  CHECK(dgt::load_panel(at("panel.bin")).n() == 4);

  REQUIRE(run_dgt({"corr", "--panel", at("panel.bin"), "--metric", "kendall", "--scope",
                   "dual", "--heads", "2", "--window", "16", "--out", at("graphs.bin")}) ==
          dgt::kExitOk);

  SUBCASE("corr top ranks neighbours against the global matrix") {
    REQUIRE(run_dgt({"corr", "top", "--graphs", at("graphs.bin"), "--panel", at("panel.bin"),
                     "--ticker", "S0", "--k", "3", "--out", at("top.csv")}) == dgt::kExitOk);
    // Rank correlation is exact integer counting, so the values are stable.
    CHECK(slurp(at("top.csv")) ==
          "rank,ticker,value\n"
          "1,S1,0.8864035087719299\n"
          "2,S3,0.8864035087719299\n"
          "3,S2,0.8855263157894737\n");
    CHECK(run_dgt({"corr", "top", "--graphs", at("graphs.bin"), "--panel", at("panel.bin"),
                   "--ticker", "ZZ", "--k", "3"}) == dgt::kExitConfig);
    CHECK(run_dgt({"corr", "top", "--graphs", at("graphs.bin"), "--panel", at("panel.bin"),
                   "--ticker", "S0", "--k", "0"}) == dgt::kExitConfig);
  }

  SUBCASE("train, eval, cluster, and scan chain together") {
    REQUIRE(run_dgt({"train", "--panel", at("panel.bin"), "--arch", "gru", "--lr-grid",
                     "0.05", "--epochs", "3", "--eval-every", "1", "--seed", "11", "--d", "8",
                     "--heads", "2", "--window", "16", "--out", at("gru.bin")}) ==
            dgt::kExitOk);
    CHECK(fs::exists(at("gru.bin")));
    const std::vector<std::string> log = lines(slurp(at("gru.bin") + ".log.csv"));
    REQUIRE(!log.empty());
    CHECK(log[0] == "epoch,train_loss,val_rmse,val_mae");

    REQUIRE(run_dgt({"eval", "--ckpt", at("gru.bin"), "--panel", at("panel.bin"), "--out",
                     at("report.json")}) == dgt::kExitOk);
    const json rep = read_json(at("report.json"));
    CHECK(rep["architecture"] == "gru");
    CHECK(rep["cells"].size() == 64);  // 4 stocks x 16 test days
    CHECK(rep["rmse"].get<double>() > 0.0);
    CHECK(fs::exists(at("report.json") + ".cells.csv"));

    // A graph-aware checkpoint refuses to backtest blind.
    REQUIRE(run_dgt({"train", "--panel", at("panel.bin"), "--graphs", at("graphs.bin"),
                     "--arch", "dgt", "--spatial", "--metric", "kendall", "--scope", "dual",
                     "--lr-grid", "0.05", "--epochs", "2", "--eval-every", "1", "--seed",
                     "11", "--d", "8", "--heads", "2", "--window", "16", "--out",
                     at("dgt.bin")}) == dgt::kExitOk);
    CHECK(run_dgt({"eval", "--ckpt", at("dgt.bin"), "--panel", at("panel.bin"), "--out",
                   at("r2.json")}) == dgt::kExitConfig);
    CHECK(run_dgt({"eval", "--ckpt", at("dgt.bin"), "--panel", at("panel.bin"), "--graphs",
                   at("graphs.bin"), "--out", at("r2.json")}) == dgt::kExitOk);

    REQUIRE(run_dgt({"cluster", "--panel", at("panel.bin"), "--k", "2", "--out",
                     at("clusters.csv"), "--scatter", at("scatter.csv")}) == dgt::kExitOk);
    CHECK(lines(slurp(at("clusters.csv"))).size() == 5);
    CHECK(lines(slurp(at("scatter.csv"))).size() == 5);

    REQUIRE(run_dgt({"cluster", "scan", "--panel", at("panel.bin"), "--k-range", "2..3",
                     "--out", at("scan.csv")}) == dgt::kExitOk);
    const std::vector<std::string> scan = lines(slurp(at("scan.csv")));
    REQUIRE(scan.size() == 3);
    CHECK(scan[0] == "k,silhouette,inertia");
    CHECK(scan[1].rfind("2,", 0) == 0);
    CHECK(scan[2].rfind("3,", 0) == 0);
  }

  SUBCASE("wiring mistakes map to the config exit code") {
    CHECK(run_dgt({"train", "--panel", at("panel.bin"), "--arch", "dgt", "--spatial",
                   "--metric", "kendall", "--scope", "dual", "--out", at("x.bin")}) ==
          dgt::kExitConfig);  // no --graphs
    CHECK(run_dgt({"train", "--panel", at("panel.bin"), "--arch", "gru", "--spatial",
                   "--metric", "kendall", "--scope", "dual", "--graphs", at("graphs.bin"),
                   "--out", at("x.bin")}) == dgt::kExitConfig);
    CHECK(run_dgt({"train", "--panel", at("panel.bin"), "--arch", "dgt", "--metric",
                   "kendall", "--out", at("x.bin")}) == dgt::kExitConfig);
    // graphs metric/scope must match the requested wiring
    CHECK(run_dgt({"train", "--panel", at("panel.bin"), "--graphs", at("graphs.bin"),
                   "--arch", "dgt", "--spatial", "--metric", "pearson", "--scope", "global",
                   "--epochs", "2", "--eval-every", "1", "--d", "8", "--heads", "2",
                   "--window", "16", "--out", at("x.bin")}) == dgt::kExitConfig);
    // head count disagreement between graphs file and dims
    CHECK(run_dgt({"train", "--panel", at("panel.bin"), "--graphs", at("graphs.bin"),
                   "--arch", "dgt", "--spatial", "--metric", "kendall", "--scope", "dual",
                   "--epochs", "2", "--eval-every", "1", "--d", "8", "--heads", "4",
                   "--window", "16", "--out", at("x.bin")}) == dgt::kExitConfig);
    CHECK(run_dgt({"corr", "--panel", at("panel.bin"), "--metric", "sideways", "--scope",
                   "dual", "--out", at("g2.bin")}) == dgt::kExitConfig);
    CHECK(run_dgt({"corr", "--panel", at("panel.bin"), "--out", at("g2.bin")}) ==
          dgt::kExitConfig);  // metric and scope missing
    CHECK(run_dgt({"cluster", "--panel", at("panel.bin"), "--k", "5", "--out",
                   at("c2.csv")}) == dgt::kExitConfig);  // k > N
    CHECK(run_dgt({"cluster", "scan", "--panel", at("panel.bin"), "--k-range", "3..2",
                   "--out", at("s2.csv")}) == dgt::kExitConfig);
    CHECK(run_dgt({"cluster", "scan", "--panel", at("panel.bin"), "--k-range", "2..4",
                   "--out", at("s2.csv")}) == dgt::kExitConfig);  // hi > N-1
  }

  SUBCASE("ingest validates its inputs") {
    CHECK(run_dgt({"ingest", "--input", csv, "--block-len", "1", "--out", at("p2.bin")}) ==
          dgt::kExitConfig);
    CHECK(run_dgt({"ingest", "--input", csv, "--block-len", "16", "--ratios", "0.5,0.5",
                   "--out", at("p2.bin")}) == dgt::kExitConfig);
    CHECK(run_dgt({"ingest", "--input", at("absent.csv"), "--block-len", "16", "--out",
                   at("p2.bin")}) == dgt::kExitData);
  }

  SUBCASE("a ticker with a hole in its history is dropped") {
    std::string text = "date,AA,BB\n";
    dgt::Rng rng(3);
    double a = 100.0, b = 50.0;
    for (int d = 0; d < 128; ++d) {
      a *= 1.0 + 0.01 * rng.normal();
      b *= 1.0 + 0.01 * rng.normal();
      text += "d" + std::to_string(1000 + d) + "," + dgt::fmt_double(a) + ",";
      if (d != 40) text += dgt::fmt_double(b);  // BB misses one cell
      text += "\n";
    }
    spit(at("holes.csv"), text);
    // AA alone survives, and a one-ticker panel is still a valid panel.
    REQUIRE(run_dgt({"ingest", "--input", at("holes.csv"), "--block-len", "16", "--out",
                     at("p3.bin")}) == dgt::kExitOk);
    const dgt::PricePanel p = dgt::load_panel(at("p3.bin"));
    CHECK(p.n() == 1);
    CHECK(p.tickers[0] == "AA");
  }
}

TEST_CASE("argument parser maps usage errors and help to exit codes") {
  CHECK(run_dgt({"--help"}) == dgt::kExitOk);
  CHECK(run_dgt({}) == dgt::kExitConfig);               // a subcommand is required
  CHECK(run_dgt({"frobnicate"}) == dgt::kExitConfig);   // unknown subcommand
  CHECK(run_dgt({"ingest"}) == dgt::kExitConfig);       // missing required options
  CHECK(run_dgt({"pipeline", "--config", "/nonexistent/config.json"}) == dgt::kExitConfig);
  CHECK(run_dgt({"eval", "--ckpt", "/nonexistent/ckpt.bin", "--panel",
                 "/nonexistent/panel.bin", "--out", "/tmp/dgt_cli_never.json"}) ==
        dgt::kExitData);
}
