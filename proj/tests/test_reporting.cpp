#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sigdfp/cli.hpp"
#include "sigdfp/reporting.hpp"

using namespace sigdfp;

namespace {

// strict CSV reader: no quoting needed by our writers, fixed column counts
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::string scratch_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("sigdfp_rep_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d.string();
}

}  // namespace

TEST_CASE("problem defaults match the paper's training setups") {
  SUBCASE("lq") {
    RunConfig cfg;
    cfg.problem = ProblemKind::Lq;
    finalize_config(cfg);
    CHECK(cfg.lq.sigma == 0.2);
    CHECK(cfg.lq.q == 1.0);
    CHECK(cfg.lq.a == 1.0);
    CHECK(cfg.lq.eps == 1.5);
    CHECK(cfg.lq.rho == 0.2);
    CHECK(cfg.lq.c == 1.0);
    CHECK(cfg.depth == 2);
    CHECK(cfg.rounds == 500);
    CHECK(cfg.batch_size == 1024);
    CHECK(cfg.n_batches == 32);
    CHECK(cfg.warm_start == 250);
    CHECK(cfg.schedule().lr(0) == doctest::Approx(0.1));
    CHECK(cfg.schedule().lr(250) == doctest::Approx(0.01));
  }
  SUBCASE("consumption accepts the paper depth") {
    RunConfig cfg;
    cfg.problem = ProblemKind::Consumption;
    apply_config_key(cfg, "depth", "4");
    finalize_config(cfg);
    CHECK(cfg.depth == 4);
    CHECK(cfg.rounds == 600);
    CHECK(cfg.batch_size == 2048);
    CHECK(cfg.n_batches == 16);
    CHECK(cfg.schedule().lr(200) == doctest::Approx(0.02));
    CHECK(cfg.schedule().lr(400) == doctest::Approx(0.004));
  }
  SUBCASE("portfolio caption distributions") {
    RunConfig cfg;
    cfg.problem = ProblemKind::Portfolio;
    finalize_config(cfg);
    CHECK(cfg.pf.delta_lo == 5.0);
    CHECK(cfg.pf.delta_hi == 5.5);
    CHECK(cfg.pf.mu_lo == 0.25);
    CHECK(cfg.pf.sigma_hi == 0.4);
  }
}

TEST_CASE("config validation names the offending key") {
  RunConfig cfg;
  cfg.problem = ProblemKind::Lq;
  SUBCASE("unknown key") {
    try {
      apply_config_key(cfg, "n_pathz", "12");
      FAIL("expected config_error");
    } catch (const config_error& e) {
      CHECK(std::string(e.what()).find("n_pathz") != std::string::npos);
    }
  }
  SUBCASE("non-numeric value") {
    try {
      apply_config_key(cfg, "ridge", "abc");
      FAIL("expected config_error");
    } catch (const config_error& e) {
      CHECK(std::string(e.what()).find("ridge") != std::string::npos);
    }
  }
  SUBCASE("batch budget exceeding n_paths is rejected") {
    cfg.n_paths = 64;
    cfg.batch_size = 64;
    cfg.n_batches = 2;
    CHECK_THROWS_AS(finalize_config(cfg), config_error);
  }
}

TEST_CASE("config file parsing and manifest round-trip") {
  const auto dir = scratch_dir("cfg");
  const auto file = std::filesystem::path(dir) / "run.cfg";
  {
    std::ofstream out(file);
    out << "# comment\n[run]\nproblem = consumption\nn_paths=256\nn_steps = 20\n"
        << "depth=3\nrounds=7\nn_batches=4\nseed=42\ncons.eps_lo = 0.6\n";
  }
  RunConfig cfg = load_config_file(file);
  CHECK(cfg.problem == ProblemKind::Consumption);
  CHECK(cfg.n_paths == 256);
  CHECK(cfg.depth == 3);
  CHECK(cfg.rounds == 7);
  CHECK(cfg.cons.eps_lo == 0.6);

  // manifest embeds the config and reproduces it exactly
  cfg.outdir = dir;
  RunOutputs out(dir);
  out.write_manifest(cfg, {{"status", "ok"}});
  RunConfig back = config_from_manifest(std::filesystem::path(dir) / "manifest.json");
  CHECK(config_to_map(back) == config_to_map(cfg));
  std::filesystem::remove_all(dir);
}

TEST_CASE("csv writers emit parseable, round-trippable numbers") {
  const auto dir = scratch_dir("csv");
  RunOutputs out(dir);
  std::vector<RoundRecord> rounds(2);
  rounds[0] = {0, 0.1, {1.0 / 3.0, 0.2}, -0.52, {0.3}, 1.5};
  rounds[1] = {1, 0.1, {0.25, 0.125}, -0.51, {0.25}, 1.4};
  out.write_rounds(rounds, 1);
  out.write_metrics({{"X", 0.01234567890123456}, {"m", 0.5}});

  const auto metrics = read_csv(std::filesystem::path(dir) / "metrics.csv");
  REQUIRE(metrics.size() == 3);
  CHECK(metrics[0] == std::vector<std::string>{"name", "value"});
  CHECK(std::stod(metrics[1][1]) == 0.01234567890123456);  // 17 digits round-trip

  const auto rcsv = read_csv(std::filesystem::path(dir) / "rounds.csv");
  REQUIRE(rcsv.size() == 3);
  CHECK(rcsv[0][0] == "round");
  CHECK(std::stod(rcsv[1][2]) == doctest::Approx((1.0 / 3.0 + 0.2) / 2).epsilon(1e-15));

  const auto mb = read_csv(std::filesystem::path(dir) / "minibatches.csv");
  REQUIRE(mb.size() == 5);  // header + 4
  CHECK(std::stod(mb[1][2]) == 1.0 / 3.0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("unwritable output directory is a config error") {
  CHECK_THROWS_AS(RunOutputs("/proc/definitely/not/writable"), config_error);
}

TEST_CASE("cli surface") {
  SUBCASE("run with missing problem exits 1") {
    const char* argv[] = {"sigdfp", "run"};
    CHECK(cli_main(2, argv) == 1);
  }
  SUBCASE("unknown config key exits 1") {
    const char* argv[] = {"sigdfp", "run", "--problem", "lq", "--set", "bogus=1"};
    CHECK(cli_main(6, argv) == 1);
  }
  SUBCASE("tiny lq run exits 0 and writes outputs") {
    const auto dir = scratch_dir("cli");
    const char* argv[] = {"sigdfp", "run",   "--problem", "lq",
                          "--out",  dir.c_str(), "--set",     "n_paths=64",
                          "--set",  "n_steps=8", "--set",     "rounds=2",
                          "--set",  "n_batches=2", "--set",   "traj_samples=1"};
    CHECK(cli_main(16, argv) == 0);
    CHECK(std::filesystem::exists(std::filesystem::path(dir) / "metrics.csv"));
    // eval on the produced checkpoint
    const std::string ck = (std::filesystem::path(dir) / "checkpoint.bin").string();
    const auto dir2 = scratch_dir("cli_eval");
    const char* argv2[] = {"sigdfp", "eval", "--checkpoint", ck.c_str(), "--out",
                           dir2.c_str()};
    CHECK(cli_main(6, argv2) == 0);
    CHECK(std::filesystem::exists(std::filesystem::path(dir2) / "metrics.csv"));
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
  }
  SUBCASE("numeric abort exits 2") {
    const auto dir = scratch_dir("cli_abort");
    const char* argv[] = {"sigdfp", "run",        "--problem", "lq",
                          "--out",  dir.c_str(),  "--set",     "n_paths=64",
                          "--set",  "n_steps=8",  "--set",     "rounds=2",
                          "--set",  "n_batches=2", "--set",    "flow_init_scale=1e200"};
    CHECK(cli_main(16, argv) == 2);
    std::filesystem::remove_all(dir);
  }
}
