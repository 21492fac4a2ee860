#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sigdfp/driver.hpp"
#include "sigdfp/reporting.hpp"

namespace sigdfp {

// exit codes: 0 ok, 1 configuration error, 2 numeric abort
inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Signatured deep fictitious play for mean-field games with common noise"};
  app.require_subcommand(1);

  std::string config_file, problem, outdir, sig_cache, checkpoint;
  std::vector<std::string> overrides;
  long inner = 16, outer = 16;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "key=value config file");
    sub->add_option("--problem", problem, "lq|portfolio|consumption");
    sub->add_option("--out", outdir, "output directory");
    sub->add_option("--sig-cache", sig_cache, "directory for cached prefix signatures");
    sub->add_option("--set,-s", overrides,
                    "config override key=value (repeatable; see README for keys)");
  };

  CLI::App* run = app.add_subcommand("run", "train Sig-DFP and report metrics");
  add_common(run);
  CLI::App* base = app.add_subcommand("baseline", "nested-loop baseline (timing/accuracy)");
  add_common(base);
  base->add_option("--inner", inner, "number of idiosyncratic noise paths");
  base->add_option("--outer", outer, "number of common noise paths");
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on fresh test data");
  ev->add_option("--checkpoint", checkpoint, "checkpoint.bin from a run")->required();
  ev->add_option("--out", outdir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (ev->parsed()) {
      RunArtifacts art = run_eval(checkpoint, outdir);
      for (auto& [k, v] : art.metrics) std::printf("relative_l2 %-8s %.6f\n", k.c_str(), v);
      return 0;
    }
    RunConfig cfg;
    if (!config_file.empty()) {
      cfg = load_config_file(config_file);
    } else {
      if (problem.empty())
        throw config_error("need --problem or --config");
    }
    if (!problem.empty()) cfg.problem = parse_problem(problem);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw config_error("--set expects key=value, got: " + kv);
      apply_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!outdir.empty()) cfg.outdir = outdir;
    if (!sig_cache.empty()) cfg.sig_cache = sig_cache;
    finalize_config(cfg);

    if (run->parsed()) {
      RunArtifacts art = run_sig_dfp(cfg);
      std::printf("rounds=%ld train_seconds=%.1f wall_seconds=%.1f\n", cfg.rounds,
                  art.train_seconds, art.wall_seconds);
      if (art.has_oracle)
        std::printf("oracle_value=%.6f j_val_last10=%.6f (se %.2g)\n", art.oracle_value,
                    art.j_val_mean_last10, art.val_se);
      for (auto& [k, v] : art.metrics) std::printf("relative_l2 %-8s %.6f\n", k.c_str(), v);
      std::printf("outputs in %s\n", cfg.outdir.c_str());
    } else {
      RunArtifacts art =
          run_nested_baseline(cfg, static_cast<std::size_t>(inner),
                              static_cast<std::size_t>(outer));
      std::printf("nested inner=%ld outer=%ld wall_seconds=%.1f peak_rss_kb=%ld\n", inner,
                  outer, art.wall_seconds, art.peak_rss);
    }
    return 0;
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const numeric_error& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace sigdfp
