// asyncfs run --servers 8 --workload single-dir --ops 10000 ...
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "asyncfs/harness/runner.h"

int main(int argc, char** argv) {
  using namespace asyncfs;
  CLI::App app{"Desk-scale asynchronous metadata update emulator"};
  app.require_subcommand(1);
  CLI::App* run = app.add_subcommand("run", "Run one workload and verify the result");

  RunConfig cfg;
  std::string workload = "single-dir", mix = "pangu", mode = "async", csv_path = "latencies.csv", json_path;
  double loss = 0, dup = 0;
  int reorder = 0, stages = cfg.cluster.stale_set.stages, index_bits = cfg.cluster.stale_set.index_bits;
  uint64_t seed = 1;
  size_t push_threshold = cfg.cluster.server.push_threshold;
  run->add_option("--servers", cfg.cluster.n_servers, "Metadata servers")->check(CLI::Range(1, 255));
  run->add_option("--clients", cfg.cluster.n_clients, "Client handles")->check(CLI::Range(1, 100000));
  run->add_option("--workload", workload, "single-dir | multi-dir | burst | mixed")
      ->check(CLI::IsMember({"single-dir", "multi-dir", "burst", "mixed"}));
  run->add_option("--mix", mix, "Ratio table for mixed: pangu | datacenter")
      ->check(CLI::IsMember({"pangu", "datacenter"}));
  run->add_option("--ops", cfg.workload.ops, "Measured operations");
  run->add_option("--inflight", cfg.workload.inflight, "Outstanding operations")->check(CLI::Range(1, 1 << 20));
  run->add_option("--burst", cfg.workload.burst_size, "Creates per burst")->check(CLI::Range(1, 1 << 20));
  run->add_option("--dirs", cfg.workload.dirs, "Directories for multi-dir and burst")->check(CLI::Range(1, 1 << 20));
  run->add_flag("--skew", cfg.workload.skew, "Send 80% of operations to 20% of directories");
  run->add_option("--loss", loss, "Packet loss probability")->check(CLI::Range(0.0, 1.0));
  run->add_option("--dup", dup, "Packet duplication probability")->check(CLI::Range(0.0, 1.0));
  run->add_option("--reorder", reorder, "Reorder window")->check(CLI::Range(0, 1 << 16));
  run->add_option("--seed", seed, "Seed for workload and faults");
  run->add_option("--stages", stages, "Stale set stages")->check(CLI::Range(0, 64));
  run->add_option("--index-bits", index_bits, "Stale set index bits")->check(CLI::Range(1, 24));
  run->add_option("--push-threshold", push_threshold, "Change-log entries per proactive push")
      ->check(CLI::Range(1, 1 << 20));
  run->add_option("--mode", mode, "async | sync")->check(CLI::IsMember({"async", "sync"}));
  run->add_option("--csv", csv_path, "Latency samples output");
  run->add_option("--json", json_path, "Metrics output (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  cfg.workload.pattern = *ParsePattern(workload);
  cfg.workload.mix = *ParseMix(mix);
  cfg.workload.seed = seed;
  cfg.cluster.fault.loss = loss;
  cfg.cluster.fault.dup = dup;
  cfg.cluster.fault.reorder_window = reorder;
  cfg.cluster.fault.seed = seed;
  cfg.cluster.stale_set.stages = stages;
  cfg.cluster.stale_set.index_bits = index_bits;
  cfg.cluster.server.push_threshold = push_threshold;
  cfg.sync_mode = mode == "sync";

  RunResult result;
  try {
    result = RunWorkload(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::string json = MetricsJson(cfg, result);
  if (json_path.empty()) {
    std::cout << json << "\n";
  } else {
    std::ofstream(json_path) << json << "\n";
  }
  if (!csv_path.empty()) std::ofstream(csv_path) << LatencyCsv(result);
  return result.pass ? 0 : 1;
}
