#pragma once

#include <optional>
#include <string>
#include <vector>

#include "asyncfs/harness/cluster.h"
#include "asyncfs/harness/workload.h"

namespace asyncfs {

// Server `server` crashes right after its `appends`-th WAL append counted
// from the moment `after_ops` measured operations have been issued.
struct CrashPlan {
  ServerIndex server = 0;
  uint64_t after_ops = 0;
  uint64_t appends = 1;
};

struct RunConfig {
  ClusterConfig cluster;
  WorkloadSpec workload;
  bool sync_mode = false;  // stale set without stages: every update falls back
  std::optional<CrashPlan> crash;
  std::optional<uint64_t> switch_failure_after_ops;
  bool switch_failure_at_end = false;  // after the last measured op completes
  bool check = true;
};

struct LatencySample {
  Opcode op = Opcode::kCreate;
  Micros issued = 0;
  Micros completed = 0;
  ServerIndex server = 0;
};

struct RunMetrics {
  uint64_t ops_issued = 0;
  uint64_t ops_completed = 0;  // succeeded
  uint64_t ops_failed = 0;     // any error, including EIO
  uint64_t ops_timed_out = 0;
  Micros sim_time = 0;
  double throughput = 0;  // completed ops per simulated second
  double mean_latency = 0;
  double p99_latency = 0;
  std::vector<uint64_t> per_server_ops;
  std::vector<uint64_t> per_server_inodes;
  std::map<std::string, uint64_t> per_label;
  uint64_t aggregations = 0;
  uint64_t aggregated_entries = 0;
  uint64_t fallbacks = 0;
  uint64_t fallback_entries = 0;
  uint64_t pushes = 0;
  uint64_t stale_errors = 0;
  uint64_t retransmits = 0;
  uint64_t max_pending_per_dir = 0;
  uint64_t crashes = 0;
  uint64_t reads_checked = 0;
  uint64_t read_violations = 0;
  size_t stale_set_members = 0;  // after quiescence
  size_t pending_entries = 0;    // after quiescence
  // Right after an end-of-run switch recovery, before any forced aggregation.
  size_t recovered_scattered_dirs = 0;
  size_t recovered_pending_entries = 0;
};

struct RunResult {
  bool pass = false;
  std::string divergence;  // first problem found, empty on PASS
  RunMetrics metrics;
  std::vector<LatencySample> latencies;  // completed measured operations
};

// One finished operation as the checker sees it.
struct HistoryRecord {
  OpSpec spec;
  OpResult result;
};

// Checks a history against the quiesced cluster: replays successful updates
// into a reference model, compares final states and every read's result.
struct CheckOutcome {
  bool pass = true;
  std::string divergence;
  uint64_t reads_checked = 0;
  uint64_t read_violations = 0;
};
CheckOutcome CheckHistory(const std::vector<HistoryRecord>& history, const Cluster& cluster);

RunResult RunWorkload(const RunConfig& config);

std::string MetricsJson(const RunConfig& config, const RunResult& result);
std::string LatencyCsv(const RunResult& result);

}  // namespace asyncfs
