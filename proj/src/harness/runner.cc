#include "asyncfs/harness/runner.h"

#include <algorithm>
#include <deque>
#include <numeric>

#include <json.hpp>

namespace asyncfs {

namespace {

class Driver {
 public:
  Driver(const RunConfig& config, Cluster& cluster, Workload& workload)
      : config_(config), cluster_(cluster), workload_(workload) {}

  // Runs `ops` with a bounded window; returns once all have completed.
  void RunPhase(std::deque<OpSpec> ops, bool measured) {
    queue_ = std::move(ops);
    measured_ = measured;
    from_workload_ = false;
    Pump();
    cluster_.sim().RunUntil([&] { return inflight_ == 0 && queue_.empty(); });
  }

  void RunMeasured() {
    measured_ = true;
    from_workload_ = true;
    Pump();
    cluster_.sim().RunUntil([&] { return inflight_ == 0 && exhausted_; });
  }

  std::vector<HistoryRecord>& history() { return history_; }
  uint64_t measured_issued() const { return measured_issued_; }

 private:
  std::optional<OpSpec> Take() {
    if (!from_workload_) {
      if (queue_.empty()) return std::nullopt;
      OpSpec op = std::move(queue_.front());
      queue_.pop_front();
      return op;
    }
    auto op = workload_.Next();
    if (!op) exhausted_ = true;
    return op;
  }

  void Pump() {
    uint32_t window = std::max<uint32_t>(1, config_.workload.inflight);
    while (inflight_ < window) {
      auto op = Take();
      if (!op) return;
      Issue(std::move(*op));
    }
  }

  void Issue(OpSpec op) {
    if (measured_) {
      ++measured_issued_;
      if (config_.crash && measured_issued_ == config_.crash->after_ops) {
        const CrashPlan& c = *config_.crash;
        if (c.appends == 0) {
          cluster_.CrashServer(c.server);
        } else {
          cluster_.ArmCrash(c.server, c.appends);
        }
      }
      if (config_.switch_failure_after_ops && measured_issued_ == *config_.switch_failure_after_ops) {
        cluster_.FailSwitch();
      }
    }
    ++inflight_;
    uint32_t client = next_client_++ % cluster_.n_clients();
    size_t slot = history_.size();
    history_.push_back({op, {}});
    measured_flags_.push_back(measured_);
    cluster_.Submit(
        client, op.op, op.path,
        [this, slot](const OpResult& r) {
          history_[slot].result = r;
          workload_.OnComplete(history_[slot].spec, r);
          --inflight_;
          Pump();
        },
        op.perms, op.dst);
  }

 public:
  const std::vector<bool>& measured_flags() const { return measured_flags_; }

 private:
  const RunConfig& config_;
  Cluster& cluster_;
  Workload& workload_;
  std::deque<OpSpec> queue_;
  bool measured_ = false;
  bool from_workload_ = false;
  bool exhausted_ = false;
  uint32_t inflight_ = 0;
  uint32_t next_client_ = 0;
  uint64_t measured_issued_ = 0;
  std::vector<HistoryRecord> history_;
  std::vector<bool> measured_flags_;
};

}  // namespace

RunResult RunWorkload(const RunConfig& config) {
  ClusterConfig cc = config.cluster;
  if (config.sync_mode) cc.stale_set.stages = 0;
  Cluster cluster(cc);
  Workload workload(config.workload);
  Driver driver(config, cluster, workload);
  RunResult out;
  RunMetrics& m = out.metrics;

  for (auto& phase : workload.Prefill()) driver.RunPhase({phase.begin(), phase.end()}, false);
  Micros start = cluster.sim().Now();
  driver.RunMeasured();
  Micros end = cluster.sim().Now();
  if (config.switch_failure_at_end) {
    cluster.FailSwitch();
    cluster.sim().RunUntil([&] { return !cluster.switch_recovering(); });
    m.recovered_scattered_dirs = cluster.ScatteredDirectories();
    m.recovered_pending_entries = cluster.TotalPendingEntries();
  }
  if (config.switch_failure_after_ops) {
    cluster.sim().RunUntil([&] { return !cluster.switch_recovering(); });
  }

  auto& history = driver.history();
  const auto& measured = driver.measured_flags();
  m.per_server_ops.assign(cc.n_servers, 0);
  for (size_t i = 0; i < history.size(); ++i) {
    if (!measured[i]) continue;
    const OpResult& r = history[i].result;
    ++m.ops_issued;
    ++m.per_label[history[i].spec.label];
    ++m.per_server_ops[r.server];
    if (r.err == Errc::kOk) {
      ++m.ops_completed;
      out.latencies.push_back({r.op, r.issued, r.completed, r.server});
    } else {
      ++m.ops_failed;
      if (r.err == Errc::kIo) ++m.ops_timed_out;
    }
  }
  m.sim_time = end - start;
  if (m.sim_time > 0) m.throughput = m.ops_completed * 1e6 / static_cast<double>(m.sim_time);
  if (!out.latencies.empty()) {
    std::vector<Micros> lat;
    for (const auto& s : out.latencies) lat.push_back(s.completed - s.issued);
    std::sort(lat.begin(), lat.end());
    m.mean_latency = std::accumulate(lat.begin(), lat.end(), 0.0) / lat.size();
    m.p99_latency = static_cast<double>(lat[std::min(lat.size() - 1, (lat.size() * 99 + 99) / 100 - 1)]);
  }

  bool quiet = cluster.Quiesce(cluster.sim().Now() + 600'000'000);
  for (ServerIndex i = 0; i < cc.n_servers; ++i) {
    const Server& s = cluster.server(i);
    const ServerCounters& k = s.counters();
    m.per_server_inodes.push_back(s.state().store.inodes().size());
    m.aggregations += k.aggregations;
    m.aggregated_entries += k.aggregated_entries;
    m.fallbacks += k.fallbacks_applied;
    m.fallback_entries += k.fallback_entries;
    m.pushes += k.pushes_sent;
    m.stale_errors += k.stale_errors;
    m.max_pending_per_dir = std::max(m.max_pending_per_dir, k.max_pending_per_dir);
  }
  for (uint32_t c = 0; c < cc.n_clients; ++c) m.retransmits += cluster.client(c).counters().retransmits;
  m.crashes = cluster.crashes();
  m.stale_set_members = cluster.fabric_switch().ResolveMembers().size();
  m.pending_entries = cluster.TotalPendingEntries();

  out.pass = true;
  if (!quiet) {
    out.pass = false;
    out.divergence = "system did not quiesce";
  } else if (m.stale_set_members != 0 || m.pending_entries != 0 || cluster.TotalStashedEntries() != 0) {
    out.pass = false;
    out.divergence = "scattered state left after quiescence";
  }
  if (config.check) {
    CheckOutcome chk = CheckHistory(history, cluster);
    m.reads_checked = chk.reads_checked;
    m.read_violations = chk.read_violations;
    if (!chk.pass && out.pass) {
      out.pass = false;
      out.divergence = chk.divergence;
    }
  }
  return out;
}

std::string MetricsJson(const RunConfig& config, const RunResult& result) {
  const RunMetrics& m = result.metrics;
  nlohmann::ordered_json j;
  j["verdict"] = result.pass ? "PASS" : "FAIL";
  if (!result.pass) j["divergence"] = result.divergence;
  j["config"] = {
      {"servers", config.cluster.n_servers},
      {"clients", config.cluster.n_clients},
      {"workload", PatternName(config.workload.pattern)},
      {"mix", MixName(config.workload.mix)},
      {"ops", config.workload.ops},
      {"inflight", config.workload.inflight},
      {"burst_size", config.workload.burst_size},
      {"loss", config.cluster.fault.loss},
      {"dup", config.cluster.fault.dup},
      {"reorder", config.cluster.fault.reorder_window},
      {"seed", config.workload.seed},
      {"stages", config.sync_mode ? 0 : config.cluster.stale_set.stages},
      {"index_bits", config.cluster.stale_set.index_bits},
      {"push_threshold", config.cluster.server.push_threshold},
      {"mode", config.sync_mode ? "sync" : "async"},
  };
  j["ops_issued"] = m.ops_issued;
  j["ops_completed"] = m.ops_completed;
  j["ops_failed"] = m.ops_failed;
  j["ops_timed_out"] = m.ops_timed_out;
  j["sim_time_us"] = m.sim_time;
  j["throughput_ops_per_s"] = m.throughput;
  j["latency_mean_us"] = m.mean_latency;
  j["latency_p99_us"] = m.p99_latency;
  j["per_server_ops"] = m.per_server_ops;
  j["per_server_inodes"] = m.per_server_inodes;
  j["per_op"] = m.per_label;
  j["aggregations"] = m.aggregations;
  j["aggregated_entries"] = m.aggregated_entries;
  j["fallbacks"] = m.fallbacks;
  j["fallback_entries"] = m.fallback_entries;
  j["pushes"] = m.pushes;
  j["stale_errors"] = m.stale_errors;
  j["client_retransmits"] = m.retransmits;
  j["max_pending_per_dir"] = m.max_pending_per_dir;
  j["crashes"] = m.crashes;
  j["reads_checked"] = m.reads_checked;
  j["read_violations"] = m.read_violations;
  return j.dump(2);
}

std::string LatencyCsv(const RunResult& result) {
  std::string out = "op,issued_us,completed_us,latency_us,server\n";
  for (const auto& s : result.latencies) {
    out += std::string(OpcodeName(s.op)) + "," + std::to_string(s.issued) + "," + std::to_string(s.completed) + "," +
           std::to_string(s.completed - s.issued) + "," + std::to_string(s.server) + "\n";
  }
  return out;
}

}  // namespace asyncfs
