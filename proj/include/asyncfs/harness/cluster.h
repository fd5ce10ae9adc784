#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "asyncfs/client/client.h"
#include "asyncfs/netsim/simulator.h"
#include "asyncfs/server/server.h"
#include "asyncfs/switch/switch.h"

namespace asyncfs {

struct ClusterConfig {
  uint32_t n_servers = 4;
  uint32_t n_clients = 4;
  StaleSetConfig stale_set;
  FaultProfile fault;
  ServerConfig server;  // index and n_servers are filled per server
  ClientConfig client;  // likewise
  uint64_t hash_seed = Hasher::kDefaultSeed;
  int tag_bits = Fingerprint::kTagBits;
  Micros restart_delay = 5'000;
};

// Namespace entry as seen from the root, for comparisons.
struct ViewNode {
  InodeKind kind = InodeKind::kFile;
  uint16_t perms = 0;
  bool operator==(const ViewNode&) const = default;
};
using FsView = std::map<std::string, ViewNode>;  // absolute path -> node ("/" excluded)

// Structural problems found while walking the merged server state.
struct ViewReport {
  FsView view;
  std::vector<std::string> problems;
};

// Switch, fabric, servers and clients wired together.
class Cluster {
 public:
  explicit Cluster(ClusterConfig config);
  ~Cluster();

  Simulator& sim() { return *sim_; }
  Switch& fabric_switch() { return *switch_; }
  Server& server(ServerIndex i) { return *servers_.at(i); }
  Client& client(uint32_t c) { return *clients_.at(c); }
  const ClusterConfig& config() const { return config_; }
  uint32_t n_servers() const { return config_.n_servers; }
  uint32_t n_clients() const { return config_.n_clients; }

  // Issues an operation from client c's context.
  void Submit(uint32_t c, Opcode op, const std::string& path, Client::Callback cb, uint16_t perms = 0644,
              const std::string& dst = {});

  // Crashes server i now (outside any handler); it restarts after restart_delay.
  void CrashServer(ServerIndex i);
  // Server i crashes right after its n-th WAL append from now on.
  void ArmCrash(ServerIndex i, uint64_t appends_from_now);
  uint64_t crashes() const { return crashes_; }
  bool AllServersUp() const;

  // Switch failure: clears the stale set, flushes every server's change-logs
  // to the owners and applies them before clients are served again.
  void FailSwitch();
  bool switch_recovering() const { return switch_recovering_; }

  bool ClientsIdle() const;
  bool ServersIdle() const;
  // Drains traffic and timers, then aggregates every group left in the stale
  // set. Returns false if the system did not settle before `deadline`.
  bool Quiesce(Micros deadline = INT64_MAX);

  // Walks the namespace across all servers' stores.
  ViewReport BuildView() const;
  size_t TotalPendingEntries() const;
  size_t TotalStashedEntries() const;
  // Directories (root included) whose fingerprint the stale set reports.
  size_t ScatteredDirectories() const;
  // Cached response for a request id at any server, if one was recorded.
  std::optional<ClientResponse> FindCachedResponse(RequestId id) const;

 private:
  void OnCrash(NodeAddr addr);
  void Restart(ServerIndex i);
  ServerConfig ServerConfigFor(ServerIndex i) const;

  ClusterConfig config_;
  std::unique_ptr<Switch> switch_;
  std::unique_ptr<Simulator> sim_;
  std::vector<Bytes> wal_devices_;
  std::vector<std::unique_ptr<Server>> servers_;
  std::vector<std::unique_ptr<Server>> retired_;  // crashed incarnations, kept until teardown
  std::vector<std::unique_ptr<Client>> clients_;
  uint64_t crashes_ = 0;
  bool switch_recovering_ = false;
};

inline constexpr NodeAddr kHarnessAddr = 900'000;

}  // namespace asyncfs
