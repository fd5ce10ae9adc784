#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "asyncfs/common/hash.h"
#include "asyncfs/netsim/simulator.h"
#include "asyncfs/server/lock_table.h"
#include "asyncfs/server/messages.h"
#include "asyncfs/server/meta_store.h"
#include "asyncfs/server/wal.h"

namespace asyncfs {

// Simulated service time charged by handlers.
struct CostModel {
  Micros handler = 10;     // parse + dispatch of one request
  Micros wal_record = 2;   // one WAL append
  Micros kv_mutation = 1;  // one key-value put/delete
  Micros sync_txn = 20;    // synchronous parent-directory transaction
};

struct ServerConfig {
  ServerIndex index = 0;
  uint32_t n_servers = 1;
  uint64_t hash_seed = Hasher::kDefaultSeed;
  int tag_bits = Fingerprint::kTagBits;
  uint64_t id_seed = 1;
  size_t push_threshold = 29;
  Micros idle_timeout = 50'000;
  Micros grace_period = 10'000;
  Micros rpc_timeout = 10'000;     // server-to-server resend interval
  Micros unlock_resend = 20'000;   // resend of an unacknowledged INSERT response
  Micros recovery_wait = 5'000;    // how long a recovering server waits for peers
  CostModel cost;
};

struct ServerCounters {
  uint64_t requests = 0;
  uint64_t duplicate_requests = 0;
  uint64_t aggregations = 0;
  uint64_t aggregated_entries = 0;
  uint64_t fallbacks_applied = 0;
  uint64_t fallback_entries = 0;
  uint64_t pushes_sent = 0;
  uint64_t pushes_received = 0;
  uint64_t stale_errors = 0;
  uint64_t unlock_resends = 0;
  uint64_t rpc_resends = 0;
  uint64_t renames = 0;
  uint64_t max_pending_per_dir = 0;  // high-water mark of unpushed entries for one directory
};

// One metadata server. All methods run inside the simulator's processing
// context for this node; nothing here is thread-safe.
class Server : public Node {
 public:
  // `wal_device` outlives the server object across crashes.
  Server(ServerConfig config, Simulator& sim, Bytes* wal_device);

  // Writes the root directory inode if this server owns it (fresh cluster).
  void Bootstrap();
  // Rebuilds state from the WAL and rejoins the cluster.
  void Recover();

  void OnPacket(const Packet& pkt) override;

  // Control-plane hooks used by the harness (call via Simulator::Post).
  void ForceAggregate(Fingerprint fp, std::function<void()> done);
  // Switch recovery: push every pending change-log, then report.
  void FlushAllPending(std::function<void()> done);
  // Switch recovery: apply everything stashed at this owner.
  void ApplyAllStashed();
  void SetBlockClients(bool on);

  void SetCrashAfterAppends(uint64_t n);

  const DurableState& state() const { return d_; }
  const InvalidationList& invalidations() const { return inval_; }
  const ServerCounters& counters() const { return counters_; }
  const ServerConfig& config() const { return config_; }
  const Hasher& hasher() const { return hasher_; }
  uint64_t wal_appends() const { return wal_.appends(); }
  bool recovering() const { return recovering_; }
  // True when no request, aggregation, push or transaction is in flight.
  bool Idle() const;
  size_t UnpushedEntries(const InodeKey& dir_key) const;
  // Sizes of the in-flight tables, for diagnostics.
  std::string DebugString() const;
  uint64_t lock_order_violations() const { return locks_.order_violations(); }

  // Group-membership helper shared with the harness.
  Fingerprint GroupOf(const InodeKey& dir_key) const { return hasher_.FingerprintOf(dir_key); }
  ServerIndex OwnerOfGroup(Fingerprint fp) const { return OwnerOfDirectory(fp, config_.n_servers); }

 private:
  std::string CollectsDebug() const;

  struct Waiting {
    LockTable::HolderId holder = 0;
    ClientRequest req;
    ClientResponse resp;
    TimerId timer = 0;
  };

  struct OutboxChunk {
    uint64_t push_id = 0;
    ChangeLog log;
  };

  struct GroupState {
    uint64_t started = 0;    // aggregations begun
    uint64_t completed = 0;  // aggregations finished
    bool running = false;
    bool again = false;
    // Work waiting for aggregation number `first` to complete.
    std::vector<std::pair<uint64_t, std::function<void()>>> waiters;
    TimerId grace = 0;
  };

  enum class CollectKind : uint8_t { kAggregate, kRmdir, kMoved };
  enum class CollectPhase : uint8_t { kLocking, kCollecting, kRemoving, kDone };

  struct OwnerCollect {
    CollectKind kind = CollectKind::kAggregate;
    CollectPhase phase = CollectPhase::kLocking;
    Fingerprint fp;
    InodeKey dir_key;
    std::optional<InvalidationList::Entry> invalidation;
    LockTable::HolderId local_lock = 0;
    std::set<ServerIndex> awaiting;
    std::map<ServerIndex, CollectReplyMsg> replies;
    uint64_t remove_seq = 0;
    TimerId timer = 0;
    std::function<void()> on_collected;
  };

  struct RemoteCollect {
    ServerIndex owner = 0;
    LockTable::HolderId holder = 0;
    bool granted = false;
    CollectMsg msg;
    Bytes reply;
    TimerId timer = 0;
  };

  enum class RenameStage : uint8_t { kPrepare, kAggregate, kMoved, kDecided };

  struct RenameTxn {
    ClientRequest req;
    uint64_t txn = 0;
    RenameStage stage = RenameStage::kPrepare;
    std::map<ServerIndex, RenamePrepareMsg> prepares;
    std::set<ServerIndex> votes_pending;
    Errc vote_err = Errc::kOk;
    std::optional<InodeRecord> src_rec;
    std::vector<DirEntryRecord> moved_entries;
    std::map<uint64_t, ServerIndex> agg_pending;  // request id -> parent owner
    std::map<ServerIndex, RenameDecideMsg> decisions;
    std::set<ServerIndex> acks_pending;
    ClientResponse resp;
    LockTable::HolderId admission = 0;
  };

  struct Participant {
    LockTable::HolderId holder = 0;
    bool granted = false;
    RenamePrepareMsg prepare;
    std::optional<Bytes> vote;
    // Directory renames: the collect that pulls the moved directory's queued updates here.
    uint64_t moved_cid = 0;
    std::optional<OwnerCollect> moved;
    std::optional<Bytes> moved_reply;
  };

  // ---- plumbing (server.cc)
  NodeAddr self() const { return config_.index; }
  Micros Tick();
  // Unique id: 4-bit kind | 13-bit server | 47-bit clock.
  uint64_t NewId(uint64_t kind);
  void Defer(std::function<void()> fn) { ready_.push_back(std::move(fn)); }
  void DrainReady();
  TimerId After(Micros delay, std::function<void()> fn);
  void CancelTimer(TimerId& id);
  void Charge(Micros c) { sim_.Charge(c); }
  void LogOp(std::vector<Mutation> muts);
  void LogChangeLogAppend(const InodeKey& dir_key, const ChangeLogEntry& e);
  void LogChangeLogApplied(const InodeKey& dir_key, const std::set<RequestId>& requests);
  void LogImport(const AggregationImport& imp);
  void SendTo(ServerIndex dst, Opcode op, uint64_t id, Bytes body);
  void SendReliable(ServerIndex dst, Opcode op, uint64_t id, Bytes body);
  void StopReliable(ServerIndex dst, Opcode op, uint64_t id);
  using ReliableKey = std::tuple<ServerIndex, uint8_t, uint64_t>;
  void ResendReliable(const ReliableKey& key);
  void Reply(NodeAddr client, const ClientResponse& resp);
  // Failed update: the outcome is recorded so a late duplicate of the same
  // request cannot execute against a changed namespace.
  void ReplyFailedUpdate(NodeAddr client, const ClientResponse& resp);
  void HandleServerMsg(const ServerMsg& m);
  std::vector<ServerIndex> Peers() const;

  // ---- double-inode writes, unlock notifications, fallback, pushes (server_write.cc)
  void HandleClientRequest(const Packet& pkt, ClientRequest req);
  void StartWrite(ClientRequest req);
  void FinishWrite(const ClientRequest& req, LockTable::HolderId holder);
  void AnnounceAndWait(const ClientRequest& req, LockTable::HolderId holder, ClientResponse resp);
  void SendInsertResponse(RequestId id);
  void OnResponsePacket(const Packet& pkt);
  void ApplyFallback(const ClientResponse& resp);
  void OnFallbackDone(const ServerMsg& m);
  void ReleaseWaiting(RequestId id);
  void AppendDelayed(const InodeKey& parent_key, const ChangeLogEntry& e);
  void PushDirectory(const InodeKey& dir_key);
  void OnPush(const ServerMsg& m);
  void OnPushAck(const ServerMsg& m);
  void ImportLocal(const InodeKey& dir_key, ChangeLog log);
  ChangeLog PendingSnapshot(const InodeKey& dir_key) const;
  void DropPending(const InodeKey& dir_key, const std::set<RequestId>& requests);
  void ArmIdleTimer(const InodeKey& dir_key);
  void ArmGraceTimer(Fingerprint fp);
  void NotifyFlushed();

  // ---- reads, aggregation, collect, rmdir (server_aggregate.cc)
  void HandleRead(const Packet& pkt, const ClientRequest& req);
  void ServeRead(const ClientRequest& req);
  void HandleSingleInode(const ClientRequest& req);
  void Aggregate(Fingerprint fp);
  void StartCollect(uint64_t collect_id);
  void OnCollect(const ServerMsg& m);
  void OnCollectReply(const ServerMsg& m);
  void MaybeFinishCollectPhase(uint64_t collect_id);
  void OnRemoveConfirmed(uint64_t collect_id);
  void OnFinish(const ServerMsg& m);
  void OnFinishAck(const ServerMsg& m);
  void CompleteAggregation(uint64_t collect_id);
  std::vector<Mutation> PlanGroupApply(const std::vector<InodeKey>& dirs, ApplyStats* stats);
  std::vector<InodeKey> LocalDirsInGroup(Fingerprint fp) const;
  void HandleRmdir(ClientRequest req);
  void RmdirCollected(uint64_t collect_id);
  void SendRemove(uint64_t collect_id);
  void SendFinishAll(uint64_t collect_id, const OwnerCollect& oc, InvalAction action);
  void ResendCollectReply(uint64_t collect_id);
  void ResolveOrphanCollect(const ServerMsg& m);
  // Id kind of collects run for a directory rename; derived from the txn id.
  static constexpr uint64_t kMovedCollectKind = 4;

  // ---- rename (server_rename.cc)
  void HandleRename(ClientRequest req);
  void AdmitRename(const ClientRequest& req, std::function<void(LockTable::HolderId)> start);
  void StartRename(ClientRequest req, LockTable::HolderId admission);
  std::map<ServerIndex, RenamePrepareMsg> PlanPrepares(const ClientRequest& req) const;
  void OnRenamePrepare(const ServerMsg& m);
  void EvaluatePrepare(uint64_t txn, ServerIndex coordinator);
  void OnRenameVote(const ServerMsg& m);
  void AfterVotes(uint64_t txn);
  void OnRenameMoved(const ServerMsg& m);
  void OnRenameMovedReply(const ServerMsg& m);
  void OnAggregateNow(const ServerMsg& m);
  void OnAggregateDone(const ServerMsg& m);
  void Decide(uint64_t txn, Errc err);
  void SendDecisions(uint64_t txn);
  void OnRenameDecide(const ServerMsg& m);
  void OnRenameAck(const ServerMsg& m);
  void FinishRename(uint64_t txn);
  void ResumeRenamesAfterRecovery();

  // ---- recovery (server.cc)
  void ReannouncePending();
  void OnInvalFetch(const ServerMsg& m);
  void OnInvalReply(const ServerMsg& m);
  void SendReannounce(RequestId id);
  void ConfirmReannounce(RequestId id);
  void FinishRecovery();

  ServerConfig config_;
  Simulator& sim_;
  Hasher hasher_;
  Bytes* device_;
  WriteAheadLog wal_;
  DurableState d_;
  InvalidationList inval_;
  LockTable locks_;
  ServerCounters counters_;
  Micros clock_ = 0;
  std::deque<std::function<void()>> ready_;
  bool draining_ = false;
  bool recovering_ = false;
  bool block_clients_ = false;
  uint64_t crash_after_ = 0;

  std::unordered_set<RequestId> executing_;
  std::unordered_map<RequestId, Waiting> waiting_;
  std::map<InodeKey, std::deque<OutboxChunk>> outbox_;
  std::map<uint64_t, std::pair<InodeKey, ServerIndex>> push_index_;  // push id -> (dir, owner)
  std::map<InodeKey, TimerId> idle_timers_;
  std::map<uint64_t, GroupState> groups_;
  std::map<uint64_t, OwnerCollect> collects_;
  std::map<uint64_t, RemoteCollect> remote_collects_;
  std::set<uint64_t> resolved_collects_;
  std::map<ReliableKey, std::pair<Bytes, TimerId>> reliable_;
  std::vector<Packet> deferred_;
  std::vector<std::function<void()>> flush_waiters_;  // client packets held while clients are blocked
  std::map<uint64_t, ClientRequest> rmdirs_;  // collect id -> request
  std::map<uint64_t, LockTable::HolderId> rmdir_locks_;

  // Coordinator admission: renames naming a common key wait for each other;
  // directory renames exclude all others.
  LockTable rename_admission_;
  std::map<uint64_t, RenameTxn> renames_;
  std::unordered_set<RequestId> rename_requests_;
  std::map<uint64_t, Participant> participants_;
  std::map<std::pair<ServerIndex, uint64_t>, bool> agg_requests_;  // (requester, id) -> done

  std::set<ServerIndex> inval_awaiting_;
  TimerId recovery_timer_ = 0;
  std::map<RequestId, InodeKey> reannounce_pending_;
};

}  // namespace asyncfs
