#include "asyncfs/server/server.h"

#include <algorithm>

#include "asyncfs/common/errors.h"

namespace asyncfs {

Server::Server(ServerConfig config, Simulator& sim, Bytes* wal_device)
    : config_(config),
      sim_(sim),
      hasher_(config.hash_seed, config.tag_bits),
      device_(wal_device),
      wal_(wal_device),
      locks_([this](std::function<void()> fn) { Defer(std::move(fn)); }),
      rename_admission_([this](std::function<void()> fn) { Defer(std::move(fn)); }) {}

// Every timestamp, sequence number and id drawn here is unique per server:
// each draw costs one tick of service time and never goes backwards.
Micros Server::Tick() {
  Charge(1);
  clock_ = std::max(clock_ + 1, sim_.ContextTime());
  return clock_;
}

uint64_t Server::NewId(uint64_t kind) {
  constexpr uint64_t kClockMask = (uint64_t{1} << 47) - 1;
  return (kind << 60) | (uint64_t{config_.index & 0x1fff} << 47) | (static_cast<uint64_t>(Tick()) & kClockMask);
}

void Server::DrainReady() {
  if (draining_) return;
  draining_ = true;
  while (!ready_.empty()) {
    auto fn = std::move(ready_.front());
    ready_.pop_front();
    fn();
  }
  draining_ = false;
}

TimerId Server::After(Micros delay, std::function<void()> fn) {
  return sim_.Schedule(self(), delay, [this, fn = std::move(fn)] {
    fn();
    DrainReady();
  });
}

void Server::CancelTimer(TimerId& id) {
  if (id != 0) sim_.Cancel(id);
  id = 0;
}

void Server::LogOp(std::vector<Mutation> muts) {
  if (muts.empty()) return;
  Charge(config_.cost.wal_record + config_.cost.kv_mutation * static_cast<Micros>(muts.size()));
  wal_.Append(WalKind::kOpLog, EncodeMutations(muts));
  for (const auto& m : muts) d_.Apply(m);
}

void Server::LogChangeLogAppend(const InodeKey& dir_key, const ChangeLogEntry& e) {
  Charge(config_.cost.wal_record);
  wal_.Append(WalKind::kChangeLogAppend, EncodeChangeLogAppend(dir_key, e));
  d_.AppendChangeLog(dir_key, e);
}

void Server::LogChangeLogApplied(const InodeKey& dir_key, const std::set<RequestId>& requests) {
  if (requests.empty()) return;
  Charge(config_.cost.wal_record);
  wal_.Append(WalKind::kChangeLogApplied, EncodeChangeLogApplied(dir_key, requests));
  d_.DropChangeLog(dir_key, requests);
}

void Server::LogImport(const AggregationImport& imp) {
  Charge(config_.cost.wal_record);
  wal_.Append(WalKind::kAggregationImport, EncodeImport(imp));
  d_.Import(imp);
}

void Server::SendTo(ServerIndex dst, Opcode op, uint64_t id, Bytes body) {
  ServerMsg m{op, id, config_.index, std::move(body)};
  sim_.Send(Packet::Plain(self(), dst, m.Encode()));
}

void Server::SendReliable(ServerIndex dst, Opcode op, uint64_t id, Bytes body) {
  auto key = std::make_tuple(dst, static_cast<uint8_t>(op), id);
  StopReliable(dst, op, id);
  SendTo(dst, op, id, body);
  auto& slot = reliable_[key];
  slot.first = std::move(body);
  slot.second = After(config_.rpc_timeout, [this, key] { ResendReliable(key); });
}

void Server::ResendReliable(const ReliableKey& key) {
  auto it = reliable_.find(key);
  if (it == reliable_.end()) return;
  ++counters_.rpc_resends;
  SendTo(std::get<0>(key), static_cast<Opcode>(std::get<1>(key)), std::get<2>(key), it->second.first);
  it->second.second = After(config_.rpc_timeout, [this, key] { ResendReliable(key); });
}

void Server::StopReliable(ServerIndex dst, Opcode op, uint64_t id) {
  auto it = reliable_.find(std::make_tuple(dst, static_cast<uint8_t>(op), id));
  if (it == reliable_.end()) return;
  CancelTimer(it->second.second);
  reliable_.erase(it);
}

void Server::Reply(NodeAddr client, const ClientResponse& resp) {
  sim_.Send(Packet::Plain(self(), client, resp.Encode()));
}

void Server::ReplyFailedUpdate(NodeAddr client, const ClientResponse& resp) {
  LogOp({mut::CacheResponse{resp.id, resp.Encode()}});
  Reply(client, resp);
}

std::vector<ServerIndex> Server::Peers() const {
  std::vector<ServerIndex> out;
  for (ServerIndex s = 0; s < config_.n_servers; ++s) {
    if (s != config_.index) out.push_back(s);
  }
  return out;
}

void Server::OnPacket(const Packet& pkt) {
  Charge(config_.cost.handler);
  auto payload = pkt.Payload();
  try {
    Opcode op = PeekOpcode(payload);
    if (IsClientOp(op)) {
      HandleClientRequest(pkt, ClientRequest::Decode(payload));
    } else if (op == Opcode::kResponse) {
      OnResponsePacket(pkt);
    } else {
      HandleServerMsg(ServerMsg::Decode(payload));
    }
  } catch (const DecodeError&) {
    // Garbage on the wire is dropped like a malformed datagram.
  }
  DrainReady();
}

void Server::HandleServerMsg(const ServerMsg& m) {
  switch (m.op) {
    case Opcode::kFallbackDone: OnFallbackDone(m); break;
    case Opcode::kPush: OnPush(m); break;
    case Opcode::kPushAck: OnPushAck(m); break;
    case Opcode::kCollect: OnCollect(m); break;
    case Opcode::kCollectReply: OnCollectReply(m); break;
    case Opcode::kFinish: OnFinish(m); break;
    case Opcode::kFinishAck: OnFinishAck(m); break;
    case Opcode::kAggregateNow: OnAggregateNow(m); break;
    case Opcode::kAggregateDone: OnAggregateDone(m); break;
    case Opcode::kInvalFetch: OnInvalFetch(m); break;
    case Opcode::kInvalReply: OnInvalReply(m); break;
    case Opcode::kRenamePrepare: OnRenamePrepare(m); break;
    case Opcode::kRenameVote: OnRenameVote(m); break;
    case Opcode::kRenameMoved: OnRenameMoved(m); break;
    case Opcode::kRenameMovedReply: OnRenameMovedReply(m); break;
    case Opcode::kRenameDecide: OnRenameDecide(m); break;
    case Opcode::kRenameAck: OnRenameAck(m); break;
    case Opcode::kRemoveEcho: OnRemoveConfirmed(m.id); break;
    default: break;
  }
}

void Server::SetCrashAfterAppends(uint64_t n) {
  crash_after_ = n;
  NodeAddr me = self();
  wal_.SetAppendHook([n, me](uint64_t appends) {
    if (appends == n) throw CrashSignal{me};
  });
}

void Server::SetBlockClients(bool on) {
  block_clients_ = on;
  if (!on) {
    auto held = std::move(deferred_);
    deferred_.clear();
    for (auto& pkt : held) OnPacket(pkt);
  }
  DrainReady();
}

bool Server::Idle() const {
  return executing_.empty() && waiting_.empty() && collects_.empty() && remote_collects_.empty() &&
         reliable_.empty() && renames_.empty() && participants_.empty() && rename_requests_.empty() &&
         !recovering_;
}

std::string Server::CollectsDebug() const {
  std::string out;
  for (const auto& [cid, oc] : collects_) {
    out += " [collect fp=" + std::to_string(oc.fp.Value()) + " owner=" + std::to_string(OwnerOfGroup(oc.fp)) + " kind=" + std::to_string(int(oc.kind)) + " phase=" + std::to_string(int(oc.phase)) +
           " awaiting=" + std::to_string(oc.awaiting.size()) + "]";
  }
  return out;
}

std::string Server::DebugString() const {
  return "executing=" + std::to_string(executing_.size()) + " waiting=" + std::to_string(waiting_.size()) +
         " collects=" + std::to_string(collects_.size()) + " remote_collects=" + std::to_string(remote_collects_.size()) +
         " reliable=" + std::to_string(reliable_.size()) + " renames=" + std::to_string(renames_.size()) +
         " participants=" + std::to_string(participants_.size()) + " rename_requests=" + std::to_string(rename_requests_.size()) +
         " recovering=" + std::to_string(recovering_) + " lock_holders=" + std::to_string(locks_.holders()) + CollectsDebug() + locks_.DebugString();
}

size_t Server::UnpushedEntries(const InodeKey& dir_key) const {
  auto it = d_.changelogs.find(dir_key);
  if (it == d_.changelogs.end()) return 0;
  size_t in_flight = 0;
  if (auto o = outbox_.find(dir_key); o != outbox_.end()) {
    for (const auto& c : o->second) in_flight += c.log.size();
  }
  return it->second.size() - std::min(in_flight, it->second.size());
}

void Server::Bootstrap() {
  InodeKey root = InodeKey::Root();
  if (OwnerOfGroup(GroupOf(root)) != config_.index) return;
  InodeRecord rec;
  rec.key = root;
  rec.kind = InodeKind::kDirectory;
  rec.id = DirectoryId::Root();
  rec.perms = 0755;
  LogOp({mut::PutInode{rec}});
  DrainReady();
}

// ---- recovery

void Server::Recover() {
  recovering_ = true;
  WalScan scan = WriteAheadLog::Recover(device_);
  for (const auto& rec : scan.records) d_.ApplyRecord(rec);
  clock_ = std::max(clock_, sim_.ContextTime());

  for (const auto& e : d_.own_invalidations) inval_.AddCommitted(e);

  // A crash between an op-log record and its change-log append leaves an intent.
  auto intents = d_.intents;
  for (const auto& [req, intent] : intents) LogChangeLogAppend(intent.parent_key, intent.entry);

  // Rename participants keep their locks until the coordinator decides.
  for (const auto& [txn, specs] : d_.prepared) {
    std::vector<LockRequest> reqs;
    for (const auto& s : specs) reqs.push_back({LockName::Key(s.key), s.exclusive});
    Participant p;
    p.holder = locks_.Acquire(std::move(reqs), [] {});
    p.granted = true;
    participants_[txn] = std::move(p);
  }

  for (ServerIndex peer : Peers()) {
    inval_awaiting_.insert(peer);
    SendReliable(peer, Opcode::kInvalFetch, config_.index, {});
  }
  recovery_timer_ = After(config_.recovery_wait, [this] {
    recovery_timer_ = 0;
    for (ServerIndex peer : inval_awaiting_) StopReliable(peer, Opcode::kInvalFetch, config_.index);
    inval_awaiting_.clear();
    FinishRecovery();
  });

  ReannouncePending();
  for (const auto& [dir, log] : d_.changelogs) {
    if (!log.empty()) ArmIdleTimer(dir);
  }
  std::set<uint64_t> stashed_groups;
  for (const auto& [dir, chunks] : d_.stash) {
    if (!chunks.empty()) stashed_groups.insert(GroupOf(dir).Value());
  }
  for (uint64_t fp : stashed_groups) ArmGraceTimer(Fingerprint::FromValue(fp));
  if (config_.index == 0) ResumeRenamesAfterRecovery();
  FinishRecovery();
  DrainReady();
}

// Re-inserts the fingerprint of everything still pending here. The packet
// loops back through the switch; an overflow reaches the parent's owner,
// which applies the carried log synchronously.
void Server::ReannouncePending() {
  std::set<InodeKey> dirs;
  for (const auto& [dir, log] : d_.changelogs) {
    if (!log.empty()) dirs.insert(dir);
  }
  for (const auto& [dir, chunks] : d_.stash) {
    if (!chunks.empty()) dirs.insert(dir);
  }
  for (const auto& dir : dirs) {
    RequestId id = (uint64_t{1} << 63) | NewId(0);
    reannounce_pending_[id] = dir;
    SendReannounce(id);
  }
}

void Server::SendReannounce(RequestId id) {
  auto it = reannounce_pending_.find(id);
  if (it == reannounce_pending_.end()) return;
  const InodeKey& dir = it->second;
  ClientResponse resp;
  resp.id = id;
  resp.op = Opcode::kCreate;
  resp.fallback = FallbackInfo{config_.index, 0, PendingSnapshot(dir)};
  StaleSetHeader h;
  h.op = SetOp::kInsert;
  h.sender = static_cast<uint8_t>(config_.index);
  h.fp = GroupOf(dir);
  sim_.Send(Packet::WithHeader(self(), self(), h, resp.Encode()));
  After(config_.rpc_timeout, [this, id] { SendReannounce(id); });
}

void Server::ConfirmReannounce(RequestId id) {
  if (reannounce_pending_.erase(id) > 0) FinishRecovery();
}

void Server::OnInvalFetch(const ServerMsg& m) {
  InvalReplyMsg reply;
  reply.committed.assign(inval_.committed().begin(), inval_.committed().end());
  for (const auto& [cid, oc] : collects_) {
    if (oc.invalidation && oc.phase != CollectPhase::kLocking) reply.pending.emplace_back(cid, *oc.invalidation);
  }
  for (const auto& [txn, p] : participants_) {
    if (p.moved && p.moved->invalidation) reply.pending.emplace_back(p.moved_cid, *p.moved->invalidation);
  }
  SendTo(m.from, Opcode::kInvalReply, m.id, Encode(reply));
}

void Server::OnInvalReply(const ServerMsg& m) {
  if (!inval_awaiting_.erase(m.from)) return;
  StopReliable(m.from, Opcode::kInvalFetch, config_.index);
  auto reply = DecodeBody<InvalReplyMsg>(m.body);
  for (const auto& e : reply.committed) inval_.AddCommitted(e);
  for (const auto& [cid, e] : reply.pending) {
    if (!resolved_collects_.count(cid)) inval_.AddPending(cid, e);
  }
  FinishRecovery();
}

void Server::FinishRecovery() {
  if (!recovering_ || !inval_awaiting_.empty() || !reannounce_pending_.empty()) return;
  recovering_ = false;
  CancelTimer(recovery_timer_);
}

}  // namespace asyncfs
