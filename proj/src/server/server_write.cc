#include <algorithm>

#include "asyncfs/server/server.h"

namespace asyncfs {

namespace {

// b's ops that are not already in a, appended after a's.
ChangeLog MergeUnique(ChangeLog a, ChangeLog b) {
  b.Remove(a.Requests());
  a.Merge(b);
  return a;
}

ChangeOpType ChangeOpFor(Opcode op) {
  switch (op) {
    case Opcode::kCreate: return ChangeOpType::kCreate;
    case Opcode::kDelete: return ChangeOpType::kDelete;
    case Opcode::kMkdir: return ChangeOpType::kMkdir;
    default: return ChangeOpType::kRmdirChild;
  }
}

}  // namespace

void Server::HandleClientRequest(const Packet& pkt, ClientRequest req) {
  if (block_clients_) {
    deferred_.push_back(pkt);
    return;
  }
  if (recovering_) return;  // the client retransmits
  ++counters_.requests;

  if (waiting_.count(req.id)) {
    ++counters_.duplicate_requests;
    SendInsertResponse(req.id);
    return;
  }
  if (auto it = d_.responses.find(req.id); it != d_.responses.end()) {
    // Only reached once the parent update is announced or applied.
    ++counters_.duplicate_requests;
    ClientResponse resp = ClientResponse::Decode(it->second);
    resp.fallback.reset();
    Reply(req.client, resp);
    return;
  }
  if (executing_.count(req.id) || rename_requests_.count(req.id)) {
    ++counters_.duplicate_requests;
    return;
  }

  switch (req.op) {
    case Opcode::kCreate:
    case Opcode::kDelete:
    case Opcode::kMkdir: StartWrite(std::move(req)); break;
    case Opcode::kRmdir: HandleRmdir(std::move(req)); break;
    case Opcode::kStatDir:
    case Opcode::kReadDir: HandleRead(pkt, req); break;
    case Opcode::kRename: HandleRename(std::move(req)); break;
    default: HandleSingleInode(req); break;
  }
}

void Server::StartWrite(ClientRequest req) {
  executing_.insert(req.id);
  auto holder = std::make_shared<LockTable::HolderId>(0);
  std::vector<LockRequest> reqs = {{LockName::Key(req.key), true},
                                   {LockName::Group(GroupOf(req.parent_key)), false}};
  *holder = locks_.Acquire(std::move(reqs), [this, req, holder] { FinishWrite(req, *holder); });
}

void Server::FinishWrite(const ClientRequest& req, LockTable::HolderId holder) {
  ClientResponse resp;
  resp.id = req.id;
  resp.op = req.op;
  const InodeRecord* cur = d_.store.FindInode(req.key);
  if (inval_.Blocks(req.trail)) {
    resp.err = Errc::kStale;
    ++counters_.stale_errors;
  } else if (req.op == Opcode::kDelete) {
    if (!cur) resp.err = Errc::kNoEnt;
    else if (cur->IsDir()) resp.err = Errc::kInval;
  } else if (cur) {
    resp.err = Errc::kExist;
  }
  if (resp.err != Errc::kOk) {
    executing_.erase(req.id);
    locks_.Release(holder);
    ReplyFailedUpdate(req.client, resp);
    return;
  }

  Micros ts = Tick();
  resp.ts = ts;
  std::vector<Mutation> muts;
  ChangeLogEntry e{ts, ChangeOpFor(req.op), req.key.name, req.perms, req.id};
  if (req.op == Opcode::kDelete) {
    e.perms = cur->perms;
    muts.push_back(mut::DeleteInode{req.key});
  } else {
    InodeRecord rec;
    rec.key = req.key;
    rec.kind = req.op == Opcode::kMkdir ? InodeKind::kDirectory : InodeKind::kFile;
    if (rec.IsDir()) rec.id = DirectoryId::Make(config_.index, static_cast<uint64_t>(ts), config_.id_seed);
    rec.mtime = ts;
    rec.ctime = ts;
    rec.perms = req.perms;
    resp.rec = rec;
    muts.push_back(mut::PutInode{rec});
  }
  muts.push_back(mut::CacheResponse{req.id, resp.Encode()});
  muts.push_back(mut::ParentIntent{req.parent_key, e});
  LogOp(std::move(muts));
  AppendDelayed(req.parent_key, e);
  AnnounceAndWait(req, holder, std::move(resp));
}

// Locks stay held until the switch confirms the parent's fingerprint is
// marked stale, or the parent's owner has applied the update.
void Server::AnnounceAndWait(const ClientRequest& req, LockTable::HolderId holder, ClientResponse resp) {
  executing_.erase(req.id);
  Waiting& w = waiting_[req.id];
  w.holder = holder;
  w.req = req;
  w.resp = std::move(resp);
  SendInsertResponse(req.id);
}

void Server::SendInsertResponse(RequestId id) {
  auto it = waiting_.find(id);
  if (it == waiting_.end()) return;
  Waiting& w = it->second;
  const InodeKey& parent = w.req.parent_key;
  ClientResponse resp = w.resp;
  resp.fallback = FallbackInfo{config_.index, w.req.client, PendingSnapshot(parent)};
  StaleSetHeader h;
  h.op = SetOp::kInsert;
  h.sender = static_cast<uint8_t>(config_.index);
  h.fp = GroupOf(parent);
  sim_.Send(Packet::WithHeader(self(), w.req.client, h, resp.Encode()));
  CancelTimer(w.timer);
  w.timer = After(config_.unlock_resend, [this, id] {
    auto it = waiting_.find(id);
    if (it == waiting_.end()) return;
    it->second.timer = 0;
    ++counters_.unlock_resends;
    SendInsertResponse(id);
  });
}

void Server::OnResponsePacket(const Packet& pkt) {
  auto h = pkt.Header();
  ClientResponse resp = ClientResponse::Decode(pkt.Payload());
  if (!resp.fallback) return;
  if (h && h->op == SetOp::kInsert && h->ret == SetRet::kOverflow) {
    ApplyFallback(resp);
    return;
  }
  // Unlock notification: the INSERT reached the stale set.
  if (resp.fallback->target != config_.index) return;
  ReleaseWaiting(resp.id);
  ConfirmReannounce(resp.id);
}

// The stale set is full: apply the target's pending updates for this
// directory synchronously, after anything already stashed from earlier pushes.
void Server::ApplyFallback(const ClientResponse& resp) {
  const FallbackInfo& f = *resp.fallback;
  const InodeKey& dir = f.log.dir_key();
  Charge(config_.cost.sync_txn);
  ChangeLog combined = MergeUnique(d_.StashedLog(dir), f.log);
  ApplyStats st;
  auto muts = PlanChangeLogApply(d_.store, combined, d_.applied, &st);
  if (st.missing_dir) {
    auto reqs = combined.Requests();
    muts = {mut::MarkApplied{{reqs.begin(), reqs.end()}}};
  }
  if (!combined.empty()) LogOp(std::move(muts));
  ++counters_.fallbacks_applied;
  counters_.fallback_entries += f.log.size();

  FallbackDoneMsg done{dir, f.log.Requests()};
  if (f.target == config_.index) {
    OnFallbackDone(ServerMsg{Opcode::kFallbackDone, resp.id, config_.index, Encode(done)});
  } else {
    SendTo(f.target, Opcode::kFallbackDone, resp.id, Encode(done));
  }
  if (f.client != 0) {
    ClientResponse plain = resp;
    plain.fallback.reset();
    Reply(f.client, plain);
  }
}

void Server::OnFallbackDone(const ServerMsg& m) {
  auto done = DecodeBody<FallbackDoneMsg>(m.body);
  DropPending(done.parent_key, done.requests);
  for (RequestId r : done.requests) ReleaseWaiting(r);
  ReleaseWaiting(m.id);
  ConfirmReannounce(m.id);
}

void Server::ReleaseWaiting(RequestId id) {
  auto it = waiting_.find(id);
  if (it == waiting_.end()) return;
  CancelTimer(it->second.timer);
  locks_.Release(it->second.holder);
  waiting_.erase(it);
}

void Server::AppendDelayed(const InodeKey& parent_key, const ChangeLogEntry& e) {
  LogChangeLogAppend(parent_key, e);
  size_t unpushed = UnpushedEntries(parent_key);
  counters_.max_pending_per_dir = std::max<uint64_t>(counters_.max_pending_per_dir, unpushed);
  if (unpushed >= config_.push_threshold) {
    PushDirectory(parent_key);
  } else {
    ArmIdleTimer(parent_key);
  }
}

ChangeLog Server::PendingSnapshot(const InodeKey& dir_key) const {
  auto it = d_.changelogs.find(dir_key);
  return it == d_.changelogs.end() ? ChangeLog(dir_key) : it->second;
}

// Ships the not-yet-pushed tail of a directory's change-log to its owner.
// Entries stay in the durable log until the owner acknowledges.
void Server::PushDirectory(const InodeKey& dir_key) {
  if (auto t = idle_timers_.find(dir_key); t != idle_timers_.end()) {
    CancelTimer(t->second);
    idle_timers_.erase(t);
  }
  ChangeLog chunk = PendingSnapshot(dir_key);
  auto& chunks = outbox_[dir_key];
  for (const auto& c : chunks) chunk.Remove(c.log.Requests());
  if (chunk.empty()) {
    if (chunks.empty()) outbox_.erase(dir_key);
    return;
  }
  ServerIndex owner = OwnerOfGroup(GroupOf(dir_key));
  uint64_t push_id = NewId(1);
  ++counters_.pushes_sent;
  if (owner == config_.index) {
    if (chunks.empty()) outbox_.erase(dir_key);
    ImportLocal(dir_key, std::move(chunk));
    return;
  }
  chunks.push_back({push_id, chunk});
  push_index_[push_id] = {dir_key, owner};
  SendReliable(owner, Opcode::kPush, push_id, Encode(PushMsg{push_id, {chunk}}));
}

void Server::ImportLocal(const InodeKey& dir_key, ChangeLog log) {
  auto reqs = log.Requests();
  uint64_t order = NewId(1);
  LogImport({order, {Shipment{config_.index, order, std::move(log)}}});
  LogChangeLogApplied(dir_key, reqs);
  ArmGraceTimer(GroupOf(dir_key));
  NotifyFlushed();
}

void Server::OnPush(const ServerMsg& m) {
  ++counters_.pushes_received;
  auto push = DecodeBody<PushMsg>(m.body);
  std::set<uint64_t> groups;
  for (const auto& log : push.logs) groups.insert(GroupOf(log.dir_key()).Value());
  if (!d_.imports.count(m.id)) {
    AggregationImport imp{m.id, {}};
    for (auto& log : push.logs) imp.shipments.push_back({m.from, push.order, std::move(log)});
    LogImport(imp);
  }
  SendTo(m.from, Opcode::kPushAck, m.id, {});
  for (uint64_t fp : groups) ArmGraceTimer(Fingerprint::FromValue(fp));
}

void Server::OnPushAck(const ServerMsg& m) {
  StopReliable(m.from, Opcode::kPush, m.id);
  auto it = push_index_.find(m.id);
  if (it == push_index_.end()) return;
  InodeKey dir = it->second.first;
  push_index_.erase(it);
  auto& chunks = outbox_[dir];
  for (const auto& c : chunks) {
    if (c.push_id == m.id) {
      DropPending(dir, c.log.Requests());
      break;
    }
  }
  NotifyFlushed();
}

// Forgets delivered entries: from the durable log and from unacknowledged pushes.
void Server::DropPending(const InodeKey& dir_key, const std::set<RequestId>& requests) {
  if (auto it = d_.changelogs.find(dir_key); it != d_.changelogs.end()) {
    std::set<RequestId> present;
    for (RequestId r : it->second.Requests()) {
      if (requests.count(r)) present.insert(r);
    }
    LogChangeLogApplied(dir_key, present);
  }
  auto o = outbox_.find(dir_key);
  if (o != outbox_.end()) {
    auto& chunks = o->second;
    for (auto c = chunks.begin(); c != chunks.end();) {
      c->log.Remove(requests);
      if (c->log.empty()) {
        auto pi = push_index_.find(c->push_id);
        if (pi != push_index_.end()) {
          StopReliable(pi->second.second, Opcode::kPush, c->push_id);
          push_index_.erase(pi);
        }
        c = chunks.erase(c);
      } else {
        ++c;
      }
    }
    if (chunks.empty()) outbox_.erase(o);
  }
  if (UnpushedEntries(dir_key) == 0) {
    if (auto t = idle_timers_.find(dir_key); t != idle_timers_.end()) {
      CancelTimer(t->second);
      idle_timers_.erase(t);
    }
  }
}

void Server::ArmIdleTimer(const InodeKey& dir_key) {
  TimerId& t = idle_timers_[dir_key];
  CancelTimer(t);
  t = After(config_.idle_timeout, [this, dir_key] {
    idle_timers_.erase(dir_key);
    PushDirectory(dir_key);
  });
}

void Server::ArmGraceTimer(Fingerprint fp) {

  GroupState& g = groups_[fp.Value()];
  CancelTimer(g.grace);
  g.grace = After(config_.grace_period, [this, fp] {
    groups_[fp.Value()].grace = 0;
    Aggregate(fp);
  });
}

// ---- switch recovery

void Server::FlushAllPending(std::function<void()> done) {
  std::vector<InodeKey> dirs;
  for (const auto& [dir, log] : d_.changelogs) {
    if (!log.empty()) dirs.push_back(dir);
  }
  for (const auto& dir : dirs) PushDirectory(dir);
  flush_waiters_.push_back(std::move(done));
  NotifyFlushed();
  DrainReady();
}

void Server::NotifyFlushed() {
  if (flush_waiters_.empty() || !outbox_.empty()) return;
  auto waiters = std::move(flush_waiters_);
  flush_waiters_.clear();
  for (auto& fn : waiters) Defer(std::move(fn));
}

void Server::ApplyAllStashed() {
  std::vector<InodeKey> dirs;
  for (const auto& [dir, chunks] : d_.stash) {
    if (!chunks.empty()) dirs.push_back(dir);
  }
  if (!dirs.empty()) {
    ApplyStats st;
    LogOp(PlanGroupApply(dirs, &st));
  }
  DrainReady();
}

}  // namespace asyncfs
