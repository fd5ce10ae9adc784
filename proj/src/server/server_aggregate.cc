#include <algorithm>

#include "asyncfs/server/server.h"

namespace asyncfs {

namespace {

ChangeLog MergeUnique(ChangeLog a, ChangeLog b) {
  b.Remove(a.Requests());
  a.Merge(b);
  return a;
}

}  // namespace

// ---- reads

void Server::HandleRead(const Packet& pkt, const ClientRequest& req) {
  auto h = pkt.Header();
  bool present = !h || h->op != SetOp::kQuery || h->ret != SetRet::kAbsent;
  Fingerprint fp = GroupOf(req.key);
  GroupState& g = groups_[fp.Value()];
  if (!present && !g.running) {
    ServeRead(req);
    return;
  }
  executing_.insert(req.id);
  uint64_t need;
  if (!present) {
    need = g.started;  // let the running aggregation finish first
  } else if (g.running) {
    // The running one may have collected before this read arrived.
    need = g.started + 1;
    g.again = true;
  } else {
    Aggregate(fp);
    need = groups_[fp.Value()].started;
  }
  groups_[fp.Value()].waiters.emplace_back(need, [this, req] {
    executing_.erase(req.id);
    ServeRead(req);
  });
}

void Server::ServeRead(const ClientRequest& req) {
  ClientResponse resp;
  resp.id = req.id;
  resp.op = req.op;
  const InodeRecord* rec = d_.store.FindInode(req.key);
  if (inval_.Blocks(req.trail)) {
    resp.err = Errc::kStale;
    ++counters_.stale_errors;
  } else if (!rec) {
    resp.err = Errc::kNoEnt;
  } else if (!rec->IsDir()) {
    resp.err = Errc::kNotDir;
  } else {
    resp.rec = *rec;
    if (req.op == Opcode::kReadDir) {
      resp.entries = d_.store.ListEntries(rec->id);
      Charge(config_.cost.kv_mutation * static_cast<Micros>(1 + resp.entries.size() / 64));
    }
  }
  resp.ts = Tick();
  Reply(req.client, resp);
}

// lookup, stat, open, close: one inode, no locks.
void Server::HandleSingleInode(const ClientRequest& req) {
  ClientResponse resp;
  resp.id = req.id;
  resp.op = req.op;
  const InodeRecord* rec = d_.store.FindInode(req.key);
  if (inval_.Blocks(req.trail)) {
    resp.err = Errc::kStale;
    ++counters_.stale_errors;
  } else if (req.op == Opcode::kClose) {
    // nothing to check
  } else if (!rec) {
    resp.err = Errc::kNoEnt;
  } else if (req.op == Opcode::kLookup && !rec->IsDir()) {
    resp.err = Errc::kNotDir;
  } else {
    resp.rec = *rec;
  }
  if (resp.err == Errc::kOk && req.op == Opcode::kLookup && inval_.Blocks(PathComponent{rec->key, rec->id})) {
    resp.err = Errc::kStale;
    resp.rec.reset();
  }
  resp.ts = Tick();
  Reply(req.client, resp);
}

// ---- aggregation

void Server::ForceAggregate(Fingerprint fp, std::function<void()> done) {
  GroupState& g = groups_[fp.Value()];
  uint64_t need = g.started + 1;
  if (g.running) {
    g.again = true;
  } else {
    Aggregate(fp);
  }
  groups_[fp.Value()].waiters.emplace_back(need, std::move(done));
  DrainReady();
}

void Server::Aggregate(Fingerprint fp) {
  GroupState& g = groups_[fp.Value()];
  if (g.running) {
    g.again = true;
    return;
  }
  CancelTimer(g.grace);
  g.running = true;
  ++g.started;
  ++counters_.aggregations;
  uint64_t cid = NewId(2);
  OwnerCollect& oc = collects_[cid];
  oc.kind = CollectKind::kAggregate;
  oc.fp = fp;
  StartCollect(cid);
}

void Server::StartCollect(uint64_t cid) {
  OwnerCollect& oc = collects_.at(cid);
  auto begin = [this, cid] {
    OwnerCollect& oc = collects_.at(cid);
    oc.phase = CollectPhase::kCollecting;
    if (oc.invalidation) inval_.AddPending(cid, *oc.invalidation);
    CollectMsg msg{oc.kind == CollectKind::kAggregate ? CollectScope::kGroup : CollectScope::kDirectory, oc.fp,
                   oc.dir_key, oc.invalidation};
    Bytes body = Encode(msg);
    for (ServerIndex peer : Peers()) {
      oc.awaiting.insert(peer);
      SendReliable(peer, Opcode::kCollect, cid, body);
    }
    MaybeFinishCollectPhase(cid);
  };
  if (oc.local_lock != 0) {
    begin();
  } else {
    oc.local_lock = locks_.Acquire({{LockName::Group(oc.fp), true}}, begin);
  }
}

void Server::OnCollect(const ServerMsg& m) {
  if (auto it = remote_collects_.find(m.id); it != remote_collects_.end()) {
    if (it->second.granted) SendTo(it->second.owner, Opcode::kCollectReply, m.id, it->second.reply);
    return;
  }
  if (resolved_collects_.count(m.id)) return;
  RemoteCollect& rc = remote_collects_[m.id];
  rc.owner = m.from;
  rc.msg = DecodeBody<CollectMsg>(m.body);
  uint64_t cid = m.id;
  rc.holder = locks_.Acquire({{LockName::Group(rc.msg.fp), true}}, [this, cid] {
    auto it = remote_collects_.find(cid);
    if (it == remote_collects_.end()) return;
    RemoteCollect& rc = it->second;
    rc.granted = true;
    if (rc.msg.invalidation) inval_.AddPending(cid, *rc.msg.invalidation);
    CollectReplyMsg reply;
    for (const auto& [dir, log] : d_.changelogs) {
      if (log.empty()) continue;
      bool match = rc.msg.scope == CollectScope::kGroup ? GroupOf(dir) == rc.msg.fp : dir == rc.msg.dir_key;
      if (match) reply.logs.push_back(log);
    }
    reply.order = NewId(2);
    reply.invalidation = rc.msg.invalidation;
    rc.reply = Encode(reply);
    SendTo(rc.owner, Opcode::kCollectReply, cid, rc.reply);
    rc.timer = After(config_.rpc_timeout, [this, cid] { ResendCollectReply(cid); });
  });
}

// Keeps re-sending until the owner decides; it may have crashed meanwhile.
void Server::ResendCollectReply(uint64_t cid) {
  auto it = remote_collects_.find(cid);
  if (it == remote_collects_.end()) return;
  ++counters_.rpc_resends;
  SendTo(it->second.owner, Opcode::kCollectReply, cid, it->second.reply);
  it->second.timer = After(config_.rpc_timeout, [this, cid] { ResendCollectReply(cid); });
}

void Server::OnCollectReply(const ServerMsg& m) {
  auto it = collects_.find(m.id);
  if (it == collects_.end()) {
    ResolveOrphanCollect(m);
    return;
  }
  OwnerCollect& oc = it->second;
  if (!oc.awaiting.erase(m.from)) return;
  StopReliable(m.from, Opcode::kCollect, m.id);
  oc.replies[m.from] = DecodeBody<CollectReplyMsg>(m.body);
  MaybeFinishCollectPhase(m.id);
}

// A remote still holds its group lock for a collect this server no longer
// tracks (it crashed). The WAL says whether the entries were imported.
void Server::ResolveOrphanCollect(const ServerMsg& m) {
  if ((m.id >> 60) == kMovedCollectKind) {
    // Directory-rename collects are settled by the rename decision.
    uint64_t txn = (uint64_t{3} << 60) | (m.id & ((uint64_t{1} << 60) - 1));
    if (!d_.finished_txns.count(txn)) return;
  }
  auto reply = DecodeBody<CollectReplyMsg>(m.body);
  FinishMsg fin;
  fin.drop = d_.imports.count(m.id) > 0;
  if (fin.drop) {
    for (const auto& log : reply.logs) fin.requests[log.dir_key()] = log.Requests();
  }
  if (reply.invalidation) {
    bool committed = std::find(d_.own_invalidations.begin(), d_.own_invalidations.end(), *reply.invalidation) !=
                     d_.own_invalidations.end();
    fin.action = committed ? InvalAction::kCommit : InvalAction::kRevoke;
    fin.invalidation = reply.invalidation;
  }
  SendReliable(m.from, Opcode::kFinish, m.id, Encode(fin));
}

std::vector<InodeKey> Server::LocalDirsInGroup(Fingerprint fp) const {
  std::set<InodeKey> dirs;
  for (const auto& [dir, log] : d_.changelogs) {
    if (!log.empty() && GroupOf(dir) == fp) dirs.insert(dir);
  }
  for (const auto& [dir, chunks] : d_.stash) {
    if (!chunks.empty() && GroupOf(dir) == fp) dirs.insert(dir);
  }
  return {dirs.begin(), dirs.end()};
}

// Stash (in shipping order) then this server's own log, per directory.
std::vector<Mutation> Server::PlanGroupApply(const std::vector<InodeKey>& dirs, ApplyStats* stats) {
  std::vector<Mutation> out;
  for (const auto& dir : dirs) {
    ChangeLog log = MergeUnique(d_.StashedLog(dir), PendingSnapshot(dir));
    if (log.empty()) continue;
    ApplyStats st;
    auto muts = PlanChangeLogApply(d_.store, log, d_.applied, &st);
    if (st.missing_dir) {
      auto reqs = log.Requests();
      muts = {mut::MarkApplied{{reqs.begin(), reqs.end()}}};
    }
    stats->puts += st.puts;
    stats->deletes_hit += st.deletes_hit;
    stats->skipped += st.skipped;
    out.insert(out.end(), muts.begin(), muts.end());
  }
  return out;
}

void Server::MaybeFinishCollectPhase(uint64_t cid) {
  OwnerCollect& oc = collects_.at(cid);
  if (oc.phase != CollectPhase::kCollecting || !oc.awaiting.empty()) return;
  oc.phase = CollectPhase::kRemoving;

  AggregationImport imp{cid, {}};
  for (const auto& [peer, reply] : oc.replies) {
    for (const auto& log : reply.logs) {
      if (!log.empty()) imp.shipments.push_back({peer, reply.order, log});
    }
  }
  if (!imp.shipments.empty()) LogImport(imp);
  for (const auto& s : imp.shipments) counters_.aggregated_entries += s.log.size();

  std::vector<InodeKey> dirs =
      oc.kind == CollectKind::kAggregate ? LocalDirsInGroup(oc.fp) : std::vector<InodeKey>{oc.dir_key};
  std::map<InodeKey, std::set<RequestId>> own;
  for (const auto& dir : dirs) {
    auto reqs = PendingSnapshot(dir).Requests();
    if (!reqs.empty()) own[dir] = std::move(reqs);
  }
  ApplyStats st;
  LogOp(PlanGroupApply(dirs, &st));
  for (const auto& [dir, reqs] : own) DropPending(dir, reqs);

  switch (oc.kind) {
    case CollectKind::kAggregate: SendRemove(cid); break;
    case CollectKind::kRmdir: RmdirCollected(cid); break;
    case CollectKind::kMoved: {
      auto fn = std::move(oc.on_collected);
      fn();
      break;
    }
  }
}

void Server::SendRemove(uint64_t cid) {
  auto it = collects_.find(cid);
  if (it == collects_.end() || it->second.phase != CollectPhase::kRemoving) return;
  OwnerCollect& oc = it->second;
  if (oc.remove_seq == 0) oc.remove_seq = static_cast<uint64_t>(Tick());
  StaleSetHeader h;
  h.op = SetOp::kRemove;
  h.sender = static_cast<uint8_t>(config_.index);
  h.seq = oc.remove_seq;
  h.fp = oc.fp;
  ServerMsg echo{Opcode::kRemoveEcho, cid, config_.index, {}};
  sim_.Send(Packet::WithHeader(self(), self(), h, echo.Encode()));
  CancelTimer(oc.timer);
  oc.timer = After(config_.rpc_timeout, [this, cid] { SendRemove(cid); });
}

void Server::OnRemoveConfirmed(uint64_t cid) {
  auto it = collects_.find(cid);
  if (it == collects_.end() || it->second.phase != CollectPhase::kRemoving) return;
  CancelTimer(it->second.timer);
  CompleteAggregation(cid);
}

void Server::CompleteAggregation(uint64_t cid) {
  OwnerCollect oc = std::move(collects_.at(cid));
  collects_.erase(cid);
  SendFinishAll(cid, oc, InvalAction::kNone);
  locks_.Release(oc.local_lock);
  GroupState& g = groups_[oc.fp.Value()];
  g.running = false;
  ++g.completed;
  std::vector<std::function<void()>> ready;
  auto& ws = g.waiters;
  for (auto w = ws.begin(); w != ws.end();) {
    if (w->first <= g.completed) {
      ready.push_back(std::move(w->second));
      w = ws.erase(w);
    } else {
      ++w;
    }
  }
  bool again = g.again || !ws.empty();
  g.again = false;
  for (auto& fn : ready) Defer(std::move(fn));
  if (again) Aggregate(oc.fp);
}

void Server::SendFinishAll(uint64_t cid, const OwnerCollect& oc, InvalAction action) {
  for (ServerIndex peer : Peers()) {
    FinishMsg fin;
    fin.action = action;
    fin.invalidation = oc.invalidation;
    if (auto r = oc.replies.find(peer); r != oc.replies.end()) {
      for (const auto& log : r->second.logs) fin.requests[log.dir_key()] = log.Requests();
    }
    SendReliable(peer, Opcode::kFinish, cid, Encode(fin));
  }
}

void Server::OnFinish(const ServerMsg& m) {
  auto fin = DecodeBody<FinishMsg>(m.body);
  if (fin.drop) {
    for (const auto& [dir, reqs] : fin.requests) DropPending(dir, reqs);
  }
  if (fin.action == InvalAction::kCommit) {
    if (inval_.pending().count(m.id)) {
      inval_.Commit(m.id);
    } else if (fin.invalidation) {
      inval_.AddCommitted(*fin.invalidation);
    }
  } else if (fin.action == InvalAction::kRevoke) {
    inval_.Revoke(m.id);
  }
  if (auto it = remote_collects_.find(m.id); it != remote_collects_.end()) {
    CancelTimer(it->second.timer);
    locks_.Release(it->second.holder);
    remote_collects_.erase(it);
  }
  resolved_collects_.insert(m.id);
  SendTo(m.from, Opcode::kFinishAck, m.id, {});
}

void Server::OnFinishAck(const ServerMsg& m) { StopReliable(m.from, Opcode::kFinish, m.id); }

// ---- rmdir

void Server::HandleRmdir(ClientRequest req) {
  executing_.insert(req.id);
  auto holder = std::make_shared<LockTable::HolderId>(0);
  std::vector<LockRequest> reqs = {{LockName::Key(req.key), true},
                                   {LockName::Group(GroupOf(req.parent_key)), false},
                                   {LockName::Group(GroupOf(req.key)), true}};
  *holder = locks_.Acquire(std::move(reqs), [this, req, holder] {
    ClientResponse resp;
    resp.id = req.id;
    resp.op = req.op;
    const InodeRecord* rec = d_.store.FindInode(req.key);
    if (inval_.Blocks(req.trail)) {
      resp.err = Errc::kStale;
      ++counters_.stale_errors;
    } else if (!rec) {
      resp.err = Errc::kNoEnt;
    } else if (!rec->IsDir()) {
      resp.err = Errc::kNotDir;
    }
    if (resp.err != Errc::kOk) {
      executing_.erase(req.id);
      locks_.Release(*holder);
      ReplyFailedUpdate(req.client, resp);
      return;
    }
    uint64_t cid = NewId(2);
    OwnerCollect& oc = collects_[cid];
    oc.kind = CollectKind::kRmdir;
    oc.fp = GroupOf(req.key);
    oc.dir_key = req.key;
    oc.invalidation = InvalidationList::Entry{false, rec->id, {}};
    oc.local_lock = *holder;
    rmdirs_[cid] = req;
    StartCollect(cid);
  });
}

void Server::RmdirCollected(uint64_t cid) {
  OwnerCollect oc = std::move(collects_.at(cid));
  collects_.erase(cid);
  ClientRequest req = std::move(rmdirs_.at(cid));
  rmdirs_.erase(cid);
  const InodeRecord* rec = d_.store.FindInode(req.key);
  ClientResponse resp;
  resp.id = req.id;
  resp.op = req.op;
  if (d_.store.CountEntries(rec->id) > 0) {
    inval_.Revoke(cid);
    SendFinishAll(cid, oc, InvalAction::kRevoke);
    executing_.erase(req.id);
    locks_.Release(oc.local_lock);
    resp.err = Errc::kNotEmpty;
    ReplyFailedUpdate(req.client, resp);
    return;
  }
  Micros ts = Tick();
  resp.ts = ts;
  ChangeLogEntry e{ts, ChangeOpType::kRmdirChild, req.key.name, rec->perms, req.id};
  LogOp({mut::DeleteInode{req.key}, mut::Invalidate{*oc.invalidation}, mut::CacheResponse{req.id, resp.Encode()},
         mut::ParentIntent{req.parent_key, e}});
  inval_.Commit(cid);
  SendFinishAll(cid, oc, InvalAction::kCommit);
  AppendDelayed(req.parent_key, e);
  AnnounceAndWait(req, oc.local_lock, std::move(resp));
}

}  // namespace asyncfs
