#include <algorithm>

#include "asyncfs/common/errors.h"
#include "asyncfs/server/server.h"

namespace asyncfs {

// Renames run through server 0 as two-phase commits. The participants are
// the owners of the source inode, the destination inode and both parent
// directories.

namespace {

constexpr uint64_t kLow60 = (uint64_t{1} << 60) - 1;

uint64_t MovedCollectId(uint64_t txn) { return (uint64_t{4} << 60) | (txn & kLow60); }

Bytes EncodeDecision(const ClientResponse& resp, const std::map<ServerIndex, RenameDecideMsg>& decisions) {
  ByteWriter w;
  w.Blob(resp.Encode());
  w.U32(static_cast<uint32_t>(decisions.size()));
  for (const auto& [s, d] : decisions) {
    w.U32(s);
    w.Blob(Encode(d));
  }
  return w.Take();
}

void DecodeDecision(std::span<const uint8_t> body, ClientResponse* resp,
                    std::map<ServerIndex, RenameDecideMsg>* decisions) {
  ByteReader r(body);
  *resp = ClientResponse::Decode(r.Blob());
  uint32_t n = r.U32();
  for (uint32_t i = 0; i < n; ++i) {
    ServerIndex s = r.U32();
    (*decisions)[s] = DecodeBody<RenameDecideMsg>(r.Blob());
  }
}

// Several participants may refuse; the reported error must not depend on
// which vote arrives first.
int VotePrecedence(Errc e) {
  switch (e) {
    case Errc::kStale: return 0;
    case Errc::kNoEnt: return 1;
    case Errc::kNotDir: return 2;
    case Errc::kInval: return 3;
    case Errc::kExist: return 4;
    case Errc::kNotEmpty: return 5;
    default: return 6 + static_cast<int>(e);
  }
}

}  // namespace

void Server::HandleRename(ClientRequest req) {
  ClientResponse resp;
  resp.id = req.id;
  resp.op = req.op;
  if (config_.index != 0) {
    resp.err = Errc::kInval;
  } else if (req.key == req.dst_key || req.key.IsRoot() || req.trail.empty() || req.dst_trail.empty()) {
    resp.err = Errc::kInval;
  }
  if (resp.err != Errc::kOk) {
    Reply(req.client, resp);
    return;
  }
  rename_requests_.insert(req.id);
  AdmitRename(req, [this, req](LockTable::HolderId h) { StartRename(req, h); });
}

void Server::AdmitRename(const ClientRequest& req, std::function<void(LockTable::HolderId)> start) {
  std::vector<LockRequest> reqs = {{LockName::Key(req.key), true},
                                   {LockName::Key(req.dst_key), true},
                                   {LockName::Key(req.parent_key), false},
                                   {LockName::Key(req.dst_parent_key), false},
                                   {LockName::Group(Fingerprint::FromValue(0)), req.kind == InodeKind::kDirectory}};
  auto holder = std::make_shared<LockTable::HolderId>(0);
  *holder = rename_admission_.Acquire(std::move(reqs), [holder, start = std::move(start)] { start(*holder); });
}

void Server::StartRename(ClientRequest req, LockTable::HolderId admission) {
  uint64_t txn = NewId(3);
  LogOp({mut::RenameBegin{txn, req.Encode()}});
  ++counters_.renames;
  RenameTxn& t = renames_[txn];
  t.req = std::move(req);
  t.txn = txn;
  t.admission = admission;
  t.prepares = PlanPrepares(t.req);
  for (const auto& [s, prep] : t.prepares) {
    t.votes_pending.insert(s);
    SendReliable(s, Opcode::kRenamePrepare, txn, Encode(prep));
  }
}

std::map<ServerIndex, RenamePrepareMsg> Server::PlanPrepares(const ClientRequest& req) const {
  std::map<ServerIndex, RenamePrepareMsg> out;
  uint32_t n = config_.n_servers;
  auto& src = out[OwnerOfInode(hasher_, req.key, req.kind, n)];
  src.locks.push_back({req.key, true});
  src.must_exist = req.key;
  src.trail.insert(src.trail.end(), req.trail.begin(), req.trail.end());
  auto& dst = out[OwnerOfInode(hasher_, req.dst_key, req.kind, n)];
  dst.locks.push_back({req.dst_key, true});
  dst.must_not_exist = req.dst_key;
  dst.trail.insert(dst.trail.end(), req.dst_trail.begin(), req.dst_trail.end());
  auto& ps = out[OwnerOfGroup(GroupOf(req.parent_key))];
  ps.locks.push_back({req.parent_key, false});
  ps.dirs_with_id.emplace_back(req.parent_key, req.trail.back().id);
  auto& pd = out[OwnerOfGroup(GroupOf(req.dst_parent_key))];
  pd.locks.push_back({req.dst_parent_key, false});
  pd.dirs_with_id.emplace_back(req.dst_parent_key, req.dst_trail.back().id);
  return out;
}

// ---- participant

void Server::OnRenamePrepare(const ServerMsg& m) {
  uint64_t txn = m.id;
  if (d_.finished_txns.count(txn)) return;
  if (auto it = participants_.find(txn); it != participants_.end()) {
    if (it->second.vote) {
      SendTo(m.from, Opcode::kRenameVote, txn, *it->second.vote);
    } else if (it->second.granted) {
      // Recovered with the locks held but the vote lost.
      it->second.prepare = DecodeBody<RenamePrepareMsg>(m.body);
      EvaluatePrepare(txn, m.from);
    }
    return;
  }
  Participant& p = participants_[txn];
  p.prepare = DecodeBody<RenamePrepareMsg>(m.body);
  std::vector<LockRequest> reqs;
  for (const auto& l : p.prepare.locks) reqs.push_back({LockName::Key(l.key), l.exclusive});
  ServerIndex coordinator = m.from;
  p.holder = locks_.Acquire(std::move(reqs), [this, txn, coordinator] {
    auto it = participants_.find(txn);
    if (it == participants_.end()) return;
    it->second.granted = true;
    EvaluatePrepare(txn, coordinator);
  });
}

void Server::EvaluatePrepare(uint64_t txn, ServerIndex coordinator) {
  Participant& p = participants_.at(txn);
  const RenamePrepareMsg& prep = p.prepare;
  RenameVoteMsg vote;
  if (inval_.Blocks(prep.trail)) {
    vote.err = Errc::kStale;
    ++counters_.stale_errors;
  }
  for (const auto& [key, id] : prep.dirs_with_id) {
    const InodeRecord* dir = d_.store.FindInode(key);
    if (vote.err == Errc::kOk && (!dir || !dir->IsDir() || dir->id != id)) vote.err = Errc::kStale;
  }
  if (vote.err == Errc::kOk && prep.must_exist) {
    const InodeRecord* rec = d_.store.FindInode(*prep.must_exist);
    if (!rec) {
      vote.err = Errc::kNoEnt;
    } else {
      vote.rec = *rec;
    }
  }
  if (vote.err == Errc::kOk && prep.must_not_exist && d_.store.FindInode(*prep.must_not_exist)) {
    vote.err = Errc::kExist;
  }
  Bytes body = Encode(vote);
  if (vote.err != Errc::kOk) {
    locks_.Release(p.holder);
    participants_.erase(txn);
  } else {
    if (!d_.prepared.count(txn)) LogOp({mut::RenamePrepared{txn, prep.locks}});
    p.vote = body;
  }
  SendTo(coordinator, Opcode::kRenameVote, txn, std::move(body));
}

// Pulls every queued update of the directory being moved into this server
// and installs a pending "moved" invalidation everywhere.
void Server::OnRenameMoved(const ServerMsg& m) {
  uint64_t txn = m.id;
  auto it = participants_.find(txn);
  if (it == participants_.end() || !it->second.vote) return;
  Participant& p = it->second;
  if (p.moved_reply) {
    SendTo(m.from, Opcode::kRenameMovedReply, txn, *p.moved_reply);
    return;
  }
  if (p.moved_cid != 0) return;
  auto vote = DecodeBody<RenameVoteMsg>(*p.vote);
  if (!vote.rec || !vote.rec->IsDir()) return;
  InodeRecord rec = *vote.rec;
  uint64_t cid = MovedCollectId(txn);
  p.moved_cid = cid;
  OwnerCollect& oc = collects_[cid];
  oc.kind = CollectKind::kMoved;
  oc.fp = GroupOf(rec.key);
  oc.dir_key = rec.key;
  oc.invalidation = InvalidationList::Entry{true, rec.id, rec.key};
  ServerIndex coordinator = m.from;
  oc.on_collected = [this, txn, cid, coordinator, rec] {
    Participant& p = participants_.at(txn);
    p.moved = std::move(collects_.at(cid));
    collects_.erase(cid);
    RenameMovedReplyMsg reply{d_.store.ListEntries(rec.id)};
    p.moved_reply = Encode(reply);
    SendTo(coordinator, Opcode::kRenameMovedReply, txn, *p.moved_reply);
  };
  StartCollect(cid);
}

void Server::OnAggregateNow(const ServerMsg& m) {
  auto key = std::make_pair(m.from, m.id);
  if (auto it = agg_requests_.find(key); it != agg_requests_.end()) {
    if (it->second) SendTo(m.from, Opcode::kAggregateDone, m.id, {});
    return;
  }
  agg_requests_[key] = false;
  ByteReader r(m.body);
  Fingerprint fp = DecodeFingerprint(r);
  ForceAggregate(fp, [this, key] {
    agg_requests_[key] = true;
    SendTo(key.first, Opcode::kAggregateDone, key.second, {});
  });
}

void Server::OnRenameDecide(const ServerMsg& m) {
  uint64_t txn = m.id;
  if (d_.finished_txns.count(txn)) {
    SendTo(m.from, Opcode::kRenameAck, txn, {});
    return;
  }
  auto decision = DecodeBody<RenameDecideMsg>(m.body);
  std::vector<Mutation> muts;
  std::optional<InvalidationList::Entry> moved;
  if (decision.commit) {
    // Parent attributes evolve across the actions of this one decision.
    std::map<InodeKey, InodeRecord> dirs;
    std::map<InodeKey, bool> entries;
    auto dir_of = [&](const InodeKey& k) -> InodeRecord* {
      auto it = dirs.find(k);
      if (it != dirs.end()) return &it->second;
      const InodeRecord* rec = d_.store.FindInode(k);
      if (!rec) return nullptr;
      return &dirs.emplace(k, *rec).first->second;
    };
    auto entry_exists = [&](const InodeKey& k) {
      auto it = entries.find(k);
      return it != entries.end() ? it->second : d_.store.FindEntry(k) != nullptr;
    };
    for (const auto& a : decision.actions) {
      switch (a.kind) {
        case RenameAction::kRemoveInode:
          muts.push_back(mut::DeleteInode{a.key});
          for (const auto& e : a.entries) muts.push_back(mut::DeleteEntry{e.key});
          if (a.rec.IsDir()) {
            moved = InvalidationList::Entry{true, a.rec.id, a.key};
            muts.push_back(mut::Invalidate{*moved});
          }
          break;
        case RenameAction::kAddInode:
          muts.push_back(mut::PutInode{a.rec});
          for (const auto& e : a.entries) muts.push_back(mut::PutEntry{e});
          break;
        case RenameAction::kParentRemove:
        case RenameAction::kParentAdd: {
          InodeRecord* dir = dir_of(a.key);
          if (!dir) break;
          InodeKey ek{dir->id, a.name};
          bool had = entry_exists(ek);
          if (a.kind == RenameAction::kParentRemove) {
            if (had) {
              muts.push_back(mut::DeleteEntry{ek});
              dir->size -= 1;
            }
            entries[ek] = false;
          } else {
            muts.push_back(mut::PutEntry{DirEntryRecord{ek, a.rec.kind, a.rec.perms}});
            if (!had) dir->size += 1;
            entries[ek] = true;
          }
          dir->mtime = std::max(dir->mtime, a.ts);
          muts.push_back(mut::SetDirAttrs{a.key, dir->size, dir->mtime});
          break;
        }
      }
    }
  }
  muts.push_back(mut::RenameFinished{txn});
  LogOp(std::move(muts));

  auto it = participants_.find(txn);
  if (it != participants_.end()) {
    Participant& p = it->second;
    if (p.moved_cid != 0) {
      InvalAction action = decision.commit ? InvalAction::kCommit : InvalAction::kRevoke;
      if (decision.commit) {
        inval_.Commit(p.moved_cid);
      } else {
        inval_.Revoke(p.moved_cid);
      }
      if (p.moved) {
        SendFinishAll(p.moved_cid, *p.moved, action);
        locks_.Release(p.moved->local_lock);
      } else if (auto c = collects_.find(p.moved_cid); c != collects_.end()) {
        // Decision arrived while the collect was still running: let it end.
        c->second.on_collected = [this, cid = p.moved_cid, action] {
          OwnerCollect oc = std::move(collects_.at(cid));
          collects_.erase(cid);
          SendFinishAll(cid, oc, action);
          locks_.Release(oc.local_lock);
        };
      }
      resolved_collects_.insert(p.moved_cid);
    }
    locks_.Release(p.holder);
    participants_.erase(it);
  }
  if (moved) inval_.AddCommitted(*moved);
  SendTo(m.from, Opcode::kRenameAck, txn, {});
}

// ---- coordinator

void Server::OnRenameVote(const ServerMsg& m) {
  auto it = renames_.find(m.id);
  if (it == renames_.end() || it->second.stage != RenameStage::kPrepare) return;
  RenameTxn& t = it->second;
  if (!t.votes_pending.erase(m.from)) return;
  StopReliable(m.from, Opcode::kRenamePrepare, t.txn);
  auto vote = DecodeBody<RenameVoteMsg>(m.body);
  if (vote.err != Errc::kOk && (t.vote_err == Errc::kOk || VotePrecedence(vote.err) < VotePrecedence(t.vote_err))) {
    t.vote_err = vote.err;
  }
  if (vote.rec && vote.rec->key == t.req.key) t.src_rec = vote.rec;
  if (t.votes_pending.empty()) AfterVotes(t.txn);
}

void Server::AfterVotes(uint64_t txn) {
  RenameTxn& t = renames_.at(txn);
  if (t.vote_err != Errc::kOk) return Decide(txn, t.vote_err);
  if (!t.src_rec || t.src_rec->kind != t.req.kind) return Decide(txn, Errc::kInval);
  if (t.src_rec->IsDir()) {
    for (const auto& c : t.req.dst_trail) {
      if (c.id == t.src_rec->id) return Decide(txn, Errc::kLoop);
    }
  }
  // Drain queued updates of both parents so no older entry for either name
  // can land after the rename.
  t.stage = RenameStage::kAggregate;
  std::set<uint64_t> fps = {GroupOf(t.req.parent_key).Value(), GroupOf(t.req.dst_parent_key).Value()};
  for (uint64_t v : fps) {
    Fingerprint fp = Fingerprint::FromValue(v);
    uint64_t aid = NewId(5);
    ServerIndex owner = OwnerOfGroup(fp);
    t.agg_pending[aid] = owner;
    ByteWriter w;
    EncodeFingerprint(w, fp);
    SendReliable(owner, Opcode::kAggregateNow, aid, w.Take());
  }
}

void Server::OnAggregateDone(const ServerMsg& m) {
  auto it = std::find_if(renames_.begin(), renames_.end(), [&](const auto& kv) {
    return kv.second.stage == RenameStage::kAggregate && kv.second.agg_pending.count(m.id);
  });
  if (it == renames_.end()) return;
  RenameTxn& t = it->second;
  t.agg_pending.erase(m.id);
  StopReliable(m.from, Opcode::kAggregateNow, m.id);
  if (!t.agg_pending.empty()) return;
  if (!t.src_rec->IsDir()) return Decide(t.txn, Errc::kOk);
  t.stage = RenameStage::kMoved;
  ServerIndex src_owner = OwnerOfInode(hasher_, t.req.key, t.req.kind, config_.n_servers);
  SendReliable(src_owner, Opcode::kRenameMoved, t.txn, {});
}

void Server::OnRenameMovedReply(const ServerMsg& m) {
  auto it = renames_.find(m.id);
  if (it == renames_.end() || it->second.stage != RenameStage::kMoved) return;
  StopReliable(m.from, Opcode::kRenameMoved, m.id);
  it->second.moved_entries = DecodeBody<RenameMovedReplyMsg>(m.body).entries;
  Decide(m.id, Errc::kOk);
}

void Server::Decide(uint64_t txn, Errc err) {
  RenameTxn& t = renames_.at(txn);
  for (ServerIndex s : t.votes_pending) StopReliable(s, Opcode::kRenamePrepare, txn);
  t.stage = RenameStage::kDecided;
  t.resp = ClientResponse{};
  t.resp.id = t.req.id;
  t.resp.op = Opcode::kRename;
  t.resp.err = err;
  t.decisions.clear();
  for (const auto& [s, prep] : t.prepares) t.decisions[s].commit = err == Errc::kOk;
  if (err == Errc::kOk) {
    Micros ts = Tick();
    t.resp.ts = ts;
    const ClientRequest& q = t.req;
    InodeRecord rec = *t.src_rec;
    uint32_t n = config_.n_servers;
    ServerIndex s_src = OwnerOfInode(hasher_, q.key, q.kind, n);
    ServerIndex s_dst = OwnerOfInode(hasher_, q.dst_key, q.kind, n);
    bool move_entries = rec.IsDir() && s_src != s_dst;

    RenameAction rm{RenameAction::kRemoveInode, q.key, {}, rec, {}, ts};
    if (move_entries) rm.entries = t.moved_entries;
    t.decisions[s_src].actions.push_back(rm);

    RenameAction prm{RenameAction::kParentRemove, q.parent_key, q.key.name, rec, {}, ts};
    t.decisions[OwnerOfGroup(GroupOf(q.parent_key))].actions.push_back(prm);

    InodeRecord moved = rec;
    moved.key = q.dst_key;
    moved.ctime = ts;
    RenameAction add{RenameAction::kAddInode, q.dst_key, {}, moved, {}, ts};
    if (move_entries) add.entries = t.moved_entries;
    t.decisions[s_dst].actions.push_back(add);

    RenameAction padd{RenameAction::kParentAdd, q.dst_parent_key, q.dst_key.name, rec, {}, ts};
    t.decisions[OwnerOfGroup(GroupOf(q.dst_parent_key))].actions.push_back(padd);
  }
  LogOp({mut::RenameDecided{txn, EncodeDecision(t.resp, t.decisions)}});
  SendDecisions(txn);
}

void Server::SendDecisions(uint64_t txn) {
  RenameTxn& t = renames_.at(txn);
  t.acks_pending.clear();
  for (const auto& [s, d] : t.decisions) {
    t.acks_pending.insert(s);
    SendReliable(s, Opcode::kRenameDecide, txn, Encode(d));
  }
}

void Server::OnRenameAck(const ServerMsg& m) {
  auto it = renames_.find(m.id);
  if (it == renames_.end() || it->second.stage != RenameStage::kDecided) return;
  if (!it->second.acks_pending.erase(m.from)) return;
  StopReliable(m.from, Opcode::kRenameDecide, m.id);
  if (it->second.acks_pending.empty()) FinishRename(m.id);
}

void Server::FinishRename(uint64_t txn) {
  RenameTxn t = std::move(renames_.at(txn));
  renames_.erase(txn);
  LogOp({mut::RenameDone{txn}, mut::CacheResponse{t.req.id, t.resp.Encode()}});
  Reply(t.req.client, t.resp);
  rename_requests_.erase(t.req.id);
  rename_admission_.Release(t.admission);
}

// Undecided transactions abort; decided ones are driven to completion.
void Server::ResumeRenamesAfterRecovery() {
  for (const auto& [txn, bytes] : d_.txn_begin) {
    RenameTxn& t = renames_[txn];
    t.req = ClientRequest::Decode(bytes);
    t.txn = txn;
    t.prepares = PlanPrepares(t.req);
    rename_requests_.insert(t.req.id);
    AdmitRename(t.req, [this, txn](LockTable::HolderId h) {
      if (auto r = renames_.find(txn); r != renames_.end()) {
        r->second.admission = h;
      } else {
        rename_admission_.Release(h);
      }
    });
    if (auto d = d_.txn_decision.find(txn); d != d_.txn_decision.end()) {
      t.stage = RenameStage::kDecided;
      DecodeDecision(d->second, &t.resp, &t.decisions);
      SendDecisions(txn);
    } else {
      Decide(txn, Errc::kIo);
    }
  }
}

}  // namespace asyncfs
