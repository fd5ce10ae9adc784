#include "asyncfs/server/meta_store.h"

#include <algorithm>

namespace asyncfs {

const InodeRecord* MetaStore::FindInode(const InodeKey& key) const {
  auto it = inodes_.find(key);
  return it == inodes_.end() ? nullptr : &it->second;
}

const DirEntryRecord* MetaStore::FindEntry(const InodeKey& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<DirEntryRecord> MetaStore::ListEntries(const DirectoryId& dir) const {
  std::vector<DirEntryRecord> out;
  for (auto it = entries_.lower_bound(InodeKey{dir, ""}); it != entries_.end() && it->first.pid == dir; ++it) {
    out.push_back(it->second);
  }
  return out;
}

size_t MetaStore::CountEntries(const DirectoryId& dir) const {
  size_t n = 0;
  for (auto it = entries_.lower_bound(InodeKey{dir, ""}); it != entries_.end() && it->first.pid == dir; ++it) ++n;
  return n;
}

void InvalidationList::Commit(uint64_t collect) {
  auto it = pending_.find(collect);
  if (it == pending_.end()) return;
  committed_.insert(it->second);
  pending_.erase(it);
}

void InvalidationList::RevokeAll(const std::set<uint64_t>& collects) {
  for (uint64_t c : collects) pending_.erase(c);
}

bool InvalidationList::Blocks(const PathComponent& c) const {
  for (const auto& e : committed_) {
    if (Matches(e, c)) return true;
  }
  for (const auto& [id, e] : pending_) {
    if (Matches(e, c)) return true;
  }
  return false;
}

bool InvalidationList::Blocks(const std::vector<PathComponent>& trail) const {
  if (committed_.empty() && pending_.empty()) return false;
  return std::any_of(trail.begin(), trail.end(), [&](const PathComponent& c) { return Blocks(c); });
}

void EncodeInvalidation(ByteWriter& w, const InvalidationList::Entry& e) {
  w.Bool(e.moved);
  w.Raw(e.id.bytes);
  EncodeKey(w, e.key);
}

InvalidationList::Entry DecodeInvalidation(ByteReader& r) {
  InvalidationList::Entry e;
  e.moved = r.Bool();
  auto id = r.Raw(32);
  std::copy(id.begin(), id.end(), e.id.bytes.begin());
  e.key = DecodeKey(r);
  return e;
}

void EncodeTrail(ByteWriter& w, const std::vector<PathComponent>& trail) {
  w.U16(static_cast<uint16_t>(trail.size()));
  for (const auto& c : trail) {
    EncodeKey(w, c.key);
    w.Raw(c.id.bytes);
  }
}

std::vector<PathComponent> DecodeTrail(ByteReader& r) {
  std::vector<PathComponent> out(r.U16());
  for (auto& c : out) {
    c.key = DecodeKey(r);
    auto id = r.Raw(32);
    std::copy(id.begin(), id.end(), c.id.bytes.begin());
  }
  return out;
}

namespace {

enum MutTag : uint8_t {
  kPutInode = 1,
  kDeleteInode,
  kPutEntry,
  kDeleteEntry,
  kSetDirAttrs,
  kMarkApplied,
  kCacheResponse,
  kInvalidate,
  kRenamePrepared,
  kRenameFinished,
  kRenameBegin,
  kRenameDecided,
  kRenameDone,
  kParentIntent,
};

struct MutEncoder {
  ByteWriter& w;
  void operator()(const mut::PutInode& m) { w.U8(kPutInode); EncodeInode(w, m.rec); }
  void operator()(const mut::DeleteInode& m) { w.U8(kDeleteInode); EncodeKey(w, m.key); }
  void operator()(const mut::PutEntry& m) { w.U8(kPutEntry); EncodeDirEntry(w, m.rec); }
  void operator()(const mut::DeleteEntry& m) { w.U8(kDeleteEntry); EncodeKey(w, m.key); }
  void operator()(const mut::SetDirAttrs& m) {
    w.U8(kSetDirAttrs);
    EncodeKey(w, m.dir_key);
    w.U64(m.size);
    w.I64(m.mtime);
  }
  void operator()(const mut::MarkApplied& m) {
    w.U8(kMarkApplied);
    w.U32(static_cast<uint32_t>(m.requests.size()));
    for (RequestId r : m.requests) w.U64(r);
  }
  void operator()(const mut::CacheResponse& m) {
    w.U8(kCacheResponse);
    w.U64(m.request);
    w.Blob(m.response);
  }
  void operator()(const mut::Invalidate& m) { w.U8(kInvalidate); EncodeInvalidation(w, m.entry); }
  void operator()(const mut::RenamePrepared& m) {
    w.U8(kRenamePrepared);
    w.U64(m.txn);
    w.U16(static_cast<uint16_t>(m.locks.size()));
    for (const auto& l : m.locks) {
      EncodeKey(w, l.key);
      w.Bool(l.exclusive);
    }
  }
  void operator()(const mut::RenameFinished& m) { w.U8(kRenameFinished); w.U64(m.txn); }
  void operator()(const mut::RenameBegin& m) { w.U8(kRenameBegin); w.U64(m.txn); w.Blob(m.request); }
  void operator()(const mut::RenameDecided& m) { w.U8(kRenameDecided); w.U64(m.txn); w.Blob(m.decision); }
  void operator()(const mut::RenameDone& m) { w.U8(kRenameDone); w.U64(m.txn); }
  void operator()(const mut::ParentIntent& m) {
    w.U8(kParentIntent);
    EncodeKey(w, m.parent_key);
    EncodeEntry(w, m.entry);
  }
};

Mutation DecodeMutation(ByteReader& r) {
  switch (r.U8()) {
    case kPutInode: return mut::PutInode{DecodeInode(r)};
    case kDeleteInode: return mut::DeleteInode{DecodeKey(r)};
    case kPutEntry: return mut::PutEntry{DecodeDirEntry(r)};
    case kDeleteEntry: return mut::DeleteEntry{DecodeKey(r)};
    case kSetDirAttrs: {
      mut::SetDirAttrs m;
      m.dir_key = DecodeKey(r);
      m.size = r.U64();
      m.mtime = r.I64();
      return m;
    }
    case kMarkApplied: {
      mut::MarkApplied m;
      m.requests.resize(r.U32());
      for (auto& q : m.requests) q = r.U64();
      return m;
    }
    case kCacheResponse: {
      mut::CacheResponse m;
      m.request = r.U64();
      m.response = r.Blob();
      return m;
    }
    case kInvalidate: return mut::Invalidate{DecodeInvalidation(r)};
    case kRenamePrepared: {
      mut::RenamePrepared m;
      m.txn = r.U64();
      m.locks.resize(r.U16());
      for (auto& l : m.locks) {
        l.key = DecodeKey(r);
        l.exclusive = r.Bool();
      }
      return m;
    }
    case kRenameFinished: return mut::RenameFinished{r.U64()};
    case kRenameBegin: {
      mut::RenameBegin m;
      m.txn = r.U64();
      m.request = r.Blob();
      return m;
    }
    case kRenameDecided: {
      mut::RenameDecided m;
      m.txn = r.U64();
      m.decision = r.Blob();
      return m;
    }
    case kRenameDone: return mut::RenameDone{r.U64()};
    case kParentIntent: {
      mut::ParentIntent m;
      m.parent_key = DecodeKey(r);
      m.entry = DecodeEntry(r);
      return m;
    }
    default: throw DecodeError("unknown mutation tag");
  }
}

}  // namespace

Bytes EncodeMutations(const std::vector<Mutation>& muts) {
  ByteWriter w;
  w.U32(static_cast<uint32_t>(muts.size()));
  MutEncoder enc{w};
  for (const auto& m : muts) std::visit(enc, m);
  return w.Take();
}

std::vector<Mutation> DecodeMutations(std::span<const uint8_t> body) {
  ByteReader r(body);
  std::vector<Mutation> out;
  uint32_t n = r.U32();
  out.reserve(n);
  for (uint32_t i = 0; i < n; ++i) out.push_back(DecodeMutation(r));
  if (!r.done()) throw DecodeError("trailing bytes after mutations");
  return out;
}

void EncodeShipment(ByteWriter& w, const Shipment& s) {
  w.U32(s.source);
  w.U64(s.order);
  s.log.Encode(w);
}

Shipment DecodeShipment(ByteReader& r) {
  Shipment s;
  s.source = r.U32();
  s.order = r.U64();
  s.log = ChangeLog::Decode(r);
  return s;
}

Bytes EncodeImport(const AggregationImport& imp) {
  ByteWriter w;
  w.U64(imp.import_id);
  w.U32(static_cast<uint32_t>(imp.shipments.size()));
  for (const auto& s : imp.shipments) EncodeShipment(w, s);
  return w.Take();
}

AggregationImport DecodeImport(std::span<const uint8_t> body) {
  ByteReader r(body);
  AggregationImport imp;
  imp.import_id = r.U64();
  imp.shipments.resize(r.U32());
  for (auto& s : imp.shipments) s = DecodeShipment(r);
  return imp;
}

Bytes EncodeChangeLogAppend(const InodeKey& dir_key, const ChangeLogEntry& e) {
  ByteWriter w;
  EncodeKey(w, dir_key);
  EncodeEntry(w, e);
  return w.Take();
}

Bytes EncodeChangeLogApplied(const InodeKey& dir_key, const std::set<RequestId>& requests) {
  ByteWriter w;
  EncodeKey(w, dir_key);
  w.U32(static_cast<uint32_t>(requests.size()));
  for (RequestId q : requests) w.U64(q);
  return w.Take();
}

void DurableState::Apply(const Mutation& m) {
  std::visit(
      [this](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, mut::PutInode>) {
          store.PutInode(v.rec);
        } else if constexpr (std::is_same_v<T, mut::DeleteInode>) {
          store.EraseInode(v.key);
        } else if constexpr (std::is_same_v<T, mut::PutEntry>) {
          store.PutEntry(v.rec);
        } else if constexpr (std::is_same_v<T, mut::DeleteEntry>) {
          store.EraseEntry(v.key);
        } else if constexpr (std::is_same_v<T, mut::SetDirAttrs>) {
          if (const InodeRecord* cur = store.FindInode(v.dir_key)) {
            InodeRecord rec = *cur;
            rec.size = v.size;
            rec.mtime = v.mtime;
            store.PutInode(rec);
          }
        } else if constexpr (std::is_same_v<T, mut::MarkApplied>) {
          std::set<RequestId> done(v.requests.begin(), v.requests.end());
          applied.insert(v.requests.begin(), v.requests.end());
          for (auto it = stash.begin(); it != stash.end();) {
            auto& chunks = it->second;
            for (auto c = chunks.begin(); c != chunks.end();) {
              c->second.Remove(done);
              c = c->second.empty() ? chunks.erase(c) : std::next(c);
            }
            it = chunks.empty() ? stash.erase(it) : std::next(it);
          }
        } else if constexpr (std::is_same_v<T, mut::CacheResponse>) {
          responses[v.request] = v.response;
        } else if constexpr (std::is_same_v<T, mut::Invalidate>) {
          own_invalidations.push_back(v.entry);
        } else if constexpr (std::is_same_v<T, mut::RenamePrepared>) {
          if (!finished_txns.count(v.txn)) prepared[v.txn] = v.locks;
        } else if constexpr (std::is_same_v<T, mut::RenameFinished>) {
          prepared.erase(v.txn);
          finished_txns.insert(v.txn);
        } else if constexpr (std::is_same_v<T, mut::RenameBegin>) {
          txn_begin[v.txn] = v.request;
        } else if constexpr (std::is_same_v<T, mut::RenameDecided>) {
          txn_decision[v.txn] = v.decision;
        } else if constexpr (std::is_same_v<T, mut::RenameDone>) {
          txn_begin.erase(v.txn);
          txn_decision.erase(v.txn);
        } else if constexpr (std::is_same_v<T, mut::ParentIntent>) {
          intents[v.entry.request] = v;
        }
      },
      m);
}

void DurableState::AppendChangeLog(const InodeKey& dir_key, const ChangeLogEntry& e) {
  intents.erase(e.request);
  auto it = changelogs.try_emplace(dir_key, ChangeLog(dir_key)).first;
  it->second.Append(e);
}

void DurableState::DropChangeLog(const InodeKey& dir_key, const std::set<RequestId>& requests) {
  auto it = changelogs.find(dir_key);
  if (it == changelogs.end()) return;
  it->second.Remove(requests);
  if (it->second.empty()) changelogs.erase(it);
}

void DurableState::Import(const AggregationImport& imp) {
  if (!imports.insert(imp.import_id).second) return;
  for (const auto& ship : imp.shipments) {
    const ChangeLog& log = ship.log;
    std::set<RequestId> skip;
    auto& chunks = stash[log.dir_key()];
    for (const auto& [k, c] : chunks) {
      for (const auto& op : c.ops()) skip.insert(op.request);
    }
    for (const auto& op : log.ops()) {
      if (applied.count(op.request)) skip.insert(op.request);
    }
    ChangeLog fresh = log;
    fresh.Remove(skip);
    if (fresh.empty()) {
      if (chunks.empty()) stash.erase(log.dir_key());
      continue;
    }
    auto& slot = chunks[{ship.order, ship.source}];
    if (slot.empty()) {
      slot = std::move(fresh);
    } else {
      slot.Merge(fresh);
    }
  }
}

ChangeLog DurableState::StashedLog(const InodeKey& dir_key) const {
  ChangeLog out(dir_key);
  auto it = stash.find(dir_key);
  if (it == stash.end()) return out;
  for (const auto& [k, c] : it->second) out.Merge(c);
  return out;
}

void DurableState::ApplyRecord(const WalRecord& rec) {
  switch (rec.kind) {
    case WalKind::kOpLog:
      for (const auto& m : DecodeMutations(rec.body)) Apply(m);
      break;
    case WalKind::kChangeLogAppend: {
      ByteReader r(rec.body);
      InodeKey key = DecodeKey(r);
      AppendChangeLog(key, DecodeEntry(r));
      break;
    }
    case WalKind::kChangeLogApplied: {
      ByteReader r(rec.body);
      InodeKey key = DecodeKey(r);
      std::set<RequestId> reqs;
      for (uint32_t n = r.U32(); n > 0; --n) reqs.insert(r.U64());
      DropChangeLog(key, reqs);
      break;
    }
    case WalKind::kAggregationImport:
      Import(DecodeImport(rec.body));
      break;
  }
}

size_t DurableState::PendingEntries() const {
  size_t n = 0;
  for (const auto& [k, l] : changelogs) n += l.size();
  return n;
}

std::vector<Mutation> PlanChangeLogApply(const MetaStore& store, const ChangeLog& log,
                                         const std::unordered_set<RequestId>& applied, ApplyStats* stats) {
  ApplyStats local;
  ApplyStats& st = stats ? *stats : local;
  std::vector<Mutation> out;
  const InodeRecord* dir = store.FindInode(log.dir_key());
  if (dir == nullptr || !dir->IsDir()) {
    st.missing_dir = true;
    return out;
  }
  // Overlay of names touched by this log: true = present after the op.
  std::map<std::string, bool> overlay;
  int64_t delta = 0;
  std::vector<RequestId> done;
  for (const auto& op : log.ops()) {
    if (applied.count(op.request)) {
      ++st.skipped;
      continue;
    }
    done.push_back(op.request);
    InodeKey ek{dir->id, op.name};
    bool present;
    if (auto it = overlay.find(op.name); it != overlay.end()) {
      present = it->second;
    } else {
      present = store.FindEntry(ek) != nullptr;
    }
    if (IsPut(op.type)) {
      InodeKind kind = op.type == ChangeOpType::kMkdir ? InodeKind::kDirectory : InodeKind::kFile;
      out.push_back(mut::PutEntry{DirEntryRecord{ek, kind, op.perms}});
      if (!present) {
        ++delta;
        ++st.puts;
      }
      overlay[op.name] = true;
    } else {
      if (present) {
        out.push_back(mut::DeleteEntry{ek});
        --delta;
        ++st.deletes_hit;
      }
      overlay[op.name] = false;
    }
  }
  if (done.empty() && log.max_timestamp() <= dir->mtime) return out;
  uint64_t size = static_cast<uint64_t>(static_cast<int64_t>(dir->size) + delta);
  out.push_back(mut::SetDirAttrs{dir->key, size, std::max(dir->mtime, log.max_timestamp())});
  if (!done.empty()) out.push_back(mut::MarkApplied{std::move(done)});
  return out;
}

ApplyStats ApplyChangeLog(DurableState& state, const ChangeLog& log) {
  ApplyStats st;
  for (const auto& m : PlanChangeLogApply(state.store, log, state.applied, &st)) state.Apply(m);
  return st;
}

}  // namespace asyncfs
