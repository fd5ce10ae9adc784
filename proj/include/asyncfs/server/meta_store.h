#pragma once

#include <map>
#include <optional>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "asyncfs/common/types.h"
#include "asyncfs/server/change_log.h"
#include "asyncfs/server/wal.h"

namespace asyncfs {

// Ordered in-memory key-value store holding inodes and directory entries.
class MetaStore {
 public:
  const InodeRecord* FindInode(const InodeKey& key) const;
  void PutInode(const InodeRecord& rec) { inodes_[rec.key] = rec; }
  bool EraseInode(const InodeKey& key) { return inodes_.erase(key) > 0; }

  const DirEntryRecord* FindEntry(const InodeKey& key) const;
  void PutEntry(const DirEntryRecord& rec) { entries_[rec.key] = rec; }
  bool EraseEntry(const InodeKey& key) { return entries_.erase(key) > 0; }

  // Entries of one directory in name order.
  std::vector<DirEntryRecord> ListEntries(const DirectoryId& dir) const;
  size_t CountEntries(const DirectoryId& dir) const;

  const std::map<InodeKey, InodeRecord>& inodes() const { return inodes_; }
  const std::map<InodeKey, DirEntryRecord>& entries() const { return entries_; }

  bool operator==(const MetaStore&) const = default;

 private:
  std::map<InodeKey, InodeRecord> inodes_;
  std::map<InodeKey, DirEntryRecord> entries_;
};

// One directory on a resolved path, as the client saw it.
struct PathComponent {
  InodeKey key;
  DirectoryId id;
  bool operator==(const PathComponent&) const = default;
};

// Recently removed directories (by id) and renamed-away directory keys.
class InvalidationList {
 public:
  struct Entry {
    bool moved = false;  // false: id removed; true: (key, id) no longer valid
    DirectoryId id;
    InodeKey key;
    auto operator<=>(const Entry&) const = default;
  };

  void AddCommitted(const Entry& e) { committed_.insert(e); }
  void AddPending(uint64_t collect, const Entry& e) { pending_[collect] = e; }
  void Commit(uint64_t collect);
  void Revoke(uint64_t collect) { pending_.erase(collect); }
  // Drops pending entries whose collect id appears in `collects`.
  void RevokeAll(const std::set<uint64_t>& collects);

  bool Blocks(const PathComponent& c) const;
  bool Blocks(const std::vector<PathComponent>& trail) const;

  const std::set<Entry>& committed() const { return committed_; }
  const std::map<uint64_t, Entry>& pending() const { return pending_; }

 private:
  static bool Matches(const Entry& e, const PathComponent& c) {
    return e.moved ? (e.key == c.key && e.id == c.id) : e.id == c.id;
  }

  std::set<Entry> committed_;
  std::map<uint64_t, Entry> pending_;
};

void EncodeInvalidation(ByteWriter& w, const InvalidationList::Entry& e);
InvalidationList::Entry DecodeInvalidation(ByteReader& r);
void EncodeTrail(ByteWriter& w, const std::vector<PathComponent>& trail);
std::vector<PathComponent> DecodeTrail(ByteReader& r);

struct LockSpec {
  InodeKey key;
  bool exclusive = true;
  bool operator==(const LockSpec&) const = default;
};

// Redo-log mutations. Every state change reaching the store goes through one
// of these, both live and during recovery.
namespace mut {
struct PutInode { InodeRecord rec; };
struct DeleteInode { InodeKey key; };
struct PutEntry { DirEntryRecord rec; };
struct DeleteEntry { InodeKey key; };
struct SetDirAttrs { InodeKey dir_key; uint64_t size; Micros mtime; };
struct MarkApplied { std::vector<RequestId> requests; };
struct CacheResponse { RequestId request; Bytes response; };
struct Invalidate { InvalidationList::Entry entry; };
struct RenamePrepared { uint64_t txn; std::vector<LockSpec> locks; };
struct RenameFinished { uint64_t txn; };
struct RenameBegin { uint64_t txn; Bytes request; };
struct RenameDecided { uint64_t txn; Bytes decision; };
struct RenameDone { uint64_t txn; };
// Written with a double-inode op so a crash before the change-log append can be redone.
struct ParentIntent { InodeKey parent_key; ChangeLogEntry entry; };
}  // namespace mut

using Mutation = std::variant<mut::PutInode, mut::DeleteInode, mut::PutEntry, mut::DeleteEntry, mut::SetDirAttrs,
                              mut::MarkApplied, mut::CacheResponse, mut::Invalidate, mut::RenamePrepared,
                              mut::RenameFinished, mut::RenameBegin, mut::RenameDecided, mut::RenameDone, mut::ParentIntent>;

Bytes EncodeMutations(const std::vector<Mutation>& muts);
std::vector<Mutation> DecodeMutations(std::span<const uint8_t> body);

struct ApplyStats {
  size_t puts = 0;         // entries newly inserted
  size_t deletes_hit = 0;  // entries actually removed
  size_t skipped = 0;      // ops already applied through another route
  bool missing_dir = false;
};

// Change-log entries shipped by one server. `order` is the shipper's clock at
// shipping time, so shipments from one source sort in their local order.
struct Shipment {
  ServerIndex source = 0;
  uint64_t order = 0;
  ChangeLog log;
};

void EncodeShipment(ByteWriter& w, const Shipment& s);
Shipment DecodeShipment(ByteReader& r);

struct AggregationImport {
  uint64_t import_id = 0;
  std::vector<Shipment> shipments;
};

Bytes EncodeImport(const AggregationImport& imp);
AggregationImport DecodeImport(std::span<const uint8_t> body);

// All state a server can rebuild from its WAL.
struct DurableState {
  MetaStore store;
  std::unordered_set<RequestId> applied;
  std::unordered_map<RequestId, Bytes> responses;
  std::vector<InvalidationList::Entry> own_invalidations;
  std::map<InodeKey, ChangeLog> changelogs;  // local delayed updates for remote/own directories
  // Imported into this owner and not yet applied, per directory in shipping order.
  std::map<InodeKey, std::map<std::pair<uint64_t, ServerIndex>, ChangeLog>> stash;
  std::set<uint64_t> imports;
  std::map<uint64_t, std::vector<LockSpec>> prepared;
  std::set<uint64_t> finished_txns;
  std::map<uint64_t, Bytes> txn_begin;
  std::map<uint64_t, Bytes> txn_decision;
  // Parent updates logged with their op but not yet appended to a change-log.
  std::map<RequestId, mut::ParentIntent> intents;

  void Apply(const Mutation& m);
  void ApplyRecord(const WalRecord& rec);
  void AppendChangeLog(const InodeKey& dir_key, const ChangeLogEntry& e);
  void DropChangeLog(const InodeKey& dir_key, const std::set<RequestId>& requests);
  void Import(const AggregationImport& imp);

  // Stashed ops for one directory concatenated in shipping order.
  ChangeLog StashedLog(const InodeKey& dir_key) const;
  size_t PendingEntries() const;
};

Bytes EncodeChangeLogAppend(const InodeKey& dir_key, const ChangeLogEntry& e);
Bytes EncodeChangeLogApplied(const InodeKey& dir_key, const std::set<RequestId>& requests);

// Translates a recast change-log into mutations against the directory's
// inode: entry puts/deletes in queue order, then one attribute update
// (size, mtime := max(mtime, max timestamp)). Ops already in `applied` are
// skipped. An empty result with missing_dir set means the directory is gone.
std::vector<Mutation> PlanChangeLogApply(const MetaStore& store, const ChangeLog& log,
                                         const std::unordered_set<RequestId>& applied, ApplyStats* stats);

// Plans and applies in one step (used directly by tests and recovery tools).
ApplyStats ApplyChangeLog(DurableState& state, const ChangeLog& log);

}  // namespace asyncfs
