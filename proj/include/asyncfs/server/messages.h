#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "asyncfs/common/codec.h"
#include "asyncfs/common/types.h"
#include "asyncfs/server/change_log.h"
#include "asyncfs/server/meta_store.h"
#include "asyncfs/switch/packet.h"

namespace asyncfs {

// Every payload starts with: 1-byte opcode | 8-byte request id.
enum class Opcode : uint8_t {
  kLookup = 1,
  kCreate = 2,
  kDelete = 3,
  kMkdir = 4,
  kRmdir = 5,
  kStat = 6,
  kStatDir = 7,
  kReadDir = 8,
  kOpen = 9,
  kClose = 10,
  kRename = 11,

  kResponse = 32,

  kFallbackDone = 64,
  kPush = 65,
  kPushAck = 66,
  kCollect = 67,
  kCollectReply = 68,
  kFinish = 69,
  kFinishAck = 70,
  kAggregateNow = 71,
  kAggregateDone = 72,
  kInvalFetch = 73,
  kInvalReply = 74,
  kRenamePrepare = 76,
  kRenameVote = 77,
  kRenameMoved = 78,
  kRenameMovedReply = 79,
  kRenameDecide = 80,
  kRenameAck = 81,
  kRemoveEcho = 82,
};

std::string_view OpcodeName(Opcode op);
bool IsClientOp(Opcode op);
bool IsDoubleInodeOp(Opcode op);
Opcode PeekOpcode(std::span<const uint8_t> payload);

struct ClientRequest {
  Opcode op = Opcode::kStat;
  RequestId id = 0;
  NodeAddr client = 0;
  std::vector<PathComponent> trail;  // every directory from the root down to the parent
  InodeKey key;
  InodeKey parent_key;
  uint16_t perms = 0;
  // rename only
  std::vector<PathComponent> dst_trail;
  InodeKey dst_key;
  InodeKey dst_parent_key;
  InodeKind kind = InodeKind::kFile;  // kind of the source, as the client resolved it

  Bytes Encode() const;
  static ClientRequest Decode(std::span<const uint8_t> payload);
};

// Carried on INSERT responses so that an overflowed packet lets the parent's
// owner apply the update synchronously.
struct FallbackInfo {
  ServerIndex target = 0;
  NodeAddr client = 0;
  ChangeLog log;
};

struct ClientResponse {
  RequestId id = 0;
  Opcode op = Opcode::kStat;
  Errc err = Errc::kOk;
  Micros ts = 0;
  std::optional<InodeRecord> rec;
  std::vector<DirEntryRecord> entries;
  std::optional<FallbackInfo> fallback;

  Bytes Encode() const;
  static ClientResponse Decode(std::span<const uint8_t> payload);
};

// Server-to-server messages share one frame: opcode | id | from | body.
struct ServerMsg {
  Opcode op = Opcode::kPush;
  uint64_t id = 0;
  ServerIndex from = 0;
  Bytes body;

  Bytes Encode() const;
  static ServerMsg Decode(std::span<const uint8_t> payload);
};

struct FallbackDoneMsg {
  InodeKey parent_key;
  std::set<RequestId> requests;
};

struct PushMsg {
  uint64_t order = 0;
  std::vector<ChangeLog> logs;
};

enum class CollectScope : uint8_t { kGroup = 0, kDirectory = 1 };

struct CollectMsg {
  CollectScope scope = CollectScope::kGroup;
  Fingerprint fp;
  InodeKey dir_key;  // kDirectory scope only
  std::optional<InvalidationList::Entry> invalidation;
};

struct CollectReplyMsg {
  uint64_t order = 0;
  std::vector<ChangeLog> logs;
  // Echo of the pending invalidation this collect installed, so an owner that
  // lost track of the collect can still decide its fate.
  std::optional<InvalidationList::Entry> invalidation;
};

enum class InvalAction : uint8_t { kNone = 0, kCommit = 1, kRevoke = 2 };

struct FinishMsg {
  bool drop = true;
  std::map<InodeKey, std::set<RequestId>> requests;
  InvalAction action = InvalAction::kNone;
  std::optional<InvalidationList::Entry> invalidation;
};

struct InvalReplyMsg {
  std::vector<InvalidationList::Entry> committed;
  std::vector<std::pair<uint64_t, InvalidationList::Entry>> pending;
};

// Rename participants act on these roles.
struct RenameAction {
  enum Kind : uint8_t { kRemoveInode = 0, kAddInode = 1, kParentRemove = 2, kParentAdd = 3 };
  Kind kind = kRemoveInode;
  InodeKey key;            // inode key, or the parent's key
  std::string name;        // parent ops
  InodeRecord rec;         // kAddInode; kParentAdd uses kind/perms
  std::vector<DirEntryRecord> entries;  // kAddInode of a directory
  Micros ts = 0;
};

struct RenamePrepareMsg {
  std::vector<LockSpec> locks;
  // Checks run at this participant.
  std::optional<InodeKey> must_exist;
  std::optional<InodeKey> must_not_exist;
  std::vector<std::pair<InodeKey, DirectoryId>> dirs_with_id;
  std::vector<PathComponent> trail;
};

struct RenameVoteMsg {
  Errc err = Errc::kOk;
  std::optional<InodeRecord> rec;
};

struct RenameMovedReplyMsg {
  std::vector<DirEntryRecord> entries;
};

struct RenameDecideMsg {
  bool commit = false;
  std::vector<RenameAction> actions;
};

Bytes Encode(const FallbackDoneMsg& m);
Bytes Encode(const PushMsg& m);
Bytes Encode(const CollectMsg& m);
Bytes Encode(const CollectReplyMsg& m);
Bytes Encode(const FinishMsg& m);
Bytes Encode(const InvalReplyMsg& m);
Bytes Encode(const RenamePrepareMsg& m);
Bytes Encode(const RenameVoteMsg& m);
Bytes Encode(const RenameMovedReplyMsg& m);
Bytes Encode(const RenameDecideMsg& m);

template <typename T>
T DecodeBody(std::span<const uint8_t> body);

}  // namespace asyncfs
