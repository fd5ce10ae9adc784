#include "asyncfs/server/messages.h"

namespace asyncfs {

std::string_view OpcodeName(Opcode op) {
  switch (op) {
    case Opcode::kLookup: return "lookup";
    case Opcode::kCreate: return "create";
    case Opcode::kDelete: return "delete";
    case Opcode::kMkdir: return "mkdir";
    case Opcode::kRmdir: return "rmdir";
    case Opcode::kStat: return "stat";
    case Opcode::kStatDir: return "statdir";
    case Opcode::kReadDir: return "readdir";
    case Opcode::kOpen: return "open";
    case Opcode::kClose: return "close";
    case Opcode::kRename: return "rename";
    case Opcode::kResponse: return "response";
    case Opcode::kFallbackDone: return "fallback-done";
    case Opcode::kPush: return "push";
    case Opcode::kPushAck: return "push-ack";
    case Opcode::kCollect: return "collect";
    case Opcode::kCollectReply: return "collect-reply";
    case Opcode::kFinish: return "finish";
    case Opcode::kFinishAck: return "finish-ack";
    case Opcode::kAggregateNow: return "aggregate-now";
    case Opcode::kAggregateDone: return "aggregate-done";
    case Opcode::kInvalFetch: return "inval-fetch";
    case Opcode::kInvalReply: return "inval-reply";
    case Opcode::kRenamePrepare: return "rename-prepare";
    case Opcode::kRenameVote: return "rename-vote";
    case Opcode::kRenameMoved: return "rename-moved";
    case Opcode::kRenameMovedReply: return "rename-moved-reply";
    case Opcode::kRenameDecide: return "rename-decide";
    case Opcode::kRenameAck: return "rename-ack";
    case Opcode::kRemoveEcho: return "remove-echo";
  }
  return "?";
}

bool IsClientOp(Opcode op) { return static_cast<uint8_t>(op) >= 1 && static_cast<uint8_t>(op) <= 11; }

bool IsDoubleInodeOp(Opcode op) {
  return op == Opcode::kCreate || op == Opcode::kDelete || op == Opcode::kMkdir || op == Opcode::kRmdir;
}

Opcode PeekOpcode(std::span<const uint8_t> payload) {
  if (payload.empty()) throw DecodeError("empty payload");
  return static_cast<Opcode>(payload[0]);
}

namespace {

void EncodeId(ByteWriter& w, const DirectoryId& id) { w.Raw(id.bytes); }

DirectoryId DecodeId(ByteReader& r) {
  DirectoryId id;
  auto raw = r.Raw(32);
  std::copy(raw.begin(), raw.end(), id.bytes.begin());
  return id;
}

void EncodeOptInval(ByteWriter& w, const std::optional<InvalidationList::Entry>& e) {
  w.Bool(e.has_value());
  if (e) EncodeInvalidation(w, *e);
}

std::optional<InvalidationList::Entry> DecodeOptInval(ByteReader& r) {
  if (!r.Bool()) return std::nullopt;
  return DecodeInvalidation(r);
}

void EncodeLogs(ByteWriter& w, const std::vector<ChangeLog>& logs) {
  w.U32(static_cast<uint32_t>(logs.size()));
  for (const auto& l : logs) l.Encode(w);
}

std::vector<ChangeLog> DecodeLogs(ByteReader& r) {
  std::vector<ChangeLog> logs(r.U32());
  for (auto& l : logs) l = ChangeLog::Decode(r);
  return logs;
}

void EncodeRequests(ByteWriter& w, const std::set<RequestId>& reqs) {
  w.U32(static_cast<uint32_t>(reqs.size()));
  for (RequestId q : reqs) w.U64(q);
}

std::set<RequestId> DecodeRequests(ByteReader& r) {
  std::set<RequestId> out;
  for (uint32_t n = r.U32(); n > 0; --n) out.insert(r.U64());
  return out;
}

void EncodeEntries(ByteWriter& w, const std::vector<DirEntryRecord>& entries) {
  w.U32(static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) EncodeDirEntry(w, e);
}

std::vector<DirEntryRecord> DecodeEntries(ByteReader& r) {
  std::vector<DirEntryRecord> out(r.U32());
  for (auto& e : out) e = DecodeDirEntry(r);
  return out;
}

void EncodeOptKey(ByteWriter& w, const std::optional<InodeKey>& k) {
  w.Bool(k.has_value());
  if (k) EncodeKey(w, *k);
}

std::optional<InodeKey> DecodeOptKey(ByteReader& r) {
  if (!r.Bool()) return std::nullopt;
  return DecodeKey(r);
}

void EncodeOptInode(ByteWriter& w, const std::optional<InodeRecord>& rec) {
  w.Bool(rec.has_value());
  if (rec) EncodeInode(w, *rec);
}

std::optional<InodeRecord> DecodeOptInode(ByteReader& r) {
  if (!r.Bool()) return std::nullopt;
  return DecodeInode(r);
}

void Finish(ByteReader& r) {
  if (!r.done()) throw DecodeError("trailing bytes in message");
}

}  // namespace

Bytes ClientRequest::Encode() const {
  ByteWriter w;
  w.U8(static_cast<uint8_t>(op));
  w.U64(id);
  w.U32(client);
  EncodeTrail(w, trail);
  EncodeKey(w, key);
  EncodeKey(w, parent_key);
  w.U16(perms);
  if (op == Opcode::kRename) {
    EncodeTrail(w, dst_trail);
    EncodeKey(w, dst_key);
    EncodeKey(w, dst_parent_key);
    w.U8(static_cast<uint8_t>(kind));
  }
  return w.Take();
}

ClientRequest ClientRequest::Decode(std::span<const uint8_t> payload) {
  ByteReader r(payload);
  ClientRequest q;
  q.op = static_cast<Opcode>(r.U8());
  if (!IsClientOp(q.op)) throw DecodeError("not a client request");
  q.id = r.U64();
  q.client = r.U32();
  q.trail = DecodeTrail(r);
  q.key = DecodeKey(r);
  q.parent_key = DecodeKey(r);
  q.perms = r.U16();
  if (q.op == Opcode::kRename) {
    q.dst_trail = DecodeTrail(r);
    q.dst_key = DecodeKey(r);
    q.dst_parent_key = DecodeKey(r);
    uint8_t k = r.U8();
    if (k > 1) throw DecodeError("bad inode kind");
    q.kind = static_cast<InodeKind>(k);
  }
  Finish(r);
  return q;
}

Bytes ClientResponse::Encode() const {
  ByteWriter w;
  w.U8(static_cast<uint8_t>(Opcode::kResponse));
  w.U64(id);
  w.U8(static_cast<uint8_t>(op));
  w.U8(static_cast<uint8_t>(err));
  w.I64(ts);
  EncodeOptInode(w, rec);
  EncodeEntries(w, entries);
  w.Bool(fallback.has_value());
  if (fallback) {
    w.U32(fallback->target);
    w.U32(fallback->client);
    fallback->log.Encode(w);
  }
  return w.Take();
}

ClientResponse ClientResponse::Decode(std::span<const uint8_t> payload) {
  ByteReader r(payload);
  if (static_cast<Opcode>(r.U8()) != Opcode::kResponse) throw DecodeError("not a response");
  ClientResponse p;
  p.id = r.U64();
  p.op = static_cast<Opcode>(r.U8());
  p.err = static_cast<Errc>(r.U8());
  p.ts = r.I64();
  p.rec = DecodeOptInode(r);
  p.entries = DecodeEntries(r);
  if (r.Bool()) {
    FallbackInfo f;
    f.target = r.U32();
    f.client = r.U32();
    f.log = ChangeLog::Decode(r);
    p.fallback = std::move(f);
  }
  Finish(r);
  return p;
}

Bytes ServerMsg::Encode() const {
  ByteWriter w;
  w.U8(static_cast<uint8_t>(op));
  w.U64(id);
  w.U32(from);
  w.Raw(body);
  return w.Take();
}

ServerMsg ServerMsg::Decode(std::span<const uint8_t> payload) {
  ByteReader r(payload);
  ServerMsg m;
  m.op = static_cast<Opcode>(r.U8());
  m.id = r.U64();
  m.from = r.U32();
  auto rest = r.Raw(r.remaining());
  m.body.assign(rest.begin(), rest.end());
  return m;
}

Bytes Encode(const FallbackDoneMsg& m) {
  ByteWriter w;
  EncodeKey(w, m.parent_key);
  EncodeRequests(w, m.requests);
  return w.Take();
}

template <>
FallbackDoneMsg DecodeBody<FallbackDoneMsg>(std::span<const uint8_t> body) {
  ByteReader r(body);
  FallbackDoneMsg m;
  m.parent_key = DecodeKey(r);
  m.requests = DecodeRequests(r);
  Finish(r);
  return m;
}

Bytes Encode(const PushMsg& m) {
  ByteWriter w;
  w.U64(m.order);
  EncodeLogs(w, m.logs);
  return w.Take();
}

template <>
PushMsg DecodeBody<PushMsg>(std::span<const uint8_t> body) {
  ByteReader r(body);
  PushMsg m;
  m.order = r.U64();
  m.logs = DecodeLogs(r);
  Finish(r);
  return m;
}

Bytes Encode(const CollectMsg& m) {
  ByteWriter w;
  w.U8(static_cast<uint8_t>(m.scope));
  EncodeFingerprint(w, m.fp);
  EncodeKey(w, m.dir_key);
  EncodeOptInval(w, m.invalidation);
  return w.Take();
}

template <>
CollectMsg DecodeBody<CollectMsg>(std::span<const uint8_t> body) {
  ByteReader r(body);
  CollectMsg m;
  m.scope = static_cast<CollectScope>(r.U8());
  m.fp = DecodeFingerprint(r);
  m.dir_key = DecodeKey(r);
  m.invalidation = DecodeOptInval(r);
  Finish(r);
  return m;
}

Bytes Encode(const CollectReplyMsg& m) {
  ByteWriter w;
  w.U64(m.order);
  EncodeLogs(w, m.logs);
  EncodeOptInval(w, m.invalidation);
  return w.Take();
}

template <>
CollectReplyMsg DecodeBody<CollectReplyMsg>(std::span<const uint8_t> body) {
  ByteReader r(body);
  CollectReplyMsg m;
  m.order = r.U64();
  m.logs = DecodeLogs(r);
  m.invalidation = DecodeOptInval(r);
  Finish(r);
  return m;
}

Bytes Encode(const FinishMsg& m) {
  ByteWriter w;
  w.Bool(m.drop);
  w.U32(static_cast<uint32_t>(m.requests.size()));
  for (const auto& [k, reqs] : m.requests) {
    EncodeKey(w, k);
    EncodeRequests(w, reqs);
  }
  w.U8(static_cast<uint8_t>(m.action));
  EncodeOptInval(w, m.invalidation);
  return w.Take();
}

template <>
FinishMsg DecodeBody<FinishMsg>(std::span<const uint8_t> body) {
  ByteReader r(body);
  FinishMsg m;
  m.drop = r.Bool();
  for (uint32_t n = r.U32(); n > 0; --n) {
    InodeKey k = DecodeKey(r);
    m.requests[k] = DecodeRequests(r);
  }
  m.action = static_cast<InvalAction>(r.U8());
  m.invalidation = DecodeOptInval(r);
  Finish(r);
  return m;
}

Bytes Encode(const InvalReplyMsg& m) {
  ByteWriter w;
  w.U32(static_cast<uint32_t>(m.committed.size()));
  for (const auto& e : m.committed) EncodeInvalidation(w, e);
  w.U32(static_cast<uint32_t>(m.pending.size()));
  for (const auto& [c, e] : m.pending) {
    w.U64(c);
    EncodeInvalidation(w, e);
  }
  return w.Take();
}

template <>
InvalReplyMsg DecodeBody<InvalReplyMsg>(std::span<const uint8_t> body) {
  ByteReader r(body);
  InvalReplyMsg m;
  m.committed.resize(r.U32());
  for (auto& e : m.committed) e = DecodeInvalidation(r);
  m.pending.resize(r.U32());
  for (auto& [c, e] : m.pending) {
    c = r.U64();
    e = DecodeInvalidation(r);
  }
  Finish(r);
  return m;
}

Bytes Encode(const RenamePrepareMsg& m) {
  ByteWriter w;
  w.U16(static_cast<uint16_t>(m.locks.size()));
  for (const auto& l : m.locks) {
    EncodeKey(w, l.key);
    w.Bool(l.exclusive);
  }
  EncodeOptKey(w, m.must_exist);
  EncodeOptKey(w, m.must_not_exist);
  w.U16(static_cast<uint16_t>(m.dirs_with_id.size()));
  for (const auto& [k, id] : m.dirs_with_id) {
    EncodeKey(w, k);
    EncodeId(w, id);
  }
  EncodeTrail(w, m.trail);
  return w.Take();
}

template <>
RenamePrepareMsg DecodeBody<RenamePrepareMsg>(std::span<const uint8_t> body) {
  ByteReader r(body);
  RenamePrepareMsg m;
  m.locks.resize(r.U16());
  for (auto& l : m.locks) {
    l.key = DecodeKey(r);
    l.exclusive = r.Bool();
  }
  m.must_exist = DecodeOptKey(r);
  m.must_not_exist = DecodeOptKey(r);
  m.dirs_with_id.resize(r.U16());
  for (auto& [k, id] : m.dirs_with_id) {
    k = DecodeKey(r);
    id = DecodeId(r);
  }
  m.trail = DecodeTrail(r);
  Finish(r);
  return m;
}

Bytes Encode(const RenameVoteMsg& m) {
  ByteWriter w;
  w.U8(static_cast<uint8_t>(m.err));
  EncodeOptInode(w, m.rec);
  return w.Take();
}

template <>
RenameVoteMsg DecodeBody<RenameVoteMsg>(std::span<const uint8_t> body) {
  ByteReader r(body);
  RenameVoteMsg m;
  m.err = static_cast<Errc>(r.U8());
  m.rec = DecodeOptInode(r);
  Finish(r);
  return m;
}

Bytes Encode(const RenameMovedReplyMsg& m) {
  ByteWriter w;
  EncodeEntries(w, m.entries);
  return w.Take();
}

template <>
RenameMovedReplyMsg DecodeBody<RenameMovedReplyMsg>(std::span<const uint8_t> body) {
  ByteReader r(body);
  RenameMovedReplyMsg m;
  m.entries = DecodeEntries(r);
  Finish(r);
  return m;
}

Bytes Encode(const RenameDecideMsg& m) {
  ByteWriter w;
  w.Bool(m.commit);
  w.U16(static_cast<uint16_t>(m.actions.size()));
  for (const auto& a : m.actions) {
    w.U8(a.kind);
    EncodeKey(w, a.key);
    w.ShortString(a.name);
    EncodeInode(w, a.rec);
    EncodeEntries(w, a.entries);
    w.I64(a.ts);
  }
  return w.Take();
}

template <>
RenameDecideMsg DecodeBody<RenameDecideMsg>(std::span<const uint8_t> body) {
  ByteReader r(body);
  RenameDecideMsg m;
  m.commit = r.Bool();
  m.actions.resize(r.U16());
  for (auto& a : m.actions) {
    a.kind = static_cast<RenameAction::Kind>(r.U8());
    a.key = DecodeKey(r);
    a.name = r.ShortString();
    a.rec = DecodeInode(r);
    a.entries = DecodeEntries(r);
    a.ts = r.I64();
  }
  Finish(r);
  return m;
}

}  // namespace asyncfs
