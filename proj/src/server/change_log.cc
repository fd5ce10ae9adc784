#include "asyncfs/server/change_log.h"

#include <algorithm>

namespace asyncfs {

std::string_view ChangeOpName(ChangeOpType t) {
  switch (t) {
    case ChangeOpType::kCreate: return "create";
    case ChangeOpType::kDelete: return "delete";
    case ChangeOpType::kMkdir: return "mkdir";
    case ChangeOpType::kRmdirChild: return "rmdir-child";
  }
  return "?";
}

void ChangeLog::Append(const ChangeLogEntry& e) {
  max_ts_ = ops_.empty() && max_ts_ == 0 ? e.timestamp : std::max(max_ts_, e.timestamp);
  ops_.push_back({e.type, e.name, e.perms, e.request});
}

void ChangeLog::Merge(const ChangeLog& other) {
  max_ts_ = std::max(max_ts_, other.max_ts_);
  ops_.insert(ops_.end(), other.ops_.begin(), other.ops_.end());
}

size_t ChangeLog::Remove(const std::set<RequestId>& requests) {
  auto before = ops_.size();
  std::erase_if(ops_, [&](const QueuedOp& op) { return requests.count(op.request) > 0; });
  if (ops_.empty()) max_ts_ = 0;
  return before - ops_.size();
}

std::set<RequestId> ChangeLog::Requests() const {
  std::set<RequestId> out;
  for (const auto& op : ops_) out.insert(op.request);
  return out;
}

void ChangeLog::Encode(ByteWriter& w) const {
  EncodeKey(w, dir_key_);
  w.I64(max_ts_);
  w.U32(static_cast<uint32_t>(ops_.size()));
  for (const auto& op : ops_) {
    w.U8(static_cast<uint8_t>(op.type));
    w.ShortString(op.name);
    w.U16(op.perms);
    w.U64(op.request);
  }
}

ChangeLog ChangeLog::Decode(ByteReader& r) {
  ChangeLog log(DecodeKey(r));
  log.max_ts_ = r.I64();
  uint32_t n = r.U32();
  for (uint32_t i = 0; i < n; ++i) {
    QueuedOp op;
    uint8_t t = r.U8();
    if (t > 3) throw DecodeError("bad change op");
    op.type = static_cast<ChangeOpType>(t);
    op.name = r.ShortString();
    op.perms = r.U16();
    op.request = r.U64();
    log.ops_.push_back(std::move(op));
  }
  return log;
}

void EncodeEntry(ByteWriter& w, const ChangeLogEntry& e) {
  w.I64(e.timestamp);
  w.U8(static_cast<uint8_t>(e.type));
  w.ShortString(e.name);
  w.U16(e.perms);
  w.U64(e.request);
}

ChangeLogEntry DecodeEntry(ByteReader& r) {
  ChangeLogEntry e;
  e.timestamp = r.I64();
  uint8_t t = r.U8();
  if (t > 3) throw DecodeError("bad change op");
  e.type = static_cast<ChangeOpType>(t);
  e.name = r.ShortString();
  e.perms = r.U16();
  e.request = r.U64();
  return e;
}

}  // namespace asyncfs
