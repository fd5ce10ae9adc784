#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "asyncfs/common/codec.h"
#include "asyncfs/common/types.h"

namespace asyncfs {

enum class ChangeOpType : uint8_t { kCreate = 0, kDelete = 1, kMkdir = 2, kRmdirChild = 3 };

std::string_view ChangeOpName(ChangeOpType t);
inline bool IsPut(ChangeOpType t) { return t == ChangeOpType::kCreate || t == ChangeOpType::kMkdir; }

// One delayed parent-directory update as produced by a double-inode operation.
struct ChangeLogEntry {
  Micros timestamp = 0;
  ChangeOpType type = ChangeOpType::kCreate;
  std::string name;
  uint16_t perms = 0;
  RequestId request = 0;
  bool operator==(const ChangeLogEntry&) const = default;
};

struct QueuedOp {
  ChangeOpType type = ChangeOpType::kCreate;
  std::string name;
  uint16_t perms = 0;
  RequestId request = 0;
  bool operator==(const QueuedOp&) const = default;
};

// Recast change-log: timestamps collapse to their maximum, operations keep
// their local append order.
class ChangeLog {
 public:
  ChangeLog() = default;
  explicit ChangeLog(InodeKey dir_key) : dir_key_(std::move(dir_key)) {}

  void Append(const ChangeLogEntry& e);
  // Appends other's queue after ours.
  void Merge(const ChangeLog& other);
  // Drops queued ops whose request id is in `requests`; returns how many.
  size_t Remove(const std::set<RequestId>& requests);
  std::set<RequestId> Requests() const;

  const InodeKey& dir_key() const { return dir_key_; }
  Micros max_timestamp() const { return max_ts_; }
  const std::vector<QueuedOp>& ops() const { return ops_; }
  bool empty() const { return ops_.empty(); }
  size_t size() const { return ops_.size(); }

  void Encode(ByteWriter& w) const;
  static ChangeLog Decode(ByteReader& r);

  bool operator==(const ChangeLog&) const = default;

 private:
  InodeKey dir_key_;
  Micros max_ts_ = 0;
  std::vector<QueuedOp> ops_;
};

void EncodeEntry(ByteWriter& w, const ChangeLogEntry& e);
ChangeLogEntry DecodeEntry(ByteReader& r);

}  // namespace asyncfs
