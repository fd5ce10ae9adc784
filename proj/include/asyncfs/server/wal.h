#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "asyncfs/common/codec.h"

namespace asyncfs {

enum class WalKind : uint8_t {
  kOpLog = 1,
  kChangeLogAppend = 2,
  kChangeLogApplied = 3,
  kAggregationImport = 4,
};

struct WalRecord {
  uint64_t lsn = 0;
  WalKind kind = WalKind::kOpLog;
  Bytes body;
  bool operator==(const WalRecord&) const = default;
};

uint32_t Crc32(std::span<const uint8_t> data);

// Record layout: 8-byte LSN | 1-byte kind | 4-byte length | body | 4-byte CRC32
// of all preceding bytes of the record.
Bytes EncodeWalRecord(const WalRecord& rec);

struct WalScan {
  std::vector<WalRecord> records;
  size_t valid_bytes = 0;  // prefix length holding intact records
  bool torn_tail = false;
};

// Reads records in order and stops at the first truncated or corrupt one, or
// at an LSN that fails to increase.
WalScan ScanWal(std::span<const uint8_t> device);

// Append-only log over an in-memory device that outlives server crashes.
class WriteAheadLog {
 public:
  explicit WriteAheadLog(Bytes* device);

  // Appends and returns the LSN. The hook runs after the bytes are durable;
  // crash injection throws from there.
  uint64_t Append(WalKind kind, Bytes body);

  uint64_t last_lsn() const { return last_lsn_; }
  uint64_t appends() const { return appends_; }
  void SetAppendHook(std::function<void(uint64_t appends)> hook) { hook_ = std::move(hook); }

  // Replays the device, truncating a torn tail in place.
  static WalScan Recover(Bytes* device);

 private:
  Bytes* device_;
  uint64_t last_lsn_ = 0;
  uint64_t appends_ = 0;
  std::function<void(uint64_t)> hook_;
};

}  // namespace asyncfs
