#include "asyncfs/server/wal.h"

#include <zlib.h>

namespace asyncfs {

uint32_t Crc32(std::span<const uint8_t> data) {
  return static_cast<uint32_t>(::crc32(0L, data.data(), static_cast<uInt>(data.size())));
}

Bytes EncodeWalRecord(const WalRecord& rec) {
  ByteWriter w;
  w.U64(rec.lsn);
  w.U8(static_cast<uint8_t>(rec.kind));
  w.U32(static_cast<uint32_t>(rec.body.size()));
  w.Raw(rec.body);
  uint32_t crc = Crc32(w.bytes());
  w.U32(crc);
  return w.Take();
}

WalScan ScanWal(std::span<const uint8_t> device) {
  WalScan scan;
  size_t pos = 0;
  uint64_t prev_lsn = 0;
  constexpr size_t kFixed = 8 + 1 + 4;
  while (pos < device.size()) {
    if (device.size() - pos < kFixed + 4) {
      scan.torn_tail = true;
      break;
    }
    ByteReader r(device.subspan(pos));
    WalRecord rec;
    rec.lsn = r.U64();
    uint8_t kind = r.U8();
    uint32_t len = r.U32();
    if (device.size() - pos < kFixed + len + 4) {
      scan.torn_tail = true;
      break;
    }
    auto body = r.Raw(len);
    uint32_t crc = r.U32();
    if (crc != Crc32(device.subspan(pos, kFixed + len)) || kind < 1 || kind > 4 || rec.lsn <= prev_lsn) {
      scan.torn_tail = true;
      break;
    }
    rec.kind = static_cast<WalKind>(kind);
    rec.body.assign(body.begin(), body.end());
    prev_lsn = rec.lsn;
    scan.records.push_back(std::move(rec));
    pos += kFixed + len + 4;
  }
  scan.valid_bytes = pos;
  return scan;
}

WriteAheadLog::WriteAheadLog(Bytes* device) : device_(device) {
  auto scan = ScanWal(*device_);
  if (!scan.records.empty()) last_lsn_ = scan.records.back().lsn;
}

uint64_t WriteAheadLog::Append(WalKind kind, Bytes body) {
  WalRecord rec{last_lsn_ + 1, kind, std::move(body)};
  Bytes encoded = EncodeWalRecord(rec);
  device_->insert(device_->end(), encoded.begin(), encoded.end());
  last_lsn_ = rec.lsn;
  ++appends_;
  if (hook_) hook_(appends_);
  return rec.lsn;
}

WalScan WriteAheadLog::Recover(Bytes* device) {
  WalScan scan = ScanWal(*device);
  device->resize(scan.valid_bytes);
  return scan;
}

}  // namespace asyncfs
