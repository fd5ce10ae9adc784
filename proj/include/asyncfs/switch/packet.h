#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "asyncfs/common/codec.h"
#include "asyncfs/common/types.h"

namespace asyncfs {

using NodeAddr = uint32_t;

inline constexpr uint16_t kPortPlain = 9000;
inline constexpr uint16_t kPortStaleSet = 9001;

enum class SetOp : uint8_t { kNone = 0, kQuery = 1, kInsert = 2, kRemove = 3 };
enum class SetRet : uint8_t { kUnset = 0, kAbsent = 1, kPresent = 2, kOverflow = 3 };

// Fixed 18-byte header:
//   byte0 = op(2) | ret(2) | reserved(4); byte1 = sender server;
//   bytes 2..9 = seq (BE); bytes 10..17 = fingerprint (BE, upper 15 bits zero).
struct StaleSetHeader {
  static constexpr size_t kSize = 18;

  SetOp op = SetOp::kNone;
  SetRet ret = SetRet::kUnset;
  uint8_t sender = 0;
  uint64_t seq = 0;
  Fingerprint fp;

  void Encode(ByteWriter& w) const;
  // nullopt on truncation, nonzero reserved bits, op NONE, or an over-wide fingerprint.
  static std::optional<StaleSetHeader> Parse(std::span<const uint8_t> data);

  bool operator==(const StaleSetHeader&) const = default;
};

// A datagram on the fabric. `data` is the UDP payload; on kPortStaleSet it
// begins with the stale-set header.
struct Packet {
  NodeAddr src = 0;
  NodeAddr dst = 0;
  uint16_t dst_port = kPortPlain;
  Bytes data;

  static Packet Plain(NodeAddr src, NodeAddr dst, Bytes payload);
  static Packet WithHeader(NodeAddr src, NodeAddr dst, const StaleSetHeader& h, std::span<const uint8_t> payload);

  bool HasHeader() const { return dst_port == kPortStaleSet; }
  std::optional<StaleSetHeader> Header() const;
  // Filesystem request/response bytes following the optional header.
  std::span<const uint8_t> Payload() const;
  // Rewrites only the RET bits of byte 0.
  void SetRet(SetRet ret);
};

}  // namespace asyncfs
