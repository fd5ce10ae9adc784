#include "asyncfs/switch/packet.h"

namespace asyncfs {

void StaleSetHeader::Encode(ByteWriter& w) const {
  w.U8(static_cast<uint8_t>((static_cast<uint8_t>(op) << 6) | (static_cast<uint8_t>(ret) << 4)));
  w.U8(sender);
  w.U64(seq);
  EncodeFingerprint(w, fp);
}

std::optional<StaleSetHeader> StaleSetHeader::Parse(std::span<const uint8_t> data) {
  if (data.size() < kSize) return std::nullopt;
  if (data[0] & 0x0f) return std::nullopt;
  ByteReader r(data.first(kSize));
  StaleSetHeader h;
  uint8_t b0 = r.U8();
  h.op = static_cast<SetOp>(b0 >> 6);
  h.ret = static_cast<SetRet>((b0 >> 4) & 0x3);
  if (h.op == SetOp::kNone) return std::nullopt;
  h.sender = r.U8();
  h.seq = r.U64();
  uint64_t v = r.U64();
  if (v & ~Fingerprint::kMask) return std::nullopt;
  h.fp = Fingerprint::FromValue(v);
  if (h.fp.tag == 0) return std::nullopt;
  return h;
}

Packet Packet::Plain(NodeAddr src, NodeAddr dst, Bytes payload) {
  return Packet{src, dst, kPortPlain, std::move(payload)};
}

Packet Packet::WithHeader(NodeAddr src, NodeAddr dst, const StaleSetHeader& h, std::span<const uint8_t> payload) {
  ByteWriter w;
  h.Encode(w);
  w.Raw(payload);
  return Packet{src, dst, kPortStaleSet, w.Take()};
}

std::optional<StaleSetHeader> Packet::Header() const {
  if (!HasHeader()) return std::nullopt;
  return StaleSetHeader::Parse(data);
}

std::span<const uint8_t> Packet::Payload() const {
  std::span<const uint8_t> all(data);
  if (!HasHeader()) return all;
  if (all.size() < StaleSetHeader::kSize) return {};
  return all.subspan(StaleSetHeader::kSize);
}

void Packet::SetRet(asyncfs::SetRet ret) {
  if (data.empty()) return;
  data[0] = static_cast<uint8_t>((data[0] & 0xcf) | (static_cast<uint8_t>(ret) << 4));
}

}  // namespace asyncfs
