#include "asyncfs/common/types.h"

#include <cstdio>

#include "asyncfs/common/errors.h"

namespace asyncfs {

std::string_view ErrcName(Errc e) {
  switch (e) {
    case Errc::kOk: return "OK";
    case Errc::kExist: return "EEXIST";
    case Errc::kNoEnt: return "ENOENT";
    case Errc::kStale: return "ESTALE";
    case Errc::kPerm: return "EPERM";
    case Errc::kNotEmpty: return "ENOTEMPTY";
    case Errc::kLoop: return "ELOOP";
    case Errc::kAcces: return "EACCES";
    case Errc::kIo: return "EIO";
    case Errc::kNotDir: return "ENOTDIR";
    case Errc::kInval: return "EINVAL";
  }
  return "E?";
}

DirectoryId DirectoryId::Make(ServerIndex server, uint64_t counter, uint64_t seed) {
  DirectoryId id;
  ByteWriter w;
  w.U32(server + 1);  // never all-zero
  w.U64(counter);
  w.U64(seed);
  const auto& b = w.bytes();
  std::copy(b.begin(), b.end(), id.bytes.begin());
  return id;
}

std::string DirectoryId::ShortHex() const {
  if (IsRoot()) return "root";
  char buf[41];
  int n = 0;
  for (int i = 0; i < 20; ++i) n += std::snprintf(buf + n, sizeof(buf) - n, "%02x", bytes[i]);
  return std::string(buf, n);
}

bool IsValidName(std::string_view name) {
  if (name.empty() || name.size() > 255) return false;
  for (char c : name) {
    if (c == '/' || c == '\0') return false;
  }
  return true;
}

void EncodeKey(ByteWriter& w, const InodeKey& key) {
  w.Raw(key.pid.bytes);
  w.ShortString(key.name);
}

InodeKey DecodeKey(ByteReader& r) {
  InodeKey key;
  auto raw = r.Raw(32);
  std::copy(raw.begin(), raw.end(), key.pid.bytes.begin());
  key.name = r.ShortString();
  return key;
}

Bytes EncodeKey(const InodeKey& key) {
  ByteWriter w;
  EncodeKey(w, key);
  return w.Take();
}

std::string KeyDebugString(const InodeKey& key) {
  if (key.IsRoot()) return "/";
  return key.pid.ShortHex().substr(0, 12) + "/" + key.name;
}

void EncodeInode(ByteWriter& w, const InodeRecord& rec) {
  EncodeKey(w, rec.key);
  w.U8(static_cast<uint8_t>(rec.kind));
  w.Raw(rec.id.bytes);
  w.I64(rec.mtime);
  w.I64(rec.ctime);
  w.U16(rec.perms);
  w.U64(rec.size);
}

InodeRecord DecodeInode(ByteReader& r) {
  InodeRecord rec;
  rec.key = DecodeKey(r);
  uint8_t kind = r.U8();
  if (kind > 1) throw DecodeError("bad inode kind");
  rec.kind = static_cast<InodeKind>(kind);
  auto raw = r.Raw(32);
  std::copy(raw.begin(), raw.end(), rec.id.bytes.begin());
  rec.mtime = r.I64();
  rec.ctime = r.I64();
  rec.perms = r.U16();
  rec.size = r.U64();
  return rec;
}

void EncodeDirEntry(ByteWriter& w, const DirEntryRecord& rec) {
  EncodeKey(w, rec.key);
  w.U8(static_cast<uint8_t>(rec.kind));
  w.U16(rec.perms);
}

DirEntryRecord DecodeDirEntry(ByteReader& r) {
  DirEntryRecord rec;
  rec.key = DecodeKey(r);
  uint8_t kind = r.U8();
  if (kind > 1) throw DecodeError("bad entry kind");
  rec.kind = static_cast<InodeKind>(kind);
  rec.perms = r.U16();
  return rec;
}

void EncodeFingerprint(ByteWriter& w, Fingerprint fp) { w.U64(fp.Value()); }

Fingerprint DecodeFingerprint(ByteReader& r) {
  uint64_t v = r.U64();
  if (v & ~Fingerprint::kMask) throw DecodeError("fingerprint wider than 49 bits");
  return Fingerprint::FromValue(v);
}

}  // namespace asyncfs
