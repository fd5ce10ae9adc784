#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "asyncfs/common/codec.h"

namespace asyncfs {

using ServerIndex = uint32_t;
using Micros = int64_t;  // logical microseconds
using RequestId = uint64_t;

// Permanent 256-bit directory identity. The root is all-zero.
struct DirectoryId {
  std::array<uint8_t, 32> bytes{};

  static DirectoryId Root() { return {}; }
  // Packs (creating server, monotone counter, run seed); the rest is zero padding.
  static DirectoryId Make(ServerIndex server, uint64_t counter, uint64_t seed);

  bool IsRoot() const { return *this == Root(); }
  std::string ShortHex() const;

  auto operator<=>(const DirectoryId&) const = default;
};

// 49-bit switch-visible directory hash: 17-bit set index, 32-bit nonzero tag.
struct Fingerprint {
  static constexpr int kIndexBits = 17;
  static constexpr int kTagBits = 32;
  static constexpr uint64_t kMask = (uint64_t{1} << (kIndexBits + kTagBits)) - 1;

  uint32_t index = 0;
  uint32_t tag = 0;

  uint64_t Value() const { return (uint64_t{index} << kTagBits) | tag; }
  static Fingerprint FromValue(uint64_t v) {
    return {static_cast<uint32_t>((v >> kTagBits) & ((1u << kIndexBits) - 1)), static_cast<uint32_t>(v)};
  }
  bool Valid() const { return index < (1u << kIndexBits) && tag != 0; }

  auto operator<=>(const Fingerprint&) const = default;
};

enum class InodeKind : uint8_t { kFile = 0, kDirectory = 1 };

// Component names: 1..255 bytes, no '/' and no NUL.
bool IsValidName(std::string_view name);

// (pid, name). The root directory uses the reserved key (zero, "").
struct InodeKey {
  DirectoryId pid;
  std::string name;

  static InodeKey Root() { return {}; }
  bool IsRoot() const { return pid.IsRoot() && name.empty(); }

  auto operator<=>(const InodeKey&) const = default;
};

void EncodeKey(ByteWriter& w, const InodeKey& key);  // 32-byte pid | 1-byte len | name
InodeKey DecodeKey(ByteReader& r);
Bytes EncodeKey(const InodeKey& key);
std::string KeyDebugString(const InodeKey& key);

struct InodeRecord {
  InodeKey key;
  InodeKind kind = InodeKind::kFile;
  DirectoryId id;  // directories only
  Micros mtime = 0;
  Micros ctime = 0;
  uint16_t perms = 0;
  uint64_t size = 0;  // entry count for directories

  bool IsDir() const { return kind == InodeKind::kDirectory; }
  bool operator==(const InodeRecord&) const = default;
};

struct DirEntryRecord {
  InodeKey key;  // pid = owning directory id
  InodeKind kind = InodeKind::kFile;
  uint16_t perms = 0;

  bool operator==(const DirEntryRecord&) const = default;
};

void EncodeInode(ByteWriter& w, const InodeRecord& rec);
InodeRecord DecodeInode(ByteReader& r);
void EncodeDirEntry(ByteWriter& w, const DirEntryRecord& rec);
DirEntryRecord DecodeDirEntry(ByteReader& r);

// Wire form: 64-bit big-endian, upper 15 bits zero.
void EncodeFingerprint(ByteWriter& w, Fingerprint fp);
Fingerprint DecodeFingerprint(ByteReader& r);

}  // namespace asyncfs
