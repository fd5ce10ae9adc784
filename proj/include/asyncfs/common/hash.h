#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "asyncfs/common/types.h"

namespace asyncfs {

// Seedable 64-bit non-cryptographic hash over canonical key bytes.
uint64_t Hash64(std::span<const uint8_t> data, uint64_t seed);
uint64_t Mix64(uint64_t x);

// Fingerprints and partitioning. tag_bits < 32 narrows the tag space so
// tests can manufacture fingerprint collisions cheaply.
class Hasher {
 public:
  static constexpr uint64_t kDefaultSeed = 0x41737966535f6670ull;

  explicit Hasher(uint64_t seed = kDefaultSeed, int tag_bits = Fingerprint::kTagBits);

  Fingerprint FingerprintOf(const DirectoryId& pid, std::string_view name) const;
  Fingerprint FingerprintOf(const InodeKey& key) const { return FingerprintOf(key.pid, key.name); }
  uint64_t KeyHash(const InodeKey& key) const;

  uint64_t seed() const { return seed_; }
  int tag_bits() const { return tag_bits_; }

 private:
  uint64_t seed_;
  int tag_bits_;
};

// Directories: a function of the fingerprint alone, so a fingerprint group colocates.
inline ServerIndex OwnerOfDirectory(Fingerprint fp, uint32_t n_servers) {
  return static_cast<ServerIndex>(fp.Value() % n_servers);
}

ServerIndex OwnerOfFile(const Hasher& h, const InodeKey& key, uint32_t n_servers);
ServerIndex OwnerOfInode(const Hasher& h, const InodeKey& key, InodeKind kind, uint32_t n_servers);

// Default-seeded convenience forms.
Fingerprint FingerprintOf(const DirectoryId& pid, std::string_view name);

}  // namespace asyncfs
