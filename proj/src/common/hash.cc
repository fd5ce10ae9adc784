#include "asyncfs/common/hash.h"

namespace asyncfs {

uint64_t Mix64(uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t Hash64(std::span<const uint8_t> data, uint64_t seed) {
  uint64_t h = 0xcbf29ce484222325ull ^ Mix64(seed);
  for (uint8_t b : data) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return Mix64(h);
}

Hasher::Hasher(uint64_t seed, int tag_bits) : seed_(seed), tag_bits_(tag_bits) {
  if (tag_bits < 1 || tag_bits > Fingerprint::kTagBits) throw std::invalid_argument("tag_bits out of range");
}

Fingerprint Hasher::FingerprintOf(const DirectoryId& pid, std::string_view name) const {
  ByteWriter w;
  w.U8('F');
  w.Raw(pid.bytes);
  w.ShortString(name);
  uint64_t v = Hash64(w.bytes(), seed_) & Fingerprint::kMask;
  Fingerprint fp = Fingerprint::FromValue(v);
  if (tag_bits_ < Fingerprint::kTagBits) {
    // Narrow test hash: collapse index and tag so collisions are frequent.
    fp.tag &= (uint32_t{1} << tag_bits_) - 1;
    fp.index = 0;
  }
  if (fp.tag == 0) fp.tag = 1;  // zero marks an empty register
  return fp;
}

uint64_t Hasher::KeyHash(const InodeKey& key) const {
  ByteWriter w;
  w.U8('K');
  EncodeKey(w, key);
  return Hash64(w.bytes(), seed_);
}

ServerIndex OwnerOfFile(const Hasher& h, const InodeKey& key, uint32_t n_servers) {
  return static_cast<ServerIndex>(h.KeyHash(key) % n_servers);
}

ServerIndex OwnerOfInode(const Hasher& h, const InodeKey& key, InodeKind kind, uint32_t n_servers) {
  if (kind == InodeKind::kDirectory) return OwnerOfDirectory(h.FingerprintOf(key), n_servers);
  return OwnerOfFile(h, key, n_servers);
}

Fingerprint FingerprintOf(const DirectoryId& pid, std::string_view name) {
  static const Hasher kDefault;
  return kDefault.FingerprintOf(pid, name);
}

}  // namespace asyncfs
