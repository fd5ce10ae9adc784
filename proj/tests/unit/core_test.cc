#include <gtest/gtest.h>

#include <map>
#include <random>

#include "asyncfs/common/hash.h"
#include "asyncfs/common/types.h"

namespace asyncfs {
namespace {

// Straight-line evaluation of the fingerprint hash, written independently of
// the library: FNV-1a over 'F' | pid | len | name with a splitmix64-mixed
// seed, then a splitmix64 finalizer, truncated to 49 bits.
uint64_t SplitMix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t OracleFingerprint(const DirectoryId& pid, const std::string& name, uint64_t seed) {
  std::vector<uint8_t> bytes{'F'};
  bytes.insert(bytes.end(), pid.bytes.begin(), pid.bytes.end());
  bytes.push_back(static_cast<uint8_t>(name.size()));
  bytes.insert(bytes.end(), name.begin(), name.end());
  uint64_t h = 0xcbf29ce484222325ull ^ SplitMix(seed);
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  uint64_t v = SplitMix(h) & ((uint64_t{1} << 49) - 1);
  if ((v & 0xffffffffull) == 0) v |= 1;
  return v;
}

TEST(Fingerprint, Deterministic) {
  Hasher h;
  EXPECT_EQ(h.FingerprintOf(DirectoryId::Root(), "a"), h.FingerprintOf(DirectoryId::Root(), "a"));
}

TEST(Fingerprint, WidthAndNonzeroTag) {
  Hasher h;
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20000; ++i) {
    DirectoryId pid = DirectoryId::Make(static_cast<ServerIndex>(rng() % 8), rng(), rng());
    Fingerprint fp = h.FingerprintOf(pid, "n" + std::to_string(rng() % 1000));
    EXPECT_LT(fp.index, 1u << 17);
    EXPECT_NE(fp.tag, 0u);
    EXPECT_LE(fp.Value(), Fingerprint::kMask);
  }
}

TEST(Fingerprint, MatchesDirectEvaluation) {
  Hasher h;
  for (const std::string name : {"a", "b", "dir-17", "x"}) {
    uint64_t want = OracleFingerprint(DirectoryId::Root(), name, Hasher::kDefaultSeed);
    EXPECT_EQ(h.FingerprintOf(DirectoryId::Root(), name).Value(), want) << name;
  }
  EXPECT_NE(h.FingerprintOf(DirectoryId::Root(), "a"), h.FingerprintOf(DirectoryId::Root(), "b"));
}

TEST(Fingerprint, SeedChangesValue) {
  Hasher a(1), b(2);
  EXPECT_NE(a.FingerprintOf(DirectoryId::Root(), "a"), b.FingerprintOf(DirectoryId::Root(), "a"));
}

TEST(Partition, SingleServerOwnsAll) {
  Hasher h;
  for (int i = 0; i < 100; ++i) {
    InodeKey k{DirectoryId::Root(), "f" + std::to_string(i)};
    EXPECT_EQ(OwnerOfInode(h, k, InodeKind::kFile, 1), 0u);
    EXPECT_EQ(OwnerOfInode(h, k, InodeKind::kDirectory, 1), 0u);
  }
}

TEST(Partition, FingerprintGroupColocates) {
  // Narrow 6-bit tags; brute-force names until two share a fingerprint.
  Hasher h(99, 6);
  DirectoryId pid = DirectoryId::Make(3, 42, 1);
  std::map<uint64_t, std::string> seen;
  int collisions = 0;
  for (int i = 0; i < 2000 && collisions < 20; ++i) {
    std::string name = "d" + std::to_string(i);
    Fingerprint fp = h.FingerprintOf(pid, name);
    auto [it, fresh] = seen.emplace(fp.Value(), name);
    if (fresh) continue;
    ++collisions;
    for (uint32_t n : {2u, 3u, 5u, 7u, 8u}) {
      EXPECT_EQ(OwnerOfInode(h, {pid, it->second}, InodeKind::kDirectory, n),
                OwnerOfInode(h, {pid, name}, InodeKind::kDirectory, n));
    }
  }
  EXPECT_EQ(collisions, 20);
}

TEST(Partition, FileKeysBalanced) {
  Hasher h;
  std::mt19937_64 rng(11);
  constexpr int kKeys = 100000;
  std::vector<int> hist(8, 0);
  for (int i = 0; i < kKeys; ++i) {
    DirectoryId pid = DirectoryId::Make(static_cast<ServerIndex>(rng() % 8), rng() % 1000, 5);
    ++hist[OwnerOfInode(h, {pid, "f" + std::to_string(rng())}, InodeKind::kFile, 8)];
  }
  for (int c : hist) {
    double share = 100.0 * c / kKeys;
    EXPECT_NEAR(share, 12.5, 1.0);
  }
}

TEST(Partition, Total) {
  Hasher h;
  for (uint32_t n = 1; n <= 16; ++n) {
    for (int i = 0; i < 50; ++i) {
      InodeKey k{DirectoryId::Root(), "k" + std::to_string(i)};
      EXPECT_LT(OwnerOfInode(h, k, InodeKind::kFile, n), n);
      EXPECT_LT(OwnerOfInode(h, k, InodeKind::kDirectory, n), n);
    }
  }
}

TEST(InodeKey, RoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    InodeKey k{DirectoryId::Make(static_cast<ServerIndex>(rng() % 4), rng(), rng()),
               std::string(1 + rng() % 255, static_cast<char>('a' + rng() % 26))};
    Bytes b = EncodeKey(k);
    EXPECT_EQ(b.size(), 32 + 1 + k.name.size());
    ByteReader r(b);
    EXPECT_EQ(DecodeKey(r), k);
    EXPECT_TRUE(r.done());
  }
}

TEST(InodeKey, TotalOrder) {
  DirectoryId a = DirectoryId::Make(0, 1, 1), b = DirectoryId::Make(0, 2, 1);
  EXPECT_LT((InodeKey{a, "z"}), (InodeKey{b, "a"}));
  EXPECT_LT((InodeKey{a, "a"}), (InodeKey{a, "b"}));
}

TEST(InodeKey, NameValidation) {
  EXPECT_TRUE(IsValidName("a"));
  EXPECT_FALSE(IsValidName(""));
  EXPECT_FALSE(IsValidName("a/b"));
  EXPECT_FALSE(IsValidName(std::string("a\0b", 3)));
  EXPECT_FALSE(IsValidName(std::string(256, 'x')));
}

TEST(DirectoryIdTest, UniqueAndRootZero) {
  EXPECT_TRUE(DirectoryId::Root().IsRoot());
  EXPECT_NE(DirectoryId::Make(0, 0, 0), DirectoryId::Root());
  EXPECT_NE(DirectoryId::Make(0, 1, 9), DirectoryId::Make(1, 1, 9));
  EXPECT_NE(DirectoryId::Make(0, 1, 9), DirectoryId::Make(0, 2, 9));
}

TEST(FingerprintWire, BigEndianAndRejectsWide) {
  Fingerprint fp{0x1abcd, 0x12345678};
  ByteWriter w;
  EncodeFingerprint(w, fp);
  ASSERT_EQ(w.size(), 8u);
  uint64_t v = 0;
  for (uint8_t b : w.bytes()) v = (v << 8) | b;
  EXPECT_EQ(v, (uint64_t{0x1abcd} << 32) | 0x12345678);
  ByteReader r(w.bytes());
  EXPECT_EQ(DecodeFingerprint(r), fp);

  ByteWriter bad;
  bad.U64(uint64_t{1} << 60);
  ByteReader rb(bad.bytes());
  EXPECT_THROW(DecodeFingerprint(rb), DecodeError);
}

}  // namespace
}  // namespace asyncfs
