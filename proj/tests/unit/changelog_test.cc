#include <gtest/gtest.h>

#include <map>
#include <random>

#include "asyncfs/server/change_log.h"
#include "asyncfs/server/meta_store.h"

namespace asyncfs {
namespace {

const InodeKey kDirKey{DirectoryId::Root(), "d"};
const DirectoryId kDirId = DirectoryId::Make(2, 7, 1);

DurableState WithDir(Micros mtime, const std::vector<std::string>& names) {
  DurableState st;
  st.Apply(mut::PutInode{InodeRecord{kDirKey, InodeKind::kDirectory, kDirId, mtime, 1, 0755, names.size()}});
  for (const auto& n : names) st.Apply(mut::PutEntry{DirEntryRecord{{kDirId, n}, InodeKind::kFile, 0644}});
  return st;
}

// Sequential replay of raw entries: the reference semantics.
struct Replay {
  std::map<std::string, std::pair<InodeKind, uint16_t>> entries;
  Micros mtime;
  void Apply(const ChangeLogEntry& e) {
    if (IsPut(e.type)) {
      entries[e.name] = {e.type == ChangeOpType::kMkdir ? InodeKind::kDirectory : InodeKind::kFile, e.perms};
    } else {
      entries.erase(e.name);
    }
    mtime = std::max(mtime, e.timestamp);
  }
};

TEST(ChangeLogTest, RecastKeepsMaxTimestamp) {
  ChangeLog log(kDirKey);
  log.Append({5, ChangeOpType::kCreate, "a", 0644, 1});
  log.Append({3, ChangeOpType::kCreate, "b", 0644, 2});
  EXPECT_EQ(log.max_timestamp(), 5);
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log.ops()[0].name, "a");
  EXPECT_EQ(log.ops()[1].name, "b");
}

TEST(ChangeLogTest, FirstAppendSetsTimestamp) {
  ChangeLog log(kDirKey);
  log.Append({42, ChangeOpType::kDelete, "a", 0, 1});
  EXPECT_EQ(log.max_timestamp(), 42);
}

TEST(ChangeLogTest, EncodeRoundTrip) {
  ChangeLog log(kDirKey);
  log.Append({5, ChangeOpType::kMkdir, "a", 0755, 1});
  log.Append({9, ChangeOpType::kRmdirChild, "a", 0, 2});
  ByteWriter w;
  log.Encode(w);
  ByteReader r(w.bytes());
  EXPECT_EQ(ChangeLog::Decode(r), log);
}

TEST(ChangeLogTest, CreateThenDeleteIsNetZero) {
  DurableState st = WithDir(1, {});
  ChangeLog log(kDirKey);
  log.Append({10, ChangeOpType::kCreate, "a", 0644, 1});
  log.Append({11, ChangeOpType::kDelete, "a", 0, 2});
  ApplyChangeLog(st, log);
  EXPECT_EQ(st.store.CountEntries(kDirId), 0u);
  EXPECT_EQ(st.store.FindInode(kDirKey)->size, 0u);
  EXPECT_EQ(st.store.FindInode(kDirKey)->mtime, 11);
}

TEST(ChangeLogTest, EmptyQueueAdvancesMtimeOnly) {
  DurableState st = WithDir(1, {"x"});
  ByteWriter w;
  EncodeKey(w, kDirKey);
  w.I64(50);
  w.U32(0);
  ByteReader r(w.bytes());
  ChangeLog log = ChangeLog::Decode(r);
  ASSERT_TRUE(log.empty());
  ApplyChangeLog(st, log);
  EXPECT_EQ(st.store.FindInode(kDirKey)->size, 1u);
  EXPECT_EQ(st.store.FindInode(kDirKey)->mtime, 50);
  EXPECT_EQ(st.store.CountEntries(kDirId), 1u);
}

TEST(ChangeLogTest, HundredCreates) {
  DurableState st = WithDir(1, {});
  ChangeLog log(kDirKey);
  for (int i = 0; i < 100; ++i) log.Append({10 + i, ChangeOpType::kCreate, "f" + std::to_string(i), 0644, 1u + i});
  auto stats = ApplyChangeLog(st, log);
  EXPECT_EQ(stats.puts, 100u);
  EXPECT_EQ(st.store.FindInode(kDirKey)->size, 100u);
  EXPECT_EQ(st.store.CountEntries(kDirId), 100u);
}

TEST(ChangeLogTest, AppliedRequestsSkipped) {
  DurableState st = WithDir(1, {});
  ChangeLog log(kDirKey);
  log.Append({10, ChangeOpType::kCreate, "a", 0644, 1});
  ApplyChangeLog(st, log);
  auto again = ApplyChangeLog(st, log);
  EXPECT_EQ(again.skipped, 1u);
  EXPECT_EQ(st.store.FindInode(kDirKey)->size, 1u);
}

TEST(ChangeLogTest, RecastEquivalentToSequentialReplay) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<std::string> initial;
    for (int i = 0; i < 6; ++i) {
      if (rng() % 2) initial.push_back("n" + std::to_string(i));
    }
    Micros mtime = static_cast<Micros>(rng() % 100);
    DurableState st = WithDir(mtime, initial);
    Replay ref{{}, mtime};
    for (const auto& n : initial) ref.entries[n] = {InodeKind::kFile, 0644};
    ChangeLog log(kDirKey);
    int len = static_cast<int>(rng() % 40);
    for (int i = 0; i < len; ++i) {
      ChangeLogEntry e{static_cast<Micros>(rng() % 200), static_cast<ChangeOpType>(rng() % 4),
                       "n" + std::to_string(rng() % 8), static_cast<uint16_t>(rng() % 0777), 1u + i};
      log.Append(e);
      ref.Apply(e);
    }
    ApplyChangeLog(st, log);
    const InodeRecord* dir = st.store.FindInode(kDirKey);
    ASSERT_EQ(dir->size, ref.entries.size());
    ASSERT_EQ(dir->mtime, len == 0 ? mtime : ref.mtime);
    auto listed = st.store.ListEntries(kDirId);
    ASSERT_EQ(listed.size(), ref.entries.size());
    for (const auto& e : listed) {
      auto it = ref.entries.find(e.key.name);
      ASSERT_NE(it, ref.entries.end());
      EXPECT_EQ(e.kind, it->second.first);
      EXPECT_EQ(e.perms, it->second.second);
    }
  }
}

TEST(StashTest, ShipmentsFromOneSourceApplyInShippingOrder) {
  DurableState st = WithDir(1, {});
  ChangeLog older(kDirKey), newer(kDirKey);
  older.Append({10, ChangeOpType::kCreate, "a", 0644, 1});
  newer.Append({20, ChangeOpType::kDelete, "a", 0, 2});
  // The newer shipment arrives first.
  st.Import({100, {Shipment{3, 2000, newer}}});
  st.Import({101, {Shipment{3, 1000, older}}});
  ApplyChangeLog(st, st.StashedLog(kDirKey));
  EXPECT_EQ(st.store.CountEntries(kDirId), 0u);
  EXPECT_TRUE(st.stash.empty());
}

TEST(StashTest, DuplicateImportIgnored) {
  DurableState st = WithDir(1, {});
  ChangeLog log(kDirKey);
  log.Append({10, ChangeOpType::kCreate, "a", 0644, 1});
  st.Import({5, {Shipment{1, 10, log}}});
  st.Import({5, {Shipment{1, 10, log}}});
  st.Import({6, {Shipment{1, 11, log}}});
  EXPECT_EQ(st.StashedLog(kDirKey).size(), 1u);
}

TEST(InvalidationTest, RemovedAndMoved) {
  InvalidationList inv;
  DirectoryId a = DirectoryId::Make(0, 1, 1);
  InodeKey ka{DirectoryId::Root(), "a"};
  inv.AddPending(7, {false, a, {}});
  EXPECT_TRUE(inv.Blocks(PathComponent{ka, a}));
  inv.Revoke(7);
  EXPECT_FALSE(inv.Blocks(PathComponent{ka, a}));
  inv.AddPending(8, {true, a, ka});
  inv.Commit(8);
  EXPECT_TRUE(inv.Blocks(PathComponent{ka, a}));
  EXPECT_FALSE(inv.Blocks(PathComponent{InodeKey{DirectoryId::Root(), "b"}, a}));
}

}  // namespace
}  // namespace asyncfs
