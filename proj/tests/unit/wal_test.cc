#include <gtest/gtest.h>

#include <random>

#include "asyncfs/server/meta_store.h"
#include "asyncfs/server/wal.h"

namespace asyncfs {
namespace {

TEST(Wal, RecordLayout) {
  WalRecord rec{7, WalKind::kChangeLogAppend, {1, 2, 3}};
  Bytes b = EncodeWalRecord(rec);
  ASSERT_EQ(b.size(), 8 + 1 + 4 + 3 + 4u);
  EXPECT_EQ(b[7], 7);
  EXPECT_EQ(b[8], 2);
  EXPECT_EQ(b[12], 3);
  uint32_t crc = (uint32_t{b[16]} << 24) | (b[17] << 16) | (b[18] << 8) | b[19];
  EXPECT_EQ(crc, Crc32(std::span<const uint8_t>(b).first(16)));
}

TEST(Wal, Crc32KnownVector) {
  const std::string s = "123456789";
  EXPECT_EQ(Crc32({reinterpret_cast<const uint8_t*>(s.data()), s.size()}), 0xCBF43926u);
}

TEST(Wal, AppendAndScan) {
  Bytes dev;
  WriteAheadLog wal(&dev);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(wal.Append(WalKind::kOpLog, Bytes(i, static_cast<uint8_t>(i))), i + 1u);
  auto scan = ScanWal(dev);
  ASSERT_EQ(scan.records.size(), 10u);
  EXPECT_FALSE(scan.torn_tail);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(scan.records[i].body.size(), static_cast<size_t>(i));
  WriteAheadLog reopened(&dev);
  EXPECT_EQ(reopened.last_lsn(), 10u);
}

TEST(Wal, TornTailTruncated) {
  Bytes dev;
  WriteAheadLog wal(&dev);
  wal.Append(WalKind::kOpLog, {1});
  wal.Append(WalKind::kOpLog, {2});
  size_t good = dev.size();
  wal.Append(WalKind::kOpLog, {3, 3, 3});
  for (size_t cut = good + 1; cut < dev.size(); ++cut) {
    Bytes copy(dev.begin(), dev.begin() + cut);
    auto scan = WriteAheadLog::Recover(&copy);
    EXPECT_TRUE(scan.torn_tail);
    EXPECT_EQ(scan.records.size(), 2u);
    EXPECT_EQ(copy.size(), good);
  }
}

TEST(Wal, CorruptRecordStopsScan) {
  Bytes dev;
  WriteAheadLog wal(&dev);
  wal.Append(WalKind::kOpLog, {1});
  size_t first = dev.size();
  wal.Append(WalKind::kOpLog, {2});
  wal.Append(WalKind::kOpLog, {3});
  dev[first + 13] ^= 0xff;  // body byte of record 2
  auto scan = ScanWal(dev);
  EXPECT_EQ(scan.records.size(), 1u);
  EXPECT_TRUE(scan.torn_tail);
}

TEST(Wal, HookRunsAfterDurableAppend) {
  Bytes dev;
  WriteAheadLog wal(&dev);
  struct Boom {};
  wal.SetAppendHook([](uint64_t n) {
    if (n == 2) throw Boom{};
  });
  wal.Append(WalKind::kOpLog, {1});
  EXPECT_THROW(wal.Append(WalKind::kOpLog, {2}), Boom);
  EXPECT_EQ(ScanWal(dev).records.size(), 2u);
}

TEST(Wal, MutationRoundTrip) {
  InodeRecord rec{{DirectoryId::Make(1, 2, 3), "x"}, InodeKind::kDirectory, DirectoryId::Make(1, 5, 3), 10, 9, 0755, 4};
  std::vector<Mutation> muts{
      mut::PutInode{rec},
      mut::DeleteInode{rec.key},
      mut::PutEntry{DirEntryRecord{rec.key, InodeKind::kFile, 0644}},
      mut::DeleteEntry{rec.key},
      mut::SetDirAttrs{rec.key, 3, 99},
      mut::MarkApplied{{1, 2, 3}},
      mut::CacheResponse{42, {9, 9}},
      mut::Invalidate{InvalidationList::Entry{true, rec.id, rec.key}},
      mut::RenamePrepared{5, {LockSpec{rec.key, true}}},
      mut::RenameFinished{5},
      mut::RenameBegin{6, {1}},
      mut::RenameDecided{6, {2}},
      mut::RenameDone{6},
  };
  Bytes b = EncodeMutations(muts);
  auto back = DecodeMutations(b);
  ASSERT_EQ(back.size(), muts.size());
  EXPECT_EQ(EncodeMutations(back), b);
}

// Replaying a WAL written by a DurableState reproduces it exactly.
TEST(Wal, ReplayRebuildsDurableState) {
  std::mt19937_64 rng(17);
  Bytes dev;
  WriteAheadLog wal(&dev);
  DurableState live;
  InodeKey dir_key{DirectoryId::Root(), "d"};
  DirectoryId dir_id = DirectoryId::Make(0, 1, 1);
  auto log_op = [&](std::vector<Mutation> muts) {
    wal.Append(WalKind::kOpLog, EncodeMutations(muts));
    for (const auto& m : muts) live.Apply(m);
  };
  log_op({mut::PutInode{InodeRecord{dir_key, InodeKind::kDirectory, dir_id, 1, 1, 0755, 0}}});
  RequestId next = 1;
  for (int i = 0; i < 300; ++i) {
    std::string name = "f" + std::to_string(rng() % 40);
    InodeKey k{dir_id, name};
    if (rng() % 3 == 0) {
      log_op({mut::DeleteInode{k}, mut::CacheResponse{next, {1}}});
    } else {
      log_op({mut::PutInode{InodeRecord{k, InodeKind::kFile, {}, i, i, 0644, 0}}, mut::CacheResponse{next, {0}}});
    }
    ChangeLogEntry e{static_cast<Micros>(i + 10), rng() % 2 ? ChangeOpType::kCreate : ChangeOpType::kDelete, name, 0644,
                     next++};
    wal.Append(WalKind::kChangeLogAppend, EncodeChangeLogAppend(dir_key, e));
    live.AppendChangeLog(dir_key, e);
    if (i % 50 == 49) {
      std::set<RequestId> drop;
      for (const auto& op : live.changelogs.at(dir_key).ops()) {
        if (rng() % 2) drop.insert(op.request);
      }
      wal.Append(WalKind::kChangeLogApplied, EncodeChangeLogApplied(dir_key, drop));
      live.DropChangeLog(dir_key, drop);
    }
  }
  DurableState replayed;
  for (const auto& rec : WriteAheadLog::Recover(&dev).records) replayed.ApplyRecord(rec);
  EXPECT_EQ(replayed.store, live.store);
  EXPECT_EQ(replayed.changelogs, live.changelogs);
  EXPECT_EQ(replayed.responses, live.responses);
}

}  // namespace
}  // namespace asyncfs
