#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

#include "asyncfs/staleset/stale_set.h"

namespace asyncfs {
namespace {

Fingerprint Fp(uint32_t index, uint32_t tag) { return {index, tag}; }

void ExpectNoDuplicates(const StaleSet& s) {
  std::set<std::pair<uint32_t, uint32_t>> seen;
  for (const auto& slot : s.Dump().slots) {
    EXPECT_TRUE(seen.insert({slot.index, slot.tag}).second) << "duplicate tag " << slot.tag << " at " << slot.index;
  }
}

TEST(RegisterStage, Query) {
  RegisterStage st(4);
  EXPECT_FALSE(st.Query(3, 7));
  EXPECT_TRUE(st.ConditionalInsert(3, 7));
  EXPECT_TRUE(st.Query(3, 7));
  EXPECT_FALSE(st.Query(3, 8));
}

TEST(RegisterStage, ConditionalInsert) {
  RegisterStage st(4);
  EXPECT_TRUE(st.ConditionalInsert(1, 5));
  EXPECT_EQ(st.Peek(1), 5u);
  EXPECT_TRUE(st.ConditionalInsert(1, 5));
  EXPECT_EQ(st.Peek(1), 5u);
  EXPECT_FALSE(st.ConditionalInsert(1, 6));
  EXPECT_EQ(st.Peek(1), 5u);
}

TEST(RegisterStage, ConditionalRemove) {
  RegisterStage st(4);
  st.ConditionalInsert(2, 9);
  st.ConditionalRemove(2, 8);
  EXPECT_EQ(st.Peek(2), 9u);
  st.ConditionalRemove(2, 9);
  EXPECT_EQ(st.Peek(2), 0u);
  st.ConditionalRemove(2, 9);
  EXPECT_EQ(st.Peek(2), 0u);
}

TEST(StaleSetTest, DefaultCapacity) {
  StaleSet s;
  EXPECT_EQ(s.capacity(), 1310720u);
}

TEST(StaleSetTest, InsertQueryRemove) {
  StaleSet s({4, 2});
  Fingerprint fp = Fp(3, 11);
  EXPECT_FALSE(s.Query(fp));
  EXPECT_EQ(s.Insert(fp), InsertResult::kInserted);
  ASSERT_EQ(s.Dump().slots.size(), 1u);
  EXPECT_EQ(s.Dump().slots[0].stage, 0);
  EXPECT_TRUE(s.Query(fp));
  EXPECT_EQ(s.Insert(fp), InsertResult::kAlreadyPresent);
  EXPECT_EQ(s.Dump().slots.size(), 1u);
  EXPECT_EQ(s.Remove(fp, 0, 1), RemoveResult::kRemoved);
  EXPECT_FALSE(s.Query(fp));
}

TEST(StaleSetTest, StaleRemoveIgnored) {
  StaleSet s({4, 2});
  Fingerprint fp = Fp(1, 5);
  s.Insert(fp);
  EXPECT_EQ(s.Remove(fp, 0, 1), RemoveResult::kRemoved);
  s.Insert(fp);
  EXPECT_EQ(s.Remove(fp, 0, 1), RemoveResult::kStaleDuplicate);
  EXPECT_TRUE(s.Query(fp));
  // Sequence numbers are per sending server.
  EXPECT_EQ(s.Remove(fp, 1, 1), RemoveResult::kRemoved);
  EXPECT_FALSE(s.Query(fp));
}

TEST(StaleSetTest, VacuousRemove) {
  StaleSet s({4, 2});
  s.Insert(Fp(2, 2));
  auto before = s.Dump().slots;
  EXPECT_EQ(s.Remove(Fp(2, 3), 4, 10), RemoveResult::kRemoved);
  EXPECT_EQ(s.Dump().slots, before);
  EXPECT_EQ(s.Dump().last_seq.at(4), 10u);
}

TEST(StaleSetTest, OverflowLeavesSetUnchanged) {
  StaleSet s({4, 2});
  EXPECT_EQ(s.Insert(Fp(5, 1)), InsertResult::kInserted);
  EXPECT_EQ(s.Insert(Fp(5, 2)), InsertResult::kInserted);
  auto before = s.Dump();
  EXPECT_EQ(s.Insert(Fp(5, 3)), InsertResult::kOverflow);
  EXPECT_EQ(s.Dump(), before);
  EXPECT_FALSE(s.Query(Fp(5, 3)));
  // Other indices are unaffected.
  EXPECT_EQ(s.Insert(Fp(6, 3)), InsertResult::kInserted);
}

TEST(StaleSetTest, HoleInEarlierStageDoesNotDuplicate) {
  StaleSet s({4, 3});
  s.Insert(Fp(0, 1));  // stage 0
  s.Insert(Fp(0, 2));  // stage 1
  s.Remove(Fp(0, 1), 0, 1);
  // Tag 2 lives in stage 1; re-inserting it lands in stage 0 and the
  // downstream copy must be cleared.
  EXPECT_EQ(s.Insert(Fp(0, 2)), InsertResult::kAlreadyPresent);
  ExpectNoDuplicates(s);
  auto slots = s.Dump().slots;
  ASSERT_EQ(slots.size(), 1u);
  EXPECT_EQ(slots[0].stage, 0);
}

TEST(StaleSetTest, ZeroStagesAlwaysOverflow) {
  StaleSet s({4, 0});
  EXPECT_EQ(s.capacity(), 0u);
  EXPECT_EQ(s.Insert(Fp(1, 1)), InsertResult::kOverflow);
  EXPECT_FALSE(s.Query(Fp(1, 1)));
}

TEST(StaleSetTest, CapacityExact) {
  for (int stages = 1; stages <= 10; ++stages) {
    StaleSet s({4, stages});
    for (int t = 1; t <= stages; ++t) EXPECT_NE(s.Insert(Fp(7, t)), InsertResult::kOverflow);
    EXPECT_EQ(s.Insert(Fp(7, stages + 1)), InsertResult::kOverflow);
  }
}

TEST(StaleSetTest, Idempotence) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    StaleSet a({4, 2}), b({4, 2});
    uint64_t seq = 0;
    for (int step = 0; step < 30; ++step) {
      Fingerprint fp = Fp(rng() % 4, 1 + rng() % 4);
      int op = rng() % 3;
      uint64_t s = ++seq;
      auto apply = [&](StaleSet& set, int times) {
        for (int i = 0; i < times; ++i) {
          if (op == 0) set.Insert(fp);
          if (op == 1) set.Query(fp);
          if (op == 2) set.Remove(fp, 0, s);
        }
      };
      apply(a, 1);
      apply(b, 2);
      ASSERT_EQ(a.Dump(), b.Dump());
    }
  }
}

TEST(StaleSetTest, ConcurrentDistinctIndices) {
  StaleSet s({8, 4});
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&s, t] {
      for (int round = 0; round < 2000; ++round) {
        for (uint32_t idx = 0; idx < 256; ++idx) {
          Fingerprint fp{idx, static_cast<uint32_t>(1 + (t + round) % 6)};
          s.Insert(fp);
          s.Query(fp);
          if (round % 3 == 0) s.Remove(fp, static_cast<ServerIndex>(t), round + 1);
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  ExpectNoDuplicates(s);
  for (const auto& slot : s.Dump().slots) EXPECT_LT(slot.stage, 4);
}

}  // namespace
}  // namespace asyncfs
