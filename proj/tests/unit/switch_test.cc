#include <gtest/gtest.h>

#include "asyncfs/common/hash.h"
#include "asyncfs/switch/switch.h"

namespace asyncfs {
namespace {

Bytes Payload() { return {0xde, 0xad, 0xbe, 0xef}; }

Packet WithOp(SetOp op, Fingerprint fp, NodeAddr src, NodeAddr dst, uint8_t sender, uint64_t seq = 0) {
  StaleSetHeader h;
  h.op = op;
  h.sender = sender;
  h.seq = seq;
  h.fp = fp;
  return Packet::WithHeader(src, dst, h, Payload());
}

TEST(Header, BitExactLayout) {
  StaleSetHeader h;
  h.op = SetOp::kInsert;
  h.ret = SetRet::kOverflow;
  h.sender = 5;
  h.seq = 0x0102030405060708ull;
  h.fp = Fingerprint{0x1ffff, 0xaabbccdd};
  ByteWriter w;
  h.Encode(w);
  const Bytes& b = w.bytes();
  ASSERT_EQ(b.size(), 18u);
  EXPECT_EQ(b[0], (2 << 6) | (3 << 4));
  EXPECT_EQ(b[1], 5);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(b[2 + i], i + 1);
  EXPECT_EQ(b[10], 0x00);
  EXPECT_EQ(b[11], 0x01);
  EXPECT_EQ(b[12], 0xff);
  EXPECT_EQ(b[13], 0xff);
  EXPECT_EQ(b[14], 0xaa);
  EXPECT_EQ(b[17], 0xdd);
  auto parsed = StaleSetHeader::Parse(b);
  ASSERT_TRUE(parsed);
  EXPECT_EQ(*parsed, h);
}

TEST(Header, RejectsMalformed) {
  EXPECT_FALSE(StaleSetHeader::Parse(Bytes(17, 0)));
  Bytes b(18, 0);
  b[17] = 1;
  b[0] = 1 << 6;
  EXPECT_TRUE(StaleSetHeader::Parse(b));
  b[0] |= 0x01;  // reserved bit
  EXPECT_FALSE(StaleSetHeader::Parse(b));
  b[0] = 0;  // op NONE
  EXPECT_FALSE(StaleSetHeader::Parse(b));
  b[0] = 1 << 6;
  b[17] = 0;  // tag 0 never appears on the wire
  EXPECT_FALSE(StaleSetHeader::Parse(b));
}

class SwitchTest : public ::testing::Test {
 protected:
  Switch sw_{SwitchConfig{4, StaleSetConfig{4, 2}}};
  const NodeAddr kClient = 1000;
};

TEST_F(SwitchTest, PlainForwardedVerbatim) {
  Packet p = Packet::Plain(kClient, 2, Payload());
  auto out = sw_.Process(p);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].dst, 2u);
  EXPECT_EQ(out[0].data, p.data);
  EXPECT_TRUE(sw_.stale_set().Dump().slots.empty());
  EXPECT_EQ(sw_.counters().queries + sw_.counters().inserts + sw_.counters().removes, 0u);
}

TEST_F(SwitchTest, InsertMulticastsToClientAndServer) {
  Fingerprint fp{3, 77};
  auto out = sw_.Process(WithOp(SetOp::kInsert, fp, 1, kClient, 1));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].dst, kClient);
  EXPECT_EQ(out[1].dst, 1u);
  for (const auto& p : out) {
    EXPECT_EQ(p.Header()->ret, SetRet::kPresent);
    EXPECT_TRUE(std::equal(p.Payload().begin(), p.Payload().end(), Payload().begin()));
  }
  EXPECT_TRUE(sw_.stale_set().Query(fp));
  EXPECT_EQ(sw_.counters().duplicated, 1u);
}

TEST_F(SwitchTest, InsertOverflowRewritesToParentOwner) {
  sw_.Process(WithOp(SetOp::kInsert, {5, 1}, 0, kClient, 0));
  sw_.Process(WithOp(SetOp::kInsert, {5, 2}, 0, kClient, 0));
  Fingerprint fp{5, 3};
  auto out = sw_.Process(WithOp(SetOp::kInsert, fp, 1, kClient, 1));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].dst, OwnerOfDirectory(fp, 4));
  EXPECT_EQ(out[0].Header()->ret, SetRet::kOverflow);
  EXPECT_FALSE(sw_.stale_set().Query(fp));
  EXPECT_EQ(sw_.counters().rewritten, 1u);
}

TEST_F(SwitchTest, QuerySetsRet) {
  Fingerprint fp{2, 9};
  auto a = sw_.Process(WithOp(SetOp::kQuery, fp, kClient, 1, 0));
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].Header()->ret, SetRet::kAbsent);
  sw_.Process(WithOp(SetOp::kInsert, fp, 1, kClient, 1));
  auto b = sw_.Process(WithOp(SetOp::kQuery, fp, kClient, 1, 0));
  EXPECT_EQ(b[0].Header()->ret, SetRet::kPresent);
}

TEST_F(SwitchTest, RemoveForwardedEvenWhenStale) {
  Fingerprint fp{2, 9};
  sw_.Process(WithOp(SetOp::kInsert, fp, 1, kClient, 1));
  auto a = sw_.Process(WithOp(SetOp::kRemove, fp, 1, 1, 1, 10));
  ASSERT_EQ(a.size(), 1u);
  EXPECT_FALSE(sw_.stale_set().Query(fp));
  sw_.Process(WithOp(SetOp::kInsert, fp, 1, kClient, 1));
  auto b = sw_.Process(WithOp(SetOp::kRemove, fp, 1, 1, 1, 10));
  ASSERT_EQ(b.size(), 1u);
  EXPECT_TRUE(sw_.stale_set().Query(fp));
  EXPECT_EQ(sw_.counters().stale_removes, 1u);
}

TEST_F(SwitchTest, MalformedDropped) {
  Packet p = Packet::Plain(kClient, 1, Bytes(5, 0));
  p.dst_port = kPortStaleSet;
  EXPECT_TRUE(sw_.Process(p).empty());
  Packet q = WithOp(SetOp::kQuery, {1, 1}, kClient, 1, 0);
  q.SetRet(SetRet::kPresent);  // ret must be UNSET on ingress
  EXPECT_TRUE(sw_.Process(q).empty());
  EXPECT_EQ(sw_.counters().dropped_malformed, 2u);
}

TEST_F(SwitchTest, MonotoneVisibility) {
  Fingerprint fp{1, 4};
  sw_.Process(WithOp(SetOp::kInsert, fp, 2, kClient, 2));
  for (int i = 0; i < 5; ++i) {
    sw_.Process(WithOp(SetOp::kInsert, {static_cast<uint32_t>(8 + i), 1}, 0, kClient, 0));
    EXPECT_EQ(sw_.Process(WithOp(SetOp::kQuery, fp, kClient, 1, 0))[0].Header()->ret, SetRet::kPresent);
  }
  sw_.Process(WithOp(SetOp::kRemove, fp, 1, 1, 1, 3));
  EXPECT_EQ(sw_.Process(WithOp(SetOp::kQuery, fp, kClient, 1, 0))[0].Header()->ret, SetRet::kAbsent);
}

TEST_F(SwitchTest, RebootClears) {
  sw_.Process(WithOp(SetOp::kInsert, {1, 4}, 2, kClient, 2));
  EXPECT_EQ(sw_.ResolveMembers().size(), 1u);
  sw_.Reboot();
  EXPECT_TRUE(sw_.stale_set().Dump().slots.empty());
  EXPECT_TRUE(sw_.ResolveMembers().empty());
}

}  // namespace
}  // namespace asyncfs
