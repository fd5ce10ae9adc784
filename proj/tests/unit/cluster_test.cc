#include <gtest/gtest.h>

#include <random>

#include "asyncfs/harness/cluster.h"

namespace asyncfs {
namespace {

OpResult Do(Cluster& c, uint32_t client, Opcode op, const std::string& path, const std::string& dst = {},
            uint16_t perms = 0644) {
  std::optional<OpResult> out;
  c.Submit(client, op, path, [&](const OpResult& r) { out = r; }, perms, dst);
  c.sim().RunUntil([&] { return out.has_value(); });
  EXPECT_TRUE(out.has_value()) << path;
  return out.value_or(OpResult{});
}

ClusterConfig SmallCluster() {
  ClusterConfig cfg;
  cfg.n_servers = 4;
  cfg.n_clients = 2;
  return cfg;
}

void ExpectClean(Cluster& c) {
  ASSERT_TRUE(c.Quiesce());
  auto report = c.BuildView();
  for (const auto& p : report.problems) ADD_FAILURE() << p;
  EXPECT_EQ(c.TotalPendingEntries(), 0u);
  EXPECT_EQ(c.TotalStashedEntries(), 0u);
  EXPECT_TRUE(c.fabric_switch().stale_set().Members().empty());
}

TEST(Cluster, CreateThenReaddir) {
  Cluster c(SmallCluster());
  EXPECT_EQ(Do(c, 0, Opcode::kMkdir, "/a", {}, 0755).err, Errc::kOk);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(Do(c, i % 2, Opcode::kCreate, "/a/f" + std::to_string(i)).err, Errc::kOk);
  }
  auto rd = Do(c, 1, Opcode::kReadDir, "/a");
  ASSERT_EQ(rd.err, Errc::kOk);
  EXPECT_EQ(rd.entries.size(), 50u);
  auto sd = Do(c, 0, Opcode::kStatDir, "/a");
  EXPECT_EQ(sd.rec->size, 50u);
  EXPECT_EQ(Do(c, 0, Opcode::kCreate, "/a/f3").err, Errc::kExist);
  EXPECT_EQ(Do(c, 0, Opcode::kDelete, "/a/f3").err, Errc::kOk);
  EXPECT_EQ(Do(c, 0, Opcode::kDelete, "/a/f3").err, Errc::kNoEnt);
  EXPECT_EQ(Do(c, 1, Opcode::kStat, "/a/f4").err, Errc::kOk);
  EXPECT_EQ(Do(c, 1, Opcode::kStat, "/a/f3").err, Errc::kNoEnt);
  EXPECT_EQ(Do(c, 1, Opcode::kReadDir, "/a").entries.size(), 49u);
  ExpectClean(c);
  EXPECT_EQ(c.BuildView().view.size(), 50u);
}

TEST(Cluster, RmdirAndStalePaths) {
  Cluster c(SmallCluster());
  EXPECT_EQ(Do(c, 0, Opcode::kMkdir, "/a", {}, 0755).err, Errc::kOk);
  EXPECT_EQ(Do(c, 0, Opcode::kMkdir, "/a/b", {}, 0755).err, Errc::kOk);
  EXPECT_EQ(Do(c, 0, Opcode::kCreate, "/a/b/x").err, Errc::kOk);
  EXPECT_EQ(Do(c, 1, Opcode::kRmdir, "/a/b").err, Errc::kNotEmpty);
  EXPECT_EQ(Do(c, 1, Opcode::kDelete, "/a/b/x").err, Errc::kOk);
  EXPECT_EQ(Do(c, 1, Opcode::kRmdir, "/a/b").err, Errc::kOk);
  // Client 0 still has /a/b cached.
  EXPECT_EQ(Do(c, 0, Opcode::kCreate, "/a/b/y").err, Errc::kNoEnt);
  EXPECT_EQ(Do(c, 0, Opcode::kReadDir, "/a").entries.size(), 0u);
  ExpectClean(c);
}

TEST(Cluster, RenameFileAndDirectory) {
  Cluster c(SmallCluster());
  EXPECT_EQ(Do(c, 0, Opcode::kMkdir, "/a", {}, 0755).err, Errc::kOk);
  EXPECT_EQ(Do(c, 0, Opcode::kMkdir, "/b", {}, 0755).err, Errc::kOk);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(Do(c, 0, Opcode::kCreate, "/a/f" + std::to_string(i)).err, Errc::kOk);
  EXPECT_EQ(Do(c, 1, Opcode::kRename, "/a/f0", "/b/g0").err, Errc::kOk);
  EXPECT_EQ(Do(c, 1, Opcode::kStat, "/b/g0").err, Errc::kOk);
  EXPECT_EQ(Do(c, 1, Opcode::kStat, "/a/f0").err, Errc::kNoEnt);
  EXPECT_EQ(Do(c, 1, Opcode::kRename, "/a/f1", "/b/g0").err, Errc::kExist);
  EXPECT_EQ(Do(c, 1, Opcode::kRename, "/a", "/b/a2").err, Errc::kOk);
  EXPECT_EQ(Do(c, 1, Opcode::kReadDir, "/b/a2").entries.size(), 4u);
  EXPECT_EQ(Do(c, 1, Opcode::kStat, "/b/a2/f1").err, Errc::kOk);
  // Client 0 resolved /a earlier; its cached path is invalidated.
  EXPECT_EQ(Do(c, 0, Opcode::kCreate, "/a/f9").err, Errc::kNoEnt);
  EXPECT_EQ(Do(c, 0, Opcode::kRename, "/b", "/b/a2/z").err, Errc::kLoop);
  EXPECT_EQ(Do(c, 0, Opcode::kReadDir, "/").entries.size(), 1u);
  ExpectClean(c);
}

// Many concurrent creates and deletes in a few directories.
void Churn(Cluster& c, int ops, uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int d = 0; d < 4; ++d) Do(c, 0, Opcode::kMkdir, "/d" + std::to_string(d), {}, 0755);
  int done = 0;
  for (int i = 0; i < ops; ++i) {
    std::string path = "/d" + std::to_string(rng() % 4) + "/f" + std::to_string(rng() % 40);
    Opcode op = rng() % 3 == 0 ? Opcode::kDelete : Opcode::kCreate;
    if (rng() % 10 == 0) op = Opcode::kReadDir, path = path.substr(0, 3);
    c.Submit(static_cast<uint32_t>(i % c.n_clients()), op, path, [&](const OpResult&) { ++done; });
  }
  c.sim().RunUntil([&] { return done == ops; });
  EXPECT_EQ(done, ops);
}

TEST(Cluster, ConcurrentChurnStaysConsistent) {
  Cluster c(SmallCluster());
  Churn(c, 600, 7);
  ExpectClean(c);
}

TEST(Cluster, FallbackOnlyWithZeroStages) {
  auto cfg = SmallCluster();
  cfg.stale_set.stages = 0;
  Cluster c(cfg);
  Churn(c, 300, 8);
  ExpectClean(c);
  uint64_t fallbacks = 0;
  for (ServerIndex i = 0; i < c.n_servers(); ++i) fallbacks += c.server(i).counters().fallbacks_applied;
  EXPECT_GT(fallbacks, 0u);
}

TEST(Cluster, SurvivesLossDuplicationReorder) {
  auto cfg = SmallCluster();
  cfg.fault.loss = 0.05;
  cfg.fault.dup = 0.05;
  cfg.fault.reorder_window = 8;
  cfg.fault.seed = 3;
  Cluster c(cfg);
  Churn(c, 600, 9);
  ExpectClean(c);
}

TEST(Cluster, ServerCrashAndRecovery) {
  Cluster c(SmallCluster());
  Churn(c, 200, 10);
  c.ArmCrash(1, 5);
  Churn(c, 300, 11);
  EXPECT_GE(c.crashes(), 1u);
  ExpectClean(c);
  EXPECT_TRUE(c.AllServersUp());
}

TEST(Cluster, SwitchFailureFlushesEverything) {
  Cluster c(SmallCluster());
  Churn(c, 300, 12);
  c.FailSwitch();
  c.sim().RunUntil([&] { return !c.switch_recovering(); });
  EXPECT_FALSE(c.switch_recovering());
  EXPECT_EQ(c.TotalPendingEntries(), 0u);
  EXPECT_EQ(c.TotalStashedEntries(), 0u);
  ExpectClean(c);
}

}  // namespace
}  // namespace asyncfs
