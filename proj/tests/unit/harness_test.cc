#include <gtest/gtest.h>

#include <json.hpp>
#include <map>

#include "asyncfs/harness/reference_model.h"
#include "asyncfs/harness/runner.h"
#include "asyncfs/harness/workload.h"

namespace asyncfs {
namespace {

TEST(ReferenceModel, RejectsImpossibleUpdates) {
  ReferenceModel m;
  EXPECT_TRUE(m.Apply(Opcode::kCreate, "/a/f", {}, 0644).has_value());  // no parent
  EXPECT_FALSE(m.Apply(Opcode::kMkdir, "/a", {}, 0755));
  EXPECT_FALSE(m.Apply(Opcode::kCreate, "/a/f", {}, 0644));
  EXPECT_TRUE(m.Apply(Opcode::kCreate, "/a/f", {}, 0644).has_value());  // exists
  EXPECT_TRUE(m.Apply(Opcode::kRmdir, "/a", {}, 0).has_value());        // not empty
  EXPECT_TRUE(m.Apply(Opcode::kDelete, "/a", {}, 0).has_value());       // a directory
  EXPECT_FALSE(m.Apply(Opcode::kDelete, "/a/f", {}, 0));
  EXPECT_FALSE(m.Apply(Opcode::kRmdir, "/a", {}, 0));
  EXPECT_TRUE(m.view().empty());
}

TEST(ReferenceModel, RenameMovesOnlyTheSubtree) {
  ReferenceModel m;
  for (const char* d : {"/a", "/a/x", "/a-b", "/c"}) ASSERT_FALSE(m.Apply(Opcode::kMkdir, d, {}, 0755));
  ASSERT_FALSE(m.Apply(Opcode::kCreate, "/a/x/f", {}, 0600));
  ASSERT_FALSE(m.Apply(Opcode::kRename, "/a", "/c/a", 0));
  EXPECT_EQ(ReferenceModel::Serialize(m.view()),
            "/a-b d 0755\n/c d 0755\n/c/a d 0755\n/c/a/x d 0755\n/c/a/x/f f 0600\n");
  EXPECT_TRUE(m.Apply(Opcode::kRename, "/c", "/c/a/y", 0).has_value());  // into itself
  auto listed = m.List("/c/a");
  ASSERT_EQ(listed.size(), 1u);
  EXPECT_EQ(listed.begin()->second, InodeKind::kDirectory);
}

TEST(ReferenceModel, PathHelpers) {
  EXPECT_EQ(ParentPath("/a/b"), "/a");
  EXPECT_EQ(ParentPath("/a"), "/");
  EXPECT_EQ(BaseName("/a/b"), "b");
  EXPECT_TRUE(IsWithin("/a/b", "/a"));
  EXPECT_TRUE(IsWithin("/a", "/a"));
  EXPECT_FALSE(IsWithin("/a-b", "/a"));
}

std::map<std::string, double> Shares(const std::vector<OpSpec>& ops) {
  std::map<std::string, double> out;
  for (const auto& op : ops) out[op.label] += 1.0 / ops.size();
  return out;
}

void ExpectRatios(Mix mix) {
  WorkloadSpec spec;
  spec.pattern = Pattern::kMixed;
  spec.mix = mix;
  spec.ops = 100'000;
  spec.seed = 9;
  Workload w(spec);
  auto shares = Shares(w.Stream());
  double total = 0;
  for (const auto& row : RatioTable(mix)) total += row.share;
  for (const auto& row : RatioTable(mix)) {
    EXPECT_NEAR(shares[row.label], row.share / total, 0.01) << row.label;
  }
}

TEST(Workload, PanguRatios) { ExpectRatios(Mix::kPangu); }
TEST(Workload, DataCenterRatios) { ExpectRatios(Mix::kDataCenter); }

TEST(Workload, MostDirectoryUpdatesAreNotReadNext) {
  WorkloadSpec spec;
  spec.pattern = Pattern::kMixed;
  spec.ops = 100'000;
  Workload w(spec);
  EXPECT_GE(UnreadUpdateShare(w.Stream()), 0.86);
}

TEST(Workload, SingleDirIsAllCreatesInOneDirectory) {
  WorkloadSpec spec;
  spec.ops = 500;
  Workload w(spec);
  auto prefill = w.Prefill();
  ASSERT_EQ(prefill.size(), 1u);
  ASSERT_EQ(prefill[0].size(), 1u);
  std::set<std::string> names;
  for (const auto& op : w.Stream()) {
    EXPECT_EQ(op.op, Opcode::kCreate);
    EXPECT_EQ(ParentPath(op.path), prefill[0][0].path);
    names.insert(op.path);
  }
  EXPECT_EQ(names.size(), 500u);
}

TEST(Workload, BurstsStayInOneDirectory) {
  WorkloadSpec spec;
  spec.pattern = Pattern::kBurst;
  spec.burst_size = 25;
  spec.ops = 1000;
  Workload w(spec);
  auto ops = w.Stream();
  ASSERT_EQ(ops.size(), 1000u);
  for (size_t i = 0; i < ops.size(); i += 25) {
    for (size_t j = i; j < i + 25; ++j) EXPECT_EQ(ParentPath(ops[j].path), ParentPath(ops[i].path));
  }
}

TEST(Workload, SkewConcentratesOnFewDirectories) {
  WorkloadSpec spec;
  spec.pattern = Pattern::kMultiDir;
  spec.dirs = 100;
  spec.skew = true;
  spec.ops = 20'000;
  Workload w(spec);
  std::map<std::string, int> per_dir;
  for (const auto& op : w.Stream()) ++per_dir[ParentPath(op.path)];
  std::vector<int> counts;
  for (const auto& [d, n] : per_dir) counts.push_back(n);
  std::sort(counts.rbegin(), counts.rend());
  int top = 0;
  for (size_t i = 0; i < 20 && i < counts.size(); ++i) top += counts[i];
  EXPECT_NEAR(top / 20'000.0, 0.8, 0.02);
}

// Runs a few operations and returns the history in the runner's format.
std::vector<HistoryRecord> Record(Cluster& c, const std::vector<OpSpec>& ops) {
  std::vector<HistoryRecord> out;
  for (const auto& op : ops) {
    std::optional<OpResult> r;
    c.Submit(0, op.op, op.path, [&](const OpResult& x) { r = x; }, op.perms, op.dst);
    c.sim().RunUntil([&] { return r.has_value(); });
    out.push_back({op, *r});
  }
  return out;
}

TEST(Checker, AcceptsFaithfulHistoryAndFlagsDivergence) {
  ClusterConfig cfg;
  Cluster c(cfg);
  auto history = Record(c, {{Opcode::kMkdir, "/a", {}, 0755},
                            {Opcode::kCreate, "/a/f", {}, 0644},
                            {Opcode::kCreate, "/a/g", {}, 0644},
                            {Opcode::kReadDir, "/a"},
                            {Opcode::kStatDir, "/a"}});
  ASSERT_TRUE(c.Quiesce());
  auto ok = CheckHistory(history, c);
  EXPECT_TRUE(ok.pass) << ok.divergence;
  EXPECT_EQ(ok.reads_checked, 2u);
  EXPECT_EQ(ok.read_violations, 0u);

  // A read that misses an acknowledged create.
  auto stale_read = history;
  stale_read[3].result.entries.pop_back();
  auto bad = CheckHistory(stale_read, c);
  EXPECT_FALSE(bad.pass);
  EXPECT_EQ(bad.read_violations, 1u);

  // A claimed success the servers never applied.
  auto phantom = history;
  HistoryRecord extra = history[1];
  extra.spec.path = "/a/h";
  extra.result.ts += 1;
  phantom.push_back(extra);
  auto missing = CheckHistory(phantom, c);
  EXPECT_FALSE(missing.pass);
  EXPECT_EQ(missing.read_violations, 2u);  // both reads should have seen it
  EXPECT_NE(missing.divergence.find("final state"), std::string::npos) << missing.divergence;
}

TEST(Runner, SmallMixedRunPassesAndReports) {
  RunConfig rc;
  rc.workload.pattern = Pattern::kMixed;
  rc.workload.ops = 2000;
  rc.cluster.fault.loss = 0.02;
  rc.cluster.fault.dup = 0.02;
  rc.cluster.fault.reorder_window = 4;
  RunResult r = RunWorkload(rc);
  EXPECT_TRUE(r.pass) << r.divergence;
  EXPECT_EQ(r.metrics.ops_issued, 2000u);
  EXPECT_GT(r.metrics.reads_checked, 0u);
  EXPECT_GT(r.metrics.throughput, 0);
  auto j = nlohmann::json::parse(MetricsJson(rc, r));
  EXPECT_EQ(j["verdict"], "PASS");
  EXPECT_EQ(j["ops_issued"], 2000);
  std::string csv = LatencyCsv(r);
  EXPECT_EQ(static_cast<size_t>(std::count(csv.begin(), csv.end(), '\n')), r.latencies.size() + 1);
}

TEST(Runner, SyncModeNeverAggregates) {
  RunConfig rc;
  rc.workload.ops = 1000;
  rc.sync_mode = true;
  RunResult r = RunWorkload(rc);
  EXPECT_TRUE(r.pass) << r.divergence;
  EXPECT_EQ(r.metrics.aggregations, 0u);
  EXPECT_GE(r.metrics.fallbacks, 1000u);
}

}  // namespace
}  // namespace asyncfs
