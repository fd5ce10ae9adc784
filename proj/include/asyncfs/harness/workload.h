#pragma once

#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "asyncfs/client/client.h"

namespace asyncfs {

enum class Pattern : uint8_t { kSingleDir, kMultiDir, kBurst, kMixed };
enum class Mix : uint8_t { kPangu, kDataCenter };

std::optional<Pattern> ParsePattern(std::string_view s);
std::string_view PatternName(Pattern p);
std::optional<Mix> ParseMix(std::string_view s);
std::string_view MixName(Mix m);

struct WorkloadSpec {
  Pattern pattern = Pattern::kSingleDir;
  uint64_t ops = 1000;
  uint32_t inflight = 32;
  uint32_t burst_size = 10;
  uint32_t dirs = 1024;  // multi-dir and burst
  uint32_t mixed_dirs = 64;
  Mix mix = Mix::kPangu;
  bool skew = false;  // 80% of operations go to 20% of the directories
  uint64_t seed = 1;
};

struct OpSpec {
  Opcode op = Opcode::kCreate;
  std::string path;
  std::string dst;
  uint16_t perms = 0644;
  std::string label;  // ratio-table category
};

// One row of a ratio table: a category and its share of all operations.
struct RatioRow {
  std::string label;
  double share;
};
std::vector<RatioRow> RatioTable(Mix m);

// Seeded operation stream. Names only become eligible as targets once the
// operation creating them has completed, so deletes and renames always name
// something that exists unless a concurrent operation interferes.
class Workload {
 public:
  explicit Workload(WorkloadSpec spec);

  // Setup operations, run phase by phase before measurement starts.
  std::vector<std::vector<OpSpec>> Prefill();
  // The next measured operation, or nullopt once `ops` have been produced.
  std::optional<OpSpec> Next();
  void OnComplete(const OpSpec& op, const OpResult& r);

  // Generates the whole measured stream assuming every operation succeeds
  // the moment it is issued.
  std::vector<OpSpec> Stream();

  uint64_t produced() const { return produced_; }
  const WorkloadSpec& spec() const { return spec_; }

 private:
  size_t PickDir();
  std::string NewFile(size_t dir);
  std::optional<std::string> TakeLiveFile(size_t dir);
  OpSpec Mixed();

  WorkloadSpec spec_;
  std::mt19937_64 rng_;
  std::vector<std::string> dirs_;
  std::vector<std::vector<std::string>> live_;  // per directory
  std::set<size_t> removed_dirs_;
  std::vector<std::string> empty_dirs_;  // made by the stream itself
  uint64_t next_name_ = 0;
  uint64_t produced_ = 0;
  size_t burst_dir_ = 0;
  uint32_t burst_left_ = 0;
  bool optimistic_ = false;
  std::vector<RatioRow> table_;
  std::discrete_distribution<size_t> pick_row_;
};

// Share of directory updates whose next directory-level operation on the
// same directory is not a read (statdir/readdir).
double UnreadUpdateShare(const std::vector<OpSpec>& stream);

}  // namespace asyncfs
