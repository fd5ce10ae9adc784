#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "asyncfs/common/types.h"

namespace asyncfs {

// One pipeline stage: 2^I 32-bit registers, 0 = empty.
class RegisterStage {
 public:
  explicit RegisterStage(int index_bits) : registers_(size_t{1} << index_bits, 0) {}

  // True iff registers[index] == tag.
  bool Query(uint32_t index, uint32_t tag) const { return registers_[index] == tag; }

  // Writes tag if the register is empty; returns old == 0 || old == tag.
  bool ConditionalInsert(uint32_t index, uint32_t tag) {
    uint32_t old = registers_[index];
    if (old == 0) registers_[index] = tag;
    return old == 0 || old == tag;
  }

  // Clears the register if it holds tag.
  void ConditionalRemove(uint32_t index, uint32_t tag) {
    if (registers_[index] == tag) registers_[index] = 0;
  }

  uint32_t Peek(uint32_t index) const { return registers_[index]; }
  size_t size() const { return registers_.size(); }

 private:
  std::vector<uint32_t> registers_;
};

enum class InsertResult : uint8_t { kInserted, kAlreadyPresent, kOverflow };
enum class RemoveResult : uint8_t { kRemoved, kStaleDuplicate };

struct StaleSetConfig {
  int index_bits = Fingerprint::kIndexBits;
  int stages = 10;
};

// Set-associative fingerprint set spread over S register stages.
//
// Each whole operation runs under the lock of its index stripe, which is a
// strict refinement of the hardware's per-stage atomicity plus ordered
// execution: every history produced here is one the pipeline could produce.
class StaleSet {
 public:
  explicit StaleSet(StaleSetConfig config = {});

  InsertResult Insert(Fingerprint fp);
  bool Query(Fingerprint fp) const;
  RemoveResult Remove(Fingerprint fp, ServerIndex from_server, uint64_t seq);

  // Drops all state (switch reboot).
  void Clear();

  struct Slot {
    uint32_t index;
    int stage;
    uint32_t tag;
    auto operator<=>(const Slot&) const = default;
  };
  struct Snapshot {
    std::vector<Slot> slots;  // sorted by (index, stage, tag)
    std::map<ServerIndex, uint64_t> last_seq;
    bool operator==(const Snapshot&) const = default;
  };
  Snapshot Dump() const;

  // Fingerprints currently stored (index is the masked set index).
  std::vector<Fingerprint> Members() const;

  const StaleSetConfig& config() const { return config_; }
  uint64_t capacity() const { return uint64_t{static_cast<uint64_t>(config_.stages)} << config_.index_bits; }
  uint32_t SetIndex(Fingerprint fp) const { return fp.index & ((1u << config_.index_bits) - 1); }

 private:
  static constexpr size_t kStripes = 64;

  std::mutex& StripeFor(uint32_t index) const { return stripes_[index % kStripes]; }

  StaleSetConfig config_;
  std::vector<RegisterStage> stages_;
  mutable std::array<std::mutex, kStripes> stripes_;
  mutable std::mutex seq_mu_;
  std::map<ServerIndex, uint64_t> last_seq_;
};

}  // namespace asyncfs
