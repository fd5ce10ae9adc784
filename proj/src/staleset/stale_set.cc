#include "asyncfs/staleset/stale_set.h"

#include <algorithm>
#include <stdexcept>

namespace asyncfs {

StaleSet::StaleSet(StaleSetConfig config) : config_(config) {
  if (config_.index_bits < 1 || config_.index_bits > Fingerprint::kIndexBits) {
    throw std::invalid_argument("index_bits out of range");
  }
  if (config_.stages < 0) throw std::invalid_argument("negative stage count");
  stages_.reserve(config_.stages);
  for (int s = 0; s < config_.stages; ++s) stages_.emplace_back(config_.index_bits);
}

InsertResult StaleSet::Insert(Fingerprint fp) {
  const uint32_t index = SetIndex(fp);
  std::lock_guard lock(StripeFor(index));
  bool landed = false;
  bool was_present = false;
  for (auto& stage : stages_) {
    if (!landed) {
      if (stage.Peek(index) == fp.tag) was_present = true;
      landed = stage.ConditionalInsert(index, fp.tag);
    } else {
      if (stage.Peek(index) == fp.tag) was_present = true;
      stage.ConditionalRemove(index, fp.tag);
    }
  }
  if (!landed) return InsertResult::kOverflow;
  return was_present ? InsertResult::kAlreadyPresent : InsertResult::kInserted;
}

bool StaleSet::Query(Fingerprint fp) const {
  const uint32_t index = SetIndex(fp);
  std::lock_guard lock(StripeFor(index));
  bool hit = false;
  for (const auto& stage : stages_) hit = hit || stage.Query(index, fp.tag);
  return hit;
}

RemoveResult StaleSet::Remove(Fingerprint fp, ServerIndex from_server, uint64_t seq) {
  std::lock_guard seq_lock(seq_mu_);
  auto it = last_seq_.find(from_server);
  if (it != last_seq_.end() && seq <= it->second) return RemoveResult::kStaleDuplicate;
  last_seq_[from_server] = seq;
  const uint32_t index = SetIndex(fp);
  std::lock_guard lock(StripeFor(index));
  for (auto& stage : stages_) stage.ConditionalRemove(index, fp.tag);
  return RemoveResult::kRemoved;
}

void StaleSet::Clear() {
  std::lock_guard seq_lock(seq_mu_);
  for (auto& m : stripes_) m.lock();
  for (auto& stage : stages_) stage = RegisterStage(config_.index_bits);
  last_seq_.clear();
  for (auto& m : stripes_) m.unlock();
}

StaleSet::Snapshot StaleSet::Dump() const {
  Snapshot snap;
  {
    std::lock_guard seq_lock(seq_mu_);
    snap.last_seq = last_seq_;
  }
  for (auto& m : stripes_) m.lock();
  const uint32_t n = 1u << config_.index_bits;
  for (uint32_t i = 0; i < n; ++i) {
    for (int s = 0; s < static_cast<int>(stages_.size()); ++s) {
      uint32_t tag = stages_[s].Peek(i);
      if (tag != 0) snap.slots.push_back({i, s, tag});
    }
  }
  for (auto& m : stripes_) m.unlock();
  return snap;
}

std::vector<Fingerprint> StaleSet::Members() const {
  std::vector<Fingerprint> out;
  for (const auto& slot : Dump().slots) out.push_back({slot.index, slot.tag});
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace asyncfs
