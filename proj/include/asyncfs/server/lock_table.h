#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "asyncfs/common/types.h"

namespace asyncfs {

// Inode-key locks sort before change-log group locks; within a class, by value.
struct LockName {
  uint8_t cls = 0;
  InodeKey key;
  uint64_t fp = 0;

  static LockName Key(InodeKey k) { return {0, std::move(k), 0}; }
  static LockName Group(Fingerprint f) { return {1, {}, f.Value()}; }

  auto operator<=>(const LockName&) const = default;
};

struct LockRequest {
  LockName name;
  bool exclusive = false;
};

// Asynchronous FIFO reader/writer locks. A holder names all its locks up
// front; they are taken one at a time in global order, so two holders can
// never wait on each other in a cycle.
class LockTable {
 public:
  using HolderId = uint64_t;
  using Defer = std::function<void(std::function<void()>)>;

  // `defer` runs grant callbacks outside the table's own call stack.
  explicit LockTable(Defer defer) : defer_(std::move(defer)) {}

  HolderId Acquire(std::vector<LockRequest> reqs, std::function<void()> granted);
  // Releases everything held and withdraws any pending wait.
  void Release(HolderId h);
  bool Granted(HolderId h) const;

  bool IsLocked(const LockName& name) const;
  size_t holders() const { return holders_.size(); }
  std::string DebugString() const;
  // Acquisitions that did not follow ascending global order (always 0 unless broken).
  uint64_t order_violations() const { return order_violations_; }

 private:
  struct Lock {
    int shared = 0;
    bool exclusive = false;
    std::deque<HolderId> waiters;
  };
  struct Holder {
    std::vector<LockRequest> reqs;
    size_t next = 0;
    bool waiting = false;
    std::function<void()> granted;
  };

  bool Compatible(const Lock& l, bool exclusive) const {
    return exclusive ? (!l.exclusive && l.shared == 0) : !l.exclusive;
  }
  void Advance(HolderId h);
  void Wake(const LockName& name);

  Defer defer_;
  std::map<LockName, Lock> locks_;
  std::unordered_map<HolderId, Holder> holders_;
  HolderId next_id_ = 1;
  uint64_t order_violations_ = 0;
};

}  // namespace asyncfs
