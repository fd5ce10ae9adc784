#include "asyncfs/server/lock_table.h"

#include <algorithm>

namespace asyncfs {

LockTable::HolderId LockTable::Acquire(std::vector<LockRequest> reqs, std::function<void()> granted) {
  std::sort(reqs.begin(), reqs.end(), [](const LockRequest& a, const LockRequest& b) { return a.name < b.name; });
  std::vector<LockRequest> merged;
  for (auto& r : reqs) {
    if (!merged.empty() && merged.back().name == r.name) {
      merged.back().exclusive = merged.back().exclusive || r.exclusive;
    } else {
      merged.push_back(std::move(r));
    }
  }
  HolderId id = next_id_++;
  holders_[id] = Holder{std::move(merged), 0, false, std::move(granted)};
  Advance(id);
  return id;
}

void LockTable::Advance(HolderId h) {
  auto it = holders_.find(h);
  if (it == holders_.end()) return;
  Holder& holder = it->second;
  while (holder.next < holder.reqs.size()) {
    const LockRequest& r = holder.reqs[holder.next];
    if (holder.next > 0 && !(holder.reqs[holder.next - 1].name < r.name)) ++order_violations_;
    Lock& l = locks_[r.name];
    bool queued_first = !l.waiters.empty() && l.waiters.front() == h;
    if (!Compatible(l, r.exclusive) || (!l.waiters.empty() && !queued_first)) {
      if (!holder.waiting) {
        l.waiters.push_back(h);
        holder.waiting = true;
      }
      return;
    }
    if (queued_first) l.waiters.pop_front();
    holder.waiting = false;
    if (r.exclusive) {
      l.exclusive = true;
    } else {
      ++l.shared;
    }
    ++holder.next;
    // A shared grant may let the next shared waiter in too.
    if (!r.exclusive && !l.waiters.empty()) Wake(r.name);
  }
  if (holder.granted) {
    defer_(std::move(holder.granted));
    holder.granted = nullptr;
  }
}

void LockTable::Wake(const LockName& name) {
  auto it = locks_.find(name);
  if (it == locks_.end() || it->second.waiters.empty()) return;
  HolderId next = it->second.waiters.front();
  auto hit = holders_.find(next);
  if (hit == holders_.end()) {
    it->second.waiters.pop_front();
    Wake(name);
    return;
  }
  const LockRequest& r = hit->second.reqs[hit->second.next];
  if (Compatible(it->second, r.exclusive)) Advance(next);
}

void LockTable::Release(HolderId h) {
  auto it = holders_.find(h);
  if (it == holders_.end()) return;
  Holder holder = std::move(it->second);
  holders_.erase(it);
  std::vector<LockName> touched;
  for (size_t i = 0; i < holder.next; ++i) {
    const LockRequest& r = holder.reqs[i];
    Lock& l = locks_[r.name];
    if (r.exclusive) {
      l.exclusive = false;
    } else {
      --l.shared;
    }
    touched.push_back(r.name);
  }
  if (holder.waiting && holder.next < holder.reqs.size()) {
    const LockName& name = holder.reqs[holder.next].name;
    Lock& l = locks_[name];
    l.waiters.erase(std::remove(l.waiters.begin(), l.waiters.end(), h), l.waiters.end());
    touched.push_back(name);
  }
  for (const auto& name : touched) {
    Wake(name);
    auto lit = locks_.find(name);
    if (lit != locks_.end() && !lit->second.exclusive && lit->second.shared == 0 && lit->second.waiters.empty()) {
      locks_.erase(lit);
    }
  }
}

bool LockTable::Granted(HolderId h) const {
  auto it = holders_.find(h);
  return it != holders_.end() && it->second.next == it->second.reqs.size();
}

bool LockTable::IsLocked(const LockName& name) const {
  auto it = locks_.find(name);
  return it != locks_.end() && (it->second.exclusive || it->second.shared > 0);
}

std::string LockTable::DebugString() const {
  std::string out;
  for (const auto& [name, l] : locks_) {
    out += " lock(" + std::to_string(name.cls) + "," + std::to_string(name.fp) + ") x=" + std::to_string(l.exclusive) +
           " s=" + std::to_string(l.shared) + " w=" + std::to_string(l.waiters.size());
  }
  for (const auto& [id, h] : holders_) {
    out += " holder " + std::to_string(id) + " next=" + std::to_string(h.next) + "/" + std::to_string(h.reqs.size()) +
           " waiting=" + std::to_string(h.waiting);
  }
  return out;
}

}  // namespace asyncfs
