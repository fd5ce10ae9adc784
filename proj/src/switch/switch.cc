#include "asyncfs/switch/switch.h"

#include <algorithm>

#include "asyncfs/common/hash.h"

namespace asyncfs {

namespace {

uint64_t SlotKey(uint32_t index, uint32_t tag) { return (uint64_t{index} << 32) | tag; }

}  // namespace

Switch::Switch(SwitchConfig config) : config_(config), set_(config.stale_set) {
  if (config_.n_servers == 0) throw std::invalid_argument("switch needs at least one server");
}

std::vector<Packet> Switch::Process(Packet pkt) {
  std::vector<Packet> out;
  if (!pkt.HasHeader()) {
    ++counters_.forwarded;
    out.push_back(std::move(pkt));
    return out;
  }
  auto header = pkt.Header();
  if (!header || header->ret != SetRet::kUnset) {
    ++counters_.dropped_malformed;
    return out;
  }
  const Fingerprint fp = header->fp;
  switch (header->op) {
    case SetOp::kQuery: {
      ++counters_.queries;
      pkt.SetRet(set_.Query(fp) ? SetRet::kPresent : SetRet::kAbsent);
      ++counters_.forwarded;
      out.push_back(std::move(pkt));
      break;
    }
    case SetOp::kInsert: {
      ++counters_.inserts;
      seen_[SlotKey(set_.SetIndex(fp), fp.tag)] = fp;
      if (set_.Insert(fp) == InsertResult::kOverflow) {
        // Address rewriter: hand the response to the parent's owner for the synchronous update.
        pkt.SetRet(SetRet::kOverflow);
        pkt.dst = OwnerOfDirectory(fp, config_.n_servers);
        ++counters_.rewritten;
        out.push_back(std::move(pkt));
      } else {
        pkt.SetRet(SetRet::kPresent);
        if (pkt.dst == header->sender) {
          ++counters_.forwarded;
          out.push_back(std::move(pkt));
          break;
        }
        // (7a) to the client, (7b) back to the originating server as the unlock notification.
        Packet to_server = pkt;
        to_server.dst = header->sender;
        ++counters_.duplicated;
        out.push_back(std::move(pkt));
        out.push_back(std::move(to_server));
      }
      break;
    }
    case SetOp::kRemove: {
      ++counters_.removes;
      if (set_.Remove(fp, header->sender, header->seq) == RemoveResult::kStaleDuplicate) {
        ++counters_.stale_removes;
      }
      ++counters_.forwarded;
      out.push_back(std::move(pkt));
      break;
    }
    case SetOp::kNone:
      ++counters_.dropped_malformed;
      break;
  }
  return out;
}

void Switch::Reboot() {
  set_.Clear();
  seen_.clear();
}

std::vector<Fingerprint> Switch::ResolveMembers() const {
  std::vector<Fingerprint> out;
  for (const auto& slot : set_.Dump().slots) {
    auto it = seen_.find(SlotKey(slot.index, slot.tag));
    if (it != seen_.end()) out.push_back(it->second);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace asyncfs
