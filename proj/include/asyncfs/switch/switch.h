#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "asyncfs/staleset/stale_set.h"
#include "asyncfs/switch/packet.h"

namespace asyncfs {

struct SwitchConfig {
  uint32_t n_servers = 1;
  StaleSetConfig stale_set;
};

struct SwitchCounters {
  uint64_t forwarded = 0;
  uint64_t duplicated = 0;
  uint64_t rewritten = 0;
  uint64_t dropped_malformed = 0;
  uint64_t queries = 0;
  uint64_t inserts = 0;
  uint64_t removes = 0;
  uint64_t stale_removes = 0;
};

// The on-path element: parses the optional header, runs the stale-set
// operation and decides where the packet (or its copies) go. Servers are
// addressed by their index.
class Switch {
 public:
  explicit Switch(SwitchConfig config);

  std::vector<Packet> Process(Packet pkt);

  // Switch crash: registers and sequence table are lost.
  void Reboot();

  StaleSet& stale_set() { return set_; }
  const StaleSet& stale_set() const { return set_; }
  const SwitchCounters& counters() const { return counters_; }
  const SwitchConfig& config() const { return config_; }

  // Full 49-bit fingerprints seen in headers, keyed by their stored slot, so a
  // control plane can map a register back to the directory owner.
  std::vector<Fingerprint> ResolveMembers() const;

 private:
  SwitchConfig config_;
  StaleSet set_;
  SwitchCounters counters_;
  std::unordered_map<uint64_t, Fingerprint> seen_;  // (set index, tag) -> full fingerprint
};

}  // namespace asyncfs
