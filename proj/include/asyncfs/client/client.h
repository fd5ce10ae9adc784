#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "asyncfs/common/hash.h"
#include "asyncfs/netsim/simulator.h"
#include "asyncfs/server/messages.h"

namespace asyncfs {

inline constexpr NodeAddr kClientBase = 1000;
inline NodeAddr ClientAddr(uint32_t c) { return kClientBase + c; }

struct ClientConfig {
  uint32_t index = 0;
  uint32_t n_servers = 1;
  uint64_t hash_seed = Hasher::kDefaultSeed;
  int tag_bits = Fingerprint::kTagBits;
  Micros initial_timeout = 2'000;
  int max_tries = 5;
};

struct OpResult {
  Opcode op = Opcode::kStat;
  std::string path;
  std::string dst_path;
  Errc err = Errc::kOk;
  Micros ts = 0;  // server timestamp of the final response
  std::optional<InodeRecord> rec;
  std::vector<DirEntryRecord> entries;
  Micros issued = 0;
  Micros completed = 0;
  RequestId request = 0;  // id of the final attempt of the main request
  ServerIndex server = 0;
  std::vector<RequestId> attempts;  // every main-request id sent for this op
};

struct ClientCounters {
  uint64_t requests_sent = 0;
  uint64_t retransmits = 0;
  uint64_t lookups = 0;
  uint64_t cache_hits = 0;
  uint64_t stale_retries = 0;
  uint64_t timeouts = 0;
};

// Splits "/a/b" into components; nullopt for malformed paths.
std::optional<std::vector<std::string>> SplitPath(std::string_view path);

// Library file system: resolves paths with a cached lookup per component and
// talks to the owner server of each inode directly.
class Client : public Node {
 public:
  using Callback = std::function<void(const OpResult&)>;

  Client(ClientConfig config, Simulator& sim);

  NodeAddr addr() const { return ClientAddr(config_.index); }

  // Starts one operation. `dst_path` is for rename only.
  void Submit(Opcode op, const std::string& path, Callback cb, uint16_t perms = 0644,
              const std::string& dst_path = {});

  void OnPacket(const Packet& pkt) override;

  void ClearCache() { cache_.clear(); }
  const ClientCounters& counters() const { return counters_; }
  size_t outstanding() const { return pending_.size(); }

 private:
  struct CachedDir {
    DirectoryId id;
    uint16_t perms = 0;
  };
  struct Pending {
    Packet pkt;
    int tries = 0;
    Micros timeout = 0;
    TimerId timer = 0;
    std::function<void(const ClientResponse&)> cb;
  };
  struct Op;

  void Resolve(const std::vector<std::string>& dirs, std::function<void(Errc, std::vector<PathComponent>)> done);
  void ResolveStep(std::shared_ptr<std::vector<std::string>> dirs, size_t i, std::vector<PathComponent> trail,
                   std::function<void(Errc, std::vector<PathComponent>)> done);
  RequestId SendRequest(ClientRequest req, ServerIndex dst, bool query, std::function<void(const ClientResponse&)> cb);
  void OnTimeout(RequestId id);
  void Run(std::shared_ptr<Op> op);
  void RunMain(std::shared_ptr<Op> op, std::vector<PathComponent> trail, std::vector<PathComponent> dst_trail,
               InodeKind kind);
  void Complete(std::shared_ptr<Op> op, const ClientResponse& resp);
  void Evict(const std::vector<PathComponent>& trail);
  ServerIndex DirOwner(const InodeKey& key) const;
  ServerIndex FileOwner(const InodeKey& key) const;

  ClientConfig config_;
  Simulator& sim_;
  Hasher hasher_;
  uint32_t next_counter_ = 0;
  std::map<InodeKey, CachedDir> cache_;
  std::unordered_map<RequestId, Pending> pending_;
  ClientCounters counters_;
};

}  // namespace asyncfs
