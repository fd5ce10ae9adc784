#include "asyncfs/harness/cluster.h"

#include <stdexcept>

namespace asyncfs {

Cluster::Cluster(ClusterConfig config) : config_(std::move(config)) {
  if (config_.n_servers == 0 || config_.n_servers > 255) throw std::invalid_argument("1..255 servers");
  SwitchConfig sc;
  sc.n_servers = config_.n_servers;
  sc.stale_set = config_.stale_set;
  switch_ = std::make_unique<Switch>(sc);
  sim_ = std::make_unique<Simulator>(*switch_, config_.fault);
  sim_->SetCrashHandler([this](NodeAddr a) { OnCrash(a); });
  wal_devices_.resize(config_.n_servers);
  for (ServerIndex i = 0; i < config_.n_servers; ++i) {
    servers_.push_back(std::make_unique<Server>(ServerConfigFor(i), *sim_, &wal_devices_[i]));
    sim_->Attach(i, servers_.back().get());
  }
  for (ServerIndex i = 0; i < config_.n_servers; ++i) {
    Server* s = servers_[i].get();
    sim_->Post(i, [s] { s->Bootstrap(); });
  }
  for (uint32_t c = 0; c < config_.n_clients; ++c) {
    ClientConfig cc = config_.client;
    cc.index = c;
    cc.n_servers = config_.n_servers;
    cc.hash_seed = config_.hash_seed;
    cc.tag_bits = config_.tag_bits;
    clients_.push_back(std::make_unique<Client>(cc, *sim_));
    sim_->Attach(ClientAddr(c), clients_.back().get());
  }
  sim_->RunUntilIdle();
}

Cluster::~Cluster() = default;

ServerConfig Cluster::ServerConfigFor(ServerIndex i) const {
  ServerConfig sc = config_.server;
  sc.index = i;
  sc.n_servers = config_.n_servers;
  sc.hash_seed = config_.hash_seed;
  sc.tag_bits = config_.tag_bits;
  return sc;
}

void Cluster::Submit(uint32_t c, Opcode op, const std::string& path, Client::Callback cb, uint16_t perms,
                     const std::string& dst) {
  Client* cl = clients_.at(c).get();
  sim_->Post(ClientAddr(c), [cl, op, path, cb = std::move(cb), perms, dst] { cl->Submit(op, path, cb, perms, dst); });
}

void Cluster::CrashServer(ServerIndex i) {
  if (!sim_->IsUp(i)) return;
  sim_->Crash(i);
  OnCrash(i);
}

void Cluster::ArmCrash(ServerIndex i, uint64_t appends_from_now) {
  Server& s = *servers_.at(i);
  s.SetCrashAfterAppends(s.wal_appends() + appends_from_now);
}

void Cluster::OnCrash(NodeAddr addr) {
  ServerIndex i = addr;
  if (i >= servers_.size()) return;
  ++crashes_;
  retired_.push_back(std::move(servers_[i]));
  sim_->Schedule(kHarnessAddr, config_.restart_delay, [this, i] { Restart(i); });
}

void Cluster::Restart(ServerIndex i) {
  servers_[i] = std::make_unique<Server>(ServerConfigFor(i), *sim_, &wal_devices_[i]);
  Server* s = servers_[i].get();
  sim_->Restart(i, s);
  sim_->Post(i, [s] { s->Recover(); });
}

bool Cluster::AllServersUp() const {
  for (ServerIndex i = 0; i < config_.n_servers; ++i) {
    if (!sim_->IsUp(i) || !servers_[i]) return false;
  }
  return true;
}

void Cluster::FailSwitch() {
  switch_->Reboot();
  switch_recovering_ = true;
  auto remaining = std::make_shared<uint32_t>(config_.n_servers);
  for (ServerIndex i = 0; i < config_.n_servers; ++i) {
    sim_->Post(i, [this, i, remaining] {
      Server& s = *servers_[i];
      s.SetBlockClients(true);
      s.FlushAllPending([this, remaining] {
        if (--*remaining > 0) return;
        // Every change-log now sits at its owner: apply, then reopen.
        for (ServerIndex j = 0; j < config_.n_servers; ++j) {
          sim_->Post(j, [this, j] {
            servers_[j]->ApplyAllStashed();
            servers_[j]->SetBlockClients(false);
          });
        }
        sim_->Schedule(kHarnessAddr, 0, [this] { switch_recovering_ = false; });
      });
    });
  }
}

bool Cluster::ClientsIdle() const {
  for (const auto& c : clients_) {
    if (c->outstanding() > 0) return false;
  }
  return true;
}

bool Cluster::ServersIdle() const {
  for (const auto& s : servers_) {
    if (!s || !s->Idle()) return false;
  }
  return true;
}

bool Cluster::Quiesce(Micros deadline) {
  for (int round = 0; round < 64; ++round) {
    sim_->RunUntilIdle(deadline);
    if (!sim_->Idle()) return false;
    auto members = switch_->ResolveMembers();
    if (members.empty()) return ServersIdle() && ClientsIdle();
    for (Fingerprint fp : members) {
      ServerIndex owner = OwnerOfDirectory(fp, config_.n_servers);
      Server* s = servers_[owner].get();
      sim_->Post(owner, [s, fp] { s->ForceAggregate(fp, [] {}); });
    }
  }
  return false;
}

size_t Cluster::TotalPendingEntries() const {
  size_t n = 0;
  for (const auto& s : servers_) {
    if (s) n += s->state().PendingEntries();
  }
  return n;
}

size_t Cluster::TotalStashedEntries() const {
  size_t n = 0;
  for (const auto& s : servers_) {
    if (!s) continue;
    for (const auto& [dir, chunks] : s->state().stash) {
      for (const auto& [order, log] : chunks) n += log.size();
    }
  }
  return n;
}

size_t Cluster::ScatteredDirectories() const {
  Hasher hasher(config_.hash_seed, config_.tag_bits);
  size_t n = 0;
  for (const auto& s : servers_) {
    if (!s) continue;
    for (const auto& [key, rec] : s->state().store.inodes()) {
      if (rec.kind == InodeKind::kDirectory && switch_->stale_set().Query(hasher.FingerprintOf(key))) ++n;
    }
  }
  return n;
}

std::optional<ClientResponse> Cluster::FindCachedResponse(RequestId id) const {
  for (const auto& s : servers_) {
    if (!s) continue;
    auto it = s->state().responses.find(id);
    if (it != s->state().responses.end()) return ClientResponse::Decode(it->second);
  }
  return std::nullopt;
}

ViewReport Cluster::BuildView() const {
  ViewReport out;
  Hasher hasher(config_.hash_seed, config_.tag_bits);
  std::map<InodeKey, std::pair<InodeRecord, ServerIndex>> inodes;
  std::map<InodeKey, std::pair<DirEntryRecord, ServerIndex>> entries;
  for (ServerIndex i = 0; i < config_.n_servers; ++i) {
    if (!servers_[i]) continue;
    const MetaStore& st = servers_[i]->state().store;
    for (const auto& [k, rec] : st.inodes()) {
      if (!inodes.emplace(k, std::make_pair(rec, i)).second) {
        out.problems.push_back("inode stored twice: " + KeyDebugString(k));
      }
      ServerIndex want = OwnerOfInode(hasher, k, rec.kind, config_.n_servers);
      if (want != i) out.problems.push_back("inode on wrong server: " + KeyDebugString(k));
    }
    for (const auto& [k, rec] : st.entries()) {
      if (!entries.emplace(k, std::make_pair(rec, i)).second) {
        out.problems.push_back("entry stored twice: " + KeyDebugString(k));
      }
    }
  }
  auto root = inodes.find(InodeKey::Root());
  if (root == inodes.end()) {
    out.problems.push_back("root inode missing");
    return out;
  }
  std::set<InodeKey> seen_inodes = {InodeKey::Root()};
  std::set<InodeKey> seen_entries;
  std::vector<std::pair<std::string, InodeRecord>> stack = {{"", root->second.first}};
  while (!stack.empty()) {
    auto [path, dir] = stack.back();
    stack.pop_back();
    uint64_t count = 0;
    for (auto it = entries.lower_bound(InodeKey{dir.id, ""}); it != entries.end() && it->first.pid == dir.id; ++it) {
      ++count;
      const auto& [e, where] = it->second;
      seen_entries.insert(it->first);
      std::string child = path + "/" + it->first.name;
      auto ino = inodes.find(it->first);
      if (ino == inodes.end()) {
        out.problems.push_back("dangling entry " + child);
        continue;
      }
      const InodeRecord& rec = ino->second.first;
      if (rec.kind != e.kind) out.problems.push_back("entry kind differs from inode at " + child);
      if (OwnerOfDirectory(hasher.FingerprintOf(dir.key), config_.n_servers) != where) {
        out.problems.push_back("entry on wrong server at " + child);
      }
      seen_inodes.insert(it->first);
      out.view[child] = ViewNode{rec.kind, rec.perms};
      if (rec.IsDir()) stack.emplace_back(child, rec);
    }
    if (count != dir.size) {
      out.problems.push_back("size of " + (path.empty() ? std::string("/") : path) + " is " +
                             std::to_string(dir.size) + ", holds " + std::to_string(count));
    }
  }
  for (const auto& [k, v] : inodes) {
    if (!seen_inodes.count(k)) out.problems.push_back("unreachable inode " + KeyDebugString(k));
  }
  for (const auto& [k, v] : entries) {
    if (!seen_entries.count(k)) out.problems.push_back("entry under missing directory " + KeyDebugString(k));
  }
  return out;
}

}  // namespace asyncfs
