#include "asyncfs/client/client.h"

#include "asyncfs/common/errors.h"

namespace asyncfs {

std::optional<std::vector<std::string>> SplitPath(std::string_view path) {
  if (path.empty() || path[0] != '/') return std::nullopt;
  std::vector<std::string> out;
  size_t i = 1;
  while (i <= path.size()) {
    size_t j = path.find('/', i);
    if (j == std::string_view::npos) j = path.size();
    auto name = path.substr(i, j - i);
    if (!name.empty()) {
      if (!IsValidName(name)) return std::nullopt;
      out.emplace_back(name);
    }
    i = j + 1;
  }
  return out;
}

struct Client::Op {
  Opcode op;
  std::vector<std::string> comps;
  std::vector<std::string> dst_comps;
  uint16_t perms = 0;
  Callback cb;
  OpResult result;
  bool stale_retried = false;
  InodeKey key;
};

Client::Client(ClientConfig config, Simulator& sim)
    : config_(config), sim_(sim), hasher_(config.hash_seed, config.tag_bits) {}

ServerIndex Client::DirOwner(const InodeKey& key) const {
  return OwnerOfDirectory(hasher_.FingerprintOf(key), config_.n_servers);
}

ServerIndex Client::FileOwner(const InodeKey& key) const { return OwnerOfFile(hasher_, key, config_.n_servers); }

void Client::Submit(Opcode op, const std::string& path, Callback cb, uint16_t perms, const std::string& dst_path) {
  auto o = std::make_shared<Op>();
  o->op = op;
  o->perms = perms;
  o->cb = std::move(cb);
  o->result.op = op;
  o->result.path = path;
  o->result.dst_path = dst_path;
  o->result.issued = sim_.ContextTime();
  auto comps = SplitPath(path);
  std::optional<std::vector<std::string>> dst;
  if (op == Opcode::kRename) dst = SplitPath(dst_path);
  bool root_ok = op == Opcode::kStatDir || op == Opcode::kReadDir;
  if (!comps || (comps->empty() && !root_ok) || (op == Opcode::kRename && (!dst || dst->empty()))) {
    o->result.err = Errc::kInval;
    o->result.completed = o->result.issued;
    o->cb(o->result);
    return;
  }
  o->comps = std::move(*comps);
  if (dst) o->dst_comps = std::move(*dst);
  Run(o);
}

void Client::Run(std::shared_ptr<Op> op) {
  std::vector<std::string> parents(op->comps.begin(), op->comps.end() - (op->comps.empty() ? 0 : 1));
  Resolve(parents, [this, op](Errc err, std::vector<PathComponent> trail) {
    if (err != Errc::kOk) {
      ClientResponse r;
      r.err = err;
      return Complete(op, r);
    }
    if (op->op != Opcode::kRename) return RunMain(op, std::move(trail), {}, InodeKind::kFile);
    std::vector<std::string> dparents(op->dst_comps.begin(), op->dst_comps.end() - 1);
    Resolve(dparents, [this, op, trail](Errc err, std::vector<PathComponent> dst_trail) {
      if (err != Errc::kOk) {
        ClientResponse r;
        r.err = err;
        return Complete(op, r);
      }
      // The source's kind decides which server owns it: ask the directory owner.
      InodeKey src{trail.back().id, op->comps.back()};
      ClientRequest q;
      q.op = Opcode::kLookup;
      q.client = addr();
      q.trail = trail;
      q.key = src;
      q.parent_key = trail.back().key;
      ++counters_.lookups;
      SendRequest(q, DirOwner(src), false, [this, op, trail, dst_trail](const ClientResponse& r) {
        InodeKind kind = r.err == Errc::kOk ? InodeKind::kDirectory : InodeKind::kFile;
        if (r.err == Errc::kStale) Evict(trail);
        if (r.err == Errc::kStale || r.err == Errc::kIo) return Complete(op, r);
        RunMain(op, trail, dst_trail, kind);
      });
    });
  });
}

void Client::Resolve(const std::vector<std::string>& dirs,
                     std::function<void(Errc, std::vector<PathComponent>)> done) {
  std::vector<PathComponent> trail = {PathComponent{InodeKey::Root(), DirectoryId::Root()}};
  ResolveStep(std::make_shared<std::vector<std::string>>(dirs), 0, std::move(trail), std::move(done));
}

void Client::ResolveStep(std::shared_ptr<std::vector<std::string>> dirs, size_t i, std::vector<PathComponent> trail,
                         std::function<void(Errc, std::vector<PathComponent>)> done) {
  while (i < dirs->size()) {
    InodeKey key{trail.back().id, (*dirs)[i]};
    auto it = cache_.find(key);
    if (it == cache_.end()) break;
    ++counters_.cache_hits;
    if (!(it->second.perms & 0100)) return done(Errc::kAcces, {});
    trail.push_back({key, it->second.id});
    ++i;
  }
  if (i == dirs->size()) return done(Errc::kOk, std::move(trail));
  InodeKey key{trail.back().id, (*dirs)[i]};
  ClientRequest q;
  q.op = Opcode::kLookup;
  q.client = addr();
  q.trail = trail;
  q.key = key;
  q.parent_key = trail.back().key;
  ++counters_.lookups;
  SendRequest(q, DirOwner(key), false, [this, dirs, i, trail, key, done](const ClientResponse& r) {
    if (r.err != Errc::kOk) {
      if (r.err == Errc::kStale) Evict(trail);
      return done(r.err, {});
    }
    cache_[key] = CachedDir{r.rec->id, r.rec->perms};
    ResolveStep(dirs, i, trail, done);
  });
}

void Client::RunMain(std::shared_ptr<Op> op, std::vector<PathComponent> trail, std::vector<PathComponent> dst_trail,
                     InodeKind kind) {
  ClientRequest q;
  q.op = op->op;
  q.client = addr();
  q.perms = op->perms;
  ServerIndex dst = 0;
  bool query = false;
  if (op->comps.empty()) {
    q.key = InodeKey::Root();
    q.parent_key = InodeKey::Root();
    q.trail.clear();
  } else {
    q.key = InodeKey{trail.back().id, op->comps.back()};
    q.parent_key = trail.back().key;
    q.trail = trail;
  }
  switch (op->op) {
    case Opcode::kMkdir:
    case Opcode::kRmdir:
    case Opcode::kLookup: dst = DirOwner(q.key); break;
    case Opcode::kStatDir:
    case Opcode::kReadDir:
      dst = DirOwner(q.key);
      query = true;
      break;
    case Opcode::kRename:
      q.dst_trail = dst_trail;
      q.dst_key = InodeKey{dst_trail.back().id, op->dst_comps.back()};
      q.dst_parent_key = dst_trail.back().key;
      q.kind = kind;
      dst = 0;
      break;
    default: dst = FileOwner(q.key); break;
  }
  op->result.server = dst;
  op->key = q.key;
  auto full = trail;
  full.insert(full.end(), dst_trail.begin(), dst_trail.end());
  RequestId id = SendRequest(q, dst, query, [this, op, full](const ClientResponse& r) {
    if (r.err == Errc::kStale) Evict(full);
    Complete(op, r);
  });
  op->result.request = id;
  op->result.attempts.push_back(id);
}

void Client::Complete(std::shared_ptr<Op> op, const ClientResponse& resp) {
  if (resp.err == Errc::kStale && !op->stale_retried) {
    // Cached path went stale: resolve once more from scratch.
    ++counters_.stale_retries;
    op->stale_retried = true;
    return Run(op);
  }
  OpResult& res = op->result;
  res.err = resp.err;
  res.ts = resp.ts;
  res.rec = resp.rec;
  res.entries = resp.entries;
  res.completed = sim_.ContextTime();
  if (resp.err == Errc::kOk) {
    if (op->op == Opcode::kMkdir && resp.rec) cache_[op->key] = CachedDir{resp.rec->id, resp.rec->perms};
    if (op->op == Opcode::kRmdir || op->op == Opcode::kRename) cache_.erase(op->key);
  }
  op->cb(res);
}

void Client::Evict(const std::vector<PathComponent>& trail) {
  for (const auto& c : trail) cache_.erase(c.key);
}

RequestId Client::SendRequest(ClientRequest req, ServerIndex dst, bool query,
                              std::function<void(const ClientResponse&)> cb) {
  req.id = (uint64_t{addr()} << 32) | ++next_counter_;
  Bytes payload = req.Encode();
  Packet pkt;
  if (query) {
    StaleSetHeader h;
    h.op = SetOp::kQuery;
    h.fp = hasher_.FingerprintOf(req.key);
    pkt = Packet::WithHeader(addr(), dst, h, payload);
  } else {
    pkt = Packet::Plain(addr(), dst, std::move(payload));
  }
  Pending& p = pending_[req.id];
  p.pkt = pkt;
  p.tries = 1;
  p.timeout = config_.initial_timeout;
  p.cb = std::move(cb);
  ++counters_.requests_sent;
  sim_.Send(std::move(pkt));
  RequestId id = req.id;
  p.timer = sim_.Schedule(addr(), p.timeout, [this, id] { OnTimeout(id); });
  return id;
}

void Client::OnTimeout(RequestId id) {
  auto it = pending_.find(id);
  if (it == pending_.end()) return;
  Pending& p = it->second;
  if (p.tries >= config_.max_tries) {
    ++counters_.timeouts;
    auto cb = std::move(p.cb);
    pending_.erase(it);
    ClientResponse r;
    r.id = id;
    r.err = Errc::kIo;
    cb(r);
    return;
  }
  ++p.tries;
  ++counters_.retransmits;
  p.timeout *= 2;
  sim_.Send(p.pkt);
  p.timer = sim_.Schedule(addr(), p.timeout, [this, id] { OnTimeout(id); });
}

void Client::OnPacket(const Packet& pkt) {
  ClientResponse resp;
  try {
    resp = ClientResponse::Decode(pkt.Payload());
  } catch (const DecodeError&) {
    return;
  }
  auto it = pending_.find(resp.id);
  if (it == pending_.end()) return;  // duplicate or late
  sim_.Cancel(it->second.timer);
  auto cb = std::move(it->second.cb);
  pending_.erase(it);
  resp.fallback.reset();
  cb(resp);
}

}  // namespace asyncfs
