#include "asyncfs/netsim/simulator.h"

#include <sstream>
#include <stdexcept>

namespace asyncfs {

void FaultProfile::Validate() const {
  if (loss < 0 || loss > 1 || dup < 0 || dup > 1) throw std::invalid_argument("fault probabilities must be in [0,1]");
  if (reorder_window < 0) throw std::invalid_argument("reorder window must be non-negative");
  if (base_latency < 0 || jitter < 0) throw std::invalid_argument("latency must be non-negative");
}

Simulator::Simulator(Switch& sw, FaultProfile profile) : switch_(sw), profile_(profile), rng_(profile.seed) {
  profile_.Validate();
}

void Simulator::Attach(NodeAddr addr, Node* node) { nodes_[addr] = NodeState{node, true, 0, now_}; }

void Simulator::Crash(NodeAddr addr) {
  auto& st = nodes_.at(addr);
  st.up = false;
  st.handler = nullptr;
  ++st.incarnation;
}

void Simulator::Restart(NodeAddr addr, Node* node) {
  auto& st = nodes_.at(addr);
  st.up = true;
  st.handler = node;
  st.busy_until = now_;
}

bool Simulator::IsUp(NodeAddr addr) const {
  auto it = nodes_.find(addr);
  return it != nodes_.end() && it->second.up;
}

void Simulator::Push(Event ev) {
  ev.seq = next_seq_++;
  queue_.push(std::move(ev));
}

void Simulator::Send(Packet pkt) {
  if (in_context_) {
    outbox_.push_back(std::move(pkt));
  } else {
    Transmit(std::move(pkt), now_);
  }
}

void Simulator::Charge(Micros cost) {
  if (in_context_) context_charge_ += cost;
}

TimerId Simulator::Schedule(NodeAddr owner, Micros delay, std::function<void()> fn) {
  TimerId id = next_timer_++;
  timers_[id] = std::move(fn);
  Event ev{};
  ev.time = ContextTime() + std::max<Micros>(delay, 0);
  ev.kind = EventKind::kTimer;
  ev.node = owner;
  ev.incarnation = nodes_.count(owner) ? nodes_[owner].incarnation : 0;
  ev.timer = id;
  Push(std::move(ev));
  return id;
}

void Simulator::Cancel(TimerId id) { timers_.erase(id); }

void Simulator::Log(Micros t, std::string_view type, const Packet& pkt) {
  if (!log_enabled_) return;
  std::ostringstream os;
  auto payload = pkt.Payload();
  int opcode = payload.empty() ? -1 : payload[0];
  uint64_t fp = 0;
  int ret = 0;
  if (auto h = pkt.Header()) {
    fp = h->fp.Value();
    ret = static_cast<int>(h->ret);
  }
  os << t << ' ' << type << ' ' << pkt.src << ' ' << pkt.dst << ' ' << opcode << ' ' << fp << ' ' << ret;
  log_.push_back(os.str());
}

void Simulator::Transmit(Packet pkt, Micros depart) {
  ++packets_sent_;
  Log(depart, "SEND", pkt);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if ((drop_filter_ && drop_filter_(pkt)) || (profile_.loss > 0 && coin(rng_) < profile_.loss)) {
    ++packets_dropped_;
    Log(depart, "DROP", pkt);
    return;
  }
  int copies = (profile_.dup > 0 && coin(rng_) < profile_.dup) ? 2 : 1;
  if (copies == 2) Log(depart, "DUP", pkt);
  const uint64_t link = (uint64_t{pkt.src} << 32) | pkt.dst;
  auto& q = links_[link];
  for (int c = 0; c < copies; ++c) {
    Micros ready = depart + profile_.base_latency / 2;
    if (profile_.jitter > 0) {
      std::uniform_int_distribution<Micros> j(-profile_.jitter, profile_.jitter);
      ready = std::max(depart, ready + j(rng_));
    }
    size_t displacement = 0;
    if (profile_.reorder_window > 0 && !q.empty()) {
      size_t bound = std::min<size_t>(profile_.reorder_window, q.size());
      std::uniform_int_distribution<size_t> d(0, bound);
      displacement = d(rng_);
    }
    q.insert(q.end() - static_cast<std::ptrdiff_t>(displacement), InFlight{ready, pkt});
    Event ev{};
    ev.time = ready;
    ev.kind = EventKind::kLinkCheck;
    ev.link = link;
    Push(std::move(ev));
  }
}

void Simulator::CheckLink(uint64_t link, Micros t) {
  auto it = links_.find(link);
  if (it == links_.end()) return;
  auto& q = it->second;
  while (!q.empty() && q.front().ready <= t) {
    Packet pkt = std::move(q.front().pkt);
    q.pop_front();
    for (auto& out : switch_.Process(std::move(pkt))) {
      Log(t, "SWITCH", out);
      Event ev{};
      ev.time = t + (profile_.base_latency - profile_.base_latency / 2);
      ev.kind = EventKind::kDeliver;
      ev.node = out.dst;
      ev.pkt = std::make_shared<Packet>(std::move(out));
      Push(std::move(ev));
    }
  }
  if (q.empty()) links_.erase(it);
}

void Simulator::RunInContext(NodeAddr node, Micros start, const std::function<void()>& fn) {
  in_context_ = true;
  current_ = node;
  context_start_ = start;
  context_charge_ = 0;
  outbox_.clear();
  bool crashed = false;
  try {
    fn();
  } catch (const CrashSignal&) {
    crashed = true;
  }
  Micros end = context_start_ + context_charge_;
  std::vector<Packet> sends = std::move(outbox_);
  outbox_.clear();
  in_context_ = false;
  if (auto it = nodes_.find(node); it != nodes_.end()) it->second.busy_until = end;
  for (auto& p : sends) Transmit(std::move(p), end);
  if (crashed) {
    Crash(node);
    if (on_crash_) on_crash_(node);
  }
}

void Simulator::Dispatch(Event& ev) {
  switch (ev.kind) {
    case EventKind::kLinkCheck:
      CheckLink(ev.link, ev.time);
      return;
    case EventKind::kDeliver: {
      auto it = nodes_.find(ev.node);
      if (it == nodes_.end() || !it->second.up) {
        ++packets_dropped_;
        Log(ev.time, "LOST", *ev.pkt);
        return;
      }
      if (it->second.busy_until > ev.time) {
        ev.time = it->second.busy_until;
        Push(std::move(ev));
        return;
      }
      Log(ev.time, "DELIVER", *ev.pkt);
      Node* handler = it->second.handler;
      auto pkt = ev.pkt;
      RunInContext(ev.node, ev.time, [&] { handler->OnPacket(*pkt); });
      return;
    }
    case EventKind::kTimer: {
      auto t = timers_.find(ev.timer);
      if (t == timers_.end()) return;
      auto it = nodes_.find(ev.node);
      if (it != nodes_.end()) {
        if (!it->second.up || it->second.incarnation != ev.incarnation) {
          timers_.erase(t);
          return;
        }
        if (it->second.busy_until > ev.time) {
          ev.time = it->second.busy_until;
          Push(std::move(ev));
          return;
        }
      }
      auto fn = std::move(t->second);
      timers_.erase(t);
      if (it == nodes_.end()) {
        fn();
      } else {
        RunInContext(ev.node, ev.time, fn);
      }
      return;
    }
  }
}

bool Simulator::RunOne() {
  if (queue_.empty()) return false;
  Event ev = queue_.top();
  queue_.pop();
  now_ = std::max(now_, ev.time);
  ++events_processed_;
  Dispatch(ev);
  return true;
}

size_t Simulator::RunUntilIdle(Micros deadline) {
  size_t n = 0;
  while (!queue_.empty() && queue_.top().time <= deadline) {
    RunOne();
    ++n;
  }
  return n;
}

size_t Simulator::RunUntil(const std::function<bool()>& done, Micros deadline) {
  size_t n = 0;
  while (!done() && !queue_.empty() && queue_.top().time <= deadline) {
    RunOne();
    ++n;
  }
  return n;
}

size_t Simulator::AdvanceTime(Micros ticks) {
  const Micros target = now_ + ticks;
  size_t n = 0;
  while (!queue_.empty() && queue_.top().time <= target) {
    RunOne();
    ++n;
  }
  now_ = target;
  return n;
}

}  // namespace asyncfs
