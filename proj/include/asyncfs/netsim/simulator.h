#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "asyncfs/switch/switch.h"

namespace asyncfs {

struct FaultProfile {
  double loss = 0.0;
  double dup = 0.0;
  int reorder_window = 0;  // max packets a datagram may overtake on one link
  uint64_t seed = 1;
  Micros base_latency = 1000;  // one-way, split evenly around the switch
  Micros jitter = 0;           // uniform +/- on the uplink half

  void Validate() const;
};

// Receives packets and timer callbacks inside the simulator's processing
// context. A handler may throw CrashSignal to model a crash mid-handler.
class Node {
 public:
  virtual ~Node() = default;
  virtual void OnPacket(const Packet& pkt) = 0;
};

struct CrashSignal {
  NodeAddr node;
};

using TimerId = uint64_t;

// Single-threaded discrete-event fabric. Every datagram crosses the switch
// exactly once per delivered copy. Each node processes one event at a time;
// handlers charge simulated service time via Charge().
class Simulator {
 public:
  Simulator(Switch& sw, FaultProfile profile);

  void Attach(NodeAddr addr, Node* node);
  // Marks the node crashed: pending deliveries and timers are discarded.
  void Crash(NodeAddr addr);
  // Brings a crashed node back with a fresh handler object.
  void Restart(NodeAddr addr, Node* node);
  bool IsUp(NodeAddr addr) const;
  void SetCrashHandler(std::function<void(NodeAddr)> fn) { on_crash_ = std::move(fn); }

  Micros Now() const { return now_; }
  // Time at which work issued by the running handler takes effect.
  Micros ContextTime() const { return in_context_ ? context_start_ + context_charge_ : now_; }
  NodeAddr CurrentNode() const { return current_; }
  bool InContext() const { return in_context_; }

  void Send(Packet pkt);
  void Charge(Micros cost);
  TimerId Schedule(NodeAddr owner, Micros delay, std::function<void()> fn);
  void Cancel(TimerId id);
  // Runs fn in owner's processing context as soon as the node is free.
  void Post(NodeAddr owner, std::function<void()> fn) { Schedule(owner, 0, std::move(fn)); }

  bool RunOne();
  // Processes events until the queue is empty or the clock would pass `deadline`.
  size_t RunUntilIdle(Micros deadline = INT64_MAX);
  size_t RunUntil(const std::function<bool()>& done, Micros deadline = INT64_MAX);
  // Fires every event due within the next `ticks` and moves the clock forward.
  size_t AdvanceTime(Micros ticks);
  bool Idle() const { return queue_.empty(); }

  // Test hook: packets matching the predicate at send time are dropped.
  void SetDropFilter(std::function<bool(const Packet&)> f) { drop_filter_ = std::move(f); }

  void EnableEventLog(bool on) { log_enabled_ = on; }
  const std::vector<std::string>& event_log() const { return log_; }

  Switch& fabric_switch() { return switch_; }
  const FaultProfile& profile() const { return profile_; }
  uint64_t packets_sent() const { return packets_sent_; }
  uint64_t packets_dropped() const { return packets_dropped_; }
  uint64_t events_processed() const { return events_processed_; }

 private:
  enum class EventKind : uint8_t { kLinkCheck, kDeliver, kTimer };

  struct Event {
    Micros time;
    uint64_t seq;
    EventKind kind;
    NodeAddr node = 0;
    uint64_t incarnation = 0;
    uint64_t link = 0;
    TimerId timer = 0;
    std::shared_ptr<Packet> pkt;
    bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
  };

  struct InFlight {
    Micros ready;
    Packet pkt;
  };

  struct NodeState {
    Node* handler = nullptr;
    bool up = true;
    uint64_t incarnation = 0;
    Micros busy_until = 0;
  };

  void Push(Event ev);
  void Transmit(Packet pkt, Micros depart);
  void CheckLink(uint64_t link, Micros t);
  void Dispatch(Event& ev);
  void RunInContext(NodeAddr node, Micros start, const std::function<void()>& fn);
  void Log(Micros t, std::string_view type, const Packet& pkt);

  Switch& switch_;
  FaultProfile profile_;
  std::mt19937_64 rng_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  uint64_t next_seq_ = 0;
  Micros now_ = 0;

  std::unordered_map<NodeAddr, NodeState> nodes_;
  std::unordered_map<uint64_t, std::deque<InFlight>> links_;
  std::unordered_map<TimerId, std::function<void()>> timers_;
  TimerId next_timer_ = 1;

  bool in_context_ = false;
  NodeAddr current_ = 0;
  Micros context_start_ = 0;
  Micros context_charge_ = 0;
  std::vector<Packet> outbox_;

  std::function<bool(const Packet&)> drop_filter_;
  std::function<void(NodeAddr)> on_crash_;
  bool log_enabled_ = false;
  std::vector<std::string> log_;
  uint64_t packets_sent_ = 0;
  uint64_t packets_dropped_ = 0;
  uint64_t events_processed_ = 0;
};

}  // namespace asyncfs
