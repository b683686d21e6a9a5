// Continuous-time event queue with a total, deterministic order.
#pragma once

#include <cstddef>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <vector>

namespace flsat::sim {

// Rank breaks timestamp ties: completions are handled before new starts.
enum class EventKind : int {
  UploadDone = 0,
  UploadStart = 1,
  TrainDone = 2,
  ContactStart = 3,
  DispatchStart = 4,
};

struct Event {
  double time_s = 0.0;
  EventKind kind = EventKind::ContactStart;
  std::size_t sat = 0;
  std::uint64_t seq = 0;
};

inline bool event_before(const Event& a, const Event& b) {
  if (a.time_s != b.time_s) return a.time_s < b.time_s;
  if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
  if (a.sat != b.sat) return a.sat < b.sat;
  return a.seq < b.seq;
}

class EventQueue {
 public:
  void push(double time_s, EventKind kind, std::size_t sat) {
    if (time_s < now_)
      throw std::logic_error("event scheduled before the current simulation time");
    heap_.push({time_s, kind, sat, next_seq_++});
  }

  Event pop() {
    if (heap_.empty()) throw std::logic_error("pop from an empty event queue");
    Event e = heap_.top();
    heap_.pop();
    now_ = e.time_s;
    return e;
  }

  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }
  double now() const { return now_; }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const { return event_before(b, a); }
  };
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  std::uint64_t next_seq_ = 0;
  double now_ = -1e300;
};

}  // namespace flsat::sim
