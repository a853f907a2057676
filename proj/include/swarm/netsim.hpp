#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <variant>
#include <vector>

#include "swarm/meas_models.hpp"

namespace swarm {

struct Heartbeat {
  int id = -1;
  int addr = 0;
};

struct SyncRequest {
  double t1 = 0.0;  // requester clock at send
};

struct SyncResponse {
  int requester = -1;
  double t1 = 0.0;  // echoed
  double t2 = 0.0;  // responder clock at request arrival
  double t3 = 0.0;  // responder clock at response send
};

struct ExtrinsicEdge {
  int k = -1;
  int l = -1;
  Pose pose;  // frame k from frame l
};

struct TrajectorySample {
  int id = -1;
  double t = 0.0;  // sender clock
  Vec3 position = Vec3::Zero();
};

using Payload = std::variant<Heartbeat, SyncRequest, SyncResponse, TeammateStatePacket,
                             MutualObservation, ExtrinsicEdge, TrajectorySample>;

struct SwarmMessage {
  Payload payload;
  int sender = -1;
  double send_time = 0.0;  // sender clock
};

const char* variant_name(const SwarmMessage& msg);

// Payload size: 16-byte header plus 8 bytes per scalar field. Poses count 7
// scalars (quaternion + translation), symmetric 3x3/6x6 covariances 6/21.
int payload_bytes(const SwarmMessage& msg);

struct OcclusionWindow {
  double begin = 0.0;
  double end = 0.0;
};

struct LinkModel {
  double latency_mean = 0.005;        // s
  double latency_jitter = 0.002;      // s, half-width of a uniform draw
  double loss_rate = 0.0;             // in [0, 1], i.i.d. per delivery
  std::vector<OcclusionWindow> occlusions;  // intervals of total loss (true time)
};

struct Delivery {
  int recipient = -1;
  SwarmMessage msg;
  double arrival_time = 0.0;  // recipient clock
};

// Deterministic broadcast bus. Every message is fanned out to all other
// registered agents, each delivery independently drawing loss and latency
// from the link model using the bus RNG. Time is advanced explicitly.
class Bus {
 public:
  explicit Bus(uint64_t seed, LinkModel default_link = {});

  void register_agent(int id, double clock_offset);
  void unregister_agent(int id);
  bool is_registered(int id) const { return agents_.count(id) > 0; }
  void set_link(int sender, int recipient, const LinkModel& model);

  double now() const { return now_; }
  double clock_offset(int id) const { return agents_.at(id).clock_offset; }

  // Enqueues one delivery event per other registered agent. Throws if the
  // sender is not registered.
  void broadcast(const SwarmMessage& msg);

  // Broadcast with an explicit true send time <= now. Lets a reply produced
  // while draining deliveries leave at its true arrival instant rather than
  // the end of the window, keeping round-trip timestamps symmetric.
  void broadcast_at(const SwarmMessage& msg, double t_send_true);

  // Delivers all events with true arrival time in (now, now + dt], ordered
  // by (arrival time, sequence number). Arrival is stamped with the
  // recipient clock.
  std::vector<Delivery> advance(double dt);

  // Average TX/RX bytes per second for an agent over the trailing window.
  std::pair<double, double> bandwidth_report(int id, double window) const;

  // TX/RX totals since registration.
  std::pair<uint64_t, uint64_t> byte_totals(int id) const;

  struct TraceRow {
    double send_time = 0.0;     // sender clock
    double arrival_time = 0.0;  // recipient clock (send time if dropped)
    int sender = -1;
    int recipient = -1;
    const char* variant = "";
    int bytes = 0;
    bool dropped = false;
  };
  void enable_trace(bool on) { trace_enabled_ = on; }
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  struct AgentInfo {
    double clock_offset = 0.0;
    uint64_t tx_bytes = 0;
    uint64_t rx_bytes = 0;
    std::vector<std::pair<double, int>> tx_events;  // (true time, bytes)
    std::vector<std::pair<double, int>> rx_events;
  };
  struct PendingEvent {
    double arrival_true = 0.0;
    uint64_t seq = 0;
    int recipient = -1;
    SwarmMessage msg;
    bool operator<(const PendingEvent& o) const {
      return arrival_true != o.arrival_true ? arrival_true < o.arrival_true : seq < o.seq;
    }
  };

  const LinkModel& link_for(int sender, int recipient) const;

  double now_ = 0.0;
  uint64_t next_seq_ = 0;
  LinkModel default_link_;
  std::map<int, AgentInfo> agents_;
  std::map<std::pair<int, int>, LinkModel> links_;
  std::vector<PendingEvent> pending_;
  std::mt19937_64 rng_;
  bool trace_enabled_ = false;
  std::vector<TraceRow> trace_;
};

}  // namespace swarm
