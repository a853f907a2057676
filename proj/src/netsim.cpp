#include "swarm/netsim.hpp"

#include <algorithm>
#include <stdexcept>

namespace swarm {

const char* variant_name(const SwarmMessage& msg) {
  struct Visitor {
    const char* operator()(const Heartbeat&) const { return "heartbeat"; }
    const char* operator()(const SyncRequest&) const { return "sync_request"; }
    const char* operator()(const SyncResponse&) const { return "sync_response"; }
    const char* operator()(const TeammateStatePacket&) const { return "ego_state"; }
    const char* operator()(const MutualObservation&) const { return "active_obs"; }
    const char* operator()(const ExtrinsicEdge&) const { return "extrinsic_edge"; }
    const char* operator()(const TrajectorySample&) const { return "trajectory_sample"; }
  };
  return std::visit(Visitor{}, msg.payload);
}

int payload_bytes(const SwarmMessage& msg) {
  constexpr int kHeader = 16;
  constexpr int kScalar = 8;
  struct Visitor {
    int operator()(const Heartbeat&) const { return 2; }
    int operator()(const SyncRequest&) const { return 1; }
    int operator()(const SyncResponse&) const { return 4; }
    int operator()(const TeammateStatePacket& p) const {
      // t + pose(7) + vel(3) + sym 6x6 cov(21) + flag + per-extrinsic (id + pose)
      return 32 + 1 + 8 * static_cast<int>(p.extrinsics.size());
    }
    int operator()(const MutualObservation&) const {
      // ids(2) + t + meas(3) + sym 3x3 cov(6)
      return 12;
    }
    int operator()(const ExtrinsicEdge&) const { return 9; }
    int operator()(const TrajectorySample&) const { return 5; }
  };
  return kHeader + kScalar * std::visit(Visitor{}, msg.payload);
}

Bus::Bus(uint64_t seed, LinkModel default_link)
    : default_link_(std::move(default_link)), rng_(seed) {}

void Bus::register_agent(int id, double clock_offset) {
  AgentInfo info;
  info.clock_offset = clock_offset;
  agents_[id] = info;
}

void Bus::unregister_agent(int id) { agents_.erase(id); }

void Bus::set_link(int sender, int recipient, const LinkModel& model) {
  links_[{sender, recipient}] = model;
}

const LinkModel& Bus::link_for(int sender, int recipient) const {
  auto it = links_.find({sender, recipient});
  return it != links_.end() ? it->second : default_link_;
}

void Bus::broadcast(const SwarmMessage& msg) { broadcast_at(msg, now_); }

void Bus::broadcast_at(const SwarmMessage& msg, double t_send_true) {
  auto sender_it = agents_.find(msg.sender);
  if (sender_it == agents_.end()) {
    throw std::invalid_argument("Bus::broadcast: sender not registered");
  }
  const int bytes = payload_bytes(msg);
  sender_it->second.tx_bytes += bytes;
  sender_it->second.tx_events.emplace_back(t_send_true, bytes);

  for (auto& [id, info] : agents_) {
    if (id == msg.sender) continue;
    const LinkModel& link = link_for(msg.sender, id);

    bool lost = false;
    for (const auto& w : link.occlusions) {
      if (t_send_true >= w.begin && t_send_true < w.end) {
        lost = true;
        break;
      }
    }
    if (!lost && link.loss_rate > 0.0) {
      lost = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < link.loss_rate;
    }
    if (lost) {
      if (trace_enabled_) {
        trace_.push_back({msg.send_time, msg.send_time, msg.sender, id,
                          variant_name(msg), bytes, true});
      }
      continue;
    }
    double latency = link.latency_mean;
    if (link.latency_jitter > 0.0) {
      latency += std::uniform_real_distribution<double>(-link.latency_jitter,
                                                        link.latency_jitter)(rng_);
    }
    latency = std::max(latency, 0.0);
    PendingEvent ev;
    ev.arrival_true = t_send_true + latency;
    ev.seq = next_seq_++;
    ev.recipient = id;
    ev.msg = msg;
    pending_.push_back(std::move(ev));
  }
}

std::vector<Delivery> Bus::advance(double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("Bus::advance: dt must be > 0");
  const double horizon = now_ + dt;

  std::vector<PendingEvent> due;
  std::vector<PendingEvent> keep;
  keep.reserve(pending_.size());
  for (auto& ev : pending_) {
    if (ev.arrival_true <= horizon) {
      due.push_back(std::move(ev));
    } else {
      keep.push_back(std::move(ev));
    }
  }
  pending_ = std::move(keep);
  std::sort(due.begin(), due.end());

  std::vector<Delivery> out;
  out.reserve(due.size());
  for (auto& ev : due) {
    auto it = agents_.find(ev.recipient);
    if (it == agents_.end()) continue;  // recipient left the swarm in flight
    const int bytes = payload_bytes(ev.msg);
    it->second.rx_bytes += bytes;
    it->second.rx_events.emplace_back(ev.arrival_true, bytes);
    Delivery d;
    d.recipient = ev.recipient;
    d.arrival_time = ev.arrival_true + it->second.clock_offset;
    d.msg = std::move(ev.msg);
    if (trace_enabled_) {
      trace_.push_back({d.msg.send_time, d.arrival_time, d.msg.sender, d.recipient,
                        variant_name(d.msg), bytes, false});
    }
    out.push_back(std::move(d));
  }
  now_ = horizon;
  return out;
}

namespace {
double window_rate(const std::vector<std::pair<double, int>>& events, double now,
                   double window) {
  if (!(window > 0.0)) return 0.0;
  const double begin = now - window;
  uint64_t total = 0;
  for (auto it = events.rbegin(); it != events.rend() && it->first > begin; ++it) {
    total += it->second;
  }
  return static_cast<double>(total) / window;
}
}  // namespace

std::pair<double, double> Bus::bandwidth_report(int id, double window) const {
  auto it = agents_.find(id);
  if (it == agents_.end()) return {0.0, 0.0};
  return {window_rate(it->second.tx_events, now_, window),
          window_rate(it->second.rx_events, now_, window)};
}

std::pair<uint64_t, uint64_t> Bus::byte_totals(int id) const {
  auto it = agents_.find(id);
  if (it == agents_.end()) return {0, 0};
  return {it->second.tx_bytes, it->second.rx_bytes};
}

}  // namespace swarm
