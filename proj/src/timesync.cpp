#include "swarm/timesync.hpp"

#include <stdexcept>

namespace swarm {

bool process_heartbeat(TeammateTable& table, int sender_id, int addr, double now) {
  auto it = table.find(sender_id);
  if (it == table.end()) {
    TeammateEntry e;
    e.id = sender_id;
    e.addr = addr;
    e.status = LinkStatus::Connected;
    e.last_heartbeat = now;
    table.emplace(sender_id, e);
    return true;
  }
  it->second.addr = addr;
  it->second.last_heartbeat = now;
  it->second.status = LinkStatus::Connected;
  return false;
}

void timeout_scan(TeammateTable& table, double now) {
  for (auto& [id, e] : table) {
    if (now - e.last_heartbeat > kHeartbeatTimeout) e.status = LinkStatus::Disconnected;
  }
}

double ptp_offset(const std::vector<SyncExchange>& exchanges) {
  if (exchanges.empty()) throw std::invalid_argument("ptp_offset: no exchanges");
  double sum = 0.0;
  for (const auto& e : exchanges) {
    sum += 0.5 * ((e.t2 - e.t1) + (e.t3 - e.t4));
  }
  return sum / static_cast<double>(exchanges.size());
}

}  // namespace swarm
