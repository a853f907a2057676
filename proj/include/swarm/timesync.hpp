#pragma once

#include <map>
#include <optional>
#include <vector>

namespace swarm {

inline constexpr double kHeartbeatTimeout = 2.0;  // s

enum class LinkStatus { Connected, Disconnected };

struct TeammateEntry {
  int id = -1;
  int addr = 0;  // simulated network address
  LinkStatus status = LinkStatus::Connected;
  double last_heartbeat = 0.0;            // local clock
  std::optional<double> offset;           // temporal offset tau wrt this teammate, s
};

// Teammate table keyed by UAV id. Entries are never deleted; disconnection
// only flips the status.
using TeammateTable = std::map<int, TeammateEntry>;

// Returns true if the sender is new to the table (calibration should be
// scheduled by the caller). Known senders get a refreshed heartbeat stamp
// and a disconnected -> connected transition.
bool process_heartbeat(TeammateTable& table, int sender_id, int addr, double now);

// Marks entries older than the two-second timeout as disconnected.
void timeout_scan(TeammateTable& table, double now);

// One PTP peer-delay exchange: request send/receive, response send/receive.
// t1/t4 are on the requester clock, t2/t3 on the responder clock.
struct SyncExchange {
  double t1 = 0.0;
  double t2 = 0.0;
  double t3 = 0.0;
  double t4 = 0.0;
};

// Mean of the per-exchange offsets ((t2-t1)+(t3-t4))/2. The result is the
// responder-clock-minus-requester-clock offset. Throws on an empty list.
double ptp_offset(const std::vector<SyncExchange>& exchanges);

}  // namespace swarm
