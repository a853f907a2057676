#pragma once

#include <deque>
#include <optional>
#include <random>
#include <set>

#include "swarm/esikf.hpp"
#include "swarm/init.hpp"
#include "swarm/netsim.hpp"
#include "swarm/simworld.hpp"
#include "swarm/timesync.hpp"

namespace swarm {

struct AgentConfig {
  int id = 0;
  SensorRig rig;
  NoiseParams noise;
  UpdateOptions update;

  double imu_dt = 0.005;  // s, nominal IMU sample spacing

  // Initialization thresholds.
  double reflectivity_threshold = 200.0;
  double cluster_radius = 0.3;      // m, marker clustering
  int cluster_min_size = 3;
  double cluster_max_extent = 1.0;  // m
  double removal_radius = 0.5;      // m, known-teammate point removal sphere
  TrackerParams tracker;
  double excitation_threshold = 1.0;      // m^2 * samples on sigma_2
  double match_residual_threshold = 0.1;  // m
  double match_time_tol = 0.03;           // s
  int traj_window = 100;

  // Degeneration handling.
  double eps_degen = 2.0;
  double degen_obs_scale = 0.01;

  // Extrinsic block initialization.
  double sigma0_ext_rot = 5.0 * M_PI / 180.0;
  double sigma0_ext_pos = 0.3;

  // Network behaviour.
  double heartbeat_period = 1.0;
  double heartbeat_jitter = 0.05;
  double sync_spacing = 0.1;
  int sync_target = 30;
  double sync_deadline = 5.0;
  double staleness_limit = 2.0;      // s, constant-velocity hold
  double active_obs_max_age = 0.3;   // s, newest usable teammate packet

  double divergence_jump = 5.0;  // m per scan

  // Initial covariance diagonal.
  double p0_rot = 1e-6;
  double p0_pos = 1e-6;
  double p0_vel = 1e-2;
  double p0_bg = 1e-4;
  double p0_ba = 1e-2;
  double p0_grav = 1e-4;

  // Feature toggles.
  bool marginalization = true;
  bool degeneration_handling = true;
  bool temporal_compensation = true;
  bool fgo = true;

  uint64_t seed = 0;
};

struct ScanProducts {
  std::vector<PlaneCorrespondence> planes;
  std::vector<MarkerCluster> markers;
};

struct MutualEstimate {
  int teammate = -1;
  Pose pose;           // teammate body in self global frame
  Vec3 vel = Vec3::Zero();
  double staleness = 0.0;
  bool predicted = false;  // constant-velocity hold rather than fresh packet
};

struct ScanTelemetry {
  int scan_index = -1;
  double t = 0.0;  // local clock
  Pose pose;
  Vec3 vel = Vec3::Zero();
  double sigma_min = 0.0;
  int K = 0;
  bool degenerate = false;
  bool updated = false;
  double update_us = 0.0;
};

struct CalibRecord {
  int teammate = -1;
  double t_detect = -1.0;    // first tracker sample (local clock)
  double t_calibrated = -1.0;
  Pose initial;
  enum class Source { Match, Graph, Preload } source = Source::Match;
};

// One UAV: recurrent sensor ingestion, initialization sub-modules,
// marginalized ESIKF update with the degeneration branch, mutual state
// output, and result broadcast. Interacts with the world only through
// ScanProducts and SwarmMessages.
class Agent {
 public:
  explicit Agent(const AgentConfig& cfg);

  void on_imu(const ImuSample& imu);

  // Routes one delivered message; may emit replies (sync responses).
  std::vector<SwarmMessage> on_message(const SwarmMessage& msg, double t_arrival);

  // Heartbeats and sync requests that fell due by local time t.
  std::vector<SwarmMessage> poll(double t);

  // The per-scan pipeline; returns the messages to broadcast.
  std::vector<SwarmMessage> on_scan(const ScanProducts& products, double t_scan);

  std::vector<MutualEstimate> mutual_states(double t) const;

  // Installs a pre-calibrated teammate (extrinsic + temporal offset).
  void preload_teammate(int id, const Pose& ext, double tau, double now);

  const NavState& state() const { return x_; }
  const StateCovariance& cov() const { return P_; }
  const TeammateTable& table() const { return table_; }
  const ScanTelemetry& telemetry() const { return telemetry_; }
  const std::vector<CalibRecord>& calib_records() const { return calib_; }
  bool diverged() const { return diverged_; }
  double diverged_at() const { return diverged_at_; }
  int frozen_violations() const { return frozen_violations_; }
  int degenerate_scans() const { return degenerate_scans_; }
  int id() const { return cfg_.id; }
  const AgentConfig& config() const { return cfg_; }

  // RMS of mutual-observation innovation norms accumulated so far.
  double obs_innovation_rms() const;

 private:
  struct SyncState {
    std::vector<SyncExchange> exchanges;
    std::set<double> outstanding;  // pending request t1 stamps
    double started = 0.0;
    double next_request = 0.0;
    bool done = false;
  };
  struct PendingPassive {
    MutualObservation obs;
    double arrival = 0.0;
  };

  SwarmMessage make_msg(const Payload& p, double t) const;
  void predict_to(double t_scan);
  void finish_sync(int teammate, SyncState& st);
  std::optional<Vec3> predicted_teammate_body_pos(int id, double t) const;
  void run_init_pipeline(const std::vector<MarkerReturn>& returns, double t,
                         std::vector<SwarmMessage>& out);
  void run_graph_calibration(double t);

  AgentConfig cfg_;
  NavState x_;
  StateCovariance P_;
  TeammateTable table_;
  std::map<int, SyncState> sync_;
  std::map<int, std::deque<TeammateStatePacket>> recent_pkts_;
  std::map<int, double> latest_pkt_arrival_;
  std::map<int, std::deque<std::pair<double, Vec3>>> recv_traj_;
  std::vector<TemporaryTracker> trackers_;
  int next_tracker_id_ = 0;
  std::map<int, double> tracker_birth_;  // tracker id -> local time
  ExtrinsicGraph graph_;
  bool graph_dirty_ = false;
  std::vector<PendingPassive> pending_passive_;
  std::deque<ImuSample> imu_buffer_;
  double last_imu_t_ = std::numeric_limits<double>::quiet_NaN();
  int scan_index_ = -1;
  double last_scan_t_ = std::numeric_limits<double>::quiet_NaN();
  bool diverged_ = false;
  double diverged_at_ = -1.0;
  int frozen_violations_ = 0;
  int degenerate_scans_ = 0;
  ScanTelemetry telemetry_;
  std::vector<CalibRecord> calib_;
  double next_heartbeat_ = 0.0;
  std::mt19937_64 rng_;
  double obs_innov_sq_ = 0.0;
  int obs_innov_n_ = 0;
};

}  // namespace swarm
