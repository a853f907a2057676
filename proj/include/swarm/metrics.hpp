#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "swarm/geometry.hpp"

namespace swarm {

struct TrajectoryMetric {
  int estimator = -1;
  int subject = -1;
  double pos_rmse = 0.0;
  double rot_rmse = 0.0;
  int samples = 0;
};

struct ExtrinsicMetric {
  int agent = -1;
  int teammate = -1;
  std::string source;  // match | graph | preload
  double t_calibrated = -1.0;
  double init_pos_err = 0.0;
  double init_rot_err = 0.0;
  double final_pos_err = 0.0;
  double final_rot_err = 0.0;
};

struct BandwidthMetric {
  int agent = -1;
  double tx_bps = 0.0;  // bytes per second
  double rx_bps = 0.0;
};

struct SyncMetric {
  int agent = -1;
  int teammate = -1;
  double tau_est = 0.0;
  double tau_true = 0.0;
};

struct AgentSummary {
  int agent = -1;
  double mean_update_us = 0.0;
  double max_update_us = 0.0;
  int degen_scans = 0;
  int frozen_violations = 0;
  double diverged_at = -1.0;  // < 0: never
  double obs_innov_rms = 0.0;
  double final_pos_err = 0.0;  // ego vs truth at the last scan
};

struct MetricsReport {
  std::vector<TrajectoryMetric> trajectories;
  std::vector<ExtrinsicMetric> extrinsics;
  std::vector<BandwidthMetric> bandwidth;
  std::vector<SyncMetric> sync;
  std::vector<AgentSummary> agents;
  double init_flight_distance = 0.0;
  bool init_complete = false;
  double init_complete_time = -1.0;

  const TrajectoryMetric* find_trajectory(int estimator, int subject) const;
  const AgentSummary* find_agent(int agent) const;
  double mean_pos_rmse() const;  // over every estimated trajectory
  double mean_rot_rmse() const;
};

// Position / rotation RMSE of a timestamped pose series against a truth
// sampler. frame_align maps the estimator's global frame into the truth
// frame. Throws if the series is empty.
std::pair<double, double> rmse(const std::vector<std::pair<double, Pose>>& est,
                               const std::function<Pose(double)>& truth,
                               const Pose& frame_align);

}  // namespace swarm
