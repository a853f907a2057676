#include "swarm/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace swarm {

const TrajectoryMetric* MetricsReport::find_trajectory(int estimator, int subject) const {
  for (const auto& t : trajectories) {
    if (t.estimator == estimator && t.subject == subject) return &t;
  }
  return nullptr;
}

const AgentSummary* MetricsReport::find_agent(int agent) const {
  for (const auto& a : agents) {
    if (a.agent == agent) return &a;
  }
  return nullptr;
}

double MetricsReport::mean_pos_rmse() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& t : trajectories) {
    if (t.samples > 0) {
      sum += t.pos_rmse;
      ++n;
    }
  }
  return n > 0 ? sum / n : 0.0;
}

double MetricsReport::mean_rot_rmse() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& t : trajectories) {
    if (t.samples > 0) {
      sum += t.rot_rmse;
      ++n;
    }
  }
  return n > 0 ? sum / n : 0.0;
}

std::pair<double, double> rmse(const std::vector<std::pair<double, Pose>>& est,
                               const std::function<Pose(double)>& truth,
                               const Pose& frame_align) {
  if (est.empty()) throw std::invalid_argument("rmse: empty estimate series");
  double sp = 0.0, sr = 0.0;
  for (const auto& [t, pose] : est) {
    const Pose aligned = frame_align * pose;
    const Pose ref = truth(t);
    sp += (aligned.pos - ref.pos).squaredNorm();
    const double ang = rotation_angle(aligned.rot, ref.rot);
    sr += ang * ang;
  }
  const double n = static_cast<double>(est.size());
  return {std::sqrt(sp / n), std::sqrt(sr / n)};
}

}  // namespace swarm
