#pragma once

#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "swarm/geometry.hpp"

namespace swarm {

struct MarkerReturn {
  Vec3 point = Vec3::Zero();  // body frame, m
  double reflectivity = 0.0;  // 0..255
};

// Keeps returns whose reflectivity exceeds the threshold; order preserving.
std::vector<MarkerReturn> reflectivity_filter(const std::vector<MarkerReturn>& points,
                                              double threshold);

struct Cluster {
  Vec3 centroid = Vec3::Zero();
  double extent = 0.0;  // max pairwise distance, m
  int size = 0;
};

// Connected components under inter-point distance <= radius. Components
// smaller than min_size or wider than max_extent are discarded.
std::vector<Cluster> euclidean_cluster(const std::vector<Vec3>& points, double radius,
                                       int min_size, double max_extent);

// Constant-velocity Kalman tracker for one candidate object, with a sliding
// trajectory window for matching.
struct TemporaryTracker {
  int id = 0;
  Vec3 pos = Vec3::Zero();  // self global frame
  Vec3 vel = Vec3::Zero();
  Mat6 cov = Mat6::Identity();  // [pos; vel]
  std::deque<std::pair<double, Vec3>> trajectory;  // (local time, position)
  int misses = 0;
  bool retired = false;
};

struct TrackerParams {
  double gate = 0.5;          // m, Euclidean acceptance radius
  int max_misses = 10;        // scans without a hit before retirement
  double accel_noise = 4.0;   // m/s^2, process noise driver
  double meas_noise = 0.05;   // m
  int window = 100;           // trajectory sliding-window capacity
};

TemporaryTracker make_tracker(int id, const Vec3& first_pos, double t,
                              const TrackerParams& p);

// Predicts, then updates with the measurement if inside the gate (appending
// to the trajectory buffer); otherwise counts a miss. Retires the tracker
// after max_misses.
TemporaryTracker tracker_step(const TemporaryTracker& tr, double dt,
                              const std::optional<Vec3>& measurement, double t,
                              const TrackerParams& p);

// Excitation gate on a trajectory: second-largest singular value of the
// scatter matrix above the threshold. Fewer than 3 points fails.
bool excitation_check(const std::vector<Vec3>& traj, double threshold);

struct TrajectoryMatch {
  Pose transform;     // maps teammate-global points onto self-global points
  double residual;    // RMS of post-alignment distances, m
  int pairs;
};

// Closed-form SE(3) alignment of two timestamped trajectories. Samples are
// paired by nearest timestamp within time_tol; needs >= 3 pairs and an
// excited pairing to succeed.
std::optional<TrajectoryMatch> match_trajectories(
    const std::vector<std::pair<double, Vec3>>& self_traj,
    const std::vector<std::pair<double, Vec3>>& teammate_traj, double time_tol,
    double excitation_threshold);

// Pose graph over global frames with SE(3) edge factors and the self frame
// pinned to identity. Edges are keyed by unordered pair; repeated
// independent estimates on an edge are averaged, duplicates dropped.
class ExtrinsicGraph {
 public:
  explicit ExtrinsicGraph(int self_id) : self_id_(self_id) {}

  // Insert an estimate of frame-k-from-frame-l. Returns true if the graph
  // changed (new edge or factor re-averaged). Self-loops are rejected.
  bool insert(int k, int l, const Pose& T);

  // Insert only if the unordered pair has no edge yet (broadcast-refined
  // extrinsics must not re-trigger existing edges).
  bool insert_if_absent(int k, int l, const Pose& T);

  bool has_edge(int k, int l) const;
  int edge_count() const { return static_cast<int>(edges_.size()); }
  int self_id() const { return self_id_; }

  // Gauss-Newton over all variables connected to the self frame, which is
  // pinned to identity. Returns self-global-from-teammate-global for every
  // reachable variable; unconnected variables are omitted.
  std::map<int, Pose> optimize(int max_iters = 20) const;

 private:
  struct Edge {
    Pose factor;                 // min(k,l) frame from max(k,l) frame
    std::vector<Pose> estimates; // accepted independent estimates, same orientation
  };
  int self_id_;
  std::map<std::pair<int, int>, Edge> edges_;
};

}  // namespace swarm
