#pragma once

#include <random>
#include <vector>

#include "swarm/esikf.hpp"
#include "swarm/init.hpp"

namespace swarm {

// Bounded rectangular patch of an infinite plane.
struct PlanePatch {
  Vec3 normal{0.0, 0.0, 1.0};  // unit, world frame
  Vec3 center = Vec3::Zero();
  Vec3 e1{1.0, 0.0, 0.0};  // in-plane unit axes
  Vec3 e2{0.0, 1.0, 0.0};
  double half1 = 1.0;
  double half2 = 1.0;
};

struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();
};

// True if the open segment a->b passes through the box interior.
bool segment_hits_box(const Vec3& a, const Vec3& b, const Box& box);

struct World {
  std::vector<PlanePatch> patches;
  std::vector<Box> occluders;
  Vec3 gravity{0.0, 0.0, -9.81};
};

// Closed rectangular room, normals inward; optionally adds interior pillar
// boxes (their side faces become patches and the boxes occlude).
World make_room(const Vec3& lo, const Vec3& hi);
void add_box_obstacle(World& world, const Box& box);

// Straight corridor along +x from x=0 to x=length with an entrance room
// behind it. All corridor surface normals are orthogonal to x; only the far
// end cap constrains x, so the interior is degenerate for a short-range rig.
World make_corridor(double length, double width, double height,
                    double entrance_size);

// Ground plane plus randomly placed square pillars ("trees") that both
// constrain the estimate and occlude mutual observation.
World make_forest(const Vec3& extent, int tree_count, double tree_half_width,
                  uint64_t seed);

enum class TrajKind { Hover, Figure8, Line };

// Analytic ground-truth trajectory. Motion segments are time-warped with a
// C2 ramp so velocity and acceleration are zero at segment boundaries.
struct TruthSample {
  Pose pose;             // world frame
  Vec3 vel = Vec3::Zero();
  Vec3 acc = Vec3::Zero();
  Vec3 angvel = Vec3::Zero();  // body frame
};

class TruthTrajectory {
 public:
  static TruthTrajectory hover(const Pose& base);
  // Lissajous x = A sin th, y = A/2 sin 2th at the given local height, yaw
  // tangent to the path; active on [t_begin, t_end).
  static TruthTrajectory figure8(const Pose& base, double scale, double period,
                                 double height, double t_begin = 0.0,
                                 double t_end = 1e18, double ramp = 2.0);
  // Straight run from the base origin to base-local `to` over [t_begin, t_end].
  static TruthTrajectory line(const Pose& base, const Vec3& to, double t_begin,
                              double t_end);

  TruthSample eval(double t) const;
  const Pose& base() const { return base_; }

 private:
  TrajKind kind_ = TrajKind::Hover;
  Pose base_;
  double scale_ = 1.0, period_ = 10.0, height_ = 0.0;
  double t_begin_ = 0.0, t_end_ = 0.0, ramp_ = 2.0;
  Vec3 to_ = Vec3::Zero();
};

struct SensorRig {
  double scan_rate = 10.0;   // Hz
  double imu_rate = 200.0;   // Hz
  double fov_azimuth = 360.0;   // deg, full width about body +x
  double fov_elevation = 59.0;  // deg, full width about the body xy plane
  double max_range = 30.0;      // m
  int points_per_scan = 128;
  int marker_points = 4;            // returns emitted per visible teammate
  double marker_sigma = 0.05;       // m, centroid noise
  double marker_reflectivity = 230.0;
  int junk_returns = 2;             // low-reflectivity returns per scan
  int obs_cap = 1000;               // keep at most this many nearest teammates
};

// Inverts the kinematic model exactly: w_m = w_body + b_g + n,
// a_m = R'(a_world - g) + b_a + n. `dt` is the sample interval; the white
// noise densities in NoiseParams are discretized as sigma/sqrt(dt).
ImuSample sample_imu(const TruthTrajectory& traj, double t, const Vec3& gravity,
                     const NoiseParams& noise, const Vec3& bias_gyro,
                     const Vec3& bias_accel, double dt, std::mt19937_64& rng);

// Plane correspondences for a scan at true time t. `frame` is the world
// pose of the UAV's global frame; emitted normals/anchors live in that
// frame, points in the body frame. Points are perturbed along the plane
// normal with sigma_p; zero-noise points lie exactly on their planes.
std::vector<PlaneCorrespondence> sample_planes(const World& world, const Pose& body_w,
                                               const Pose& frame, const SensorRig& rig,
                                               double sigma_p, std::mt19937_64& rng);

// One marker cluster per visible teammate (FoV, range, occlusion tested),
// plus a few sub-threshold junk returns. Cluster points are arranged
// symmetrically around the noisy centroid so their mean is the centroid.
struct MarkerCluster {
  int true_id = -1;  // diagnostic tag, not visible to the estimator path
  std::vector<MarkerReturn> points;
  Vec3 centroid = Vec3::Zero();  // body frame
};

std::vector<MarkerCluster> sample_markers(const Pose& observer_w,
                                          const std::vector<std::pair<int, Vec3>>& teammates_w,
                                          const SensorRig& rig,
                                          const std::vector<Box>& occluders,
                                          std::mt19937_64& rng);

}  // namespace swarm
