#pragma once

#include <map>
#include <vector>

#include "swarm/nav_state.hpp"

namespace swarm {

// One point-to-plane constraint. Plane quantities live in the observer's
// global frame, the point in its body frame.
struct PlaneCorrespondence {
  Vec3 point = Vec3::Zero();    // body frame, m
  Vec3 normal{0.0, 0.0, 1.0};   // unit, global frame
  Vec3 anchor = Vec3::Zero();   // a point on the plane, global frame, m
};

enum class ObsKind { Active, Passive };

// Relative-position measurement between two UAVs, expressed in the
// observer's body frame at the observer's scan-end time.
struct MutualObservation {
  ObsKind kind = ObsKind::Active;
  int observer = -1;
  int observed = -1;
  Vec3 meas = Vec3::Zero();  // m, observer body frame
  double t_obs = 0.0;        // observer clock, s
  Mat3 cov = Mat3::Identity();
};

// Ego-state broadcast by a teammate, consumed as a measurement here.
struct TeammateStatePacket {
  int sender = -1;
  double t = 0.0;            // sender clock, s
  Pose pose;                 // sender body in sender global frame
  Vec3 vel = Vec3::Zero();   // sender global frame, m/s
  Mat6 pose_cov = Mat6::Zero();  // [rot; pos] tangent order
  std::map<int, Pose> extrinsics;  // refined extrinsics announced by sender
  bool degenerate = false;
};

// Residual of one point-to-plane constraint and its Jacobian blocks over
// the ego pose tangent. eff_var projects the per-point noise through the
// plane normal.
struct PointResidual {
  double r = 0.0;
  Vec3 J_rot = Vec3::Zero();  // row block, d r / d delta_theta
  Vec3 J_pos = Vec3::Zero();  // row block, d r / d delta_pos
  double eff_var = 0.0;
};

PointResidual point_residual_blocks(const NavState& x, const PlaneCorrespondence& c,
                                    double sigma_p);

// Spec-facing form: residual plus a dense row over the full state tangent.
std::pair<double, Eigen::RowVectorXd> point_residual(const NavState& x,
                                                     const PlaneCorrespondence& c,
                                                     double sigma_p = 0.0);

// Residual (measured - predicted) of a mutual observation with Jacobian
// blocks of the predicted value over the involved state blocks, and the
// effective covariance with the nonlinear noise terms projected in.
struct ObsResidual {
  Vec3 r = Vec3::Zero();          // measured - h(x)
  Mat3 J_rot = Mat3::Zero();      // d h / d ego delta_theta
  Mat3 J_pos = Mat3::Zero();      // d h / d ego delta_pos
  Mat3 J_vel = Mat3::Zero();      // d h / d ego delta_vel
  Mat3 J_ext_rot = Mat3::Zero();  // d h / d extrinsic delta_theta
  Mat3 J_ext_pos = Mat3::Zero();  // d h / d extrinsic delta_pos
  Mat3 eff_cov = Mat3::Zero();
};

// Active observation: the self LiDAR measured teammate `obs.observed` at
// obs.meas; the teammate's broadcast position is compensated to the self
// scan time with a constant velocity model. `ext` is the current estimate
// of the self-global-from-teammate-global transform.
ObsResidual active_obs_residual(const NavState& x, const Pose& ext,
                                const MutualObservation& obs,
                                const TeammateStatePacket& pkt, double tau);

// Passive observation: teammate `obs.observer` measured the self UAV at its
// own scan time; the self position (state at self scan time t_scan) is
// compensated to the teammate's scan time.
ObsResidual passive_obs_residual(const NavState& x, const Pose& ext,
                                 const MutualObservation& obs,
                                 const TeammateStatePacket& pkt, double tau,
                                 double t_scan);

// Convenience overloads that look the extrinsic up inside the state.
ObsResidual active_obs_residual(const NavState& x, const MutualObservation& obs,
                                const TeammateStatePacket& pkt, double tau);
ObsResidual passive_obs_residual(const NavState& x, const MutualObservation& obs,
                                 const TeammateStatePacket& pkt, double tau,
                                 double t_scan);

// Smallest singular value of the stacked per-point pose Jacobians
// [-u' R [p]x, u'] (6 columns). Returns 0 for an empty set.
double degeneration_metric(const NavState& x,
                           const std::vector<PlaneCorrespondence>& cs);

}  // namespace swarm
