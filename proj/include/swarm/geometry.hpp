#pragma once

#include <Eigen/Dense>
#include <vector>

namespace swarm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Angle below which series expansions replace the closed-form
// Rodrigues/log expressions (keeps relative error < 1e-12 in double).
inline constexpr double kSmallAngle = 1e-7;

// Skew-symmetric matrix of v, so that skew(v) * u == v x u.
Mat3 skew(const Vec3& v);

// Exponential map R^3 -> SO(3). Total function; second-order Taylor
// branch for ||w|| < kSmallAngle.
Mat3 exp_so3(const Vec3& w);

// Principal logarithm SO(3) -> R^3 with ||result|| <= pi.
// Near-identity uses a series, near-pi falls back to the eigen-axis.
Vec3 log_so3(const Mat3& R);

// Right Jacobian of exp_so3 and its inverse.
Mat3 right_jacobian_so3(const Vec3& w);
Mat3 inv_right_jacobian_so3(const Vec3& w);

// Geodesic distance between two rotations, radians in [0, pi].
double rotation_angle(const Mat3& a, const Mat3& b);

// True iff R'R = I and det(R) = +1 within tol.
bool is_rotation(const Mat3& R, double tol = 1e-9);

// Rigid transform; T o p = R p + t.
struct Pose {
  Mat3 rot = Mat3::Identity();
  Vec3 pos = Vec3::Zero();

  Pose() = default;
  Pose(const Mat3& r, const Vec3& p) : rot(r), pos(p) {}

  Vec3 act(const Vec3& p) const { return rot * p + pos; }
  Pose inverse() const { return Pose(rot.transpose(), -(rot.transpose() * pos)); }
  Pose operator*(const Pose& o) const { return Pose(rot * o.rot, rot * o.pos + pos); }

  // Right perturbation: (R Exp(d_rot), t + d_pos).
  Pose boxplus(const Vec6& d) const;
  // Inverse of boxplus: [Log(b.R' a.R); a.t - b.t].
  Vec6 boxminus(const Pose& o) const;
};

// Componentwise error between two poses (translation meters, rotation radians).
double translation_error(const Pose& a, const Pose& b);
double rotation_error(const Pose& a, const Pose& b);

// Mean of a set of poses: arithmetic translation mean, rotation by
// iterated log-mean (converges in a few iterations for < 30 deg spread).
Pose average_poses(const std::vector<Pose>& poses, int max_iters = 5);

}  // namespace swarm
