#include "swarm/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace swarm {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 exp_so3(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 W = skew(w);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + W + 0.5 * W * W;
  }
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + s * W + c * W * W;
}

Vec3 log_so3(const Mat3& R) {
  const double tr = R.trace();
  const double cos_theta = std::clamp(0.5 * (tr - 1.0), -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  const Vec3 v(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));

  if (theta < 1e-5) {
    // theta/(2 sin theta) ~ 0.5 (1 + theta^2/6 + 7 theta^4/360)
    const double t2 = theta * theta;
    return 0.5 * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0) * v;
  }
  if (theta < M_PI - 1e-4) {
    return (theta / (2.0 * std::sin(theta))) * v;
  }

  // Near pi the antisymmetric part vanishes; recover the axis as the
  // dominant eigenvector of the symmetric part.
  Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (R + R.transpose()));
  Vec3 axis = es.eigenvectors().col(2);  // eigenvalue closest to +1
  axis.normalize();
  // Pick the sign consistent with the (possibly tiny) antisymmetric part,
  // falling back to a fixed convention at exactly pi.
  double sgn = v.dot(axis);
  if (std::abs(sgn) < 1e-12) {
    sgn = (axis.x() != 0.0) ? axis.x() : (axis.y() != 0.0 ? axis.y() : axis.z());
  }
  if (sgn < 0.0) axis = -axis;
  return theta * axis;
}

Mat3 right_jacobian_so3(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 W = skew(w);
  if (theta < kSmallAngle) {
    return Mat3::Identity() - 0.5 * W + (1.0 / 6.0) * W * W;
  }
  const double t2 = theta * theta;
  const double c1 = (1.0 - std::cos(theta)) / t2;
  const double c2 = (theta - std::sin(theta)) / (t2 * theta);
  return Mat3::Identity() - c1 * W + c2 * W * W;
}

Mat3 inv_right_jacobian_so3(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 W = skew(w);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + 0.5 * W + (1.0 / 12.0) * W * W;
  }
  const double t2 = theta * theta;
  const double c = 1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * W + c * W * W;
}

double rotation_angle(const Mat3& a, const Mat3& b) {
  return log_so3(a.transpose() * b).norm();
}

bool is_rotation(const Mat3& R, double tol) {
  const double ortho = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

Pose Pose::boxplus(const Vec6& d) const {
  return Pose(rot * exp_so3(d.head<3>()), pos + d.tail<3>());
}

Vec6 Pose::boxminus(const Pose& o) const {
  Vec6 d;
  d.head<3>() = log_so3(o.rot.transpose() * rot);
  d.tail<3>() = pos - o.pos;
  return d;
}

double translation_error(const Pose& a, const Pose& b) {
  return (a.pos - b.pos).norm();
}

double rotation_error(const Pose& a, const Pose& b) {
  return rotation_angle(a.rot, b.rot);
}

Pose average_poses(const std::vector<Pose>& poses, int max_iters) {
  if (poses.empty()) throw std::invalid_argument("average_poses: empty set");
  Pose mean = poses.front();
  mean.pos.setZero();
  for (const Pose& p : poses) mean.pos += p.pos;
  mean.pos /= static_cast<double>(poses.size());

  for (int it = 0; it < max_iters; ++it) {
    Vec3 delta = Vec3::Zero();
    for (const Pose& p : poses) delta += log_so3(mean.rot.transpose() * p.rot);
    delta /= static_cast<double>(poses.size());
    mean.rot = mean.rot * exp_so3(delta);
    if (delta.norm() < 1e-12) break;
  }
  return mean;
}

}  // namespace swarm
