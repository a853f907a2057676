#include "swarm/meas_models.hpp"

#include <Eigen/SVD>

namespace swarm {

PointResidual point_residual_blocks(const NavState& x, const PlaneCorrespondence& c,
                                    double sigma_p) {
  PointResidual out;
  const Vec3 world_pt = x.rot * c.point + x.pos;
  out.r = c.normal.dot(world_pt - c.anchor);
  out.J_rot = -(c.normal.transpose() * x.rot * skew(c.point)).transpose();
  out.J_pos = c.normal;
  // u' R Sigma_p R' u with isotropic Sigma_p collapses to sigma_p^2.
  out.eff_var = sigma_p * sigma_p;
  return out;
}

std::pair<double, Eigen::RowVectorXd> point_residual(const NavState& x,
                                                     const PlaneCorrespondence& c,
                                                     double sigma_p) {
  const PointResidual b = point_residual_blocks(x, c, sigma_p);
  Eigen::RowVectorXd J = Eigen::RowVectorXd::Zero(x.dim());
  J.segment<3>(kIdxRot) = b.J_rot.transpose();
  J.segment<3>(kIdxPos) = b.J_pos.transpose();
  return {b.r, J};
}

ObsResidual active_obs_residual(const NavState& x, const Pose& ext,
                                const MutualObservation& obs,
                                const TeammateStatePacket& pkt, double tau) {
  ObsResidual out;
  // Constant velocity compensation of the teammate position from its
  // estimation time to the self scan-end time.
  const double dt = obs.t_obs - pkt.t + tau;
  const Vec3 p_comp = pkt.pose.pos + pkt.vel * dt;

  const Mat3 Rb_t = x.rot.transpose();
  const Vec3 s = ext.rot * p_comp + ext.pos - x.pos;  // self global frame
  const Vec3 h = Rb_t * s;

  out.r = obs.meas - h;
  out.J_rot = skew(Rb_t * s);
  out.J_pos = -Rb_t;
  out.J_ext_rot = -Rb_t * ext.rot * skew(p_comp);
  out.J_ext_pos = Rb_t;

  const Mat3 J_npj = Rb_t * ext.rot;  // teammate position noise
  const Mat3 pos_cov = pkt.pose_cov.bottomRightCorner<3, 3>();
  out.eff_cov = obs.cov + J_npj * pos_cov * J_npj.transpose();
  return out;
}

ObsResidual passive_obs_residual(const NavState& x, const Pose& ext,
                                 const MutualObservation& obs,
                                 const TeammateStatePacket& pkt, double tau,
                                 double t_scan) {
  ObsResidual out;
  // Compensation of the self position from the self scan time to the
  // teammate's estimation time.
  const double dt = pkt.t - t_scan - tau;
  const Vec3 p_comp = x.pos + x.vel * dt;

  const Mat3 Rgj_t = ext.rot.transpose();
  const Mat3 Rbj_t = pkt.pose.rot.transpose();
  const Vec3 w = Rgj_t * (p_comp - ext.pos);  // teammate global frame
  const Vec3 h = Rbj_t * (w - pkt.pose.pos);

  out.r = obs.meas - h;
  out.J_pos = Rbj_t * Rgj_t;
  out.J_vel = Rbj_t * Rgj_t * dt;
  out.J_ext_rot = Rbj_t * skew(w);
  out.J_ext_pos = -Rbj_t * Rgj_t;

  // Teammate pose noise n_Tj enters through the received pose (right
  // perturbation): d h / d n_theta = [h]x, d h / d n_pos = -Rbj'.
  Eigen::Matrix<double, 3, 6> Jn;
  Jn.leftCols<3>() = skew(h);
  Jn.rightCols<3>() = -Rbj_t;
  out.eff_cov = obs.cov + Jn * pkt.pose_cov * Jn.transpose();
  return out;
}

ObsResidual active_obs_residual(const NavState& x, const MutualObservation& obs,
                                const TeammateStatePacket& pkt, double tau) {
  auto it = x.extrinsics.find(obs.observed);
  if (it == x.extrinsics.end()) {
    throw std::invalid_argument("active_obs_residual: no extrinsic for teammate " +
                                std::to_string(obs.observed));
  }
  return active_obs_residual(x, it->second, obs, pkt, tau);
}

ObsResidual passive_obs_residual(const NavState& x, const MutualObservation& obs,
                                 const TeammateStatePacket& pkt, double tau,
                                 double t_scan) {
  auto it = x.extrinsics.find(obs.observer);
  if (it == x.extrinsics.end()) {
    throw std::invalid_argument("passive_obs_residual: no extrinsic for teammate " +
                                std::to_string(obs.observer));
  }
  return passive_obs_residual(x, it->second, obs, pkt, tau, t_scan);
}

double degeneration_metric(const NavState& x,
                           const std::vector<PlaneCorrespondence>& cs) {
  if (cs.empty()) return 0.0;
  MatX J(cs.size(), 6);
  for (size_t i = 0; i < cs.size(); ++i) {
    J.block<1, 3>(i, 0) = -cs[i].normal.transpose() * x.rot * skew(cs[i].point);
    J.block<1, 3>(i, 3) = cs[i].normal.transpose();
  }
  Eigen::JacobiSVD<MatX> svd(J);
  return svd.singularValues().tail<1>()(0);
}

}  // namespace swarm
