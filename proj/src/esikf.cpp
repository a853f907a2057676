#include "swarm/esikf.hpp"

#include <Eigen/Cholesky>
#include <stdexcept>

namespace swarm {

namespace {

Eigen::Matrix<double, 18, 12> noise_jacobian(const NavState& x, const Vec3& w, double dt) {
  Eigen::Matrix<double, 18, 12> Fw = Eigen::Matrix<double, 18, 12>::Zero();
  Fw.block<3, 3>(kIdxRot, 0) = -right_jacobian_so3(w * dt) * dt;
  Fw.block<3, 3>(kIdxPos, 3) = -0.5 * x.rot * dt * dt;
  Fw.block<3, 3>(kIdxVel, 3) = -x.rot * dt;
  Fw.block<3, 3>(kIdxBg, 6) = dt * Mat3::Identity();
  Fw.block<3, 3>(kIdxBa, 9) = dt * Mat3::Identity();
  return Fw;
}

}  // namespace

Eigen::Matrix<double, 18, 18> predict_jacobian(const NavState& x, const ImuSample& imu,
                                               double dt) {
  const Vec3 w = imu.gyro - x.bg;
  const Vec3 a = imu.accel - x.ba;
  Eigen::Matrix<double, 18, 18> F = Eigen::Matrix<double, 18, 18>::Identity();
  F.block<3, 3>(kIdxRot, kIdxRot) = exp_so3(w * dt).transpose();
  F.block<3, 3>(kIdxRot, kIdxBg) = -right_jacobian_so3(w * dt) * dt;
  F.block<3, 3>(kIdxPos, kIdxRot) = -0.5 * x.rot * skew(a) * dt * dt;
  F.block<3, 3>(kIdxPos, kIdxVel) = dt * Mat3::Identity();
  F.block<3, 3>(kIdxPos, kIdxBa) = -0.5 * x.rot * dt * dt;
  F.block<3, 3>(kIdxPos, kIdxGrav) = 0.5 * dt * dt * Mat3::Identity();
  F.block<3, 3>(kIdxVel, kIdxRot) = -x.rot * skew(a) * dt;
  F.block<3, 3>(kIdxVel, kIdxBa) = -x.rot * dt;
  F.block<3, 3>(kIdxVel, kIdxGrav) = dt * Mat3::Identity();
  return F;
}

bool predict(NavState& x, StateCovariance& P, const ImuSample& imu, double dt,
             const NoiseParams& q) {
  if (!(dt > 0.0) || !imu.gyro.allFinite() || !imu.accel.allFinite()) return false;

  const Vec3 w = imu.gyro - x.bg;
  const Vec3 a = imu.accel - x.ba;
  const auto F = predict_jacobian(x, imu, dt);
  const auto Fw = noise_jacobian(x, w, dt);

  // Mean: f evaluated at the interval start, noises zeroed.
  const Vec3 acc_world = x.rot * a + x.grav;
  x.pos += x.vel * dt + 0.5 * acc_world * dt * dt;
  x.vel += acc_world * dt;
  x.rot = x.rot * exp_so3(w * dt);

  // Covariance: only the ego rows/cols change, extrinsic blocks propagate
  // by identity. Strip products keep this O(18 D^2) at any swarm size.
  const int D = static_cast<int>(P.rows());
  const MatX top = F * P.topRows(kEgoDim);
  P.topRows(kEgoDim) = top;
  P.leftCols(kEgoDim) = P.leftCols(kEgoDim) * F.transpose();

  Eigen::Matrix<double, 12, 12> Qc = Eigen::Matrix<double, 12, 12>::Zero();
  Qc.block<3, 3>(0, 0) = q.gyro_noise * q.gyro_noise * Mat3::Identity();
  Qc.block<3, 3>(3, 3) = q.accel_noise * q.accel_noise * Mat3::Identity();
  Qc.block<3, 3>(6, 6) = q.gyro_bias_rw * q.gyro_bias_rw * Mat3::Identity();
  Qc.block<3, 3>(9, 9) = q.accel_bias_rw * q.accel_bias_rw * Mat3::Identity();
  P.topLeftCorner(kEgoDim, kEgoDim) += Fw * (Qc / dt) * Fw.transpose();

  const MatX strip = 0.5 * (P.topRows(kEgoDim) + P.leftCols(kEgoDim).transpose());
  P.topRows(kEgoDim) = strip;
  P.leftCols(kEgoDim) = strip.transpose();
  (void)D;
  return true;
}

namespace {

// Accumulates H' R^-1 H and H' R^-1 r for the bundle linearized at x.
// r here is "model minus measurement" so the solved correction is -delta.
void accumulate(const NavState& x, const MeasurementBundle& bundle,
                const NoiseParams& q,
                const std::map<int, ExogenousExtrinsic>& exogenous, MatX& A,
                VecX& b, double* cost) {
  const int D = x.dim();
  A.setZero(D, D);
  b.setZero(D);
  if (cost) *cost = 0.0;

  for (const auto& c : bundle.planes) {
    const PointResidual pr = point_residual_blocks(x, c, q.point_sigma);
    const double inv_var = 1.0 / std::max(pr.eff_var, 1e-12);
    Eigen::Matrix<double, 6, 1> Jrow;
    Jrow << pr.J_rot, pr.J_pos;
    A.topLeftCorner<6, 6>() += inv_var * (Jrow * Jrow.transpose());
    b.head<6>() += inv_var * pr.r * Jrow;
    if (cost) *cost += inv_var * pr.r * pr.r;
  }

  auto scatter_obs = [&](const ObsResidual& res, int teammate) {
    Mat3 eff = res.eff_cov;
    const bool in_state = x.has_extrinsic(teammate);
    if (!in_state) {
      auto it = exogenous.find(teammate);
      if (it == exogenous.end()) return;  // no source for this extrinsic
      Eigen::Matrix<double, 3, 6> Je;
      Je.leftCols<3>() = res.J_ext_rot;
      Je.rightCols<3>() = res.J_ext_pos;
      eff += Je * it->second.cov * Je.transpose();
    }
    const Mat3 W = eff.inverse();
    const Vec3 rm = -res.r;  // model minus measurement

    struct Block { int col; const Mat3* J; };
    std::vector<Block> blocks;
    blocks.push_back({kIdxRot, &res.J_rot});
    blocks.push_back({kIdxPos, &res.J_pos});
    blocks.push_back({kIdxVel, &res.J_vel});
    if (in_state) {
      const int off = x.ext_offset(teammate);
      blocks.push_back({off, &res.J_ext_rot});
      blocks.push_back({off + 3, &res.J_ext_pos});
    }
    for (const auto& bi : blocks) {
      for (const auto& bj : blocks) {
        A.block<3, 3>(bi.col, bj.col) += bi.J->transpose() * W * (*bj.J);
      }
      b.segment<3>(bi.col) += bi.J->transpose() * W * rm;
    }
    if (cost) *cost += rm.dot(W * rm);
  };

  for (const auto& ao : bundle.active) {
    const Pose* ext = nullptr;
    auto it = x.extrinsics.find(ao.obs.observed);
    if (it != x.extrinsics.end()) {
      ext = &it->second;
    } else {
      auto ex = exogenous.find(ao.obs.observed);
      if (ex == exogenous.end()) continue;
      ext = &ex->second.pose;
    }
    scatter_obs(active_obs_residual(x, *ext, ao.obs, ao.pkt, ao.tau), ao.obs.observed);
  }
  for (const auto& po : bundle.passive) {
    const Pose* ext = nullptr;
    auto it = x.extrinsics.find(po.obs.observer);
    if (it != x.extrinsics.end()) {
      ext = &it->second;
    } else {
      auto ex = exogenous.find(po.obs.observer);
      if (ex == exogenous.end()) continue;
      ext = &ex->second.pose;
    }
    scatter_obs(passive_obs_residual(x, *ext, po.obs, po.pkt, po.tau, bundle.t_scan),
                po.obs.observer);
  }
}

// M = E' X E where E is block diagonal with inv_right_jacobian blocks on
// the rotation rows of the tangent and identity elsewhere.
void conjugate_rotation_blocks(MatX& X, const NavState& x, const VecX& b_lin) {
  std::vector<int> rot_offsets{kIdxRot};
  int off = kEgoDim;
  for (const auto& e : x.extrinsics) {
    (void)e;
    rot_offsets.push_back(off);
    off += 6;
  }
  for (int o : rot_offsets) {
    const Mat3 E = inv_right_jacobian_so3(b_lin.segment<3>(o));
    X.middleRows(o, 3) = E.transpose() * X.middleRows(o, 3);
    X.middleCols(o, 3) = X.middleCols(o, 3) * E;
  }
}

}  // namespace

UpdateResult iterated_update(NavState& x, StateCovariance& P,
                             const MeasurementBundle& bundle, const NoiseParams& q,
                             const std::map<int, ExogenousExtrinsic>& exogenous,
                             const UpdateOptions& opts) {
  UpdateResult result;
  if (bundle.empty()) return result;

  const int D = x.dim();
  if (P.rows() != D || P.cols() != D) {
    throw std::invalid_argument("iterated_update: covariance dim mismatch");
  }

  const NavState prior = x;
  const MatX P_inv = P.ldlt().solve(MatX::Identity(D, D));

  MatX A_meas(D, D);
  VecX b_meas(D);
  MatX A(D, D);

  for (int it = 0; it < opts.max_iters; ++it) {
    double meas_cost = 0.0;
    accumulate(x, bundle, q, exogenous, A_meas, b_meas, &meas_cost);
    if (A_meas.isZero(0.0) && it == 0) return result;  // nothing constrains x

    const VecX b_lin = x.boxminus(prior);
    result.costs.push_back(meas_cost + b_lin.dot(P_inv * b_lin));
    MatX M = P_inv;
    conjugate_rotation_blocks(M, x, b_lin);

    A = M + A_meas;
    const VecX rhs = -(M * b_lin + b_meas);
    const VecX delta = A.ldlt().solve(rhs);

    x = x.boxplus(delta);
    result.iters = it + 1;
    result.final_dx = delta.norm();
    if (result.final_dx < opts.tol) break;
  }

  result.updated = true;
  P = A.ldlt().solve(MatX::Identity(D, D));
  P = 0.5 * (P + P.transpose()).eval();
  return result;
}

}  // namespace swarm
