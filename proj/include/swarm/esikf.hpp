#pragma once

#include <map>
#include <vector>

#include "swarm/meas_models.hpp"
#include "swarm/nav_state.hpp"

namespace swarm {

struct ImuSample {
  double t = 0.0;            // local clock, s
  Vec3 gyro = Vec3::Zero();  // rad/s
  Vec3 accel = Vec3::Zero(); // m/s^2
};

// Continuous-time noise densities plus measurement noise defaults.
struct NoiseParams {
  double gyro_noise = 1e-3;      // rad/s/sqrt(Hz)
  double accel_noise = 1e-2;     // m/s^2/sqrt(Hz)
  double gyro_bias_rw = 1e-5;    // rad/s^2/sqrt(Hz)
  double accel_bias_rw = 1e-4;   // m/s^3/sqrt(Hz)
  double point_sigma = 0.02;     // m, per-point isotropic
  Mat3 active_obs_cov = 0.01 * Mat3::Identity();   // (0.1 m)^2
  Mat3 passive_obs_cov = 0.01 * Mat3::Identity();  // (0.1 m)^2
};

struct MeasurementBundle {
  struct ActiveObs {
    MutualObservation obs;
    TeammateStatePacket pkt;
    double tau = 0.0;
  };
  struct PassiveObs {
    MutualObservation obs;
    TeammateStatePacket pkt;
    double tau = 0.0;
  };
  std::vector<PlaneCorrespondence> planes;
  std::vector<ActiveObs> active;
  std::vector<PassiveObs> passive;
  double t_scan = 0.0;  // scan-end, local clock

  bool empty() const { return planes.empty() && active.empty() && passive.empty(); }
};

// Marginalized extrinsic treated as exogenous noise during a degenerate
// update: fixed value plus its covariance folded into the measurement noise.
struct ExogenousExtrinsic {
  Pose pose;
  Mat6 cov = Mat6::Zero();
};

// Propagates mean and covariance through one IMU interval (Euler
// discretization of the kinematic model, process noise zeroed in the mean).
// Extrinsic blocks are untouched. Returns false (state unchanged) on a
// non-finite sample.
bool predict(NavState& x, StateCovariance& P, const ImuSample& imu, double dt,
             const NoiseParams& q);

// Error-state transition Jacobian of the ego block for one interval;
// identity elsewhere. Exposed for finite-difference validation.
Eigen::Matrix<double, 18, 18> predict_jacobian(const NavState& x, const ImuSample& imu,
                                               double dt);

struct UpdateOptions {
  int max_iters = 5;
  double tol = 1e-6;
};

struct UpdateResult {
  bool updated = false;  // false: empty bundle, prediction returned unchanged
  int iters = 0;
  double final_dx = 0.0;
  std::vector<double> costs;  // objective at each linearization point
};

// Iterated error-state update over the stacked bundle. Extrinsic blocks
// referenced by mutual observations are taken from the state when present,
// otherwise from `exogenous` with their covariance projected into the
// effective measurement noise.
UpdateResult iterated_update(NavState& x, StateCovariance& P,
                             const MeasurementBundle& bundle, const NoiseParams& q,
                             const std::map<int, ExogenousExtrinsic>& exogenous = {},
                             const UpdateOptions& opts = {});

}  // namespace swarm
