#pragma once

#include <map>
#include <set>
#include <vector>

#include "swarm/geometry.hpp"

namespace swarm {

// Tangent-space block offsets of the ego part of the state.
inline constexpr int kIdxRot = 0;
inline constexpr int kIdxPos = 3;
inline constexpr int kIdxVel = 6;
inline constexpr int kIdxBg = 9;
inline constexpr int kIdxBa = 12;
inline constexpr int kIdxGrav = 15;
inline constexpr int kEgoDim = 18;

// Per-UAV manifold state: ego blocks plus a variable set of global-extrinsic
// blocks keyed by teammate ID. Tangent layout is ego first, then extrinsics
// in ascending teammate ID, 6 rows each (rotation, translation).
struct NavState {
  Mat3 rot = Mat3::Identity();   // attitude, body to self global frame
  Vec3 pos = Vec3::Zero();       // m
  Vec3 vel = Vec3::Zero();       // m/s
  Vec3 bg = Vec3::Zero();        // gyro bias, rad/s
  Vec3 ba = Vec3::Zero();        // accel bias, m/s^2
  Vec3 grav{0.0, 0.0, -9.81};    // gravity in the self global frame, m/s^2
  std::map<int, Pose> extrinsics;  // teammate ID -> self-global from teammate-global

  int ext_count() const { return static_cast<int>(extrinsics.size()); }
  int dim() const { return kEgoDim + 6 * ext_count(); }
  bool has_extrinsic(int id) const { return extrinsics.count(id) > 0; }

  // Tangent offset of teammate id's extrinsic block. Throws on unknown id.
  int ext_offset(int id) const;

  Pose pose() const { return Pose(rot, pos); }

  NavState boxplus(const VecX& delta) const;
  VecX boxminus(const NavState& other) const;
};

using StateCovariance = MatX;

// Block-diagonal initial covariance for a freshly appended extrinsic.
Mat6 default_extrinsic_cov(double rot_std_rad, double pos_std_m);

// Appends teammate j's extrinsic block initialized at T0 with covariance
// block S0 and zero cross-covariance. Throws if j is already present.
void append_extrinsic(NavState& x, StateCovariance& P, int id, const Pose& T0,
                      const Mat6& S0);

// Result of marginalizing the unobserved extrinsic blocks.
struct Partition {
  NavState x1;                    // ego + observed extrinsics
  StateCovariance cov1;           // marginal of x1 (block extraction)
  std::map<int, Pose> x2;         // unobserved extrinsics
  StateCovariance cov2;           // marginal of x2
  std::vector<int> observed_ids;  // ascending
  std::vector<int> hidden_ids;    // ascending
};

// Gaussian marginalization by block extraction; cross blocks discarded.
// Throws if `observed` contains an id without an extrinsic block.
Partition partition(const NavState& x, const StateCovariance& P,
                    const std::set<int>& observed);

// Re-assembles the joint state from the updated sub-state x1 and the
// untouched sub-state x2; joint covariance is block-diagonal.
// Throws if x1 and x2 overlap in teammate ids.
void reinitialize(const NavState& x1, const StateCovariance& cov1,
                  const std::map<int, Pose>& x2, const StateCovariance& cov2,
                  NavState& x_out, StateCovariance& P_out);

}  // namespace swarm
