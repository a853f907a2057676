#include "swarm/nav_state.hpp"

#include <stdexcept>

namespace swarm {

int NavState::ext_offset(int id) const {
  int off = kEgoDim;
  for (const auto& [k, v] : extrinsics) {
    if (k == id) return off;
    off += 6;
  }
  throw std::invalid_argument("NavState: no extrinsic block for id " + std::to_string(id));
}

NavState NavState::boxplus(const VecX& delta) const {
  if (delta.size() != dim()) {
    throw std::invalid_argument("boxplus: tangent dim " + std::to_string(delta.size()) +
                                " does not match state dim " + std::to_string(dim()));
  }
  NavState out = *this;
  out.rot = rot * exp_so3(delta.segment<3>(kIdxRot));
  out.pos = pos + delta.segment<3>(kIdxPos);
  out.vel = vel + delta.segment<3>(kIdxVel);
  out.bg = bg + delta.segment<3>(kIdxBg);
  out.ba = ba + delta.segment<3>(kIdxBa);
  out.grav = grav + delta.segment<3>(kIdxGrav);
  int off = kEgoDim;
  for (auto& [id, T] : out.extrinsics) {
    T.rot = T.rot * exp_so3(delta.segment<3>(off));
    T.pos = T.pos + delta.segment<3>(off + 3);
    off += 6;
  }
  return out;
}

VecX NavState::boxminus(const NavState& other) const {
  if (dim() != other.dim()) {
    throw std::invalid_argument("boxminus: state dims differ");
  }
  auto it_a = extrinsics.begin();
  auto it_b = other.extrinsics.begin();
  for (; it_a != extrinsics.end(); ++it_a, ++it_b) {
    if (it_a->first != it_b->first) {
      throw std::invalid_argument("boxminus: extrinsic block layouts differ");
    }
  }
  VecX d(dim());
  d.segment<3>(kIdxRot) = log_so3(other.rot.transpose() * rot);
  d.segment<3>(kIdxPos) = pos - other.pos;
  d.segment<3>(kIdxVel) = vel - other.vel;
  d.segment<3>(kIdxBg) = bg - other.bg;
  d.segment<3>(kIdxBa) = ba - other.ba;
  d.segment<3>(kIdxGrav) = grav - other.grav;
  int off = kEgoDim;
  it_b = other.extrinsics.begin();
  for (it_a = extrinsics.begin(); it_a != extrinsics.end(); ++it_a, ++it_b) {
    d.segment<3>(off) = log_so3(it_b->second.rot.transpose() * it_a->second.rot);
    d.segment<3>(off + 3) = it_a->second.pos - it_b->second.pos;
    off += 6;
  }
  return d;
}

Mat6 default_extrinsic_cov(double rot_std_rad, double pos_std_m) {
  Mat6 S = Mat6::Zero();
  S.topLeftCorner<3, 3>() = rot_std_rad * rot_std_rad * Mat3::Identity();
  S.bottomRightCorner<3, 3>() = pos_std_m * pos_std_m * Mat3::Identity();
  return S;
}

void append_extrinsic(NavState& x, StateCovariance& P, int id, const Pose& T0,
                      const Mat6& S0) {
  if (x.has_extrinsic(id)) {
    throw std::invalid_argument("append_extrinsic: duplicate teammate id " + std::to_string(id));
  }
  x.extrinsics.emplace(id, T0);

  const int old_dim = static_cast<int>(P.rows());
  const int off = x.ext_offset(id);  // insertion point in the new layout
  StateCovariance Pn = StateCovariance::Zero(old_dim + 6, old_dim + 6);
  Pn.topLeftCorner(off, off) = P.topLeftCorner(off, off);
  Pn.block(off, off, 6, 6) = S0;
  const int tail = old_dim - off;
  if (tail > 0) {
    Pn.bottomRightCorner(tail, tail) = P.bottomRightCorner(tail, tail);
    Pn.topRightCorner(off, tail) = P.topRightCorner(off, tail);
    Pn.bottomLeftCorner(tail, off) = P.bottomLeftCorner(tail, off);
  }
  P = std::move(Pn);
}

namespace {

std::vector<int> block_indices(const NavState& x, const std::vector<int>& ids,
                               bool include_ego) {
  std::vector<int> idx;
  if (include_ego) {
    for (int i = 0; i < kEgoDim; ++i) idx.push_back(i);
  }
  for (int id : ids) {
    const int off = x.ext_offset(id);
    for (int i = 0; i < 6; ++i) idx.push_back(off + i);
  }
  return idx;
}

MatX extract(const StateCovariance& P, const std::vector<int>& rows,
             const std::vector<int>& cols) {
  MatX out(rows.size(), cols.size());
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < cols.size(); ++c) out(r, c) = P(rows[r], cols[c]);
  return out;
}

}  // namespace

Partition partition(const NavState& x, const StateCovariance& P,
                    const std::set<int>& observed) {
  for (int id : observed) {
    if (!x.has_extrinsic(id)) {
      throw std::invalid_argument("partition: unknown teammate id " + std::to_string(id));
    }
  }
  Partition part;
  part.x1.rot = x.rot;
  part.x1.pos = x.pos;
  part.x1.vel = x.vel;
  part.x1.bg = x.bg;
  part.x1.ba = x.ba;
  part.x1.grav = x.grav;
  for (const auto& [id, T] : x.extrinsics) {
    if (observed.count(id)) {
      part.x1.extrinsics.emplace(id, T);
      part.observed_ids.push_back(id);
    } else {
      part.x2.emplace(id, T);
      part.hidden_ids.push_back(id);
    }
  }
  const auto idx1 = block_indices(x, part.observed_ids, true);
  const auto idx2 = block_indices(x, part.hidden_ids, false);
  part.cov1 = extract(P, idx1, idx1);
  part.cov2 = extract(P, idx2, idx2);
  return part;
}

void reinitialize(const NavState& x1, const StateCovariance& cov1,
                  const std::map<int, Pose>& x2, const StateCovariance& cov2,
                  NavState& x_out, StateCovariance& P_out) {
  for (const auto& [id, T] : x2) {
    if (x1.has_extrinsic(id)) {
      throw std::invalid_argument("reinitialize: teammate id " + std::to_string(id) +
                                  " present in both sub-states");
    }
  }
  x_out = x1;
  for (const auto& [id, T] : x2) x_out.extrinsics.emplace(id, T);

  std::vector<int> ids1, ids2;
  for (const auto& [id, T] : x1.extrinsics) ids1.push_back(id);
  for (const auto& [id, T] : x2) ids2.push_back(id);
  const auto idx1 = block_indices(x_out, ids1, true);
  const auto idx2 = block_indices(x_out, ids2, false);

  P_out = StateCovariance::Zero(x_out.dim(), x_out.dim());
  for (size_t r = 0; r < idx1.size(); ++r)
    for (size_t c = 0; c < idx1.size(); ++c) P_out(idx1[r], idx1[c]) = cov1(r, c);
  for (size_t r = 0; r < idx2.size(); ++r)
    for (size_t c = 0; c < idx2.size(); ++c) P_out(idx2[r], idx2[c]) = cov2(r, c);
}

}  // namespace swarm
