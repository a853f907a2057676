#include "swarm/init.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <queue>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace swarm {

std::vector<MarkerReturn> reflectivity_filter(const std::vector<MarkerReturn>& points,
                                              double threshold) {
  std::vector<MarkerReturn> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (p.reflectivity > threshold) out.push_back(p);
  }
  return out;
}

namespace {

// Integer voxel key for the clustering grid.
struct VoxelKey {
  int64_t x, y, z;
  bool operator==(const VoxelKey& o) const { return x == o.x && y == o.y && z == o.z; }
};
struct VoxelHash {
  size_t operator()(const VoxelKey& k) const {
    return static_cast<size_t>(k.x * 73856093LL ^ k.y * 19349663LL ^ k.z * 83492791LL);
  }
};

}  // namespace

std::vector<Cluster> euclidean_cluster(const std::vector<Vec3>& points, double radius,
                                       int min_size, double max_extent) {
  if (radius <= 0.0) throw std::invalid_argument("euclidean_cluster: radius must be > 0");
  std::vector<Cluster> clusters;
  if (points.empty()) return clusters;

  // Voxel-grid accelerated BFS: candidates for a point live in the 27
  // neighboring cells of a radius-sized grid.
  std::unordered_map<VoxelKey, std::vector<int>, VoxelHash> grid;
  auto key_of = [&](const Vec3& p) {
    return VoxelKey{static_cast<int64_t>(std::floor(p.x() / radius)),
                    static_cast<int64_t>(std::floor(p.y() / radius)),
                    static_cast<int64_t>(std::floor(p.z() / radius))};
  };
  for (size_t i = 0; i < points.size(); ++i) grid[key_of(points[i])].push_back(static_cast<int>(i));

  const double r2 = radius * radius;
  std::vector<bool> visited(points.size(), false);
  for (size_t seed = 0; seed < points.size(); ++seed) {
    if (visited[seed]) continue;
    std::vector<int> members;
    std::queue<int> frontier;
    frontier.push(static_cast<int>(seed));
    visited[seed] = true;
    while (!frontier.empty()) {
      const int i = frontier.front();
      frontier.pop();
      members.push_back(i);
      const VoxelKey k = key_of(points[i]);
      for (int64_t dx = -1; dx <= 1; ++dx)
        for (int64_t dy = -1; dy <= 1; ++dy)
          for (int64_t dz = -1; dz <= 1; ++dz) {
            auto it = grid.find(VoxelKey{k.x + dx, k.y + dy, k.z + dz});
            if (it == grid.end()) continue;
            for (int j : it->second) {
              if (visited[j]) continue;
              if ((points[i] - points[j]).squaredNorm() <= r2) {
                visited[j] = true;
                frontier.push(j);
              }
            }
          }
    }
    if (static_cast<int>(members.size()) < min_size) continue;
    Cluster c;
    c.size = static_cast<int>(members.size());
    for (int i : members) c.centroid += points[i];
    c.centroid /= static_cast<double>(members.size());
    for (size_t a = 0; a < members.size(); ++a)
      for (size_t b = a + 1; b < members.size(); ++b)
        c.extent = std::max(c.extent, (points[members[a]] - points[members[b]]).norm());
    if (c.extent > max_extent) continue;
    clusters.push_back(c);
  }
  // Deterministic order regardless of grid hashing.
  std::sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    return std::lexicographical_compare(a.centroid.data(), a.centroid.data() + 3,
                                        b.centroid.data(), b.centroid.data() + 3);
  });
  return clusters;
}

TemporaryTracker make_tracker(int id, const Vec3& first_pos, double t,
                              const TrackerParams& p) {
  TemporaryTracker tr;
  tr.id = id;
  tr.pos = first_pos;
  tr.vel.setZero();
  tr.cov.setZero();
  tr.cov.topLeftCorner<3, 3>() = p.meas_noise * p.meas_noise * Mat3::Identity();
  tr.cov.bottomRightCorner<3, 3>() = 4.0 * Mat3::Identity();  // unknown velocity
  tr.trajectory.emplace_back(t, first_pos);
  return tr;
}

TemporaryTracker tracker_step(const TemporaryTracker& tr, double dt,
                              const std::optional<Vec3>& measurement, double t,
                              const TrackerParams& p) {
  if (!(dt > 0.0)) throw std::invalid_argument("tracker_step: dt must be > 0");
  TemporaryTracker out = tr;
  if (out.retired) return out;

  // Constant velocity predict.
  out.pos += out.vel * dt;
  Mat6 F = Mat6::Identity();
  F.topRightCorner<3, 3>() = dt * Mat3::Identity();
  const double qa = p.accel_noise * p.accel_noise;
  Mat6 Q = Mat6::Zero();
  Q.topLeftCorner<3, 3>() = qa * 0.25 * dt * dt * dt * dt * Mat3::Identity();
  Q.topRightCorner<3, 3>() = qa * 0.5 * dt * dt * dt * Mat3::Identity();
  Q.bottomLeftCorner<3, 3>() = Q.topRightCorner<3, 3>();
  Q.bottomRightCorner<3, 3>() = qa * dt * dt * Mat3::Identity();
  out.cov = F * out.cov * F.transpose() + Q;

  const bool hit = measurement && (*measurement - out.pos).norm() <= p.gate;
  if (hit) {
    const Mat3 S = out.cov.topLeftCorner<3, 3>() +
                   p.meas_noise * p.meas_noise * Mat3::Identity();
    const Eigen::Matrix<double, 6, 3> K = out.cov.leftCols<3>() * S.inverse();
    const Vec3 innov = *measurement - out.pos;
    out.pos += K.topRows<3>() * innov;
    out.vel += K.bottomRows<3>() * innov;
    Eigen::Matrix<double, 3, 6> H = Eigen::Matrix<double, 3, 6>::Zero();
    H.leftCols<3>().setIdentity();
    out.cov = ((Mat6::Identity() - K * H) * out.cov).eval();
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    out.misses = 0;
    out.trajectory.emplace_back(t, out.pos);
    while (static_cast<int>(out.trajectory.size()) > p.window) out.trajectory.pop_front();
  } else {
    out.misses += 1;
    if (out.misses >= p.max_misses) out.retired = true;
  }
  return out;
}

bool excitation_check(const std::vector<Vec3>& traj, double threshold) {
  if (traj.size() < 3) return false;
  Vec3 mean = Vec3::Zero();
  for (const auto& p : traj) mean += p;
  mean /= static_cast<double>(traj.size());
  Mat3 scatter = Mat3::Zero();
  for (const auto& p : traj) {
    const Vec3 d = p - mean;
    scatter += d * d.transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(scatter);
  return svd.singularValues()(1) > threshold;
}

std::optional<TrajectoryMatch> match_trajectories(
    const std::vector<std::pair<double, Vec3>>& self_traj,
    const std::vector<std::pair<double, Vec3>>& teammate_traj, double time_tol,
    double excitation_threshold) {
  // Pair each self sample with the nearest-in-time teammate sample; both
  // lists are time ordered, so a single sweep suffices.
  std::vector<Vec3> a, b;
  size_t j = 0;
  for (const auto& [ta, pa] : self_traj) {
    while (j + 1 < teammate_traj.size() &&
           std::abs(teammate_traj[j + 1].first - ta) <= std::abs(teammate_traj[j].first - ta)) {
      ++j;
    }
    if (j < teammate_traj.size() && std::abs(teammate_traj[j].first - ta) < time_tol) {
      a.push_back(pa);
      b.push_back(teammate_traj[j].second);
    }
  }
  if (a.size() < 3) return std::nullopt;
  if (!excitation_check(a, excitation_threshold)) return std::nullopt;

  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  for (size_t i = 0; i < a.size(); ++i) {
    ca += a[i];
    cb += b[i];
  }
  ca /= static_cast<double>(a.size());
  cb /= static_cast<double>(a.size());

  Mat3 W = Mat3::Zero();
  for (size_t i = 0; i < a.size(); ++i) W += (a[i] - ca) * (b[i] - cb).transpose();
  Eigen::JacobiSVD<Mat3> svd(W, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  const Mat3 R = svd.matrixU() * D * svd.matrixV().transpose();
  const Vec3 t = ca - R * cb;

  double ss = 0.0;
  for (size_t i = 0; i < a.size(); ++i) ss += (a[i] - (R * b[i] + t)).squaredNorm();
  TrajectoryMatch m;
  m.transform = Pose(R, t);
  m.residual = std::sqrt(ss / static_cast<double>(a.size()));
  m.pairs = static_cast<int>(a.size());
  return m;
}

bool ExtrinsicGraph::insert(int k, int l, const Pose& T) {
  if (k == l) throw std::invalid_argument("ExtrinsicGraph: self-loop rejected");
  Pose oriented = T;
  if (k > l) {
    std::swap(k, l);
    oriented = T.inverse();
  }
  auto [it, created] = edges_.try_emplace({k, l});
  Edge& e = it->second;
  if (!created) {
    // Dump exact duplicates of an already-seen announcement.
    for (const Pose& seen : e.estimates) {
      if (translation_error(seen, oriented) < 1e-9 && rotation_error(seen, oriented) < 1e-9) {
        return false;
      }
    }
  }
  e.estimates.push_back(oriented);
  e.factor = average_poses(e.estimates);
  return true;
}

bool ExtrinsicGraph::insert_if_absent(int k, int l, const Pose& T) {
  if (k == l) throw std::invalid_argument("ExtrinsicGraph: self-loop rejected");
  const auto key = std::minmax(k, l);
  if (edges_.count({key.first, key.second})) return false;
  return insert(k, l, T);
}

bool ExtrinsicGraph::has_edge(int k, int l) const {
  const auto key = std::minmax(k, l);
  return edges_.count({key.first, key.second}) > 0;
}

std::map<int, Pose> ExtrinsicGraph::optimize(int max_iters) const {
  std::map<int, Pose> result;
  if (edges_.empty()) return result;

  // Adjacency and BFS initialization from the pinned self frame.
  std::map<int, std::vector<std::pair<int, Pose>>> adj;  // node -> (peer, node-from-peer)
  for (const auto& [key, e] : edges_) {
    adj[key.first].emplace_back(key.second, e.factor);
    adj[key.second].emplace_back(key.first, e.factor.inverse());
  }
  if (!adj.count(self_id_)) return result;

  std::map<int, Pose> vars;  // self-global from node-global
  vars[self_id_] = Pose();
  std::queue<int> frontier;
  frontier.push(self_id_);
  while (!frontier.empty()) {
    const int n = frontier.front();
    frontier.pop();
    for (const auto& [peer, n_from_peer] : adj[n]) {
      if (vars.count(peer)) continue;
      vars[peer] = vars[n] * n_from_peer;
      frontier.push(peer);
    }
  }

  // Tangent layout: 6 rows per free variable (self excluded).
  std::map<int, int> offset;
  int dim = 0;
  for (const auto& [id, v] : vars) {
    if (id == self_id_) continue;
    offset[id] = dim;
    dim += 6;
  }
  if (dim == 0) {
    for (const auto& [id, v] : vars)
      if (id != self_id_) result[id] = v;
    return result;
  }

  for (int iter = 0; iter < max_iters; ++iter) {
    MatX A = MatX::Zero(dim, dim);
    VecX rhs = VecX::Zero(dim);
    for (const auto& [key, e] : edges_) {
      const auto [k, l] = key;
      if (!vars.count(k) || !vars.count(l)) continue;
      const Pose& Vk = vars[k];
      const Pose& Vl = vars[l];
      // Residual of the predicted relative pose Vk^-1 Vl against the factor.
      const Mat3 Rk_t = Vk.rot.transpose();
      const Vec3 e_rot = log_so3(e.factor.rot.transpose() * Rk_t * Vl.rot);
      const Vec3 e_pos = Rk_t * (Vl.pos - Vk.pos) - e.factor.pos;

      const Mat3 Jinv = inv_right_jacobian_so3(e_rot);
      Eigen::Matrix<double, 6, 6> Jk = Eigen::Matrix<double, 6, 6>::Zero();
      Jk.topLeftCorner<3, 3>() = -Jinv * Vl.rot.transpose() * Vk.rot;
      Jk.bottomLeftCorner<3, 3>() = skew(Rk_t * (Vl.pos - Vk.pos));
      Jk.bottomRightCorner<3, 3>() = -Rk_t;
      Eigen::Matrix<double, 6, 6> Jl = Eigen::Matrix<double, 6, 6>::Zero();
      Jl.topLeftCorner<3, 3>() = Jinv;
      Jl.bottomRightCorner<3, 3>() = Rk_t;

      Vec6 r;
      r << e_rot, e_pos;
      auto scatter = [&](int id_a, const Eigen::Matrix<double, 6, 6>& Ja, int id_b,
                         const Eigen::Matrix<double, 6, 6>& Jb) {
        if (id_a == self_id_ || id_b == self_id_) return;
        A.block<6, 6>(offset[id_a], offset[id_b]) += Ja.transpose() * Jb;
      };
      scatter(k, Jk, k, Jk);
      scatter(k, Jk, l, Jl);
      scatter(l, Jl, k, Jk);
      scatter(l, Jl, l, Jl);
      if (k != self_id_) rhs.segment<6>(offset[k]) -= Jk.transpose() * r;
      if (l != self_id_) rhs.segment<6>(offset[l]) -= Jl.transpose() * r;
    }
    const VecX delta = A.ldlt().solve(rhs);
    for (auto& [id, v] : vars) {
      if (id == self_id_) continue;
      v = v.boxplus(delta.segment<6>(offset[id]));
    }
    if (delta.norm() < 1e-12) break;
  }

  for (const auto& [id, v] : vars)
    if (id != self_id_) result[id] = v;
  return result;
}

}  // namespace swarm
