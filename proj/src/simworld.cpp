#include "swarm/simworld.hpp"

#include <cmath>

namespace swarm {

bool segment_hits_box(const Vec3& a, const Vec3& b, const Box& box) {
  // Slab test on the parametric segment a + t(b-a), t in (eps, 1-eps) so
  // that endpoints lying exactly on the box surface do not count.
  double t0 = 1e-9;
  double t1 = 1.0 - 1e-9;
  const Vec3 d = b - a;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-12) {
      if (a[k] < box.lo[k] || a[k] > box.hi[k]) return false;
      continue;
    }
    double ta = (box.lo[k] - a[k]) / d[k];
    double tb = (box.hi[k] - a[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return t1 - t0 > 1e-9;
}

namespace {

PlanePatch rect_patch(const Vec3& center, const Vec3& normal, const Vec3& e1,
                      double half1, double half2) {
  PlanePatch p;
  p.center = center;
  p.normal = normal.normalized();
  p.e1 = e1.normalized();
  p.e2 = p.normal.cross(p.e1).normalized();
  p.half1 = half1;
  p.half2 = half2;
  return p;
}

}  // namespace

World make_room(const Vec3& lo, const Vec3& hi) {
  World w;
  const Vec3 c = 0.5 * (lo + hi);
  const Vec3 h = 0.5 * (hi - lo);
  // floor / ceiling
  w.patches.push_back(rect_patch({c.x(), c.y(), lo.z()}, {0, 0, 1}, {1, 0, 0}, h.x(), h.y()));
  w.patches.push_back(rect_patch({c.x(), c.y(), hi.z()}, {0, 0, -1}, {1, 0, 0}, h.x(), h.y()));
  // walls
  w.patches.push_back(rect_patch({lo.x(), c.y(), c.z()}, {1, 0, 0}, {0, 1, 0}, h.y(), h.z()));
  w.patches.push_back(rect_patch({hi.x(), c.y(), c.z()}, {-1, 0, 0}, {0, 1, 0}, h.y(), h.z()));
  w.patches.push_back(rect_patch({c.x(), lo.y(), c.z()}, {0, 1, 0}, {1, 0, 0}, h.x(), h.z()));
  w.patches.push_back(rect_patch({c.x(), hi.y(), c.z()}, {0, -1, 0}, {1, 0, 0}, h.x(), h.z()));
  return w;
}

void add_box_obstacle(World& world, const Box& box) {
  const Vec3 c = 0.5 * (box.lo + box.hi);
  const Vec3 h = 0.5 * (box.hi - box.lo);
  world.patches.push_back(rect_patch({box.lo.x(), c.y(), c.z()}, {-1, 0, 0}, {0, 1, 0}, h.y(), h.z()));
  world.patches.push_back(rect_patch({box.hi.x(), c.y(), c.z()}, {1, 0, 0}, {0, 1, 0}, h.y(), h.z()));
  world.patches.push_back(rect_patch({c.x(), box.lo.y(), c.z()}, {0, -1, 0}, {1, 0, 0}, h.x(), h.z()));
  world.patches.push_back(rect_patch({c.x(), box.hi.y(), c.z()}, {0, 1, 0}, {1, 0, 0}, h.x(), h.z()));
  world.patches.push_back(rect_patch({c.x(), c.y(), box.hi.z()}, {0, 0, 1}, {1, 0, 0}, h.x(), h.y()));
  world.occluders.push_back(box);
}

World make_corridor(double length, double width, double height, double entrance_size) {
  World w;
  const double hw = 0.5 * width;
  const double hl = 0.5 * length;
  const double hz = 0.5 * height;
  // Corridor surfaces: every normal is orthogonal to x.
  w.patches.push_back(rect_patch({hl, 0, 0}, {0, 0, 1}, {1, 0, 0}, hl, hw));
  w.patches.push_back(rect_patch({hl, 0, height}, {0, 0, -1}, {1, 0, 0}, hl, hw));
  w.patches.push_back(rect_patch({hl, -hw, hz}, {0, 1, 0}, {1, 0, 0}, hl, hz));
  w.patches.push_back(rect_patch({hl, hw, hz}, {0, -1, 0}, {1, 0, 0}, hl, hz));
  // Far end cap, the only x constraint inside the corridor.
  w.patches.push_back(rect_patch({length, 0, hz}, {-1, 0, 0}, {0, 1, 0}, hw, hz));

  // Entrance room behind x = 0 with structure in all directions.
  const double e = entrance_size;
  const double he = 0.5 * e;
  w.patches.push_back(rect_patch({-he, 0, 0}, {0, 0, 1}, {1, 0, 0}, he, e));
  w.patches.push_back(rect_patch({-he, 0, height + 1.0}, {0, 0, -1}, {1, 0, 0}, he, e));
  w.patches.push_back(rect_patch({-e, 0, hz}, {1, 0, 0}, {0, 1, 0}, e, hz + 0.5));
  w.patches.push_back(rect_patch({-he, -e, hz}, {0, 1, 0}, {1, 0, 0}, he, hz + 0.5));
  w.patches.push_back(rect_patch({-he, e, hz}, {0, -1, 0}, {1, 0, 0}, he, hz + 0.5));
  add_box_obstacle(w, Box{{-e + 0.5, -e + 0.5, 0.0}, {-e + 1.3, -e + 1.3, 1.8}});
  add_box_obstacle(w, Box{{-1.8, e - 1.4, 0.0}, {-1.0, e - 0.6, 1.5}});
  return w;
}

World make_forest(const Vec3& extent, int tree_count, double tree_half_width,
                  uint64_t seed) {
  World w;
  // Ground only; the pillars supply the lateral structure.
  w.patches.push_back(rect_patch({0, 0, 0}, {0, 0, 1}, {1, 0, 0}, 0.5 * extent.x() + 5.0,
                                 0.5 * extent.y() + 5.0));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-0.5 * extent.x(), 0.5 * extent.x());
  std::uniform_real_distribution<double> uy(-0.5 * extent.y(), 0.5 * extent.y());
  std::uniform_real_distribution<double> uh(0.6 * extent.z(), 1.2 * extent.z());
  for (int i = 0; i < tree_count; ++i) {
    const double x = ux(rng);
    const double y = uy(rng);
    const double h = uh(rng);
    add_box_obstacle(w, Box{{x - tree_half_width, y - tree_half_width, 0.0},
                            {x + tree_half_width, y + tree_half_width, h}});
  }
  return w;
}

namespace {

// Quintic smoothstep and helpers for the C2 time warp.
double s5(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }
double s5d(double u) { return 30.0 * u * u * (1.0 + u * (-2.0 + u)); }
double s5i(double u) { return u * u * u * u * (2.5 + u * (-3.0 + u)); }  // int_0^u s5

struct Warp {
  double w = 0.0, wd = 0.0, wdd = 0.0;
};

Warp eval_warp(double t, double t_begin, double t_end, double ramp) {
  Warp out;
  if (t <= t_begin) return out;
  double tr = ramp;
  if (t_end - t_begin < 2.0 * tr) tr = 0.5 * (t_end - t_begin);
  const double mid_end = t_end - tr;

  if (t < t_begin + tr) {
    const double u = (t - t_begin) / tr;
    out.w = tr * s5i(u);
    out.wd = s5(u);
    out.wdd = s5d(u) / tr;
    return out;
  }
  if (t <= mid_end) {
    out.w = 0.5 * tr + (t - t_begin - tr);
    out.wd = 1.0;
    return out;
  }
  const double w_mid = 0.5 * tr + (mid_end - t_begin - tr);
  if (t < t_end) {
    const double u = (t - mid_end) / tr;
    out.w = w_mid + tr * (0.5 - s5i(1.0 - u));
    out.wd = s5(1.0 - u);
    out.wdd = -s5d(1.0 - u) / tr;
    return out;
  }
  out.w = w_mid + 0.5 * tr;
  return out;
}

Mat3 rot_z(double yaw) {
  Mat3 R;
  const double c = std::cos(yaw), s = std::sin(yaw);
  R << c, -s, 0, s, c, 0, 0, 0, 1;
  return R;
}

}  // namespace

TruthTrajectory TruthTrajectory::hover(const Pose& base) {
  TruthTrajectory t;
  t.kind_ = TrajKind::Hover;
  t.base_ = base;
  return t;
}

TruthTrajectory TruthTrajectory::figure8(const Pose& base, double scale, double period,
                                         double height, double t_begin, double t_end,
                                         double ramp) {
  TruthTrajectory t;
  t.kind_ = TrajKind::Figure8;
  t.base_ = base;
  t.scale_ = scale;
  t.period_ = period;
  t.height_ = height;
  t.t_begin_ = t_begin;
  t.t_end_ = t_end;
  t.ramp_ = ramp;
  return t;
}

TruthTrajectory TruthTrajectory::line(const Pose& base, const Vec3& to, double t_begin,
                                      double t_end) {
  TruthTrajectory t;
  t.kind_ = TrajKind::Line;
  t.base_ = base;
  t.to_ = to;
  t.t_begin_ = t_begin;
  t.t_end_ = t_end;
  return t;
}

TruthSample TruthTrajectory::eval(double t) const {
  TruthSample local;
  switch (kind_) {
    case TrajKind::Hover:
      break;
    case TrajKind::Figure8: {
      const Warp wp = eval_warp(t, t_begin_, t_end_, ramp_);
      const double k = 2.0 * M_PI / period_;
      const double th = k * wp.w;
      const double A = scale_;
      const Vec3 f(A * std::sin(th), 0.5 * A * std::sin(2.0 * th), height_);
      const Vec3 fd(A * k * std::cos(th), A * k * std::cos(2.0 * th), 0.0);
      const Vec3 fdd(-A * k * k * std::sin(th), -2.0 * A * k * k * std::sin(2.0 * th), 0.0);
      local.pose.pos = f;
      local.vel = fd * wp.wd;
      local.acc = fdd * wp.wd * wp.wd + fd * wp.wdd;
      const double yaw = std::atan2(fd.y(), fd.x());
      local.pose.rot = rot_z(yaw);
      const double speed2 = fd.x() * fd.x() + fd.y() * fd.y();
      const double yaw_rate_w = (fd.x() * fdd.y() - fd.y() * fdd.x()) / std::max(speed2, 1e-12);
      local.angvel = Vec3(0.0, 0.0, yaw_rate_w * wp.wd);
      break;
    }
    case TrajKind::Line: {
      const double dur = t_end_ - t_begin_;
      const double u = std::clamp((t - t_begin_) / dur, 0.0, 1.0);
      local.pose.pos = to_ * s5(u);
      const bool active = t > t_begin_ && t < t_end_;
      if (active) {
        local.vel = to_ * (s5d(u) / dur);
        const double s5dd = (120.0 * u * u * u - 180.0 * u * u + 60.0 * u);
        local.acc = to_ * (s5dd / (dur * dur));
      }
      break;
    }
  }
  TruthSample out;
  out.pose.rot = base_.rot * local.pose.rot;
  out.pose.pos = base_.rot * local.pose.pos + base_.pos;
  out.vel = base_.rot * local.vel;
  out.acc = base_.rot * local.acc;
  out.angvel = local.angvel;  // body frame
  return out;
}

ImuSample sample_imu(const TruthTrajectory& traj, double t, const Vec3& gravity,
                     const NoiseParams& noise, const Vec3& bias_gyro,
                     const Vec3& bias_accel, double dt, std::mt19937_64& rng) {
  const TruthSample s = traj.eval(t);
  ImuSample imu;
  imu.t = t;
  imu.gyro = s.angvel + bias_gyro;
  imu.accel = s.pose.rot.transpose() * (s.acc - gravity) + bias_accel;
  std::normal_distribution<double> n01(0.0, 1.0);
  const double sg = noise.gyro_noise / std::sqrt(dt);
  const double sa = noise.accel_noise / std::sqrt(dt);
  // Draw even when the densities are zero so noiseless ablations consume
  // the stream identically.
  const Vec3 ng(n01(rng), n01(rng), n01(rng));
  const Vec3 na(n01(rng), n01(rng), n01(rng));
  imu.gyro += sg * ng;
  imu.accel += sa * na;
  return imu;
}

std::vector<PlaneCorrespondence> sample_planes(const World& world, const Pose& body_w,
                                               const Pose& frame, const SensorRig& rig,
                                               double sigma_p, std::mt19937_64& rng) {
  std::vector<PlaneCorrespondence> out;
  if (world.patches.empty() || rig.points_per_scan <= 0) return out;
  const int n_patches = static_cast<int>(world.patches.size());
  const int per_patch = (rig.points_per_scan + n_patches - 1) / n_patches;
  const double half_az = 0.5 * rig.fov_azimuth * M_PI / 180.0;
  const double half_el = 0.5 * rig.fov_elevation * M_PI / 180.0;
  const bool full_az = rig.fov_azimuth >= 359.0;
  std::uniform_real_distribution<double> u01(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const Pose frame_inv = frame.inverse();
  const Pose body_inv = body_w.inverse();

  for (const auto& patch : world.patches) {
    for (int i = 0; i < per_patch && static_cast<int>(out.size()) < rig.points_per_scan;
         ++i) {
      // One fixed set of draws per attempt keeps the stream independent of
      // visibility outcomes.
      const double a = u01(rng) * patch.half1;
      const double b = u01(rng) * patch.half2;
      const double xi = gauss(rng);
      const Vec3 s = patch.center + a * patch.e1 + b * patch.e2;
      const Vec3 d = s - body_w.pos;
      const double range = d.norm();
      if (range < 0.05 || range > rig.max_range) continue;
      const Vec3 dir_b = body_w.rot.transpose() * d / range;
      if (!full_az && std::abs(std::atan2(dir_b.y(), dir_b.x())) > half_az) continue;
      if (std::abs(std::asin(std::clamp(dir_b.z(), -1.0, 1.0))) > half_el) continue;
      bool occluded = false;
      for (const auto& box : world.occluders) {
        if (segment_hits_box(body_w.pos, s, box)) {
          occluded = true;
          break;
        }
      }
      if (occluded) continue;

      PlaneCorrespondence c;
      c.point = body_inv.act(s) + body_w.rot.transpose() * patch.normal * (sigma_p * xi);
      c.normal = frame_inv.rot * patch.normal;
      c.anchor = frame_inv.act(s);
      out.push_back(c);
    }
  }
  return out;
}

std::vector<MarkerCluster> sample_markers(const Pose& observer_w,
                                          const std::vector<std::pair<int, Vec3>>& teammates_w,
                                          const SensorRig& rig,
                                          const std::vector<Box>& occluders,
                                          std::mt19937_64& rng) {
  std::vector<MarkerCluster> out;
  const double half_az = 0.5 * rig.fov_azimuth * M_PI / 180.0;
  const double half_el = 0.5 * rig.fov_elevation * M_PI / 180.0;
  const bool full_az = rig.fov_azimuth >= 359.0;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  for (const auto& [id, p_w] : teammates_w) {
    const Vec3 noise(gauss(rng), gauss(rng), gauss(rng));  // fixed draws per teammate
    const Vec3 d = p_w - observer_w.pos;
    const double range = d.norm();
    if (range < 0.2 || range > rig.max_range) continue;
    const Vec3 dir_b = observer_w.rot.transpose() * d / range;
    if (!full_az && std::abs(std::atan2(dir_b.y(), dir_b.x())) > half_az) continue;
    if (std::abs(std::asin(std::clamp(dir_b.z(), -1.0, 1.0))) > half_el) continue;
    bool occluded = false;
    for (const auto& box : occluders) {
      if (segment_hits_box(observer_w.pos, p_w, box)) {
        occluded = true;
        break;
      }
    }
    if (occluded) continue;

    MarkerCluster cluster;
    cluster.true_id = id;
    cluster.centroid = observer_w.rot.transpose() * d + rig.marker_sigma * noise;
    // +/- offset pairs, so the cluster mean equals the centroid exactly; an
    // odd trailing point sits on the centroid itself.
    const double r = 0.08;
    const Vec3 offsets[6] = {{r, 0, 0}, {-r, 0, 0}, {0, r, 0}, {0, -r, 0}, {0, 0, r}, {0, 0, -r}};
    const int n = std::clamp(rig.marker_points, 1, 6);
    for (int i = 0; i < n; ++i) {
      MarkerReturn m;
      m.point = cluster.centroid + (i < 2 * (n / 2) ? offsets[i] : Vec3::Zero());
      m.reflectivity = rig.marker_reflectivity;
      cluster.points.push_back(m);
    }
    out.push_back(cluster);
  }

  // Sub-threshold clutter exercises the reflectivity filter.
  MarkerCluster junk;
  junk.true_id = -1;
  for (int i = 0; i < rig.junk_returns; ++i) {
    MarkerReturn m;
    m.point = Vec3(u01(rng) * 10.0 - 5.0, u01(rng) * 10.0 - 5.0, u01(rng) * 3.0);
    m.reflectivity = u01(rng) * 120.0;
    junk.points.push_back(m);
  }
  if (!junk.points.empty()) out.push_back(junk);
  return out;
}

}  // namespace swarm
