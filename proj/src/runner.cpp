#include "swarm/runner.hpp"

#include <cinttypes>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <memory>

namespace swarm {

namespace {

struct Csv {
  FILE* f = nullptr;
  explicit Csv(const std::string& path) {
    f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  }
  ~Csv() {
    if (f) std::fclose(f);
  }
  void row(const char* fmt, ...) {
    va_list args;
    va_start(args, fmt);
    std::vfprintf(f, fmt, args);
    va_end(args);
    std::fputc('\n', f);
  }
};

// Sign-normalized quaternion keeps CSV output unique per rotation.
Eigen::Quaterniond quat_of(const Mat3& R) {
  Eigen::Quaterniond q(R);
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

struct UavRuntime {
  UavSpec spec;
  TruthTrajectory traj{TruthTrajectory::hover(Pose())};
  SensorRig rig;
  Pose frame;  // world pose of this UAV's global frame (set at join)
  std::unique_ptr<Agent> agent;
  std::mt19937_64 imu_rng{0}, plane_rng{0}, marker_rng{0};
  bool alive = false;
  bool dead = false;  // killed, never to return
  double joined_at = 0.0, active_time = 0.0;
  std::vector<double> update_us;
};

struct PairAccum {
  double sp = 0.0, sr = 0.0;
  int n = 0;
  void add(const Pose& est, const Pose& ref) {
    sp += (est.pos - ref.pos).squaredNorm();
    const double a = rotation_angle(est.rot, ref.rot);
    sr += a * a;
    ++n;
  }
};

TruthTrajectory build_traj(const UavSpec& u) {
  Mat3 R;
  const double c = std::cos(u.start_yaw), s = std::sin(u.start_yaw);
  R << c, -s, 0, s, c, 0, 0, 0, 1;
  const Pose base(R, u.start_pos);
  if (u.traj.kind == "figure8") {
    return TruthTrajectory::figure8(base, u.traj.scale, u.traj.period, u.traj.height,
                                    u.traj.begin, u.traj.end, u.traj.ramp);
  }
  if (u.traj.kind == "line") {
    return TruthTrajectory::line(base, u.traj.line_to, u.traj.begin, u.traj.end);
  }
  return TruthTrajectory::hover(base);
}

World build_world(const Scenario& sc, uint64_t seed) {
  const auto& w = sc.world;
  if (w.kind == "corridor") return make_corridor(w.length, w.width, w.height, w.entrance);
  if (w.kind == "forest") {
    return make_forest(w.extent, w.trees, w.tree_half_width, seed_mix(seed, "world"));
  }
  return make_room(w.lo, w.hi);
}

}  // namespace

MetricsReport run_scenario(const Scenario& sc, const RunOptions& opt) {
  const uint64_t seed = opt.seed.value_or(sc.seed);
  const World world = build_world(sc, seed);
  const Vec3 gravity = world.gravity;

  Bus bus(seed_mix(seed, "bus"), sc.link);
  const bool want_csv = !opt.out_dir.empty();
  bus.enable_trace(want_csv && sc.net_trace);

  for (const auto& o : sc.occlusions) {
    LinkModel m = sc.link;
    m.occlusions.push_back({o.begin, o.end});
    bus.set_link(o.from, o.to, m);
  }

  std::map<int, UavRuntime> uavs;
  for (const auto& spec : sc.uavs) {
    UavRuntime rt;
    rt.spec = spec;
    rt.traj = build_traj(spec);
    rt.rig = sc.rig;
    for (const auto& [k, v] : spec.rig_overrides) apply_rig_key(rt.rig, k, v);
    rt.imu_rng.seed(seed_mix(seed, "imu", spec.id));
    rt.plane_rng.seed(seed_mix(seed, "plane", spec.id));
    rt.marker_rng.seed(seed_mix(seed, "marker", spec.id));
    uavs.emplace(spec.id, std::move(rt));
  }

  const double imu_dt = 1.0 / sc.rig.imu_rate;
  const int scan_every = std::max(1, static_cast<int>(std::llround(sc.rig.imu_rate / sc.rig.scan_rate)));
  const int steps = static_cast<int>(std::llround(sc.duration / imu_dt));

  std::unique_ptr<Csv> traj_csv, ext_csv, tele_csv;
  if (want_csv) {
    std::filesystem::create_directories(opt.out_dir);
    traj_csv = std::make_unique<Csv>(opt.out_dir + "/trajectories.csv");
    traj_csv->row("t,estimator,subject,source,ex,ey,ez,eqw,eqx,eqy,eqz,tx,ty,tz,tqw,tqx,tqy,tqz");
    ext_csv = std::make_unique<Csv>(opt.out_dir + "/extrinsics.csv");
    ext_csv->row("t,agent,teammate,px,py,pz,qw,qx,qy,qz,pos_err,rot_err");
    tele_csv = std::make_unique<Csv>(opt.out_dir + "/telemetry.csv");
    tele_csv->row("scan,t,agent,sigma_min,K,degenerate,updated,update_us");
  }

  auto true_ext = [&](const UavRuntime& a, const UavRuntime& b) {
    return a.frame.inverse() * b.frame;
  };

  std::map<std::pair<int, int>, PairAccum> accum;
  double init_distance = 0.0;
  bool init_complete = sc.uavs.size() < 2;
  double init_complete_time = init_complete ? 0.0 : -1.0;

  auto spawn = [&](UavRuntime& rt, double t) {
    rt.frame = rt.traj.eval(t).pose;
    rt.alive = true;
    rt.joined_at = t;
    AgentConfig cfg = sc.proto;
    cfg.id = rt.spec.id;
    cfg.rig = rt.rig;
    cfg.imu_dt = imu_dt;
    cfg.noise.active_obs_cov = sc.sigma_ao * sc.sigma_ao * Mat3::Identity();
    cfg.noise.passive_obs_cov = sc.sigma_po * sc.sigma_po * Mat3::Identity();
    cfg.seed = seed_mix(seed, "agent", rt.spec.id);
    rt.agent = std::make_unique<Agent>(cfg);
    bus.register_agent(rt.spec.id, rt.spec.clock_offset);
  };

  // Preloaded extrinsics are installed once both parties' frames are known,
  // i.e. at the later of the two join times.
  auto preload_pairs = [&](double t) {
    if (!sc.preload_extrinsics) return;
    for (auto& [i, a] : uavs) {
      if (!a.alive) continue;
      for (auto& [j, b] : uavs) {
        if (i == j || !b.alive) continue;
        if (a.agent->state().has_extrinsic(j)) continue;
        std::mt19937_64 rng(seed_mix(seed, "preload", i * 1000 + j));
        std::normal_distribution<double> n01(0.0, 1.0);
        Vec6 d;
        for (int k = 0; k < 3; ++k) d[k] = sc.preload_rot_noise * n01(rng);
        for (int k = 0; k < 3; ++k) d[3 + k] = sc.preload_pos_noise * n01(rng);
        const Pose ext = true_ext(a, b).boxplus(d);
        const double tau = b.spec.clock_offset - a.spec.clock_offset;
        a.agent->preload_teammate(j, ext, tau, t + a.spec.clock_offset);
      }
    }
  };

  for (int k = 0; k <= steps; ++k) {
    const double t = k * imu_dt;

    bool membership_changed = false;
    for (auto& [id, rt] : uavs) {
      if (!rt.alive && !rt.dead && t >= rt.spec.join) {
        spawn(rt, t);
        membership_changed = true;
      }
      if (rt.alive && t >= rt.spec.kill) {
        rt.alive = false;
        rt.dead = true;
        bus.unregister_agent(id);
        membership_changed = true;
      }
    }
    if (membership_changed) preload_pairs(t);

    // IMU and control traffic.
    for (auto& [id, rt] : uavs) {
      if (!rt.alive) continue;
      ImuSample imu = sample_imu(rt.traj, t, gravity, sc.proto.noise, rt.spec.bias_gyro,
                                 rt.spec.bias_accel, imu_dt, rt.imu_rng);
      imu.t = t + rt.spec.clock_offset;
      rt.agent->on_imu(imu);
      for (auto& msg : rt.agent->poll(t + rt.spec.clock_offset)) {
        bus.broadcast(msg);
      }
      rt.active_time += imu_dt;
    }

    // Scan pipeline.
    if (k > 0 && k % scan_every == 0) {
      for (auto& [id, rt] : uavs) {
        if (!rt.alive) continue;
        const TruthSample truth = rt.traj.eval(t);
        ScanProducts products;
        products.planes = sample_planes(world, truth.pose, rt.frame, rt.rig,
                                        sc.proto.noise.point_sigma, rt.plane_rng);
        std::vector<std::pair<int, Vec3>> teammates;
        for (const auto& [jid, other] : uavs) {
          if (jid == id || !other.alive) continue;
          teammates.emplace_back(jid, other.traj.eval(t).pose.pos);
        }
        products.markers = sample_markers(truth.pose, teammates, rt.rig,
                                          world.occluders, rt.marker_rng);
        for (auto& msg : rt.agent->on_scan(products, t + rt.spec.clock_offset)) {
          bus.broadcast(msg);
        }
        if (rt.agent->telemetry().scan_index >= 5) {
          rt.update_us.push_back(rt.agent->telemetry().update_us);
        }

        // Ego accumulation and rows.
        const Pose ego_est = rt.agent->state().pose();
        const Pose ego_ref = rt.frame.inverse() * truth.pose;
        accum[{id, id}].add(ego_est, ego_ref);
        if (want_csv) {
          const auto eq = quat_of(ego_est.rot);
          const auto tq = quat_of(ego_ref.rot);
          traj_csv->row("%.9g,%d,%d,ego,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,"
                        "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                        t, id, id, ego_est.pos.x(), ego_est.pos.y(), ego_est.pos.z(),
                        eq.w(), eq.x(), eq.y(), eq.z(), ego_ref.pos.x(), ego_ref.pos.y(),
                        ego_ref.pos.z(), tq.w(), tq.x(), tq.y(), tq.z());
          const auto& tel = rt.agent->telemetry();
          tele_csv->row("%d,%.9g,%d,%.9g,%d,%d,%d,%.3f", tel.scan_index, t, id,
                        tel.sigma_min, tel.K, tel.degenerate ? 1 : 0, tel.updated ? 1 : 0,
                        tel.update_us);
        }

        // Mutual estimates.
        for (const auto& m : rt.agent->mutual_states(t + rt.spec.clock_offset)) {
          auto other = uavs.find(m.teammate);
          if (other == uavs.end() || !other->second.alive) continue;
          const Pose ref = rt.frame.inverse() * other->second.traj.eval(t).pose;
          accum[{id, m.teammate}].add(m.pose, ref);
          if (want_csv) {
            const auto eq = quat_of(m.pose.rot);
            const auto tq = quat_of(ref.rot);
            traj_csv->row("%.9g,%d,%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,"
                          "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                          t, id, m.teammate, m.predicted ? "predicted" : "projected",
                          m.pose.pos.x(), m.pose.pos.y(), m.pose.pos.z(), eq.w(), eq.x(),
                          eq.y(), eq.z(), ref.pos.x(), ref.pos.y(), ref.pos.z(), tq.w(),
                          tq.x(), tq.y(), tq.z());
          }
        }

        // Extrinsic error rows.
        if (want_csv) {
          for (const auto& [jid, ext] : rt.agent->state().extrinsics) {
            auto other = uavs.find(jid);
            if (other == uavs.end()) continue;
            const Pose ref = true_ext(rt, other->second);
            const auto q = quat_of(ext.rot);
            ext_csv->row("%.9g,%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", t, id,
                         jid, ext.pos.x(), ext.pos.y(), ext.pos.z(), q.w(), q.x(), q.y(),
                         q.z(), translation_error(ext, ref), rotation_error(ext, ref));
          }
        }
      }

      // Initialization completion: every ordered alive pair calibrated.
      if (!init_complete) {
        bool all = true;
        int alive_count = 0;
        for (const auto& [i, a] : uavs) {
          if (!a.alive) continue;
          ++alive_count;
          for (const auto& [j, b] : uavs) {
            if (i == j || !b.alive) continue;
            if (!a.agent->state().has_extrinsic(j)) all = false;
          }
        }
        if (alive_count >= 2 && all) {
          init_complete = true;
          init_complete_time = t;
        }
      }
    }

    if (!init_complete) {
      for (const auto& [id, rt] : uavs) {
        if (rt.alive) init_distance += rt.traj.eval(t).vel.norm() * imu_dt;
      }
    }

    // Message deliveries; replies are backdated to their true arrival.
    for (const auto& d : bus.advance(imu_dt)) {
      auto it = uavs.find(d.recipient);
      if (it == uavs.end() || !it->second.alive) continue;
      const double arrival_true = d.arrival_time - it->second.spec.clock_offset;
      for (auto& reply : it->second.agent->on_message(d.msg, d.arrival_time)) {
        bus.broadcast_at(reply, arrival_true);
      }
    }
  }

  // ---- report -------------------------------------------------------------
  MetricsReport report;
  for (const auto& [key, acc] : accum) {
    TrajectoryMetric m;
    m.estimator = key.first;
    m.subject = key.second;
    m.samples = acc.n;
    if (acc.n > 0) {
      m.pos_rmse = std::sqrt(acc.sp / acc.n);
      m.rot_rmse = std::sqrt(acc.sr / acc.n);
    }
    report.trajectories.push_back(m);
  }

  for (const auto& [id, rt] : uavs) {
    if (!rt.agent) continue;
    for (const auto& rec : rt.agent->calib_records()) {
      auto other = uavs.find(rec.teammate);
      if (other == uavs.end()) continue;
      const Pose ref = true_ext(rt, other->second);
      ExtrinsicMetric m;
      m.agent = id;
      m.teammate = rec.teammate;
      m.source = rec.source == CalibRecord::Source::Match   ? "match"
                 : rec.source == CalibRecord::Source::Graph ? "graph"
                                                            : "preload";
      m.t_calibrated = rec.t_calibrated - rt.spec.clock_offset;  // true time
      m.init_pos_err = translation_error(rec.initial, ref);
      m.init_rot_err = rotation_error(rec.initial, ref);
      const auto& ext_now = rt.agent->state().extrinsics;
      auto cur = ext_now.find(rec.teammate);
      if (cur != ext_now.end()) {
        m.final_pos_err = translation_error(cur->second, ref);
        m.final_rot_err = rotation_error(cur->second, ref);
      }
      report.extrinsics.push_back(m);
    }

    const auto [txb, rxb] = bus.byte_totals(id);
    BandwidthMetric bm;
    bm.agent = id;
    bm.tx_bps = rt.active_time > 0.0 ? txb / rt.active_time : 0.0;
    bm.rx_bps = rt.active_time > 0.0 ? rxb / rt.active_time : 0.0;
    report.bandwidth.push_back(bm);

    for (const auto& [jid, entry] : rt.agent->table()) {
      if (!entry.offset) continue;
      auto other = uavs.find(jid);
      if (other == uavs.end()) continue;
      SyncMetric s;
      s.agent = id;
      s.teammate = jid;
      s.tau_est = *entry.offset;
      s.tau_true = other->second.spec.clock_offset - rt.spec.clock_offset;
      report.sync.push_back(s);
    }

    AgentSummary a;
    a.agent = id;
    if (!rt.update_us.empty()) {
      double sum = 0.0;
      for (double u : rt.update_us) {
        sum += u;
        a.max_update_us = std::max(a.max_update_us, u);
      }
      a.mean_update_us = sum / rt.update_us.size();
    }
    a.degen_scans = rt.agent->degenerate_scans();
    a.frozen_violations = rt.agent->frozen_violations();
    a.diverged_at = rt.agent->diverged() ? rt.agent->diverged_at() : -1.0;
    a.obs_innov_rms = rt.agent->obs_innovation_rms();
    const double t_end = std::min(sc.duration, rt.spec.kill);
    const Pose ref = rt.frame.inverse() * rt.traj.eval(t_end).pose;
    a.final_pos_err = (rt.agent->state().pos - ref.pos).norm();
    report.agents.push_back(a);
  }
  report.init_flight_distance = init_distance;
  report.init_complete = init_complete;
  report.init_complete_time = init_complete_time;

  if (want_csv) {
    Csv metrics(opt.out_dir + "/metrics.csv");
    metrics.row("kind,agent,subject,source,v1,v2,v3,v4,v5");
    for (const auto& m : report.trajectories) {
      metrics.row("rmse,%d,%d,-,%.9g,%.9g,%d,0,0", m.estimator, m.subject, m.pos_rmse,
                  m.rot_rmse, m.samples);
    }
    for (const auto& m : report.extrinsics) {
      metrics.row("extrinsic,%d,%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g", m.agent, m.teammate,
                  m.source.c_str(), m.t_calibrated, m.init_pos_err, m.init_rot_err,
                  m.final_pos_err, m.final_rot_err);
    }
    for (const auto& m : report.bandwidth) {
      metrics.row("bandwidth,%d,-1,-,%.9g,%.9g,0,0,0", m.agent, m.tx_bps, m.rx_bps);
    }
    for (const auto& m : report.sync) {
      metrics.row("sync,%d,%d,-,%.9g,%.9g,%.9g,0,0", m.agent, m.teammate, m.tau_est,
                  m.tau_true, m.tau_est - m.tau_true);
    }
    for (const auto& m : report.agents) {
      metrics.row("agent,%d,-1,-,%d,%d,%.9g,%.9g,%.9g", m.agent, m.degen_scans,
                  m.frozen_violations, m.diverged_at, m.obs_innov_rms, m.final_pos_err);
    }
    metrics.row("init_distance,-1,-1,-,%.9g,%d,%.9g,0,0", report.init_flight_distance,
                report.init_complete ? 1 : 0, report.init_complete_time);

    Csv net(opt.out_dir + "/net_trace.csv");
    net.row("send_time,arrival_time,sender,recipient,variant,bytes,dropped");
    for (const auto& r : bus.trace()) {
      net.row("%.9g,%.9g,%d,%d,%s,%d,%d", r.send_time, r.arrival_time, r.sender,
              r.recipient, r.variant, r.bytes, r.dropped ? 1 : 0);
    }
  }
  return report;
}

}  // namespace swarm
