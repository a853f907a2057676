#include "swarm/agent.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>

namespace swarm {

namespace {

bool same_bits(const Pose& a, const Pose& b) {
  return std::memcmp(a.rot.data(), b.rot.data(), 9 * sizeof(double)) == 0 &&
         std::memcmp(a.pos.data(), b.pos.data(), 3 * sizeof(double)) == 0;
}

}  // namespace

Agent::Agent(const AgentConfig& cfg) : cfg_(cfg), graph_(cfg.id), rng_(cfg.seed) {
  cfg_.tracker.window = cfg_.traj_window;
  x_ = NavState{};
  P_ = StateCovariance::Zero(x_.dim(), x_.dim());
  P_.diagonal().segment<3>(kIdxRot).setConstant(cfg_.p0_rot);
  P_.diagonal().segment<3>(kIdxPos).setConstant(cfg_.p0_pos);
  P_.diagonal().segment<3>(kIdxVel).setConstant(cfg_.p0_vel);
  P_.diagonal().segment<3>(kIdxBg).setConstant(cfg_.p0_bg);
  P_.diagonal().segment<3>(kIdxBa).setConstant(cfg_.p0_ba);
  P_.diagonal().segment<3>(kIdxGrav).setConstant(cfg_.p0_grav);
}

SwarmMessage Agent::make_msg(const Payload& p, double t) const {
  SwarmMessage m;
  m.payload = p;
  m.sender = cfg_.id;
  m.send_time = t;
  return m;
}

void Agent::on_imu(const ImuSample& imu) {
  if (diverged_) return;
  imu_buffer_.push_back(imu);
}

void Agent::predict_to(double t_scan) {
  while (!imu_buffer_.empty() && imu_buffer_.front().t < t_scan - 1e-9) {
    predict(x_, P_, imu_buffer_.front(), cfg_.imu_dt, cfg_.noise);
    imu_buffer_.pop_front();
  }
}

std::vector<SwarmMessage> Agent::poll(double t) {
  std::vector<SwarmMessage> out;
  if (diverged_) return out;
  if (t >= next_heartbeat_) {
    out.push_back(make_msg(Heartbeat{cfg_.id, cfg_.id}, t));
    std::uniform_real_distribution<double> jit(-cfg_.heartbeat_jitter, cfg_.heartbeat_jitter);
    next_heartbeat_ = t + cfg_.heartbeat_period + jit(rng_);
  }
  for (auto& [id, st] : sync_) {
    if (st.done || t < st.next_request) continue;
    if (t - st.started >= cfg_.sync_deadline) {
      if (!st.exchanges.empty()) {
        finish_sync(id, st);
        continue;
      }
      st.started = t;  // nothing heard yet, keep trying
    }
    out.push_back(make_msg(SyncRequest{t}, t));
    st.outstanding.insert(t);
    if (st.outstanding.size() > 128) st.outstanding.erase(st.outstanding.begin());
    st.next_request = t + cfg_.sync_spacing;
  }
  return out;
}

void Agent::finish_sync(int teammate, SyncState& st) {
  auto it = table_.find(teammate);
  if (it != table_.end()) it->second.offset = ptp_offset(st.exchanges);
  st.done = true;
}

std::vector<SwarmMessage> Agent::on_message(const SwarmMessage& msg, double t_arrival) {
  std::vector<SwarmMessage> replies;
  if (diverged_) return replies;

  if (const auto* hb = std::get_if<Heartbeat>(&msg.payload)) {
    const bool is_new = process_heartbeat(table_, hb->id, hb->addr, t_arrival);
    if (is_new && !sync_.count(hb->id)) {
      SyncState st;
      st.started = t_arrival;
      st.next_request = t_arrival;
      sync_.emplace(hb->id, st);
    }
    return replies;
  }
  if (const auto* rq = std::get_if<SyncRequest>(&msg.payload)) {
    replies.push_back(make_msg(SyncResponse{msg.sender, rq->t1, t_arrival, t_arrival},
                               t_arrival));
    return replies;
  }
  if (const auto* rs = std::get_if<SyncResponse>(&msg.payload)) {
    if (rs->requester != cfg_.id) return replies;
    auto it = sync_.find(msg.sender);
    if (it == sync_.end() || it->second.done) return replies;
    auto& st = it->second;
    auto pending = st.outstanding.find(rs->t1);
    if (pending == st.outstanding.end()) return replies;
    st.outstanding.erase(pending);
    st.exchanges.push_back(SyncExchange{rs->t1, rs->t2, rs->t3, t_arrival});
    if (static_cast<int>(st.exchanges.size()) >= cfg_.sync_target) {
      finish_sync(msg.sender, st);
    }
    return replies;
  }
  if (const auto* pkt = std::get_if<TeammateStatePacket>(&msg.payload)) {
    auto& dq = recent_pkts_[pkt->sender];
    dq.push_back(*pkt);
    while (dq.size() > 3) dq.pop_front();
    latest_pkt_arrival_[pkt->sender] = t_arrival;
    if (cfg_.fgo) {
      // Refined extrinsics shared at scan rate touch the factor graph only
      // when the edge is new (a joining UAV bootstrapping its graph).
      for (const auto& [peer, pose] : pkt->extrinsics) {
        if (peer == pkt->sender) continue;
        if (graph_.insert_if_absent(pkt->sender, peer, pose)) graph_dirty_ = true;
      }
    }
    return replies;
  }
  if (const auto* obs = std::get_if<MutualObservation>(&msg.payload)) {
    if (obs->observed == cfg_.id) {
      pending_passive_.push_back({*obs, t_arrival});
    }
    return replies;
  }
  if (const auto* edge = std::get_if<ExtrinsicEdge>(&msg.payload)) {
    if (cfg_.fgo) {
      if (graph_.insert(edge->k, edge->l, edge->pose)) graph_dirty_ = true;
    }
    return replies;
  }
  if (const auto* ts = std::get_if<TrajectorySample>(&msg.payload)) {
    auto entry = table_.find(ts->id);
    if (entry == table_.end() || !entry->second.offset) return replies;
    auto& dq = recv_traj_[ts->id];
    dq.emplace_back(ts->t - *entry->second.offset, ts->position);
    while (static_cast<int>(dq.size()) > cfg_.traj_window) dq.pop_front();
    return replies;
  }
  return replies;
}

void Agent::preload_teammate(int id, const Pose& ext, double tau, double now) {
  process_heartbeat(table_, id, id, now);
  table_[id].offset = tau;
  SyncState st;
  st.done = true;
  st.started = now;
  sync_.emplace(id, st);
  if (!x_.has_extrinsic(id)) {
    append_extrinsic(x_, P_, id, ext,
                     default_extrinsic_cov(cfg_.sigma0_ext_rot, cfg_.sigma0_ext_pos));
    CalibRecord rec;
    rec.teammate = id;
    rec.t_calibrated = now;
    rec.initial = ext;
    rec.source = CalibRecord::Source::Preload;
    calib_.push_back(rec);
  }
  graph_.insert_if_absent(cfg_.id, id, ext);
}

std::optional<Vec3> Agent::predicted_teammate_body_pos(int id, double t) const {
  if (!x_.has_extrinsic(id)) return std::nullopt;
  auto entry = table_.find(id);
  if (entry == table_.end() || !entry->second.offset) return std::nullopt;
  auto pk = recent_pkts_.find(id);
  if (pk == recent_pkts_.end() || pk->second.empty()) return std::nullopt;
  const TeammateStatePacket& pkt = pk->second.back();
  const double tau = *entry->second.offset;
  const double age = t - (pkt.t - tau);
  if (age < -0.05 || age > cfg_.active_obs_max_age) return std::nullopt;
  const double dt = cfg_.temporal_compensation ? age : 0.0;
  const Pose& ext = x_.extrinsics.at(id);
  const Vec3 p_global = ext.act(pkt.pose.pos + pkt.vel * dt);
  return x_.pose().inverse().act(p_global);
}

std::vector<MutualEstimate> Agent::mutual_states(double t) const {
  std::vector<MutualEstimate> out;
  for (const auto& [id, ext] : x_.extrinsics) {
    auto entry = table_.find(id);
    if (entry == table_.end() || entry->second.status != LinkStatus::Connected ||
        !entry->second.offset) {
      continue;
    }
    auto pk = recent_pkts_.find(id);
    if (pk == recent_pkts_.end() || pk->second.empty()) continue;
    const TeammateStatePacket& pkt = pk->second.back();
    const double age = std::max(0.0, t - (pkt.t - *entry->second.offset));
    if (age >= cfg_.staleness_limit) continue;  // estimate withdrawn

    MutualEstimate m;
    m.teammate = id;
    m.pose = ext * pkt.pose;
    m.vel = ext.rot * pkt.vel;
    m.pose.pos += m.vel * age;  // constant-velocity hold
    m.staleness = age;
    m.predicted = age > 1.5 / cfg_.rig.scan_rate;
    out.push_back(m);
  }
  return out;
}

std::vector<SwarmMessage> Agent::on_scan(const ScanProducts& products, double t_scan) {
  std::vector<SwarmMessage> out;
  if (diverged_) return out;
  ++scan_index_;
  timeout_scan(table_, t_scan);
  predict_to(t_scan);
  const Vec3 pre_update_pos = x_.pos;

  // ---- marker routing -------------------------------------------------
  std::vector<MarkerReturn> pool;
  for (const auto& cl : products.markers) {
    pool.insert(pool.end(), cl.points.begin(), cl.points.end());
  }

  struct ActiveCandidate {
    int teammate;
    Vec3 centroid;
  };
  std::vector<ActiveCandidate> active_candidates;
  std::vector<bool> taken(pool.size(), false);
  for (const auto& [id, ext] : x_.extrinsics) {
    const auto pred = predicted_teammate_body_pos(id, t_scan);
    if (!pred) continue;
    Vec3 sum = Vec3::Zero();
    int n = 0;
    for (size_t i = 0; i < pool.size(); ++i) {
      if (taken[i]) continue;
      if ((pool[i].point - *pred).norm() <= cfg_.removal_radius) {
        taken[i] = true;
        sum += pool[i].point;
        ++n;
      }
    }
    if (n > 0) active_candidates.push_back({id, sum / static_cast<double>(n)});
  }
  if (static_cast<int>(active_candidates.size()) > cfg_.rig.obs_cap) {
    std::sort(active_candidates.begin(), active_candidates.end(),
              [](const ActiveCandidate& a, const ActiveCandidate& b) {
                const double da = a.centroid.norm(), db = b.centroid.norm();
                return da != db ? da < db : a.teammate < b.teammate;
              });
    active_candidates.resize(cfg_.rig.obs_cap);
    std::sort(active_candidates.begin(), active_candidates.end(),
              [](const ActiveCandidate& a, const ActiveCandidate& b) {
                return a.teammate < b.teammate;
              });
  }
  std::vector<MarkerReturn> remainder;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (!taken[i]) remainder.push_back(pool[i]);
  }

  // ---- degeneration evaluation ----------------------------------------
  const double sigma_min = degeneration_metric(x_, products.planes);
  const bool degen = cfg_.degeneration_handling && sigma_min < cfg_.eps_degen;
  if (degen) ++degenerate_scans_;
  const double obs_scale = degen ? cfg_.degen_obs_scale : 1.0;

  // ---- measurement bundle ----------------------------------------------
  MeasurementBundle bundle;
  bundle.t_scan = t_scan;
  bundle.planes = products.planes;

  std::set<int> observed;
  for (const auto& cand : active_candidates) {
    auto entry = table_.find(cand.teammate);
    const auto& pkt = recent_pkts_.at(cand.teammate).back();
    MeasurementBundle::ActiveObs ao;
    ao.obs.kind = ObsKind::Active;
    ao.obs.observer = cfg_.id;
    ao.obs.observed = cand.teammate;
    ao.obs.meas = cand.centroid;
    ao.obs.t_obs = t_scan;
    ao.obs.cov = obs_scale * cfg_.noise.active_obs_cov;
    ao.pkt = pkt;
    ao.tau = *entry->second.offset;
    if (!cfg_.temporal_compensation) {
      // Force the compensation gap to zero without touching the model.
      ao.pkt.t = ao.obs.t_obs + ao.tau;
    }
    bundle.active.push_back(ao);
    observed.insert(cand.teammate);
  }

  const double scan_period = 1.0 / cfg_.rig.scan_rate;
  for (const auto& pp : pending_passive_) {
    if (t_scan - pp.arrival > scan_period + 1e-9) continue;  // stale, dropped
    const int j = pp.obs.observer;
    auto entry = table_.find(j);
    if (entry == table_.end() || !entry->second.offset) continue;
    if (!x_.has_extrinsic(j)) continue;
    auto pk = recent_pkts_.find(j);
    if (pk == recent_pkts_.end()) continue;
    const TeammateStatePacket* paired = nullptr;
    for (const auto& pkt : pk->second) {
      if (std::abs(pkt.t - pp.obs.t_obs) < 1e-6) paired = &pkt;
    }
    if (!paired) continue;
    MeasurementBundle::PassiveObs po;
    po.obs = pp.obs;
    po.obs.cov = obs_scale * cfg_.noise.passive_obs_cov;
    po.pkt = *paired;
    po.tau = *entry->second.offset;
    if (!cfg_.temporal_compensation) {
      po.pkt.t = bundle.t_scan + po.tau;
      po.obs.t_obs = po.pkt.t;
    }
    bundle.passive.push_back(po);
    observed.insert(j);
  }
  pending_passive_.clear();

  // Innovation bookkeeping at the predicted state (pre-update).
  for (const auto& ao : bundle.active) {
    if (x_.has_extrinsic(ao.obs.observed)) {
      const auto r = active_obs_residual(x_, ao.obs, ao.pkt, ao.tau);
      obs_innov_sq_ += r.r.squaredNorm();
      ++obs_innov_n_;
    }
  }
  for (const auto& po : bundle.passive) {
    if (x_.has_extrinsic(po.obs.observer)) {
      const auto r = passive_obs_residual(x_, po.obs, po.pkt, po.tau, bundle.t_scan);
      obs_innov_sq_ += r.r.squaredNorm();
      ++obs_innov_n_;
    }
  }

  // ---- marginalized update ---------------------------------------------
  std::set<int> A;
  if (!cfg_.marginalization) {
    for (const auto& [id, e] : x_.extrinsics) A.insert(id);
  } else if (!degen) {
    A = observed;
  }  // degenerate: A stays empty, every extrinsic becomes exogenous noise

  const auto t0 = std::chrono::steady_clock::now();
  Partition part = partition(x_, P_, A);
  std::map<int, ExogenousExtrinsic> exo;
  {
    int row = 0;
    for (int id : part.hidden_ids) {
      ExogenousExtrinsic e;
      e.pose = part.x2.at(id);
      e.cov = part.cov2.block<6, 6>(row, row);
      exo.emplace(id, e);
      row += 6;
    }
  }
  NavState x1 = part.x1;
  StateCovariance cov1 = part.cov1;
  const UpdateResult ur = iterated_update(x1, cov1, bundle, cfg_.noise, exo, cfg_.update);
  NavState x_post;
  StateCovariance P_post;
  reinitialize(x1, cov1, part.x2, part.cov2, x_post, P_post);
  const auto t1 = std::chrono::steady_clock::now();

  // Marginalized blocks must come back bit-identical.
  for (int id : part.hidden_ids) {
    if (!same_bits(part.x2.at(id), x_post.extrinsics.at(id))) ++frozen_violations_;
  }

  const double jump = (x_post.pos - pre_update_pos).norm();
  if (!x_post.pos.allFinite() || jump > cfg_.divergence_jump) {
    diverged_ = true;
    diverged_at_ = t_scan;
  } else {
    x_ = std::move(x_post);
    P_ = std::move(P_post);
  }

  telemetry_.scan_index = scan_index_;
  telemetry_.t = t_scan;
  telemetry_.pose = x_.pose();
  telemetry_.vel = x_.vel;
  telemetry_.sigma_min = sigma_min;
  telemetry_.K = static_cast<int>(A.size());
  telemetry_.degenerate = degen;
  telemetry_.updated = ur.updated;
  telemetry_.update_us =
      std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count() / 1e3;

  if (diverged_) return out;

  // ---- new-teammate pipeline (Alg. 1) ----------------------------------
  run_init_pipeline(remainder, t_scan, out);
  run_graph_calibration(t_scan);

  // ---- broadcast --------------------------------------------------------
  TeammateStatePacket ego;
  ego.sender = cfg_.id;
  ego.t = t_scan;
  ego.pose = x_.pose();
  ego.vel = x_.vel;
  ego.pose_cov = P_.topLeftCorner<6, 6>();
  ego.extrinsics = x_.extrinsics;
  ego.degenerate = degen;
  out.push_back(make_msg(ego, t_scan));

  for (const auto& cand : active_candidates) {
    MutualObservation obs;
    obs.kind = ObsKind::Active;
    obs.observer = cfg_.id;
    obs.observed = cand.teammate;
    obs.meas = cand.centroid;
    obs.t_obs = t_scan;
    obs.cov = cfg_.noise.active_obs_cov;
    out.push_back(make_msg(obs, t_scan));
  }

  bool need_traj = false;
  for (const auto& [id, e] : table_) {
    if (e.status == LinkStatus::Connected && !x_.has_extrinsic(id)) need_traj = true;
  }
  if (need_traj) {
    out.push_back(make_msg(TrajectorySample{cfg_.id, t_scan, x_.pos}, t_scan));
  }

  last_scan_t_ = t_scan;
  return out;
}

void Agent::run_init_pipeline(const std::vector<MarkerReturn>& returns, double t,
                              std::vector<SwarmMessage>& out) {
  const auto filtered = reflectivity_filter(returns, cfg_.reflectivity_threshold);
  std::vector<Vec3> body_points;
  body_points.reserve(filtered.size());
  for (const auto& m : filtered) body_points.push_back(m.point);
  const auto clusters =
      euclidean_cluster(body_points, cfg_.cluster_radius, cfg_.cluster_min_size,
                        cfg_.cluster_max_extent);
  const Pose T_b = x_.pose();
  std::vector<Vec3> centroids;
  centroids.reserve(clusters.size());
  for (const auto& c : clusters) centroids.push_back(T_b.act(c.centroid));

  const double dt = std::isnan(last_scan_t_) ? 1.0 / cfg_.rig.scan_rate
                                             : std::max(t - last_scan_t_, 1e-3);
  std::vector<bool> used(centroids.size(), false);

  // Associate existing trackers with the nearest unused centroid.
  for (auto& tr : trackers_) {
    const Vec3 pred = tr.pos + tr.vel * dt;
    int best = -1;
    double best_d = cfg_.tracker.gate;
    for (size_t i = 0; i < centroids.size(); ++i) {
      if (used[i]) continue;
      const double d = (centroids[i] - pred).norm();
      if (d <= best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    std::optional<Vec3> meas;
    if (best >= 0) {
      used[best] = true;
      meas = centroids[best];
    }
    tr = tracker_step(tr, dt, meas, t, cfg_.tracker);
  }
  trackers_.erase(std::remove_if(trackers_.begin(), trackers_.end(),
                                 [](const TemporaryTracker& tr) { return tr.retired; }),
                  trackers_.end());
  for (size_t i = 0; i < centroids.size(); ++i) {
    if (used[i]) continue;
    trackers_.push_back(make_tracker(next_tracker_id_, centroids[i], t, cfg_.tracker));
    tracker_birth_[next_tracker_id_] = t;
    ++next_tracker_id_;
  }

  // Excitation gate, then identity search by trajectory matching.
  std::vector<int> promoted;
  for (auto& tr : trackers_) {
    std::vector<Vec3> positions;
    std::vector<std::pair<double, Vec3>> traj(tr.trajectory.begin(), tr.trajectory.end());
    positions.reserve(traj.size());
    for (const auto& [ts, p] : traj) positions.push_back(p);
    if (!excitation_check(positions, cfg_.excitation_threshold)) continue;

    for (const auto& [j, dq] : recv_traj_) {
      if (x_.has_extrinsic(j)) continue;
      auto entry = table_.find(j);
      if (entry == table_.end() || entry->second.status != LinkStatus::Connected ||
          !entry->second.offset) {
        continue;
      }
      if (dq.size() < 3) continue;
      std::vector<std::pair<double, Vec3>> teammate(dq.begin(), dq.end());
      const auto match = match_trajectories(traj, teammate, cfg_.match_time_tol,
                                            cfg_.excitation_threshold);
      if (!match || match->residual >= cfg_.match_residual_threshold) continue;

      append_extrinsic(x_, P_, j, match->transform,
                       default_extrinsic_cov(cfg_.sigma0_ext_rot, cfg_.sigma0_ext_pos));
      CalibRecord rec;
      rec.teammate = j;
      rec.t_detect = tracker_birth_.count(tr.id) ? tracker_birth_[tr.id] : -1.0;
      rec.t_calibrated = t;
      rec.initial = match->transform;
      rec.source = CalibRecord::Source::Match;
      calib_.push_back(rec);

      if (graph_.insert(cfg_.id, j, match->transform)) graph_dirty_ = true;
      out.push_back(make_msg(ExtrinsicEdge{cfg_.id, j, match->transform}, t));
      promoted.push_back(tr.id);
      break;
    }
  }
  if (!promoted.empty()) {
    trackers_.erase(std::remove_if(trackers_.begin(), trackers_.end(),
                                   [&](const TemporaryTracker& tr) {
                                     return std::find(promoted.begin(), promoted.end(),
                                                      tr.id) != promoted.end();
                                   }),
                    trackers_.end());
  }
}

void Agent::run_graph_calibration(double t) {
  if (!cfg_.fgo || !graph_dirty_) return;
  graph_dirty_ = false;
  const auto solution = graph_.optimize();
  for (const auto& [j, pose] : solution) {
    if (j == cfg_.id || x_.has_extrinsic(j)) continue;
    if (!table_.count(j)) continue;
    append_extrinsic(x_, P_, j, pose,
                     default_extrinsic_cov(cfg_.sigma0_ext_rot, cfg_.sigma0_ext_pos));
    CalibRecord rec;
    rec.teammate = j;
    rec.t_calibrated = t;
    rec.initial = pose;
    rec.source = CalibRecord::Source::Graph;
    calib_.push_back(rec);
  }
}

double Agent::obs_innovation_rms() const {
  return obs_innov_n_ > 0 ? std::sqrt(obs_innov_sq_ / obs_innov_n_) : 0.0;
}

}  // namespace swarm
