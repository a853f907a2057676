#include "swarm/scenario.hpp"

#include <fstream>
#include <sstream>

namespace swarm {

uint64_t seed_mix(uint64_t seed, std::string_view tag, uint64_t salt) {
  uint64_t h = 1469598103934665603ull;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  uint64_t z = seed ^ h ^ (salt * 0x9e3779b97f4a7c15ull);
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

namespace {

struct ParseCtx {
  std::string origin;
  int line = 0;
  [[noreturn]] void fail(const std::string& what) const {
    throw ScenarioParseError(origin + ":" + std::to_string(line) + ": " + what);
  }
  double num(const std::string& v) const {
    try {
      size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) fail("trailing characters in number '" + v + "'");
      return d;
    } catch (const ScenarioParseError&) {
      throw;
    } catch (...) {
      fail("expected a number, got '" + v + "'");
    }
  }
  bool flag(const std::string& v) const {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    fail("expected on/off, got '" + v + "'");
  }
  Vec3 vec3(const std::string& v) const {
    std::istringstream ss(v);
    Vec3 out;
    if (!(ss >> out.x() >> out.y() >> out.z())) fail("expected three numbers, got '" + v + "'");
    return out;
  }
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

TrajectorySpec parse_trajectory(const std::string& v, const ParseCtx& ctx) {
  TrajectorySpec t;
  std::istringstream ss(v);
  if (!(ss >> t.kind)) ctx.fail("empty trajectory spec");
  if (t.kind != "hover" && t.kind != "figure8" && t.kind != "line") {
    ctx.fail("unknown trajectory kind '" + t.kind + "'");
  }
  std::string tok;
  while (ss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) ctx.fail("trajectory token '" + tok + "' is not key=value");
    const std::string k = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (k == "scale") t.scale = ctx.num(val);
    else if (k == "period") t.period = ctx.num(val);
    else if (k == "height") t.height = ctx.num(val);
    else if (k == "begin") t.begin = ctx.num(val);
    else if (k == "end") t.end = ctx.num(val);
    else if (k == "ramp") t.ramp = ctx.num(val);
    else if (k == "dx") t.line_to.x() = ctx.num(val);
    else if (k == "dy") t.line_to.y() = ctx.num(val);
    else if (k == "dz") t.line_to.z() = ctx.num(val);
    else ctx.fail("unknown trajectory key '" + k + "'");
  }
  return t;
}

}  // namespace

void apply_rig_key(SensorRig& rig, const std::string& key, const std::string& value) {
  ParseCtx ctx{"rig", 0};
  if (key == "scan_rate") rig.scan_rate = ctx.num(value);
  else if (key == "imu_rate") rig.imu_rate = ctx.num(value);
  else if (key == "fov_azimuth") rig.fov_azimuth = ctx.num(value);
  else if (key == "fov_elevation") rig.fov_elevation = ctx.num(value);
  else if (key == "max_range") rig.max_range = ctx.num(value);
  else if (key == "points_per_scan") rig.points_per_scan = static_cast<int>(ctx.num(value));
  else if (key == "marker_points") rig.marker_points = static_cast<int>(ctx.num(value));
  else if (key == "marker_sigma") rig.marker_sigma = ctx.num(value);
  else if (key == "marker_reflectivity") rig.marker_reflectivity = ctx.num(value);
  else if (key == "junk_returns") rig.junk_returns = static_cast<int>(ctx.num(value));
  else if (key == "obs_cap") rig.obs_cap = static_cast<int>(ctx.num(value));
  else throw ScenarioParseError("unknown rig key '" + key + "'");
}

void apply_toggle(Scenario& sc, const std::string& name, bool on) {
  if (name == "marginalization") sc.proto.marginalization = on;
  else if (name == "degeneration") sc.proto.degeneration_handling = on;
  else if (name == "temporal_compensation") sc.proto.temporal_compensation = on;
  else if (name == "fgo") sc.proto.fgo = on;
  else if (name == "preload_extrinsics") sc.preload_extrinsics = on;
  else if (name == "net_trace") sc.net_trace = on;
  else throw ScenarioParseError("unknown toggle '" + name + "'");
}

Scenario parse_scenario_text(const std::string& text, const std::string& origin) {
  Scenario sc;
  ParseCtx ctx{origin, 0};
  std::istringstream in(text);
  std::string raw;
  std::string section;

  while (std::getline(in, raw)) {
    ++ctx.line;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') ctx.fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section == "uav") sc.uavs.emplace_back();
      else if (section == "occlusion") sc.occlusions.emplace_back();
      else if (section != "world" && section != "rig" && section != "noise" &&
               section != "link" && section != "filter" && section != "init" &&
               section != "toggles") {
        ctx.fail("unknown section [" + section + "]");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) ctx.fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) ctx.fail("empty key or value");

    if (section.empty()) {
      if (key == "name") sc.name = val;
      else if (key == "duration") sc.duration = ctx.num(val);
      else if (key == "seed") sc.seed = static_cast<uint64_t>(ctx.num(val));
      else ctx.fail("unknown top-level key '" + key + "'");
    } else if (section == "world") {
      auto& w = sc.world;
      if (key == "kind") {
        if (val != "room" && val != "corridor" && val != "forest") {
          ctx.fail("unknown world kind '" + val + "'");
        }
        w.kind = val;
      } else if (key == "lo") w.lo = ctx.vec3(val);
      else if (key == "hi") w.hi = ctx.vec3(val);
      else if (key == "length") w.length = ctx.num(val);
      else if (key == "width") w.width = ctx.num(val);
      else if (key == "height") w.height = ctx.num(val);
      else if (key == "entrance") w.entrance = ctx.num(val);
      else if (key == "extent") w.extent = ctx.vec3(val);
      else if (key == "trees") w.trees = static_cast<int>(ctx.num(val));
      else if (key == "tree_half_width") w.tree_half_width = ctx.num(val);
      else ctx.fail("unknown world key '" + key + "'");
    } else if (section == "rig") {
      try {
        apply_rig_key(sc.rig, key, val);
      } catch (const ScenarioParseError& e) {
        ctx.fail(e.what());
      }
    } else if (section == "noise") {
      auto& n = sc.proto.noise;
      if (key == "gyro") n.gyro_noise = ctx.num(val);
      else if (key == "accel") n.accel_noise = ctx.num(val);
      else if (key == "gyro_bias_rw") n.gyro_bias_rw = ctx.num(val);
      else if (key == "accel_bias_rw") n.accel_bias_rw = ctx.num(val);
      else if (key == "point_sigma") n.point_sigma = ctx.num(val);
      else if (key == "sigma_ao") sc.sigma_ao = ctx.num(val);
      else if (key == "sigma_po") sc.sigma_po = ctx.num(val);
      else ctx.fail("unknown noise key '" + key + "'");
    } else if (section == "link") {
      if (key == "latency_mean") sc.link.latency_mean = ctx.num(val);
      else if (key == "latency_jitter") sc.link.latency_jitter = ctx.num(val);
      else if (key == "plr") sc.link.loss_rate = ctx.num(val);
      else ctx.fail("unknown link key '" + key + "'");
    } else if (section == "filter") {
      auto& p = sc.proto;
      if (key == "max_iters") p.update.max_iters = static_cast<int>(ctx.num(val));
      else if (key == "tol") p.update.tol = ctx.num(val);
      else if (key == "eps_degen") p.eps_degen = ctx.num(val);
      else if (key == "degen_obs_scale") p.degen_obs_scale = ctx.num(val);
      else if (key == "sigma0_ext_rot_deg") p.sigma0_ext_rot = ctx.num(val) * M_PI / 180.0;
      else if (key == "sigma0_ext_pos") p.sigma0_ext_pos = ctx.num(val);
      else if (key == "divergence_jump") p.divergence_jump = ctx.num(val);
      else if (key == "p0_ba") p.p0_ba = ctx.num(val);
      else if (key == "p0_bg") p.p0_bg = ctx.num(val);
      else ctx.fail("unknown filter key '" + key + "'");
    } else if (section == "init") {
      auto& p = sc.proto;
      if (key == "reflectivity_threshold") p.reflectivity_threshold = ctx.num(val);
      else if (key == "cluster_radius") p.cluster_radius = ctx.num(val);
      else if (key == "cluster_min_size") p.cluster_min_size = static_cast<int>(ctx.num(val));
      else if (key == "cluster_max_extent") p.cluster_max_extent = ctx.num(val);
      else if (key == "removal_radius") p.removal_radius = ctx.num(val);
      else if (key == "gate") p.tracker.gate = ctx.num(val);
      else if (key == "max_misses") p.tracker.max_misses = static_cast<int>(ctx.num(val));
      else if (key == "excitation_threshold") p.excitation_threshold = ctx.num(val);
      else if (key == "match_residual_threshold") p.match_residual_threshold = ctx.num(val);
      else if (key == "match_time_tol") p.match_time_tol = ctx.num(val);
      else if (key == "traj_window") p.traj_window = static_cast<int>(ctx.num(val));
      else ctx.fail("unknown init key '" + key + "'");
    } else if (section == "toggles") {
      if (key == "preload_pos_noise") sc.preload_pos_noise = ctx.num(val);
      else if (key == "preload_rot_noise") sc.preload_rot_noise = ctx.num(val);
      else {
        try {
          apply_toggle(sc, key, ctx.flag(val));
        } catch (const ScenarioParseError& e) {
          ctx.fail(e.what());
        }
      }
    } else if (section == "uav") {
      if (sc.uavs.empty()) ctx.fail("uav key outside [uav] section");
      auto& u = sc.uavs.back();
      if (key == "id") u.id = static_cast<int>(ctx.num(val));
      else if (key == "start") {
        std::istringstream ss(val);
        if (!(ss >> u.start_pos.x() >> u.start_pos.y() >> u.start_pos.z() >> u.start_yaw)) {
          ctx.fail("start expects 'x y z yaw'");
        }
      } else if (key == "trajectory") u.traj = parse_trajectory(val, ctx);
      else if (key == "clock_offset") u.clock_offset = ctx.num(val);
      else if (key == "join") u.join = ctx.num(val);
      else if (key == "kill") u.kill = ctx.num(val);
      else if (key == "bias_gyro") u.bias_gyro = ctx.vec3(val);
      else if (key == "bias_accel") u.bias_accel = ctx.vec3(val);
      else u.rig_overrides.emplace_back(key, val);  // validated at build time
    } else if (section == "occlusion") {
      auto& o = sc.occlusions.back();
      if (key == "from") o.from = static_cast<int>(ctx.num(val));
      else if (key == "to") o.to = static_cast<int>(ctx.num(val));
      else if (key == "begin") o.begin = ctx.num(val);
      else if (key == "end") o.end = ctx.num(val);
      else ctx.fail("unknown occlusion key '" + key + "'");
    }
  }

  if (sc.uavs.empty()) throw ScenarioParseError(origin + ": scenario declares no [uav]");
  if (!(sc.duration > 0.0)) throw ScenarioParseError(origin + ": duration must be > 0");
  std::set<int> ids;
  for (const auto& u : sc.uavs) {
    if (!ids.insert(u.id).second) {
      throw ScenarioParseError(origin + ": duplicate uav id " + std::to_string(u.id));
    }
  }
  return sc;
}

Scenario parse_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioParseError("cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str(), path);
}

}  // namespace swarm
