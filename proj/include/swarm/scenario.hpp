#pragma once

#include <string>

#include "swarm/agent.hpp"

namespace swarm {

struct WorldSpec {
  std::string kind = "room";  // room | corridor | forest
  // room
  Vec3 lo{-5.0, -5.0, 0.0};
  Vec3 hi{5.0, 5.0, 3.0};
  // corridor
  double length = 40.0;
  double width = 3.0;
  double height = 3.0;
  double entrance = 10.0;
  // forest
  Vec3 extent{40.0, 30.0, 6.0};
  int trees = 30;
  double tree_half_width = 0.35;
};

struct TrajectorySpec {
  std::string kind = "hover";  // hover | figure8 | line
  double scale = 3.0;
  double period = 12.0;
  double height = 0.0;
  double begin = 0.0;
  double end = 1e18;
  double ramp = 2.0;
  Vec3 line_to = Vec3::Zero();
};

struct UavSpec {
  int id = 0;
  Vec3 start_pos{0.0, 0.0, 1.0};
  double start_yaw = 0.0;
  TrajectorySpec traj;
  double clock_offset = 0.0;
  double join = 0.0;
  double kill = 1e18;
  Vec3 bias_gyro = Vec3::Zero();
  Vec3 bias_accel = Vec3::Zero();
  std::vector<std::pair<std::string, std::string>> rig_overrides;
};

struct OcclusionSpec {
  int from = 0;
  int to = 0;
  double begin = 0.0;
  double end = 0.0;
};

struct Scenario {
  std::string name = "scenario";
  double duration = 30.0;
  uint64_t seed = 1;
  WorldSpec world;
  SensorRig rig;
  LinkModel link;
  AgentConfig proto;  // shared filter/init/toggle knobs; id and seed are per-UAV
  double sigma_ao = 0.1;  // m, isotropic mutual-observation noise
  double sigma_po = 0.1;
  std::vector<UavSpec> uavs;
  std::vector<OcclusionSpec> occlusions;
  bool preload_extrinsics = false;
  double preload_pos_noise = 0.05;
  double preload_rot_noise = 0.02;
  bool net_trace = true;
};

struct ScenarioParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Scenario parse_scenario_text(const std::string& text, const std::string& origin);
Scenario parse_scenario_file(const std::string& path);

// CLI-facing toggle override; throws on an unknown toggle name.
void apply_toggle(Scenario& sc, const std::string& name, bool on);

// Applies a rig override key to a SensorRig; throws on unknown keys.
void apply_rig_key(SensorRig& rig, const std::string& key, const std::string& value);

uint64_t seed_mix(uint64_t seed, std::string_view tag, uint64_t salt = 0);

}  // namespace swarm
