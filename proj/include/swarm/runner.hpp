#pragma once

#include <optional>

#include "swarm/metrics.hpp"
#include "swarm/scenario.hpp"

namespace swarm {

struct RunOptions {
  std::optional<uint64_t> seed;  // overrides the scenario seed
  std::string out_dir;           // when set, CSV outputs are written here
};

// Executes the scenario deterministically (round-robin agents on a shared
// bus) and computes the metrics report. With out_dir set, writes
// trajectories.csv, extrinsics.csv, metrics.csv, net_trace.csv and
// telemetry.csv (the last one carries wall-clock timings and is the only
// non-reproducible output).
MetricsReport run_scenario(const Scenario& sc, const RunOptions& opt = {});

}  // namespace swarm
