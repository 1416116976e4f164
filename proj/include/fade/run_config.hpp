#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "fade/diffusion.hpp"
#include "fade/fade_trainer.hpp"
#include "fade/world.hpp"

namespace fade {

// One experiment's full configuration. Every section must be present in the
// file (may be empty); unknown keys are rejected by name; omitted scalars
// take the defaults below.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  WorldConfig world = WorldConfig::default_world();
  std::int64_t schedule_steps = 50;
  double beta_start = 1e-4;
  double beta_end = 0.2;
  PretrainConfig pretrain;
  FadeConfig fade;  // seed is filled per stage at run time, not from the file
  std::int64_t eval_samples = 500;
  std::int64_t grid_bins = 16;

  NoiseSchedule make_schedule() const {
    return NoiseSchedule::linear(schedule_steps, beta_start, beta_end);
  }
};

RunConfig parse_run_config(const nlohmann::json& j);

// loads and validates; optionally reports the fnv-1a hash of the file bytes
RunConfig load_run_config(const std::string& path, std::string* config_hash);

nlohmann::json run_config_to_json(const RunConfig& cfg);

}  // namespace fade
