#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "fade/adversary.hpp"
#include "fade/diffusion.hpp"
#include "fade/param_store.hpp"
#include "fade/probe.hpp"
#include "fade/world.hpp"

namespace fade {

inline constexpr std::int64_t kCheckpointFormatVersion = 1;

// On-disk snapshot of one ParameterStore plus the data needed to rebuild the
// owning model. JSON doubles are written in shortest round-trip form, so
// load(save(x)) reproduces every parameter bit for bit.
struct Checkpoint {
  std::int64_t format_version = kCheckpointFormatVersion;
  std::string stage;        // pretrained | erased | discriminator | probe
  std::string config_hash;  // fnv-1a 64 of the config file bytes, hex
  std::uint64_t seed = 0;
  nlohmann::json meta;      // model reconstruction data (kind-specific)
  nlohmann::json schedule;  // {steps, beta_start, beta_end} for denoisers
  ParameterStore params;
};

bool is_known_stage(const std::string& stage);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// model <-> checkpoint adapters
Checkpoint checkpoint_from_denoiser(const DenoiserModel& model, const NoiseSchedule& schedule,
                                    double beta_start, double beta_end, const std::string& stage,
                                    const std::string& config_hash, std::uint64_t seed);
DenoiserModel denoiser_from_checkpoint(const Checkpoint& ckpt);

Checkpoint checkpoint_from_discriminator(const Discriminator& disc, const std::string& config_hash,
                                         std::uint64_t seed);
Checkpoint checkpoint_from_probe(const ProbeClassifier& probe, const std::string& config_hash,
                                 std::uint64_t seed);

}  // namespace fade
