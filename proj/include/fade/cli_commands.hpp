#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fade {

// Stage indices for master-seed expansion: stage_seed = derive(seed, index).
// Documented in the README; keep in sync with it.
inline constexpr std::uint64_t kSeedStagePretrain = 1;
inline constexpr std::uint64_t kSeedStageErase = 2;
inline constexpr std::uint64_t kSeedStageEval = 3;
inline constexpr std::uint64_t kSeedStageVerify = 4;
inline constexpr std::uint64_t kSeedStageProbe = 5;

struct CommandOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

// Each command throws (ValidationError, CheckpointError, ...) on failure and
// writes its outputs atomically; run_cli maps exceptions to exit codes.

// -> pretrained.json, pretrain_loss.csv
void cmd_pretrain(const std::string& config_path, const CommandOverrides& ov = {});

// -> erased.json, discriminator.json, erase_run.csv, erase_run.json
void cmd_erase(const std::string& config_path, const std::string& checkpoint_path,
               const CommandOverrides& ov = {});

// -> metrics.json, metrics.csv, probe.json. Erased checkpoints need the
// pretrained checkpoint as the normalization reference.
void cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
              const std::optional<std::string>& reference_path, const CommandOverrides& ov = {});

// -> ablation.csv, ablation.json
void cmd_ablate(const std::string& config_path, const std::string& checkpoint_path,
                const CommandOverrides& ov = {});

struct TheoryRunSummary {
  std::int64_t total = 0;
  std::int64_t failed = 0;
};

// -> theory.json; random pairs when no pair file is given
TheoryRunSummary cmd_verify_theory(const std::optional<std::string>& pairs_path,
                                   std::int64_t count, std::uint64_t seed, double tolerance,
                                   const std::string& out_dir);

int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

}  // namespace fade
