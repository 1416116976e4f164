#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fade/adversary.hpp"
#include "fade/diffusion.hpp"
#include "fade/metrics.hpp"
#include "fade/optimizer.hpp"
#include "fade/param_store.hpp"
#include "fade/probe.hpp"
#include "fade/world.hpp"

namespace fade {

struct FadeConfig {
  double lambda = 1.0;  // preservation weight
  double omega = 2.0;   // guidance strength
  std::int64_t max_iterations = 2000;
  std::int64_t t0_cutoff = -1;  // preservation horizon; -1 = steps / 2
  double rho = 0.2;             // saliency fraction
  std::int64_t batch = 64;
  // draws behind the one-time saliency estimate; more draws cost little and
  // keep the mask from locking onto single-batch noise
  std::int64_t saliency_batch = 512;
  double gen_lr = 2e-4;
  double disc_lr = 8e-4;  // 4x generator rate
  std::int64_t disc_pretrain_steps = 200;
  std::int64_t stop_window = 50;
  double stop_delta = 0.05;
  std::int64_t val_pool_iters = 8;  // batches averaged by the stopping monitor
  std::int64_t prompt_pairs = 2;
  std::int64_t trunc_backprop_steps = -1;  // -1 = full sampling chain
  bool disable_adv = false;
  bool disable_pres = false;
  bool disable_saliency = false;
  std::uint64_t seed = 0;

  void validate(const NoiseSchedule& schedule) const;
  std::int64_t resolved_t0(const NoiseSchedule& schedule) const;
  // the weight actually applied: 0 when preservation is ablated
  double effective_lambda() const { return disable_pres ? 0.0 : lambda; }
};

// Hard inclusion mask over one store's flattened parameter index.
struct SaliencyMask {
  std::vector<std::uint8_t> include;
  std::int64_t included = 0;
};

SaliencyMask all_inclusive_mask(const ParameterStore& params);

// Rank parameters by summed per-sample absolute gradient of the concept
// contrast ||eps(z_t, y_c, t) - eps(z_t, y_neg, t)||^2, where z_t comes from
// noising points the frozen model generates for concept prompts. Keeps the
// top ceil(rho * total) scalars, ties broken toward the lower flat index.
SaliencyMask compute_saliency_mask(const DenoiserModel& model, const DenoiserModel& frozen,
                                   const NoiseSchedule& schedule, const WorldConfig& world,
                                   const PromptSetPair& prompts, double rho, double omega,
                                   std::int64_t batch, std::uint64_t seed);

// Mean over the batch of ||eps_model(z_t, y, t) - eps_frozen(z_t, y, t)||^2
// with t uniform on {1..t0} and z_t noised from world samples; both models
// see the same z_t. The traced form differentiates the first model only.
double preservation_loss(const DenoiserModel& model, const DenoiserModel& frozen,
                         const NoiseSchedule& schedule, const WorldConfig& world,
                         const std::vector<PromptLabel>& y_neg, std::int64_t t0,
                         std::uint64_t seed);
ValueId preservation_loss(GradientRecord& rec, const DenoiserModel& model,
                          const DenoiserModel& frozen, const NoiseSchedule& schedule,
                          const WorldConfig& world, const std::vector<PromptLabel>& y_neg,
                          std::int64_t t0, std::uint64_t seed);

struct IterationMetrics {
  double l_rem = 0.0;    // removal loss (naive paired L2 when disable_adv)
  double l_pres = 0.0;
  double l_total = 0.0;
  double l_adv_d = 0.0;  // discriminator loss on this iteration's fresh batch
  double batch_acc = 0.0;  // accuracy on the fresh batch alone, pre-update
  double val_acc = 0.0;    // rolling mean of batch_acc over recent iterations
};

struct FadeState {
  DenoiserModel model;           // the model being edited
  const DenoiserModel* frozen = nullptr;  // pre-edit weights, never updated
  Discriminator disc;
  AdamState gen_opt, disc_opt;
  SaliencyMask mask;
  FadeConfig cfg;
  // per-iteration fresh-batch accuracies feeding the rolling monitor,
  // trimmed to the last val_pool_iters entries
  std::vector<double> recent_batch_acc;
};

// One adversarial erasure step: generate a fresh paired batch, score and
// update the discriminator, then take one masked generator step on
// L_rem + lambda * L_pres differentiated through the sampling chain.
// Each fresh batch is scored before any update sees it; val_acc averages
// those held-out scores over the last val_pool_iters iterations so the
// stopping rule reads a low-variance estimate of the current accuracy.
IterationMetrics fade_iteration(FadeState& state, const NoiseSchedule& schedule,
                                const WorldConfig& world, const PromptSetPair& prompts,
                                std::uint64_t iteration_seed);

enum class StopReason { converged, max_iterations };

struct ErasureRunRecord {
  std::vector<IterationMetrics> history;
  StopReason stop_reason = StopReason::max_iterations;
};

struct FadeResult {
  DenoiserModel model;  // edited weights
  Discriminator disc;
  SaliencyMask mask;
  ErasureRunRecord record;
};

// Full erasure run: saliency mask, discriminator pre-training, then
// fade_iteration until the validation discriminator accuracy sits inside
// [1/2 - delta, 1/2 + delta] for a full stopping window (or N is reached).
FadeResult run_fade(const DenoiserModel& pretrained, const NoiseSchedule& schedule,
                    const WorldConfig& world, const FadeConfig& cfg);

struct AblationArm {
  std::string name;
  FadeConfig cfg;
  ErasureRunRecord record;
  MetricsReport metrics;
  std::int64_t changed_params = 0;              // bitwise, vs the pretrained weights
  std::int64_t changed_outside_full_mask = 0;   // changed coords the Full mask excludes
};

struct EvalConfig {
  std::int64_t n_samples = 500;
  double omega = 2.0;
  std::int64_t grid_bins = 16;
};

struct ReferenceMetrics {
  double fidelity_proxy = 0.0;
  double adherence = 0.0;
};

// Score one model: concept accuracy on concept prompts, fidelity proxy and
// adherence on neutral prompts (against ground-truth world samples), and the
// binned concept mutual information. Null refs = self-referenced (used for
// the pre-erasure baseline).
MetricsReport evaluate_model(const DenoiserModel& model, const NoiseSchedule& schedule,
                             const WorldConfig& world, const ProbeClassifier& probe,
                             const EvalConfig& cfg, std::uint64_t seed,
                             const ReferenceMetrics* refs);

// The four-arm comparison (Full, w/o Adv, w/o Pres, w/o Saliency), one seed,
// shared pretrained weights, shared probe, shared reference metrics.
std::vector<AblationArm> run_ablation(const DenoiserModel& pretrained,
                                      const NoiseSchedule& schedule, const WorldConfig& world,
                                      const FadeConfig& base_cfg, const ProbeClassifier& probe,
                                      const EvalConfig& eval_cfg, std::uint64_t eval_seed);

}  // namespace fade
