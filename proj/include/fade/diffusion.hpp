#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fade/autodiff.hpp"
#include "fade/network.hpp"
#include "fade/param_store.hpp"
#include "fade/tensor.hpp"
#include "fade/world.hpp"

namespace fade {

// Variance schedule for a DDPM. Timesteps are 1-based: t in [1, T].
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> betas);
  static NoiseSchedule linear(std::int64_t steps, double beta_start, double beta_end);

  std::int64_t steps() const { return static_cast<std::int64_t>(beta_.size()); }
  double beta(std::int64_t t) const { return beta_[index(t)]; }
  double alpha(std::int64_t t) const { return alpha_[index(t)]; }
  double alpha_bar(std::int64_t t) const { return alpha_bar_[index(t)]; }

 private:
  std::size_t index(std::int64_t t) const;
  std::vector<double> beta_, alpha_, alpha_bar_;
};

// Conditional noise predictor over 2-D points. Network input is
// [x | time embedding | condition one-hots].
struct DenoiserModel {
  ParameterStore params;
  MlpArch arch;
  std::int64_t data_dim = 2;
  std::int64_t cond_width = 0;
  std::int64_t time_width = 3;

  std::int64_t input_width() const { return data_dim + time_width + cond_width; }
};

DenoiserModel make_denoiser(const WorldConfig& world, std::vector<std::int64_t> hidden,
                            std::uint64_t seed);

// (t/T, sin 2 pi t/T, cos 2 pi t/T)
Tensor time_embedding(std::int64_t t, std::int64_t steps);

// z_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, rowwise over a batch
Tensor forward_noise(const Tensor& x0, const NoiseSchedule& schedule, std::int64_t t,
                     const Tensor& eps);

// eps prediction for a batch sharing one timestep; cond is (n, cond_width)
Tensor predict_eps(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& z,
                   const Tensor& cond, std::int64_t t);
ValueId predict_eps(GradientRecord& rec, const DenoiserModel& model, const NoiseSchedule& schedule,
                    ValueId z, const Tensor& cond, std::int64_t t);

// single-point convenience with an optional prompt (nullopt = null prompt)
Tensor predict_eps_point(const DenoiserModel& model, const NoiseSchedule& schedule,
                         const WorldConfig& world, const Tensor& z,
                         const std::optional<PromptLabel>& y, std::int64_t t);

// classifier-free guidance: eps_null + omega * (eps_cond - eps_null)
Tensor guided_eps(const DenoiserModel& model, const NoiseSchedule& schedule, const Tensor& z,
                  const Tensor& cond, std::int64_t t, double omega);
ValueId guided_eps(GradientRecord& rec, const DenoiserModel& model, const NoiseSchedule& schedule,
                   ValueId z, const Tensor& cond, std::int64_t t, double omega);
Tensor guided_eps_point(const DenoiserModel& model, const NoiseSchedule& schedule,
                        const WorldConfig& world, const Tensor& z,
                        const std::optional<PromptLabel>& y, std::int64_t t, double omega);

struct SamplerConfig {
  double omega = 2.0;
  // tape depth: gradients flow through the last k sampling steps only;
  // -1 means the full chain
  std::int64_t trunc_backprop_steps = -1;
  bool record_trajectory = false;
};

struct SampleBatchResult {
  Tensor x0;                     // (n, 2)
  std::vector<Tensor> trajectory;  // z_T .. z_0 when requested
};

// ancestral DDPM sampling, one chain per label
SampleBatchResult ancestral_sample(const DenoiserModel& model, const NoiseSchedule& schedule,
                                   const WorldConfig& world, std::span<const PromptLabel> labels,
                                   const SamplerConfig& cfg, std::uint64_t seed);

// traced variant consuming the same frozen noise draws as the untraced
// sampler for a given seed
ValueId ancestral_sample(GradientRecord& rec, const DenoiserModel& model,
                         const NoiseSchedule& schedule, const WorldConfig& world,
                         std::span<const PromptLabel> labels, const SamplerConfig& cfg,
                         std::uint64_t seed);

struct PretrainConfig {
  std::int64_t steps = 5000;
  std::int64_t batch = 128;
  double lr = 1e-3;
  double cond_dropout = 0.1;
};

struct PretrainResult {
  std::vector<double> loss_curve;
};

// standard denoising MSE with condition dropout
PretrainResult pretrain_base(DenoiserModel& model, const WorldConfig& world,
                             const NoiseSchedule& schedule, const PretrainConfig& cfg,
                             std::uint64_t seed);

}  // namespace fade
