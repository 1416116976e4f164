#pragma once

#include <cstdint>
#include <vector>

#include "fade/autodiff.hpp"
#include "fade/network.hpp"
#include "fade/param_store.hpp"
#include "fade/tensor.hpp"

namespace fade {

// Probabilities are clamped into [kProbClamp, 1 - kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-7;

// Concept discriminator over generated points. One logistic head per
// concept; the single-concept case uses head 0.
struct Discriminator {
  ParameterStore params;
  MlpArch arch;
  std::int64_t heads = 1;
  std::int64_t data_dim = 2;
};

Discriminator make_discriminator(std::int64_t data_dim, std::int64_t heads, std::uint64_t seed);

// per-head probabilities, shape (n, heads)
Tensor discriminator_probs(const Discriminator& d, const Tensor& x);
ValueId discriminator_probs(GradientRecord& rec, const Discriminator& d, ValueId x);

// L_adv^D = -mean log D(x_c) - mean log(1 - D(x_neg)) on one head
double discriminator_loss(const Discriminator& d, const Tensor& x_concept,
                          const Tensor& x_neutral, std::int64_t head);
ValueId discriminator_loss(GradientRecord& rec, const Discriminator& d, ValueId x_concept,
                           ValueId x_neutral, std::int64_t head);

// L_rem = -mean log(1 - D(x_c)) on one head
double removal_loss(const Discriminator& d, const Tensor& x_concept, std::int64_t head);
ValueId removal_loss(GradientRecord& rec, const Discriminator& d, ValueId x_concept,
                     std::int64_t head);

// fraction of samples classified correctly at threshold 1/2; a sample whose
// probability lands exactly on 1/2 counts as incorrect
double discriminator_accuracy(const Discriminator& d, const Tensor& x,
                              const std::vector<std::uint8_t>& is_concept, std::int64_t head);

}  // namespace fade
