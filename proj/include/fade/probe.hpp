#pragma once

#include <cstdint>
#include <vector>

#include "fade/network.hpp"
#include "fade/param_store.hpp"
#include "fade/tensor.hpp"
#include "fade/world.hpp"

namespace fade {

// Ground-truth attribute classifier used for evaluation only. It is trained
// on world samples, never on model output, and it is entirely separate from
// the erasure adversary.
struct ProbeClassifier {
  ParameterStore params;
  MlpArch arch;
  std::vector<Attribute> attributes;  // head layout, one softmax per attribute
  std::int64_t concept_index = 0;

  std::int64_t head_offset(std::size_t attr_index) const;
  std::int64_t output_width() const;
};

ProbeClassifier make_probe(const WorldConfig& world, std::int64_t hidden, std::uint64_t seed);

struct ProbeTrainConfig {
  std::int64_t samples_per_class = 250;  // per assignment
  std::int64_t steps = 600;
  std::int64_t batch = 128;
  double lr = 1e-3;
};

// Cross-entropy training on fresh world samples, one softmax head per
// attribute. Throws DivergenceError if the loss goes non-finite.
ProbeClassifier train_probe(const WorldConfig& world, const ProbeTrainConfig& cfg,
                            std::uint64_t seed);

// Raw head logits, shape (n, sum of arities). Rejects inputs whose width
// does not match the probe.
Tensor probe_logits(const ProbeClassifier& probe, const Tensor& x);

// Per-attribute predictions. The concept attribute is flagged on when its
// softmax probability exceeds 1/2; other attributes take the argmax (ties
// resolve to the lower value index).
std::vector<PromptLabel> probe_predictions(const ProbeClassifier& probe, const Tensor& x);

// Softmax probability of concept value 1 for each row.
std::vector<double> probe_concept_probability(const ProbeClassifier& probe, const Tensor& x);

// Fraction of held-out world samples with every attribute predicted
// correctly; the evaluation gate for probe quality.
double probe_heldout_accuracy(const ProbeClassifier& probe, const WorldConfig& world,
                              std::int64_t per_class, std::uint64_t seed);

}  // namespace fade
