#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fade/rng.hpp"
#include "fade/tensor.hpp"

namespace fade {

struct Attribute {
  std::string name;
  std::int64_t arity = 0;
};

// One mixture component tied to a full attribute assignment.
struct GaussianComponent {
  std::array<double, 2> mean{};
  std::array<double, 4> cov{};   // row-major 2x2, SPD
  std::array<double, 4> chol{};  // lower Cholesky factor, computed on validation
};

// Full attribute assignment; values are indices into each attribute's range.
struct PromptLabel {
  std::vector<std::int64_t> values;

  bool operator==(const PromptLabel&) const = default;
};

// Concept-labelled 2-D Gaussian mixture: one component per attribute
// assignment, one binary attribute designated as the concept C.
class WorldConfig {
 public:
  static WorldConfig create(std::vector<Attribute> attributes, std::string concept_attribute,
                            std::vector<std::pair<std::map<std::string, std::int64_t>,
                                                  GaussianComponent>> components);

  // the default benchmark world: concept "c", context "scene",
  // concept components on the right half plane, neutral on the left
  static WorldConfig default_world();

  const std::vector<Attribute>& attributes() const { return attributes_; }
  std::int64_t concept_index() const { return concept_index_; }
  const std::string& concept_attribute() const { return attributes_[static_cast<std::size_t>(concept_index_)].name; }

  std::int64_t assignment_count() const;
  std::int64_t assignment_code(const PromptLabel& label) const;
  PromptLabel label_from_code(std::int64_t code) const;
  const GaussianComponent& component(const PromptLabel& label) const;

  // one-hot blocks per attribute, concatenated; width = sum of arities
  std::int64_t cond_width() const;
  PromptLabel make_label(const std::map<std::string, std::int64_t>& assignment) const;
  bool concept_on(const PromptLabel& label) const;

 private:
  std::vector<Attribute> attributes_;
  std::int64_t concept_index_ = -1;
  std::vector<GaussianComponent> components_;  // indexed by assignment code
};

// Paired prompts differing only in the concept attribute.
struct PromptSetPair {
  std::vector<PromptLabel> concept_prompts;
  std::vector<PromptLabel> neutral_prompts;
};

// n draws from the component of the given label; shape (n, 2)
Tensor sample_world(const WorldConfig& world, const PromptLabel& label, std::int64_t n,
                    std::uint64_t seed);

// k pairs spanning distinct non-concept assignments (cycling when k
// exceeds the number of distinct contexts), order seeded
PromptSetPair build_prompt_sets(const WorldConfig& world, std::int64_t k, std::uint64_t seed);

// condition rows for a batch of labels; nullopt encodes the null prompt
Tensor encode_labels(const WorldConfig& world,
                     std::span<const std::optional<PromptLabel>> labels);
Tensor encode_label(const WorldConfig& world, const std::optional<PromptLabel>& label);

}  // namespace fade
