#include "fade/world.hpp"

#include <algorithm>
#include <cmath>

#include "fade/errors.hpp"

namespace fade {

namespace {

// lower Cholesky of a 2x2 SPD matrix; throws if not SPD
std::array<double, 4> cholesky2(const std::array<double, 4>& cov) {
  const double a = cov[0], b = cov[1], c = cov[2], d = cov[3];
  if (std::abs(b - c) > 1e-12) throw ValidationError("covariance must be symmetric");
  if (!(a > 0.0)) throw ValidationError("covariance is not positive definite");
  const double l11 = std::sqrt(a);
  const double l21 = b / l11;
  const double rest = d - l21 * l21;
  if (!(rest > 0.0)) throw ValidationError("covariance is not positive definite");
  return {l11, 0.0, l21, std::sqrt(rest)};
}

}  // namespace

WorldConfig WorldConfig::create(
    std::vector<Attribute> attributes, std::string concept_attribute,
    std::vector<std::pair<std::map<std::string, std::int64_t>, GaussianComponent>> components) {
  WorldConfig w;
  if (attributes.empty()) throw ValidationError("world needs at least one attribute");
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    if (attributes[i].arity < 2)
      throw ValidationError("attribute '" + attributes[i].name + "' must have arity >= 2");
    for (std::size_t j = 0; j < i; ++j)
      if (attributes[i].name == attributes[j].name)
        throw ValidationError("duplicate attribute name '" + attributes[i].name + "'");
  }
  w.attributes_ = std::move(attributes);
  for (std::size_t i = 0; i < w.attributes_.size(); ++i)
    if (w.attributes_[i].name == concept_attribute) w.concept_index_ = static_cast<std::int64_t>(i);
  if (w.concept_index_ < 0)
    throw ValidationError("concept attribute '" + concept_attribute + "' is not declared");
  if (w.attributes_[static_cast<std::size_t>(w.concept_index_)].arity != 2)
    throw ValidationError("concept attribute must be binary");

  const std::int64_t count = w.assignment_count();
  if (static_cast<std::int64_t>(components.size()) != count)
    throw ValidationError("expected exactly one component per attribute assignment (" +
                          std::to_string(count) + "), got " + std::to_string(components.size()));
  w.components_.resize(static_cast<std::size_t>(count));
  std::vector<bool> seen(static_cast<std::size_t>(count), false);
  for (auto& [assignment, comp] : components) {
    const PromptLabel label = w.make_label(assignment);
    const std::int64_t code = w.assignment_code(label);
    if (seen[static_cast<std::size_t>(code)])
      throw ValidationError("duplicate component for one attribute assignment");
    seen[static_cast<std::size_t>(code)] = true;
    GaussianComponent c = comp;
    c.chol = cholesky2(c.cov);
    w.components_[static_cast<std::size_t>(code)] = c;
  }
  return w;
}

WorldConfig WorldConfig::default_world() {
  auto comp = [](double mx, double my) {
    GaussianComponent c;
    c.mean = {mx, my};
    c.cov = {0.5, 0.0, 0.0, 0.5};
    return c;
  };
  return create(
      {{"c", 2}, {"scene", 2}}, "c",
      {
          {{{"c", 0}, {"scene", 0}}, comp(-4.0, 0.0)},
          {{{"c", 0}, {"scene", 1}}, comp(-4.0, 3.0)},
          {{{"c", 1}, {"scene", 0}}, comp(4.0, 0.0)},
          {{{"c", 1}, {"scene", 1}}, comp(4.0, 3.0)},
      });
}

std::int64_t WorldConfig::assignment_count() const {
  std::int64_t n = 1;
  for (const auto& a : attributes_) n *= a.arity;
  return n;
}

std::int64_t WorldConfig::assignment_code(const PromptLabel& label) const {
  if (label.values.size() != attributes_.size())
    throw ShapeError("label arity does not match the world's attribute list");
  std::int64_t code = 0;
  for (std::size_t i = 0; i < attributes_.size(); ++i) {
    const std::int64_t v = label.values[i];
    if (v < 0 || v >= attributes_[i].arity)
      throw ValidationError("value " + std::to_string(v) + " out of range for attribute '" +
                            attributes_[i].name + "'");
    code = code * attributes_[i].arity + v;
  }
  return code;
}

PromptLabel WorldConfig::label_from_code(std::int64_t code) const {
  if (code < 0 || code >= assignment_count()) throw ValidationError("assignment code out of range");
  PromptLabel label;
  label.values.assign(attributes_.size(), 0);
  for (std::size_t i = attributes_.size(); i-- > 0;) {
    label.values[i] = code % attributes_[i].arity;
    code /= attributes_[i].arity;
  }
  return label;
}

const GaussianComponent& WorldConfig::component(const PromptLabel& label) const {
  return components_[static_cast<std::size_t>(assignment_code(label))];
}

std::int64_t WorldConfig::cond_width() const {
  std::int64_t w = 0;
  for (const auto& a : attributes_) w += a.arity;
  return w;
}

PromptLabel WorldConfig::make_label(const std::map<std::string, std::int64_t>& assignment) const {
  PromptLabel label;
  label.values.assign(attributes_.size(), -1);
  for (const auto& [name, value] : assignment) {
    bool found = false;
    for (std::size_t i = 0; i < attributes_.size(); ++i)
      if (attributes_[i].name == name) {
        label.values[i] = value;
        found = true;
      }
    if (!found) throw LookupError("unknown attribute '" + name + "'");
  }
  for (std::size_t i = 0; i < attributes_.size(); ++i)
    if (label.values[i] < 0)
      throw ValidationError("assignment is missing attribute '" + attributes_[i].name + "'");
  assignment_code(label);  // range check
  return label;
}

bool WorldConfig::concept_on(const PromptLabel& label) const {
  if (label.values.size() != attributes_.size())
    throw ShapeError("label arity does not match the world's attribute list");
  return label.values[static_cast<std::size_t>(concept_index_)] == 1;
}

Tensor sample_world(const WorldConfig& world, const PromptLabel& label, std::int64_t n,
                    std::uint64_t seed) {
  if (n < 0) throw ValidationError("sample count must be non-negative");
  const GaussianComponent& c = world.component(label);
  rng::Stream stream(seed);
  Tensor out({n, 2});
  for (std::int64_t i = 0; i < n; ++i) {
    const double z0 = stream.normal();
    const double z1 = stream.normal();
    out.at(i, 0) = c.mean[0] + c.chol[0] * z0;
    out.at(i, 1) = c.mean[1] + c.chol[2] * z0 + c.chol[3] * z1;
  }
  return out;
}

PromptSetPair build_prompt_sets(const WorldConfig& world, std::int64_t k, std::uint64_t seed) {
  if (k < 1) throw ValidationError("prompt set size must be at least 1");
  if (k > 1 && world.attributes().size() < 2)
    throw ValidationError("prompt variety above 1 needs a non-concept attribute");
  // enumerate distinct non-concept assignments
  std::int64_t contexts = 1;
  for (std::size_t i = 0; i < world.attributes().size(); ++i)
    if (static_cast<std::int64_t>(i) != world.concept_index())
      contexts *= world.attributes()[i].arity;

  std::vector<std::int64_t> order(static_cast<std::size_t>(contexts));
  for (std::int64_t i = 0; i < contexts; ++i) order[static_cast<std::size_t>(i)] = i;
  rng::Stream stream(seed);
  for (std::int64_t i = contexts - 1; i > 0; --i) {
    const auto j = static_cast<std::int64_t>(stream.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }

  PromptSetPair pair;
  for (std::int64_t i = 0; i < k; ++i) {
    std::int64_t ctx = order[static_cast<std::size_t>(i % contexts)];
    // decode the context into a full label, filling the concept slot
    PromptLabel on, off;
    on.values.assign(world.attributes().size(), 0);
    off.values.assign(world.attributes().size(), 0);
    for (std::size_t a = world.attributes().size(); a-- > 0;) {
      if (static_cast<std::int64_t>(a) == world.concept_index()) continue;
      const std::int64_t arity = world.attributes()[a].arity;
      on.values[a] = off.values[a] = ctx % arity;
      ctx /= arity;
    }
    on.values[static_cast<std::size_t>(world.concept_index())] = 1;
    off.values[static_cast<std::size_t>(world.concept_index())] = 0;
    pair.concept_prompts.push_back(std::move(on));
    pair.neutral_prompts.push_back(std::move(off));
  }
  return pair;
}

Tensor encode_labels(const WorldConfig& world,
                     std::span<const std::optional<PromptLabel>> labels) {
  const std::int64_t width = world.cond_width();
  Tensor out({static_cast<std::int64_t>(labels.size()), width});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) continue;  // null prompt: all zeros
    const PromptLabel& label = *labels[i];
    if (label.values.size() != world.attributes().size())
      throw ShapeError("label arity does not match the world's attribute list");
    std::int64_t off = 0;
    for (std::size_t a = 0; a < world.attributes().size(); ++a) {
      const std::int64_t v = label.values[a];
      if (v < 0 || v >= world.attributes()[a].arity)
        throw ValidationError("label value out of range for attribute '" +
                              world.attributes()[a].name + "'");
      out.at(static_cast<std::int64_t>(i), off + v) = 1.0;
      off += world.attributes()[a].arity;
    }
  }
  return out;
}

Tensor encode_label(const WorldConfig& world, const std::optional<PromptLabel>& label) {
  const std::optional<PromptLabel> one[] = {label};
  return encode_labels(world, one).reshaped({world.cond_width()});
}

}  // namespace fade
