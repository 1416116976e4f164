#pragma once

#include <string>
#include <vector>

#include "fade/autodiff.hpp"
#include "fade/param_store.hpp"
#include "fade/rng.hpp"
#include "fade/tensor.hpp"

namespace fade {

enum class Activation { silu, identity };

// Fully connected net: widths = [in, hidden..., out], activation between
// layers, linear output. Parameters are named <prefix>layerK.weight
// (fan_out x fan_in) and <prefix>layerK.bias.
struct MlpArch {
  std::vector<std::int64_t> widths;
  Activation act = Activation::silu;
  std::string prefix;

  std::int64_t layers() const { return static_cast<std::int64_t>(widths.size()) - 1; }
  std::string weight_name(std::int64_t layer) const;
  std::string bias_name(std::int64_t layer) const;
  void validate() const;
};

// He-style init: weights ~ N(0, 2/fan_in), biases zero.
void init_mlp(ParameterStore& params, const MlpArch& arch, rng::Stream& stream);

// Plain forward pass. Input (n, in) or rank-1 (in); output keeps the rank.
Tensor apply_network(const ParameterStore& params, const MlpArch& arch, const Tensor& input);

// Traced forward pass; input must be a rank-2 value on the record.
ValueId apply_network(GradientRecord& rec, const ParameterStore& params,
                      const MlpArch& arch, ValueId input);

}  // namespace fade
