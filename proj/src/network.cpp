#include "fade/network.hpp"

#include <cmath>

#include "fade/errors.hpp"
#include "fade/linalg.hpp"

namespace fade {

std::string MlpArch::weight_name(std::int64_t layer) const {
  return prefix + "layer" + std::to_string(layer) + ".weight";
}

std::string MlpArch::bias_name(std::int64_t layer) const {
  return prefix + "layer" + std::to_string(layer) + ".bias";
}

void MlpArch::validate() const {
  if (widths.size() < 2) throw ShapeError("network needs at least an input and an output width");
  for (auto w : widths)
    if (w <= 0) throw ShapeError("network layer widths must be positive");
}

void init_mlp(ParameterStore& params, const MlpArch& arch, rng::Stream& stream) {
  arch.validate();
  for (std::int64_t l = 0; l < arch.layers(); ++l) {
    const std::int64_t fan_in = arch.widths[static_cast<std::size_t>(l)];
    const std::int64_t fan_out = arch.widths[static_cast<std::size_t>(l) + 1];
    Tensor w({fan_out, fan_in});
    const double s = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : w.values()) v = s * stream.normal();
    params.add(arch.weight_name(l), std::move(w));
    params.add(arch.bias_name(l), Tensor({fan_out}));
  }
}

namespace {

void check_input(const MlpArch& arch, std::int64_t width) {
  if (width != arch.widths.front())
    throw ShapeError("network input width " + std::to_string(width) +
                     " does not match layer0 fan-in " + std::to_string(arch.widths.front()));
}

}  // namespace

Tensor apply_network(const ParameterStore& params, const MlpArch& arch, const Tensor& input) {
  arch.validate();
  const bool vector_in = input.rank() == 1;
  check_input(arch, input.cols());
  const std::int64_t n = input.rows();

  Tensor cur = vector_in ? input.reshaped({1, input.numel()}) : input;
  for (std::int64_t l = 0; l < arch.layers(); ++l) {
    const Tensor& w = params.get(arch.weight_name(l));
    const Tensor& b = params.get(arch.bias_name(l));
    const std::int64_t fan_in = arch.widths[static_cast<std::size_t>(l)];
    const std::int64_t fan_out = arch.widths[static_cast<std::size_t>(l) + 1];
    if (w.rank() != 2 || w.rows() != fan_out || w.cols() != fan_in)
      throw ShapeError("layer " + std::to_string(l) + " weight shape does not match the architecture");
    if (b.numel() != fan_out)
      throw ShapeError("layer " + std::to_string(l) + " bias length does not match the architecture");
    Tensor next({n, fan_out});
    linalg::matmul_nt(cur.data(), n, fan_in, w.data(), fan_out, next.data(), false);
    double* o = next.data();
    const double* bp = b.data();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < fan_out; ++j) o[i * fan_out + j] += bp[j];
    if (arch.act == Activation::silu && l + 1 < arch.layers())
      for (double& v : next.values()) v *= 1.0 / (1.0 + std::exp(-v));
    cur = std::move(next);
  }
  return vector_in ? cur.reshaped({cur.numel()}) : cur;
}

ValueId apply_network(GradientRecord& rec, const ParameterStore& params,
                      const MlpArch& arch, ValueId input) {
  arch.validate();
  check_input(arch, rec.value(input).cols());
  ValueId cur = input;
  for (std::int64_t l = 0; l < arch.layers(); ++l) {
    const ValueId w = rec.param(params, arch.weight_name(l));
    const ValueId b = rec.param(params, arch.bias_name(l));
    cur = rec.linear(cur, w, b);
    if (arch.act == Activation::silu && l + 1 < arch.layers()) cur = rec.silu(cur);
  }
  return cur;
}

}  // namespace fade
