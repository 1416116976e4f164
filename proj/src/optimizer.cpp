#include "fade/optimizer.hpp"

#include <cmath>
#include <string>

#include "fade/errors.hpp"

namespace fade {

AdamState AdamState::for_store(const ParameterStore& store) {
  AdamState s;
  s.m.assign(static_cast<std::size_t>(store.total_scalars()), 0.0);
  s.v.assign(static_cast<std::size_t>(store.total_scalars()), 0.0);
  return s;
}

void masked_adam_step(ParameterStore& params, const std::vector<double>& grad_flat,
                      const std::vector<std::uint8_t>* mask, AdamState& state,
                      const AdamConfig& cfg) {
  const auto total = static_cast<std::size_t>(params.total_scalars());
  if (grad_flat.size() != total)
    throw ShapeError("gradient vector length " + std::to_string(grad_flat.size()) +
                     " does not match store scalar count " + std::to_string(total));
  if (mask && mask->size() != total)
    throw ShapeError("mask length " + std::to_string(mask->size()) +
                     " does not match store scalar count " + std::to_string(total));
  if (state.m.size() != total || state.v.size() != total)
    throw ShapeError("optimizer state is not aligned with the store");

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

  std::size_t pos = 0;
  for (std::size_t e = 0; e < params.size(); ++e) {
    Tensor& t = params.tensor_at(e);
    double* p = t.data();
    const auto n = static_cast<std::size_t>(t.numel());
    for (std::size_t i = 0; i < n; ++i, ++pos) {
      if (mask && !(*mask)[pos]) continue;
      const double g = grad_flat[pos];
      state.m[pos] = cfg.beta1 * state.m[pos] + (1.0 - cfg.beta1) * g;
      state.v[pos] = cfg.beta2 * state.v[pos] + (1.0 - cfg.beta2) * g * g;
      const double mh = state.m[pos] / bc1;
      const double vh = state.v[pos] / bc2;
      p[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

}  // namespace fade
