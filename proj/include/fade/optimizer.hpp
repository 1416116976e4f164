#pragma once

#include <cstdint>
#include <vector>

#include "fade/param_store.hpp"

namespace fade {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moment estimates over the flattened index of one store.
struct AdamState {
  std::vector<double> m, v;
  std::int64_t t = 0;

  static AdamState for_store(const ParameterStore& store);
};

// One Adam step with bias correction over the masked coordinates.
//
// mask may be null (update everything) or a 0/1 vector over the flattened
// index. Excluded coordinates are left bit-identical and their moments are
// not advanced.
void masked_adam_step(ParameterStore& params, const std::vector<double>& grad_flat,
                      const std::vector<std::uint8_t>* mask, AdamState& state,
                      const AdamConfig& cfg);

}  // namespace fade
