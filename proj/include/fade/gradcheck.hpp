#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fade/autodiff.hpp"
#include "fade/param_store.hpp"

namespace fade {

// A differentiable scalar loss expressed twice: once as a plain evaluation
// and once as a traced computation on a gradient record. The checker uses
// the plain form for the perturbed evaluations.
struct FdLoss {
  std::function<double(const ParameterStore&)> eval;
  std::function<ValueId(GradientRecord&, const ParameterStore&)> trace;
};

struct FdEntryReport {
  std::string name;
  double worst_rel_err = 0.0;
  std::int64_t coords_checked = 0;
};

struct FdReport {
  bool pass = false;
  double worst_rel_err = 0.0;
  std::string worst_param;
  double loss_value = 0.0;
  std::vector<FdEntryReport> per_param;
};

// Central-difference gradient check against the tape.
//
// Checks up to max_coords_per_param seeded coordinates of every parameter
// tensor. Relative error uses max(|analytic|, |numeric|, 1e-6) as the
// denominator so near-zero gradients do not produce spurious failures.
FdReport finite_difference_check(ParameterStore& params, const FdLoss& loss,
                                 double step, double tolerance,
                                 std::int64_t max_coords_per_param, std::uint64_t seed);

}  // namespace fade
