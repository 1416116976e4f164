#include "fade/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fade/errors.hpp"
#include "fade/rng.hpp"

namespace fade {

FdReport finite_difference_check(ParameterStore& params, const FdLoss& loss,
                                 double step, double tolerance,
                                 std::int64_t max_coords_per_param, std::uint64_t seed) {
  if (!(step > 0.0)) throw ValidationError("finite difference step must be positive");
  if (max_coords_per_param <= 0) throw ValidationError("max_coords_per_param must be positive");

  FdReport report;

  GradientRecord rec(params);
  const ValueId out = loss.trace(rec, params);
  if (rec.value(out).numel() != 1)
    throw ValidationError("finite difference check requires a scalar loss");
  report.loss_value = rec.value(out).at(0);
  if (!std::isfinite(report.loss_value))
    throw ValidationError("loss is not finite at the probe point");
  const Gradients grads = rec.backpropagate(out, Tensor::scalar(1.0));

  rng::Stream stream(seed);
  for (std::size_t e = 0; e < params.size(); ++e) {
    const auto& entry = params.entry(e);
    const std::int64_t n = entry.tensor.numel();
    std::vector<std::int64_t> coords;
    if (n <= max_coords_per_param) {
      coords.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      // seeded subset without replacement
      std::vector<std::int64_t> all(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
      for (std::int64_t i = 0; i < max_coords_per_param; ++i) {
        const auto j = i + static_cast<std::int64_t>(stream.below(static_cast<std::uint64_t>(n - i)));
        std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
      }
      coords.assign(all.begin(), all.begin() + max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }

    FdEntryReport er;
    er.name = entry.name;
    for (const std::int64_t c : coords) {
      const double orig = params.get(entry.name).at(c);
      const double xp = orig + step;
      const double xm = orig - step;
      params.mutate(entry.name).at(c) = xp;
      const double fp = loss.eval(params);
      params.mutate(entry.name).at(c) = xm;
      const double fm = loss.eval(params);
      params.mutate(entry.name).at(c) = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw ValidationError("loss is not finite near the probe point");
      const double numeric = (fp - fm) / (xp - xm);
      const double analytic = grads.flat[static_cast<std::size_t>(entry.flat_offset + c)];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > er.worst_rel_err) er.worst_rel_err = rel;
      ++er.coords_checked;
    }
    if (er.worst_rel_err >= report.worst_rel_err) {
      report.worst_rel_err = er.worst_rel_err;
      report.worst_param = er.name;
    }
    report.per_param.push_back(std::move(er));
  }

  report.pass = report.worst_rel_err <= tolerance;
  return report;
}

}  // namespace fade
