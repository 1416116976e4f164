#include "fade/theory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fade/adversary.hpp"
#include "fade/errors.hpp"

namespace fade {

namespace {

constexpr double kLn2 = 0.69314718055994530941723212145818;

void check_simplex(const std::vector<double>& p, const char* who) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ValidationError(std::string(who) + " has a negative probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw ValidationError(std::string(who) + " does not sum to 1 (got " + std::to_string(sum) + ")");
}

double clamp_prob(double p) {
  return p < kProbClamp ? kProbClamp : (p > 1.0 - kProbClamp ? 1.0 - kProbClamp : p);
}

}  // namespace

DiscretePairedDistribution::DiscretePairedDistribution(std::vector<double> p1_in,
                                                       std::vector<double> p0_in, double prior_in)
    : p1(std::move(p1_in)), p0(std::move(p0_in)), prior(prior_in) {
  if (p1.empty()) throw ValidationError("support must be non-empty");
  if (p1.size() != p0.size()) throw ValidationError("paired distributions must share a support");
  if (!(prior > 0.0 && prior < 1.0)) throw ValidationError("prior must lie strictly inside (0, 1)");
  check_simplex(p1, "p1");
  check_simplex(p0, "p0");
}

std::vector<double> bayes_discriminator(const DiscretePairedDistribution& d) {
  std::vector<double> out(d.support());
  for (std::size_t i = 0; i < d.support(); ++i) {
    const double num = d.p1[i] * d.prior;
    const double den = num + d.p0[i] * (1.0 - d.prior);
    if (den == 0.0)
      throw ValidationError("outcome " + std::to_string(i) +
                            " has zero probability under both classes");
    out[i] = clamp_prob(num / den);
  }
  return out;
}

double mutual_information(const DiscretePairedDistribution& d) {
  double i_nats = 0.0;
  for (std::size_t x = 0; x < d.support(); ++x) {
    const double m = d.prior * d.p1[x] + (1.0 - d.prior) * d.p0[x];
    if (m == 0.0) continue;
    const double j1 = d.prior * d.p1[x];
    const double j0 = (1.0 - d.prior) * d.p0[x];
    if (j1 > 0.0) i_nats += j1 * std::log(j1 / (d.prior * m));
    if (j0 > 0.0) i_nats += j0 * std::log(j0 / ((1.0 - d.prior) * m));
  }
  // exact zero at P1 = P0; tiny negatives are accumulation noise
  return i_nats < 0.0 ? 0.0 : i_nats;
}

double total_variation(const DiscretePairedDistribution& d) {
  double tv = 0.0;
  for (std::size_t i = 0; i < d.support(); ++i) tv += std::abs(d.p1[i] - d.p0[i]);
  return 0.5 * tv;
}

OptimalLosses optimal_losses(const DiscretePairedDistribution& d, bool allow_general_prior) {
  if (!allow_general_prior && std::abs(d.prior - 0.5) > 1e-12)
    throw ValidationError("optimal_losses requires prior 1/2 unless general priors are opted in");
  const std::vector<double> dstar = bayes_discriminator(d);
  // adversarial loss in the trainer's form: class means summed, so the
  // uninformative discriminator D = 1/2 scores exactly 2 ln 2
  OptimalLosses out;
  for (std::size_t i = 0; i < d.support(); ++i) {
    out.adv_at_dstar -= d.p1[i] * std::log(dstar[i]) + d.p0[i] * std::log(1.0 - dstar[i]);
    out.rem_at_dstar -= d.p1[i] * std::log(1.0 - dstar[i]);
  }
  return out;
}

AccuracyBound accuracy_tv_bound(const DiscretePairedDistribution& d) {
  const std::vector<double> dstar = bayes_discriminator(d);
  AccuracyBound out;
  out.tv = total_variation(d);
  for (std::size_t i = 0; i < d.support(); ++i) {
    const double w1 = d.prior * d.p1[i];
    const double w0 = (1.0 - d.prior) * d.p0[i];
    if (dstar[i] > 0.5) out.best_accuracy += w1;
    else if (dstar[i] < 0.5) out.best_accuracy += w0;
    else out.best_accuracy += std::max(w1, w0);  // ties: pick the better class
  }
  out.identity_residual = std::abs(out.best_accuracy - (0.5 + 0.5 * out.tv));
  return out;
}

TheoremReport verify_theorem_equilibrium(const DiscretePairedDistribution& d, double tol) {
  if (!(tol >= 0.0)) throw ValidationError("tolerance must be non-negative");
  TheoremReport r;
  r.tolerance = tol;
  r.i_nats = mutual_information(d);
  r.tv = total_variation(d);
  const AccuracyBound acc = accuracy_tv_bound(d);
  r.best_accuracy = acc.best_accuracy;
  r.accuracy_residual = acc.identity_residual;
  const OptimalLosses losses = optimal_losses(d);
  r.adv_at_dstar = losses.adv_at_dstar;
  r.rem_at_dstar = losses.rem_at_dstar;
  r.rem_excess = losses.rem_at_dstar - kLn2;

  // f(tol): mutual information of the extremal mass-swap pair at TV = tol,
  // evaluated by this oracle. That family attains I = TV * ln 2, which is
  // the maximum over all pairs at fixed TV (I at prior 1/2 is the
  // Jensen-Shannon divergence, bounded by TV * ln 2).
  const double tau = std::min(tol, 1.0);
  if (tau > 0.0 && tau < 1.0) {
    const DiscretePairedDistribution swap({tau, 1.0 - tau, 0.0}, {0.0, 1.0 - tau, tau}, 0.5);
    r.forward_bound_i = mutual_information(swap);
  } else if (tau >= 1.0) {
    const DiscretePairedDistribution swap({1.0, 0.0}, {0.0, 1.0}, 0.5);
    r.forward_bound_i = mutual_information(swap);
  } else {
    r.forward_bound_i = 0.0;
  }

  // g(tol): the probability clamp caps -log(1 - D*) at -log(clamp), and the
  // positive part of p1 - p0 carries exactly TV mass, so the clamped excess
  // of L_rem over ln 2 is at most TV * log(1 / clamp).
  r.forward_bound_rem = tau * std::log(1.0 / kProbClamp);

  // separation margin: L_rem(D*) - ln 2 >= TV^2. Termwise
  // log z >= 1 - 1/z gives excess >= (1/2) sum (p1-p0)^2 / (p1+p0), and
  // Cauchy-Schwarz pushes that below by (2 TV)^2 / (2 * 2). The clamp only
  // fires where p0 is below clamp * p1 and leaves those terms above the
  // same bound. Likewise I >= TV^2 / 2 by Pinsker against the mixture.
  r.separation_margin = r.tv * r.tv;

  r.checks.accuracy_identity = r.accuracy_residual <= 1e-12;
  r.checks.rem_never_below_ln2 = r.rem_at_dstar >= kLn2 - 1e-12;
  if (r.tv <= tol) {
    r.checks.equilibrium_forward = r.i_nats <= r.forward_bound_i + 1e-12 &&
                                   std::abs(r.rem_excess) <= r.forward_bound_rem + 1e-12;
    r.checks.separation = true;  // vacuous on this side of the tolerance
  } else {
    r.checks.equilibrium_forward = true;  // vacuous
    r.checks.separation = r.rem_excess >= r.separation_margin - 1e-12 &&
                          r.i_nats >= 0.5 * r.tv * r.tv - 1e-12;
  }
  r.all_pass = r.checks.accuracy_identity && r.checks.equilibrium_forward &&
               r.checks.separation && r.checks.rem_never_below_ln2;
  return r;
}

GridSpec GridSpec::for_world(const WorldConfig& world, std::int64_t bins) {
  GridSpec g;
  g.bins_x = g.bins_y = bins;
  bool first = true;
  for (std::int64_t code = 0; code < world.assignment_count(); ++code) {
    const GaussianComponent& c = world.component(world.label_from_code(code));
    const double a = c.cov[0], b = c.cov[1], dd = c.cov[3];
    const double eigmax = 0.5 * ((a + dd) + std::sqrt((a - dd) * (a - dd) + 4.0 * b * b));
    const double s3 = 3.0 * std::sqrt(eigmax);
    if (first) {
      g.x_min = c.mean[0] - s3; g.x_max = c.mean[0] + s3;
      g.y_min = c.mean[1] - s3; g.y_max = c.mean[1] + s3;
      first = false;
    } else {
      g.x_min = std::min(g.x_min, c.mean[0] - s3); g.x_max = std::max(g.x_max, c.mean[0] + s3);
      g.y_min = std::min(g.y_min, c.mean[1] - s3); g.y_max = std::max(g.y_max, c.mean[1] + s3);
    }
  }
  g.validate();
  return g;
}

void GridSpec::validate() const {
  if (bins_x < 1 || bins_y < 1) throw ValidationError("grid needs at least one bin per axis");
  if (!(x_max > x_min) || !(y_max > y_min)) throw ValidationError("grid window is empty");
}

namespace {

std::vector<double> bin_counts(const Tensor& x, const GridSpec& g) {
  std::vector<double> counts(static_cast<std::size_t>(g.bins_x * g.bins_y), 0.0);
  for (std::int64_t i = 0; i < x.rows(); ++i) {
    auto bx = static_cast<std::int64_t>((x.at(i, 0) - g.x_min) / (g.x_max - g.x_min) *
                                        static_cast<double>(g.bins_x));
    auto by = static_cast<std::int64_t>((x.at(i, 1) - g.y_min) / (g.y_max - g.y_min) *
                                        static_cast<double>(g.bins_y));
    bx = std::clamp<std::int64_t>(bx, 0, g.bins_x - 1);
    by = std::clamp<std::int64_t>(by, 0, g.bins_y - 1);
    counts[static_cast<std::size_t>(by * g.bins_x + bx)] += 1.0;
  }
  return counts;
}

std::vector<double> smoothed(std::vector<double> counts, std::int64_t n) {
  const double denom = static_cast<double>(n) + 1e-9 * static_cast<double>(counts.size());
  for (double& c : counts) c = (c + 1e-9) / denom;
  return counts;
}

}  // namespace

DiscretePairedDistribution binned_pair(const Tensor& x_concept, const Tensor& x_neutral,
                                       const GridSpec& grid) {
  grid.validate();
  if (x_concept.rank() != 2 || x_concept.cols() != 2 || x_neutral.rank() != 2 ||
      x_neutral.cols() != 2)
    throw ShapeError("binned_pair expects (n, 2) sample tensors");
  if (x_concept.rows() == 0 || x_neutral.rows() == 0)
    throw ValidationError("both sample classes must be non-empty");
  return DiscretePairedDistribution(smoothed(bin_counts(x_concept, grid), x_concept.rows()),
                                    smoothed(bin_counts(x_neutral, grid), x_neutral.rows()), 0.5);
}

double empirical_concept_mi(const Tensor& x_concept, const Tensor& x_neutral,
                            const GridSpec& grid) {
  if (x_concept.rank() != 2 || x_neutral.rank() != 2 || x_concept.rows() < 100 ||
      x_neutral.rows() < 100)
    throw ValidationError("empirical_concept_mi needs at least 100 samples per class");
  return mutual_information(binned_pair(x_concept, x_neutral, grid));
}

}  // namespace fade
