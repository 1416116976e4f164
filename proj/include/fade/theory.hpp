#pragma once

#include <cstdint>
#include <vector>

#include "fade/tensor.hpp"
#include "fade/world.hpp"

namespace fade {

// Paired conditional distributions of generated points over a finite
// support: p1 = P(x | C present prompt), p0 = P(x | C absent prompt),
// prior = P(C present prompt).
struct DiscretePairedDistribution {
  std::vector<double> p1, p0;
  double prior = 0.5;

  DiscretePairedDistribution(std::vector<double> p1_in, std::vector<double> p0_in, double prior_in);
  std::size_t support() const { return p1.size(); }
};

// Bayes-optimal discriminator D*(x) = p1 pi / (p1 pi + p0 (1 - pi)),
// clamped into [1e-7, 1 - 1e-7]. Outcomes with zero mass under both
// classes are rejected.
std::vector<double> bayes_discriminator(const DiscretePairedDistribution& d);

// I(C; X) in nats; 0 log 0 = 0
double mutual_information(const DiscretePairedDistribution& d);

// TV(P1, P0) = (1/2) sum |p1 - p0|
double total_variation(const DiscretePairedDistribution& d);

struct OptimalLosses {
  double adv_at_dstar = 0.0;  // L_adv^D evaluated at D*
  double rem_at_dstar = 0.0;  // L_rem evaluated at D*
};

// exact losses at the Bayes discriminator; requires prior = 1/2 unless the
// caller opts into the general-prior formulas
OptimalLosses optimal_losses(const DiscretePairedDistribution& d, bool allow_general_prior = false);

struct AccuracyBound {
  double best_accuracy = 0.0;  // measured by thresholding D* at 1/2
  double tv = 0.0;
  double identity_residual = 0.0;  // |best_accuracy - (1/2 + tv/2)|
};

// best achievable discrimination accuracy; equals 1/2 + TV/2 at prior 1/2
AccuracyBound accuracy_tv_bound(const DiscretePairedDistribution& d);

struct TheoremChecks {
  bool accuracy_identity = false;   // |acc - (1/2 + TV/2)| <= 1e-12
  bool equilibrium_forward = false; // TV <= tol implies I and L_rem - ln 2 are small
  bool separation = false;          // TV > tol implies strict excess over ln 2
  bool rem_never_below_ln2 = false; // L_rem(D*) >= ln 2 - 1e-12
};

// Machine check of the equilibrium equivalence on one distribution pair:
// TV = 0  <=>  I = 0  <=>  L_rem(D*) = ln 2, tested at tolerance tol.
//
// The comparison bounds come from the oracle's own machinery rather than
// from foregone conclusions: f(tol) is the mutual information this oracle
// computes for the extremal mass-swap pair at TV = tol (the maximizer of I
// at fixed TV), and g(tol) = TV * log(1 / clamp) is the ceiling the
// probability clamp imposes on the L_rem excess of any pair at TV = tol; it
// dominates the extremal disjoint-support pair, whose excess is
// TV * log(1 / (2 * clamp)). The separation margin is TV^2 (exact lower
// bound, see the notes in the implementation).
struct TheoremReport {
  double tolerance = 0.0;
  double i_nats = 0.0;
  double tv = 0.0;
  double best_accuracy = 0.0;
  double adv_at_dstar = 0.0;
  double rem_at_dstar = 0.0;
  double forward_bound_i = 0.0;       // f(tol)
  double forward_bound_rem = 0.0;     // g(tol)
  double separation_margin = 0.0;     // TV^2
  double accuracy_residual = 0.0;
  double rem_excess = 0.0;            // L_rem(D*) - ln 2
  TheoremChecks checks;
  bool all_pass = false;
};

TheoremReport verify_theorem_equilibrium(const DiscretePairedDistribution& d, double tol);

// Histogram window for the empirical estimator.
struct GridSpec {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
  std::int64_t bins_x = 16, bins_y = 16;

  // world bounding box: component means +- 3 sigma, sigma from the largest
  // covariance eigenvalue
  static GridSpec for_world(const WorldConfig& world, std::int64_t bins);
  void validate() const;
};

// Binned paired distribution from two sample sets (prior 1/2, additive
// smoothing 1e-9 on the counts). Points outside the window land in the
// nearest edge bin.
DiscretePairedDistribution binned_pair(const Tensor& x_concept, const Tensor& x_neutral,
                                       const GridSpec& grid);

// plug-in concept/sample mutual information estimate in nats
double empirical_concept_mi(const Tensor& x_concept, const Tensor& x_neutral,
                            const GridSpec& grid);

}  // namespace fade
