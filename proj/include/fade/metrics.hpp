#pragma once

#include <array>
#include <vector>

#include "fade/probe.hpp"
#include "fade/tensor.hpp"
#include "fade/world.hpp"

namespace fade {

// Fraction of generated samples (from concept prompts) that the probe still
// flags as showing the concept.
double concept_accuracy(const ProbeClassifier& probe, const Tensor& x);

struct AdherenceResult {
  double score = 0.0;
  bool vacuous = false;  // no non-concept attributes to match
};

// Fraction of samples whose probe-predicted non-concept attributes all match
// the prompt they were generated from.
AdherenceResult adherence_score(const ProbeClassifier& probe, const Tensor& x,
                                const std::vector<PromptLabel>& prompts);

// 2-Wasserstein^2 distance between two Gaussians, closed form in 2-D.
double frechet_gaussian(const std::array<double, 2>& mu1, const std::array<double, 4>& cov1,
                        const std::array<double, 2>& mu2, const std::array<double, 4>& cov2);

// Fit a Gaussian to each sample set (covariance regularized by +1e-6 I) and
// return their Fréchet distance. Needs at least 3 samples per set.
double frechet_proxy(const Tensor& generated, const Tensor& reference);

// Normalized content-preservation score in [0, 1]:
//   F = 1/2 * (adherence / ref_adherence
//              + max(ref_proxy - (proxy - ref_proxy), 0) / ref_proxy)
// clamped to [0, 1]; equals 1 when both metrics sit at their references.
double fidelity_F(double proxy, double adherence, double ref_proxy, double ref_adherence);

// H = 2 E F / (E + F), with H = 0 when E + F = 0.
double harmonic_mean(double e, double f);

struct MetricsReport {
  double acc_concept = 0.0;
  double fidelity_proxy = 0.0;
  double adherence = 0.0;
  bool adherence_vacuous = false;
  double ref_fidelity_proxy = 0.0;
  double ref_adherence = 0.0;
  double concept_mi_nats = 0.0;
  double e = 0.0;  // erasure efficacy, 1 - acc_concept
  double f = 0.0;
  double h = 0.0;
};

// Assemble a consistent report: E = 1 - Acc, F and H recomputed from the
// inputs. Rejects out-of-range components.
MetricsReport emit_report(double acc_concept, double fidelity_proxy,
                          const AdherenceResult& adherence, double ref_fidelity_proxy,
                          double ref_adherence, double concept_mi_nats);

}  // namespace fade
