#include "fade/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "fade/errors.hpp"

namespace fade {

double concept_accuracy(const ProbeClassifier& probe, const Tensor& x) {
  if (x.rank() != 2 || x.rows() == 0) throw ValidationError("need a non-empty (n, 2) sample set");
  const std::vector<double> p = probe_concept_probability(probe, x);
  std::int64_t flagged = 0;
  for (double v : p) flagged += v > 0.5 ? 1 : 0;
  return static_cast<double>(flagged) / static_cast<double>(x.rows());
}

AdherenceResult adherence_score(const ProbeClassifier& probe, const Tensor& x,
                                const std::vector<PromptLabel>& prompts) {
  if (x.rank() != 2 || x.rows() == 0) throw ValidationError("need a non-empty (n, 2) sample set");
  if (static_cast<std::size_t>(x.rows()) != prompts.size())
    throw ValidationError("every sample needs the prompt it was generated from");
  if (probe.attributes.size() == 1) return {1.0, true};  // nothing but the concept to match

  const std::vector<PromptLabel> pred = probe_predictions(probe, x);
  std::int64_t matched = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    bool ok = true;
    for (std::size_t a = 0; a < probe.attributes.size(); ++a) {
      if (static_cast<std::int64_t>(a) == probe.concept_index) continue;
      if (pred[i].values[a] != prompts[i].values[a]) { ok = false; break; }
    }
    matched += ok ? 1 : 0;
  }
  return {static_cast<double>(matched) / static_cast<double>(pred.size()), false};
}

double frechet_gaussian(const std::array<double, 2>& mu1, const std::array<double, 4>& cov1,
                        const std::array<double, 2>& mu2, const std::array<double, 4>& cov2) {
  const double dx = mu1[0] - mu2[0];
  const double dy = mu1[1] - mu2[1];
  const double mean_term = dx * dx + dy * dy;

  // tr sqrt(S1^1/2 S2 S1^1/2) for 2x2 SPD via tr/det invariants:
  // the product's trace is tr(S1 S2) and its determinant det S1 det S2,
  // and for SPD M, tr sqrt(M) = sqrt(tr M + 2 sqrt(det M))
  const double tr1 = cov1[0] + cov1[3];
  const double tr2 = cov2[0] + cov2[3];
  const double det1 = cov1[0] * cov1[3] - cov1[1] * cov1[2];
  const double det2 = cov2[0] * cov2[3] - cov2[1] * cov2[2];
  const double tr_prod = cov1[0] * cov2[0] + cov1[1] * cov2[2] + cov1[2] * cov2[1] +
                         cov1[3] * cov2[3];
  const double det_prod = std::sqrt(std::max(det1 * det2, 0.0));
  const double tr_sqrt = std::sqrt(std::max(tr_prod + 2.0 * det_prod, 0.0));

  return std::max(mean_term + tr1 + tr2 - 2.0 * tr_sqrt, 0.0);
}

namespace {

void fit_gaussian(const Tensor& x, std::array<double, 2>& mu, std::array<double, 4>& cov) {
  const std::int64_t n = x.rows();
  mu = {0.0, 0.0};
  for (std::int64_t i = 0; i < n; ++i) {
    mu[0] += x.at(i, 0);
    mu[1] += x.at(i, 1);
  }
  mu[0] /= static_cast<double>(n);
  mu[1] /= static_cast<double>(n);
  cov = {0.0, 0.0, 0.0, 0.0};
  for (std::int64_t i = 0; i < n; ++i) {
    const double a = x.at(i, 0) - mu[0];
    const double b = x.at(i, 1) - mu[1];
    cov[0] += a * a;
    cov[1] += a * b;
    cov[3] += b * b;
  }
  const double denom = static_cast<double>(n - 1);
  cov[0] = cov[0] / denom + 1e-6;
  cov[1] /= denom;
  cov[2] = cov[1];
  cov[3] = cov[3] / denom + 1e-6;
}

}  // namespace

double frechet_proxy(const Tensor& generated, const Tensor& reference) {
  if (generated.rank() != 2 || generated.cols() != 2 || reference.rank() != 2 ||
      reference.cols() != 2)
    throw ShapeError("frechet_proxy expects (n, 2) sample sets");
  if (generated.rows() < 3 || reference.rows() < 3)
    throw ValidationError("need at least 3 samples per set to fit a covariance");
  std::array<double, 2> mu1{}, mu2{};
  std::array<double, 4> cov1{}, cov2{};
  fit_gaussian(generated, mu1, cov1);
  fit_gaussian(reference, mu2, cov2);
  return frechet_gaussian(mu1, cov1, mu2, cov2);
}

double fidelity_F(double proxy, double adherence, double ref_proxy, double ref_adherence) {
  if (!(ref_proxy > 0.0) || !(ref_adherence > 0.0))
    throw ValidationError("reference metrics must be positive");
  const double adh_term = adherence / ref_adherence;
  const double proxy_term = std::max(ref_proxy - (proxy - ref_proxy), 0.0) / ref_proxy;
  return std::clamp(0.5 * (adh_term + proxy_term), 0.0, 1.0);
}

double harmonic_mean(double e, double f) {
  if (!(e >= 0.0 && e <= 1.0 && f >= 0.0 && f <= 1.0))
    throw ValidationError("harmonic_mean expects arguments in [0, 1]");
  if (e + f == 0.0) return 0.0;
  return 2.0 * e * f / (e + f);
}

MetricsReport emit_report(double acc_concept, double fidelity_proxy,
                          const AdherenceResult& adherence, double ref_fidelity_proxy,
                          double ref_adherence, double concept_mi_nats) {
  if (!(acc_concept >= 0.0 && acc_concept <= 1.0))
    throw ValidationError("concept accuracy must lie in [0, 1]");
  if (!(fidelity_proxy >= 0.0) || !(concept_mi_nats >= 0.0))
    throw ValidationError("fidelity proxy and mutual information must be nonnegative");
  if (!(adherence.score >= 0.0 && adherence.score <= 1.0))
    throw ValidationError("adherence must lie in [0, 1]");
  MetricsReport r;
  r.acc_concept = acc_concept;
  r.fidelity_proxy = fidelity_proxy;
  r.adherence = adherence.score;
  r.adherence_vacuous = adherence.vacuous;
  r.ref_fidelity_proxy = ref_fidelity_proxy;
  r.ref_adherence = ref_adherence;
  r.concept_mi_nats = concept_mi_nats;
  r.e = 1.0 - acc_concept;
  r.f = fidelity_F(fidelity_proxy, adherence.score, ref_fidelity_proxy, ref_adherence);
  r.h = harmonic_mean(r.e, r.f);
  return r;
}

}  // namespace fade
