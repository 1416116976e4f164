#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fade/errors.hpp"
#include "fade/metrics.hpp"
#include "fade/probe.hpp"
#include "fade/rng.hpp"
#include "fade/world.hpp"

using namespace fade;

namespace {

// single-layer probe with a hard-coded rule: concept on iff x0 > 0, the
// scene head always tied so predictions fall to scene 0
ProbeClassifier rule_probe() {
  ProbeClassifier p;
  p.attributes = {{"c", 2}, {"scene", 2}};
  p.concept_index = 0;
  p.arch.widths = {2, 4};
  p.arch.act = Activation::silu;
  Tensor w({4, 2});
  w.at(1, 0) = 10.0;  // concept value-1 logit rises with x0
  p.params.add(p.arch.weight_name(0), std::move(w));
  p.params.add(p.arch.bias_name(0), Tensor({4}));
  return p;
}

Tensor cloud(std::int64_t n, std::uint64_t seed, double dx = 0.0, double dy = 0.0,
             double scale = 1.0) {
  rng::Stream s(seed);
  Tensor x({n, 2});
  for (std::int64_t i = 0; i < n; ++i) {
    x.at(i, 0) = scale * s.normal() + dx;
    x.at(i, 1) = scale * s.normal() + dy;
  }
  return x;
}

}  // namespace

TEST_CASE("concept accuracy is the flagged fraction") {
  const ProbeClassifier p = rule_probe();
  Tensor x({10, 2});
  const double coords[10] = {1.0, 2.0, 0.5, -1.0, -2.0, -0.5, -3.0, -1.5, -0.25, -4.0};
  for (std::int64_t i = 0; i < 10; ++i) {
    x.at(i, 0) = coords[i];
    x.at(i, 1) = static_cast<double>(i);
  }
  CHECK(concept_accuracy(p, x) == 0.3);

  // permutation invariance
  std::vector<std::int64_t> order(10);
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::swap(order[2], order[7]);
  Tensor shuffled({10, 2});
  for (std::int64_t i = 0; i < 10; ++i) {
    shuffled.at(i, 0) = x.at(order[static_cast<std::size_t>(i)], 0);
    shuffled.at(i, 1) = x.at(order[static_cast<std::size_t>(i)], 1);
  }
  CHECK(concept_accuracy(p, shuffled) == 0.3);

  const Tensor empty({0, 2});
  CHECK_THROWS_AS((void)concept_accuracy(p, empty), ValidationError);
}

TEST_CASE("adherence matches non-concept attributes only") {
  const ProbeClassifier p = rule_probe();
  Tensor x({5, 2});
  for (std::int64_t i = 0; i < 5; ++i) {
    x.at(i, 0) = (i % 2 == 0) ? 1.0 : -1.0;  // concept value varies freely
    x.at(i, 1) = 0.0;
  }
  // the probe always predicts scene 0: four matching prompts, one not
  const std::vector<PromptLabel> prompts = {
      {{1, 0}}, {{0, 0}}, {{1, 0}}, {{0, 1}}, {{0, 0}}};
  const AdherenceResult r = adherence_score(p, x, prompts);
  CHECK(r.score == 0.8);
  CHECK_FALSE(r.vacuous);

  const std::vector<PromptLabel> all_match(5, PromptLabel{{1, 0}});
  CHECK(adherence_score(p, x, all_match).score == 1.0);

  const std::vector<PromptLabel> two(2, PromptLabel{{1, 0}});
  CHECK_THROWS_AS((void)adherence_score(p, x, two), ValidationError);
}

TEST_CASE("adherence on a concept-only world is vacuous") {
  ProbeClassifier p;
  p.attributes = {{"c", 2}};
  p.concept_index = 0;
  p.arch.widths = {2, 2};
  p.arch.act = Activation::silu;
  p.params.add(p.arch.weight_name(0), Tensor({2, 2}));
  p.params.add(p.arch.bias_name(0), Tensor({2}));

  const Tensor x = cloud(4, 1);
  const std::vector<PromptLabel> prompts(4, PromptLabel{{1}});
  const AdherenceResult r = adherence_score(p, x, prompts);
  CHECK(r.score == 1.0);
  CHECK(r.vacuous);
}

TEST_CASE("gaussian distance closed-form instances") {
  // unit shift, equal covariances: the means carry the whole distance
  CHECK(frechet_gaussian({0.0, 0.0}, {1, 0, 0, 1}, {1.0, 0.0}, {1, 0, 0, 1}) == 1.0);
  // equal means, covariance 4x: tr(I) + tr(4I) - 2 tr(2I) = 2
  CHECK(frechet_gaussian({0.0, 0.0}, {1, 0, 0, 1}, {0.0, 0.0}, {4, 0, 0, 4}) == 2.0);
  // identical inputs cost nothing
  CHECK(frechet_gaussian({0.3, -0.7}, {2, 0.5, 0.5, 1}, {0.3, -0.7}, {2, 0.5, 0.5, 1}) == 0.0);
}

TEST_CASE("sample-fit distance: identity, symmetry, nonnegativity") {
  const Tensor a = cloud(400, 7);
  CHECK(frechet_proxy(a, a) <= 1e-9);

  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Tensor g = cloud(150, 100 + seed, 0.3 * static_cast<double>(seed));
    const Tensor r = cloud(170, 200 + seed, 0.0, 0.1, 1.0 + 0.2 * static_cast<double>(seed));
    const double gr = frechet_proxy(g, r);
    CHECK(gr >= 0.0);
    CHECK(frechet_proxy(r, g) == gr);
  }

  // separated clouds score far above identical ones
  CHECK(frechet_proxy(cloud(300, 1), cloud(300, 2, 5.0)) > 10.0);

  const Tensor tiny({2, 2});
  CHECK_THROWS_AS((void)frechet_proxy(tiny, a), ValidationError);
  const Tensor wide({10, 3});
  CHECK_THROWS_AS((void)frechet_proxy(wide, a), ShapeError);
}

TEST_CASE("fidelity normalization fixed points and clamps") {
  // both metrics at their references
  CHECK(fidelity_F(1.0, 0.9, 1.0, 0.9) == 1.0);
  // degradation equal to the reference wipes the proxy term
  CHECK(fidelity_F(2.0, 0.9, 1.0, 0.9) == 0.5);
  // any degradation past 2x the reference stays floored at zero
  CHECK(fidelity_F(3.0, 0.9, 1.0, 0.9) == 0.5);
  CHECK(fidelity_F(7.5, 0.9, 1.0, 0.9) == 0.5);
  // a proxy better than the reference is clamped at the ceiling
  CHECK(fidelity_F(0.5, 0.9, 1.0, 0.9) == 1.0);
  // adherence above its reference can also drive the clamp
  CHECK(fidelity_F(1.0, 1.0, 1.0, 0.8) == 1.0);
  // an interior point with both terms at one half
  CHECK(fidelity_F(1.5, 0.45, 1.0, 0.9) == doctest::Approx(0.5).epsilon(1e-15));
  // worst case on both axes
  CHECK(fidelity_F(10.0, 0.0, 1.0, 0.9) == 0.0);

  CHECK_THROWS_AS((void)fidelity_F(1.0, 0.9, 0.0, 0.9), ValidationError);
  CHECK_THROWS_AS((void)fidelity_F(1.0, 0.9, 1.0, 0.0), ValidationError);
  CHECK_THROWS_AS((void)fidelity_F(1.0, 0.9, -1.0, 0.9), ValidationError);
}

TEST_CASE("harmonic mean values and bounds") {
  CHECK(harmonic_mean(0.9, 0.9) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(harmonic_mean(1.0, 0.0) == 0.0);
  CHECK(harmonic_mean(0.0, 0.0) == 0.0);
  CHECK(harmonic_mean(0.9, 0.8) == doctest::Approx(0.8470588235294118).epsilon(1e-15));
  CHECK(harmonic_mean(0.9, 0.8) == doctest::Approx(0.8471).epsilon(1e-4));

  rng::Stream s(2718);
  for (int i = 0; i < 200; ++i) {
    const double e = s.uniform();
    const double f = s.uniform();
    const double h = harmonic_mean(e, f);
    CHECK(h <= 2.0 * std::min(e, f) + 1e-15);
    CHECK(h <= 0.5 * (e + f) + 1e-15);
    CHECK(h >= 0.0);
    CHECK(h == harmonic_mean(f, e));
  }

  CHECK_THROWS_AS((void)harmonic_mean(-0.1, 0.5), ValidationError);
  CHECK_THROWS_AS((void)harmonic_mean(0.5, 1.1), ValidationError);
}

TEST_CASE("report assembly is internally consistent") {
  const AdherenceResult adh{0.95, false};
  const MetricsReport r = emit_report(0.2, 1.2, adh, 1.0, 0.97, 0.05);
  CHECK(r.e == 1.0 - r.acc_concept);
  CHECK(r.f == fidelity_F(1.2, 0.95, 1.0, 0.97));
  CHECK(r.h == harmonic_mean(r.e, r.f));
  CHECK(r.acc_concept == 0.2);
  CHECK(r.concept_mi_nats == 0.05);
  CHECK_FALSE(r.adherence_vacuous);

  // full erasure pins E at one
  const MetricsReport zero = emit_report(0.0, 1.0, adh, 1.0, 0.97, 0.0);
  CHECK(zero.e == 1.0);

  CHECK_THROWS_AS((void)emit_report(1.2, 1.0, adh, 1.0, 0.97, 0.0), ValidationError);
  CHECK_THROWS_AS((void)emit_report(0.2, -1.0, adh, 1.0, 0.97, 0.0), ValidationError);
  CHECK_THROWS_AS((void)emit_report(0.2, 1.0, adh, 1.0, 0.97, -0.5), ValidationError);
  const AdherenceResult bad{1.5, false};
  CHECK_THROWS_AS((void)emit_report(0.2, 1.0, bad, 1.0, 0.97, 0.0), ValidationError);
}

TEST_CASE("trained probe clears the held-out gate deterministically") {
  const WorldConfig w = WorldConfig::default_world();
  ProbeTrainConfig cfg;
  const ProbeClassifier probe = train_probe(w, cfg, 5);
  CHECK(probe_heldout_accuracy(probe, w, 100, 999) >= 0.95);

  const ProbeClassifier again = train_probe(w, cfg, 5);
  const std::vector<double> a = probe.params.flatten();
  const std::vector<double> b = again.params.flatten();
  REQUIRE(a.size() == b.size());
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) same = same && (a[i] == b[i]);
  CHECK(same);

  // a third seed gives a different network
  const std::vector<double> c = train_probe(w, cfg, 6).params.flatten();
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || (a[i] != c[i]);
  CHECK(differs);

  const Tensor wide({4, 3});
  CHECK_THROWS_AS((void)probe_logits(probe, wide), ShapeError);
}

TEST_CASE("probe separates the default world's attributes") {
  const WorldConfig w = WorldConfig::default_world();
  const ProbeClassifier probe = train_probe(w, ProbeTrainConfig{}, 5);

  // ground-truth samples from each assignment are classified back to it
  for (std::int64_t code = 0; code < w.assignment_count(); ++code) {
    const PromptLabel label = w.label_from_code(code);
    const Tensor x = sample_world(w, label, 200, 4242 + static_cast<std::uint64_t>(code));
    const double acc = concept_accuracy(probe, x);
    if (w.concept_on(label)) {
      CHECK(acc >= 0.95);
    } else {
      CHECK(acc <= 0.05);
    }
    const AdherenceResult adh = adherence_score(probe, x, std::vector<PromptLabel>(200, label));
    CHECK(adh.score >= 0.9);
  }
}
