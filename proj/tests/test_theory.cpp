#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "fade/adversary.hpp"
#include "fade/errors.hpp"
#include "fade/rng.hpp"
#include "fade/theory.hpp"
#include "fade/world.hpp"

using namespace fade;

namespace {

constexpr double kLn2 = 0.6931471805599453;

DiscretePairedDistribution swap_pair(double p) {
  return DiscretePairedDistribution({p, 1.0 - p}, {1.0 - p, p}, 0.5);
}

// uniform simplex draw: normalized unit exponentials
std::vector<double> dirichlet_flat(rng::Stream& s, std::size_t m) {
  std::vector<double> p(m);
  double sum = 0.0;
  for (double& v : p) {
    double g = 0.0;
    do {
      g = -std::log(1.0 - s.uniform());
    } while (!(g > 0.0));
    v = g;
    sum += g;
  }
  for (double& v : p) v /= sum;
  // renormalize exactly enough for the 1e-12 simplex gate
  double total = 0.0;
  for (double v : p) total += v;
  for (double& v : p) v /= total;
  return p;
}

DiscretePairedDistribution random_pair(rng::Stream& s, std::size_t m) {
  return DiscretePairedDistribution(dirichlet_flat(s, m), dirichlet_flat(s, m), 0.5);
}

Tensor normal_cloud(std::int64_t n, std::uint64_t seed, double dx = 0.0, double dy = 0.0) {
  rng::Stream s(seed);
  Tensor x({n, 2});
  for (std::int64_t i = 0; i < n; ++i) {
    x.at(i, 0) = s.normal() + dx;
    x.at(i, 1) = s.normal() + dy;
  }
  return x;
}

}  // namespace

TEST_CASE("bayes discriminator formula") {
  // equal conditionals collapse to the prior
  const DiscretePairedDistribution same({0.3, 0.7}, {0.3, 0.7}, 0.5);
  for (const double v : bayes_discriminator(same)) CHECK(v == 0.5);

  // disjoint supports hit the clamp rails
  const DiscretePairedDistribution disjoint({1.0, 0.0}, {0.0, 1.0}, 0.5);
  const std::vector<double> d = bayes_discriminator(disjoint);
  CHECK(d[0] == 1.0 - kProbClamp);
  CHECK(d[1] == kProbClamp);

  const std::vector<double> d8 = bayes_discriminator(swap_pair(0.8));
  CHECK(d8[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(d8[1] == doctest::Approx(0.2).epsilon(1e-15));

  // an outcome dead under both classes has no posterior
  const DiscretePairedDistribution dead({1.0, 0.0}, {1.0, 0.0}, 0.5);
  CHECK_THROWS_AS((void)bayes_discriminator(dead), ValidationError);
}

TEST_CASE("mutual information reference values") {
  const DiscretePairedDistribution same({0.3, 0.7}, {0.3, 0.7}, 0.5);
  CHECK(mutual_information(same) == 0.0);

  const DiscretePairedDistribution disjoint({1.0, 0.0}, {0.0, 1.0}, 0.5);
  CHECK(mutual_information(disjoint) == doctest::Approx(kLn2).epsilon(1e-14));

  CHECK(mutual_information(swap_pair(0.8)) ==
        doctest::Approx(0.19274475702175743).epsilon(1e-14));
  CHECK(mutual_information(swap_pair(0.8)) == doctest::Approx(0.1927).epsilon(1e-4));
}

TEST_CASE("total variation reference values") {
  const DiscretePairedDistribution same({0.3, 0.7}, {0.3, 0.7}, 0.5);
  CHECK(total_variation(same) == 0.0);
  const DiscretePairedDistribution disjoint({1.0, 0.0}, {0.0, 1.0}, 0.5);
  CHECK(total_variation(disjoint) == 1.0);
  CHECK(total_variation(swap_pair(0.8)) == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("losses at the optimal discriminator") {
  const DiscretePairedDistribution same({0.3, 0.7}, {0.3, 0.7}, 0.5);
  const OptimalLosses eq = optimal_losses(same);
  CHECK(eq.adv_at_dstar == doctest::Approx(2.0 * kLn2).epsilon(1e-14));
  CHECK(eq.rem_at_dstar == doctest::Approx(kLn2).epsilon(1e-14));

  const OptimalLosses s8 = optimal_losses(swap_pair(0.8));
  CHECK(s8.adv_at_dstar == doctest::Approx(1.0008048470763758).epsilon(1e-13));
  CHECK(s8.rem_at_dstar == doctest::Approx(1.3321790402101223).epsilon(1e-13));
  CHECK(s8.rem_at_dstar == doctest::Approx(1.3322).epsilon(1e-4));

  // perfect separation: the clamp keeps both losses finite
  const DiscretePairedDistribution disjoint({1.0, 0.0}, {0.0, 1.0}, 0.5);
  const OptimalLosses lim = optimal_losses(disjoint);
  CHECK(lim.adv_at_dstar > 0.0);
  CHECK(lim.adv_at_dstar < 1e-6);
  CHECK(lim.rem_at_dstar == doctest::Approx(16.11809565095832).epsilon(1e-9));

  // priors away from 1/2 need the explicit opt-in
  const DiscretePairedDistribution tilted({0.3, 0.7}, {0.3, 0.7}, 0.25);
  CHECK_THROWS_AS((void)optimal_losses(tilted), ValidationError);
  CHECK(std::isfinite(optimal_losses(tilted, true).adv_at_dstar));
}

TEST_CASE("accuracy equals one half plus half the total variation") {
  const DiscretePairedDistribution same({0.3, 0.7}, {0.3, 0.7}, 0.5);
  CHECK(accuracy_tv_bound(same).best_accuracy == doctest::Approx(0.5).epsilon(1e-15));

  const AccuracyBound b8 = accuracy_tv_bound(swap_pair(0.8));
  CHECK(b8.best_accuracy == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(b8.identity_residual <= 1e-12);

  // the 55% instance: the accuracy cap certifies the 0.1 variation bound
  const AccuracyBound paper = accuracy_tv_bound(swap_pair(0.55));
  CHECK(std::abs(paper.best_accuracy - 0.55) <= 1e-12);
  CHECK(std::abs(paper.tv - 0.1) <= 1e-12);
  CHECK(paper.identity_residual <= 1e-12);
}

TEST_CASE("equilibrium report on the exact-equilibrium pair") {
  const DiscretePairedDistribution same({0.25, 0.5, 0.25}, {0.25, 0.5, 0.25}, 0.5);
  const TheoremReport r = verify_theorem_equilibrium(same, 1e-9);
  CHECK(r.all_pass);
  CHECK(r.i_nats == 0.0);
  CHECK(r.tv == 0.0);
  CHECK(r.accuracy_residual <= 1e-15);
  CHECK(std::abs(r.rem_excess) <= 1e-14);
  CHECK(r.checks.accuracy_identity);
  CHECK(r.checks.equilibrium_forward);
  CHECK(r.checks.separation);
  CHECK(r.checks.rem_never_below_ln2);
}

TEST_CASE("equilibrium report on the paper instance") {
  const TheoremReport r = verify_theorem_equilibrium(swap_pair(0.55), 1e-9);
  CHECK(r.all_pass);
  CHECK(std::abs(r.best_accuracy - 0.55) <= 1e-12);
  CHECK(std::abs(r.tv - 0.1) <= 1e-12);
  CHECK(r.i_nats == doctest::Approx(0.0050083668463568375).epsilon(1e-13));
  CHECK(r.rem_excess == doctest::Approx(0.015058702699858279).epsilon(1e-12));
  CHECK(r.separation_margin == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(r.rem_excess >= r.separation_margin);
}

TEST_CASE("a one-percent perturbation is strictly detected") {
  const TheoremReport r = verify_theorem_equilibrium(swap_pair(0.505), 1e-9);
  CHECK(r.all_pass);
  CHECK(r.tv == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(r.i_nats > 0.0);
  CHECK(r.i_nats == doctest::Approx(5.0000833366668452e-5).epsilon(1e-10));
  CHECK(r.rem_excess > 0.0);
  CHECK(r.rem_excess == doctest::Approx(0.00015000583370002679).epsilon(1e-10));
  CHECK(r.rem_excess >= r.tv * r.tv - 1e-12);
}

TEST_CASE("report bounds come from the oracle's own machinery") {
  const TheoremReport r = verify_theorem_equilibrium(swap_pair(0.6), 0.05);
  CHECK(r.forward_bound_i == doctest::Approx(0.05 * kLn2).epsilon(1e-13));
  CHECK(r.forward_bound_rem == doctest::Approx(0.05 * std::log(1.0 / kProbClamp)).epsilon(1e-13));
  CHECK(r.separation_margin == doctest::Approx(r.tv * r.tv).epsilon(1e-13));
  CHECK_THROWS_AS((void)verify_theorem_equilibrium(swap_pair(0.6), -1.0), ValidationError);
}

TEST_CASE("randomized equilibrium sweep stays violation-free") {
  rng::Stream root(20240817);
  for (int i = 0; i < 200; ++i) {
    rng::Stream s = root.child(static_cast<std::uint64_t>(i));
    const std::size_t m = 1 + static_cast<std::size_t>(s.below(16));
    const DiscretePairedDistribution d = random_pair(s, m);
    const TheoremReport strict = verify_theorem_equilibrium(d, 1e-9);
    CHECK(strict.all_pass);
    // a loose tolerance exercises the forward branch on low-variation pairs
    const TheoremReport loose = verify_theorem_equilibrium(d, 0.5);
    CHECK(loose.all_pass);
    // zero variation and zero information coincide strictly
    CHECK((strict.tv > 1e-9) == (strict.i_nats > 0.0));
  }
}

TEST_CASE("variation zero if and only if information zero on constructed families") {
  const DiscretePairedDistribution same({0.1, 0.2, 0.7}, {0.1, 0.2, 0.7}, 0.5);
  CHECK(total_variation(same) == 0.0);
  CHECK(mutual_information(same) == 0.0);
  for (const double tv : {1e-3, 1e-2, 0.1, 0.5}) {
    const DiscretePairedDistribution d = swap_pair(0.5 + 0.5 * tv);
    CHECK(total_variation(d) == doctest::Approx(tv).epsilon(1e-12));
    CHECK(mutual_information(d) > 0.0);
    // the swap family attains the information ceiling TV * ln 2
    CHECK(mutual_information(d) <= tv * kLn2 + 1e-12);
  }
}

TEST_CASE("removal loss never drops below ln 2") {
  rng::Stream root(77);
  for (int i = 0; i < 100; ++i) {
    rng::Stream s = root.child(static_cast<std::uint64_t>(i));
    const DiscretePairedDistribution d = random_pair(s, 2 + static_cast<std::size_t>(s.below(14)));
    CHECK(optimal_losses(d).rem_at_dstar >= kLn2 - 1e-12);
  }
}

TEST_CASE("merging support bins never increases information") {
  rng::Stream root(31337);
  for (int trial = 0; trial < 40; ++trial) {
    rng::Stream s = root.child(static_cast<std::uint64_t>(trial));
    std::vector<double> p1 = dirichlet_flat(s, 10);
    std::vector<double> p0 = dirichlet_flat(s, 10);
    double i_prev = mutual_information(DiscretePairedDistribution(p1, p0, 0.5));
    while (p1.size() > 2) {
      const std::size_t a = static_cast<std::size_t>(s.below(p1.size()));
      std::size_t b = static_cast<std::size_t>(s.below(p1.size()));
      if (b == a) b = (a + 1) % p1.size();
      const std::size_t lo = std::min(a, b), hi = std::max(a, b);
      p1[lo] += p1[hi];
      p0[lo] += p0[hi];
      p1.erase(p1.begin() + static_cast<std::ptrdiff_t>(hi));
      p0.erase(p0.begin() + static_cast<std::ptrdiff_t>(hi));
      const double i_next = mutual_information(DiscretePairedDistribution(p1, p0, 0.5));
      CHECK(i_next <= i_prev + 1e-12);
      i_prev = i_next;
    }
  }
}

TEST_CASE("every support event satisfies the parity bound") {
  rng::Stream root(555);
  for (int trial = 0; trial < 20; ++trial) {
    rng::Stream s = root.child(static_cast<std::uint64_t>(trial));
    const DiscretePairedDistribution d = random_pair(s, 8);
    const double tv = total_variation(d);
    double worst = 0.0;
    for (std::uint32_t mask = 0; mask < 256u; ++mask) {
      double gap = 0.0;
      for (std::size_t i = 0; i < 8; ++i)
        if (mask & (1u << i)) gap += d.p1[i] - d.p0[i];
      worst = std::max(worst, std::abs(gap));
      CHECK(std::abs(gap) <= tv + 1e-12);
    }
    // the positive-part event attains the bound
    CHECK(worst == doctest::Approx(tv).epsilon(1e-12));
  }
}

TEST_CASE("distribution constructor guards") {
  CHECK_THROWS_AS(DiscretePairedDistribution({}, {}, 0.5), ValidationError);
  CHECK_THROWS_AS(DiscretePairedDistribution({1.0}, {0.5, 0.5}, 0.5), ValidationError);
  CHECK_THROWS_AS(DiscretePairedDistribution({0.4, 0.5}, {0.5, 0.5}, 0.5), ValidationError);
  CHECK_THROWS_AS(DiscretePairedDistribution({-0.1, 1.1}, {0.5, 0.5}, 0.5), ValidationError);
  CHECK_THROWS_AS(DiscretePairedDistribution({0.5, 0.5}, {0.5, 0.5}, 0.0), ValidationError);
  CHECK_THROWS_AS(DiscretePairedDistribution({0.5, 0.5}, {0.5, 0.5}, 1.0), ValidationError);
  // a 1e-13 wobble passes the 1e-12 simplex gate
  CHECK_NOTHROW(DiscretePairedDistribution({0.5 + 5e-14, 0.5}, {0.5, 0.5}, 0.5));
}

TEST_CASE("world grid covers every component at three sigma") {
  const WorldConfig w = WorldConfig::default_world();
  const GridSpec g = GridSpec::for_world(w, 16);
  CHECK(g.bins_x == 16);
  CHECK(g.bins_y == 16);
  for (std::int64_t code = 0; code < w.assignment_count(); ++code) {
    const GaussianComponent& c = w.component(w.label_from_code(code));
    const double a = c.cov[0], b = c.cov[1], d = c.cov[3];
    const double eigmax = 0.5 * ((a + d) + std::sqrt((a - d) * (a - d) + 4.0 * b * b));
    const double s3 = 3.0 * std::sqrt(eigmax);
    CHECK(g.x_min <= c.mean[0] - s3 + 1e-12);
    CHECK(g.x_max >= c.mean[0] + s3 - 1e-12);
    CHECK(g.y_min <= c.mean[1] - s3 + 1e-12);
    CHECK(g.y_max >= c.mean[1] + s3 - 1e-12);
  }

  GridSpec empty = g;
  empty.x_max = empty.x_min;
  CHECK_THROWS_AS(empty.validate(), ValidationError);
  GridSpec nobins = g;
  nobins.bins_x = 0;
  CHECK_THROWS_AS(nobins.validate(), ValidationError);
}

TEST_CASE("empirical estimator on identical sample lists") {
  const Tensor x = normal_cloud(200, 12);
  GridSpec g;
  g.x_min = -4.0; g.x_max = 4.0; g.y_min = -4.0; g.y_max = 4.0;
  // identical counts give identical smoothed distributions, hence exactly zero
  CHECK(empirical_concept_mi(x, x, g) == 0.0);
}

TEST_CASE("empirical estimator separates what is separated") {
  GridSpec g;
  g.x_min = -12.0; g.x_max = 12.0; g.y_min = -8.0; g.y_max = 8.0;

  // same population, independent draws: nearly independent of the class flag
  CHECK(empirical_concept_mi(normal_cloud(10000, 1), normal_cloud(10000, 2), g) < 0.02);

  // the default world's concept split is close to fully informative
  const WorldConfig w = WorldConfig::default_world();
  const PromptLabel on = w.make_label({{"c", 1}, {"scene", 0}});
  const PromptLabel off = w.make_label({{"c", 0}, {"scene", 0}});
  const double mi = empirical_concept_mi(sample_world(w, on, 5000, 3),
                                         sample_world(w, off, 5000, 4),
                                         GridSpec::for_world(w, 16));
  CHECK(mi > 0.5);
  CHECK(mi <= kLn2 + 1e-12);
}

TEST_CASE("binned pair determinism and edge handling") {
  const Tensor a = normal_cloud(300, 21);
  const Tensor b = normal_cloud(300, 22, 0.5, -0.25);
  GridSpec g;
  g.x_min = -1.0; g.x_max = 1.0; g.y_min = -1.0; g.y_max = 1.0;
  g.bins_x = 4; g.bins_y = 4;

  const DiscretePairedDistribution d1 = binned_pair(a, b, g);
  const DiscretePairedDistribution d2 = binned_pair(a, b, g);
  REQUIRE(d1.support() == 16);
  for (std::size_t i = 0; i < d1.support(); ++i) {
    CHECK(d1.p1[i] == d2.p1[i]);
    CHECK(d1.p0[i] == d2.p0[i]);
  }

  // points far outside the window land in edge bins instead of vanishing
  Tensor far({100, 2});
  for (std::int64_t i = 0; i < 100; ++i) {
    far.at(i, 0) = (i % 2 == 0) ? 100.0 : -100.0;
    far.at(i, 1) = 100.0;
  }
  CHECK_NOTHROW((void)binned_pair(far, a, g));

  const Tensor empty({0, 2});
  CHECK_THROWS_AS((void)binned_pair(empty, a, g), ValidationError);
  const Tensor narrow({50, 3});
  CHECK_THROWS_AS((void)binned_pair(narrow, a, g), ShapeError);
  const Tensor few = normal_cloud(99, 5);
  CHECK_THROWS_AS((void)empirical_concept_mi(few, a, g), ValidationError);
}
