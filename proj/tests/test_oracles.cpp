#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "adalab/compensated.hpp"
#include "adalab/errors.hpp"
#include "adalab/objectives.hpp"
#include "adalab/oracles.hpp"
#include "adalab/telemetry.hpp"
#include "support/generators.hpp"

using namespace adalab;

namespace {

Objective reference_quadratic() {
  std::vector<double> eig(10);
  for (int i = 0; i < 10; ++i) eig[i] = std::pow(10.0, i / 9.0);
  return Objective::quadratic(eig, Vector(10));
}

std::vector<Vector> probes_for(const Objective& obj, RngStream& rng) {
  return radial_probes(obj.reference_point(), 10, 0.1, 10.0, rng);
}

}  // namespace

TEST(Sample, NoiselessMultiplicativeReturnsGradient) {
  const auto obj = Objective::cosine_well(5, 2.0, 1.0);
  const auto oracle = Oracle::multiplicative(0.0, MultiplierDistribution::Rademacher);
  gen::for_all(50, 41, [&](gen::Gen& g) {
    const Vector x = g.vector(5, 3.0);
    const Vector G = sample(oracle, obj, x, g.rng());
    const Vector grad = obj.grad(x);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(G[i], grad[i]);
  });
}

TEST(Sample, AdditiveGaussianMeanAtCriticalPoint) {
  const auto obj = reference_quadratic();
  const auto oracle = Oracle::additive_gaussian(1.0, 10);
  RngStream rng(42, 0);
  const std::size_t n = 100'000;
  std::vector<NeumaierSum<double>> sums(10);
  for (std::size_t k = 0; k < n; ++k) {
    const Vector G = sample(oracle, obj, Vector(10), rng);
    for (std::size_t i = 0; i < 10; ++i) sums[i] += G[i];
  }
  Vector mean(10);
  for (std::size_t i = 0; i < 10; ++i) mean[i] = sums[i].value() / n;
  EXPECT_LE(norm(mean), 4.0 * std::sqrt(10.0 / n));
}

TEST(Sample, FullBatchWithoutReplacementIsExact) {
  const auto obj = make_synthetic_logistic(60, 4, 0.1, 0.5, 3);
  const auto oracle = Oracle::mini_batch(60, false, {1.0, 0.0}, {1.0, 0.0});
  gen::for_all(20, 43, [&](gen::Gen& g) {
    const Vector x = g.vector(4, 1.0);
    const Vector G = sample(oracle, obj, x, g.rng());
    EXPECT_LE(distance(G, obj.grad(x)), 1e-13 * std::max(1.0, norm(obj.grad(x))));
  });
}

TEST(Sample, MiniBatchNeedsFiniteSum) {
  const auto oracle = Oracle::mini_batch(2, false, {1.0, 0.0}, {1.0, 0.0});
  RngStream rng(44, 0);
  EXPECT_THROW(sample(oracle, reference_quadratic(), Vector(10), rng), UsageError);
  const auto obj = make_synthetic_logistic(5, 2, 0.1, 0.5, 3);
  const auto too_big = Oracle::mini_batch(6, false, {1.0, 0.0}, {1.0, 0.0});
  EXPECT_THROW(sample(too_big, obj, Vector(2), rng), UsageError);
}

TEST(Sample, AdditiveGaussianDimensionMustMatch) {
  const auto oracle = Oracle::additive_gaussian(1.0, 3);
  RngStream rng(45, 0);
  EXPECT_THROW(sample(oracle, reference_quadratic(), Vector(10), rng), UsageError);
}

// Sampling variance of a batch mean: s^2 / b with replacement and
// s^2 (N - b) / (b (N - 1)) without, s^2 the population variance of the
// per-sample gradients.
TEST(Sample, MiniBatchVarianceMatchesSamplingTheory) {
  const std::size_t N = 40, b = 10, d = 3;
  const auto obj = make_synthetic_logistic(N, d, 0.1, 0.3, 12);
  const Vector x({0.5, -1.0, 2.0});
  const Vector grad = obj.grad(x);
  double s2 = 0.0;
  for (std::size_t j = 0; j < N; ++j) {
    Vector gj(d);
    obj.add_sample_grad(j, x, 1.0, gj);
    s2 += norm_sq(gj - grad) / N;
  }
  for (bool replacement : {true, false}) {
    const auto oracle = Oracle::mini_batch(b, replacement, {1.0, 0.0}, {1.0, 0.0});
    RngStream rng(46, replacement ? 1 : 0);
    const int n = 200'000;
    double m1 = 0.0, m2 = 0.0;
    for (int k = 0; k < n; ++k) {
      const double e = norm_sq(sample(oracle, obj, x, rng) - grad);
      m1 += e;
      m2 += e * e;
    }
    m1 /= n;
    const double se = std::sqrt((m2 / n - m1 * m1) / n);
    const double expected = replacement ? s2 / b : s2 * (N - b) / (b * (N - 1.0));
    EXPECT_LE(std::abs(m1 - expected), 4 * se) << (replacement ? "with" : "without") << " replacement";
  }
}

TEST(Unbiasedness, EveryOracleKind) {
  const auto quad = reference_quadratic();
  const auto logistic = make_synthetic_logistic(200, 5, 0.1, 1.0, 7);
  struct Case {
    const Objective* obj;
    Oracle oracle;
  };
  const std::vector<Case> cases = {
      {&quad, Oracle::additive_gaussian(1.0, 10)},
      {&quad, Oracle::multiplicative(0.5, MultiplierDistribution::Rademacher)},
      {&quad, Oracle::multiplicative(0.5, MultiplierDistribution::Gaussian)},
      {&logistic, Oracle::mini_batch(10, false, {1.0, 0.0}, {1.0, 0.0})},
      {&logistic, Oracle::mini_batch(10, true, {1.0, 0.0}, {1.0, 0.0})},
  };
  for (const auto& c : cases) {
    gen::for_all(5, 47, [&](gen::Gen& g) {
      const Vector x = sample_in_ball(c.obj->reference_point(), 3.0, g.rng());
      const auto est = estimate_conditional(c.oracle, *c.obj, x, 100'000, g.rng());
      const Vector grad = c.obj->grad(x);
      for (std::size_t i = 0; i < grad.dim(); ++i) {
        EXPECT_LE(std::abs(est.mean_G[i] - grad[i]), 4 * est.se_G[i]) << to_string(c.oracle.kind());
      }
    });
  }
}

TEST(DeclaredConstants, AnalyticValues) {
  const auto a = Oracle::additive_gaussian(2.0, 10);
  EXPECT_EQ(a.declared_sigma0(), 1.0);
  EXPECT_EQ(a.declared_sigma1(), 40.0);
  EXPECT_EQ(a.declared_coordinate_constants().sigma1, 4.0);
  EXPECT_FALSE(a.near_critical_bounded());
  const auto m = Oracle::multiplicative(0.5, MultiplierDistribution::Rademacher);
  EXPECT_EQ(m.declared_sigma0(), 1.25);
  EXPECT_EQ(m.declared_sigma1(), 0.0);
  EXPECT_TRUE(m.near_critical_bounded());
  EXPECT_DOUBLE_EQ(*m.analytic_near_critical_bound(0.01), 2.25 * 0.01);
}

TEST(AffineFit, AdditiveGaussian) {
  const auto obj = reference_quadratic();
  RngStream rng(48, 0);
  const auto fit = empirical_affine_fit(Oracle::additive_gaussian(1.0, 10), obj, probes_for(obj, rng),
                                        10'000, rng);
  EXPECT_NEAR(fit.sigma0_hat, 1.0, 0.1);
  EXPECT_NEAR(fit.sigma1_hat, 10.0, 1.0);
  EXPECT_TRUE(fit.pass);
}

TEST(AffineFit, MultiplicativeRademacher) {
  const auto obj = reference_quadratic();
  RngStream rng(49, 0);
  const auto probes = probes_for(obj, rng);
  const auto fit = empirical_affine_fit(Oracle::multiplicative(0.5, MultiplierDistribution::Rademacher),
                                        obj, probes, 10'000, rng);
  EXPECT_NEAR(fit.sigma0_hat, 1.25, 0.125);
  // The intercept of an exactly proportional law, against the smallest probe signal.
  const double x_min = *std::min_element(fit.probe_grad_sq.begin(), fit.probe_grad_sq.end());
  EXPECT_LE(std::abs(fit.sigma1_hat), 0.1 * 1.25 * x_min);
  EXPECT_TRUE(fit.pass);
}

TEST(AffineFit, NoiselessMultiplicativeIsExact) {
  const auto obj = reference_quadratic();
  RngStream rng(50, 0);
  const auto fit = empirical_affine_fit(Oracle::multiplicative(0.0, MultiplierDistribution::Rademacher),
                                        obj, probes_for(obj, rng), 1000, rng);
  EXPECT_NEAR(fit.sigma0_hat, 1.0, 1e-10);
  EXPECT_NEAR(fit.sigma1_hat, 0.0, 1e-8);
  EXPECT_TRUE(fit.pass);
}

TEST(AffineFit, IdenticalProbesAreDegenerate) {
  const auto obj = reference_quadratic();
  RngStream rng(51, 0);
  const std::vector<Vector> same(8, Vector(10, 1.0));
  EXPECT_THROW(empirical_affine_fit(Oracle::additive_gaussian(1.0, 10), obj, same, 1000, rng),
               DegenerateDesignError);
}

TEST(AffineFit, DesignPreconditions) {
  const auto obj = reference_quadratic();
  RngStream rng(52, 0);
  const auto probes = probes_for(obj, rng);
  const std::vector<Vector> few(probes.begin(), probes.begin() + 7);
  const auto oracle = Oracle::additive_gaussian(1.0, 10);
  EXPECT_THROW(empirical_affine_fit(oracle, obj, few, 1000, rng), UsageError);
  EXPECT_THROW(empirical_affine_fit(oracle, obj, probes, 999, rng), UsageError);
}

TEST(AffineFit, UnderstatedConstantsAreCaught) {
  // Probe means follow |grad g|^2 + 10 but the declared sigma1 is 1.
  const auto fit = detail::finish_affine_fit({1.0, 2.0, 3.0}, {11.0, 12.0, 13.0}, {0.1, 0.1, 0.1},
                                             AffineConstants{1.0, 1.0});
  EXPECT_FALSE(fit.pass);
  EXPECT_NEAR(fit.sigma0_hat, 1.0, 1e-12);
  EXPECT_NEAR(fit.sigma1_hat, 10.0, 1e-12);
}

TEST(CoordinateAffineFit, AdditiveGaussianPerCoordinate) {
  const auto obj = reference_quadratic();
  RngStream rng(54, 0);
  const auto fit = empirical_coordinate_affine_fit(Oracle::additive_gaussian(1.0, 10), obj,
                                                   probes_for(obj, rng), 10'000, rng);
  EXPECT_NEAR(fit.sigma0_hat, 1.0, 0.1);
  EXPECT_NEAR(fit.sigma1_hat, 1.0, 0.1);
  EXPECT_TRUE(fit.pass);
}

TEST(NearCritical, MultiplicativeRademacher) {
  RngStream rng(55, 0);
  const auto r = near_critical_check(Oracle::multiplicative(0.5, MultiplierDistribution::Rademacher),
                                     Objective::cosine_well(10, 2.0, 1.0), 0.01, 10'000, rng);
  EXPECT_LE(r.D1_hat, 2.25 * 0.01);
  EXPECT_TRUE(r.pass);
  EXPECT_TRUE(r.declared_bounded);
}

TEST(NearCritical, AdditiveGaussianIsReportedNotFailed) {
  RngStream rng(56, 0);
  const auto r = near_critical_check(Oracle::additive_gaussian(1.0, 10), reference_quadratic(), 0.01,
                                     1000, rng);
  EXPECT_FALSE(r.declared_bounded);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.message, "assumption not satisfied; asymptotic theorems not certified for this oracle");
}

TEST(NearCritical, NoiselessStaysBelowD0) {
  RngStream rng(57, 0);
  const auto r = near_critical_check(Oracle::multiplicative(0.0, MultiplierDistribution::Rademacher),
                                     reference_quadratic(), 0.5, 1000, rng);
  EXPECT_LE(r.D1_hat, 0.5);
  EXPECT_TRUE(r.pass);
}

TEST(NearCritical, ExhaustedBudgetIsSearchFailure) {
  RngStream rng(58, 0);
  EXPECT_THROW(near_critical_check(Oracle::additive_gaussian(1.0, 10), reference_quadratic(), 1e-30,
                                   10, rng, 2, 3),
               SearchFailure);
}

TEST(Envelope, LiesAboveEveryProbeMean) {
  gen::for_all(100, 59, [](gen::Gen& g) {
    std::vector<double> xs, ms, ses;
    const double s0 = g.uniform(1.0, 3.0), s1 = g.uniform(0.0, 5.0);
    for (int k = 0; k < 10; ++k) {
      const double x = g.log_uniform(0.01, 100.0);
      xs.push_back(x);
      ms.push_back(s0 * x + s1 + g.uniform(-0.5, 0.5) * (1 + x * 0.1));
      ses.push_back(0.1);
    }
    const auto fit = detail::finish_affine_fit(xs, ms, ses, {s0, s1});
    for (auto lift : {EnvelopeLift::Slope, EnvelopeLift::Intercept}) {
      const AffineConstants c = envelope_constants(fit, lift);
      EXPECT_GE(c.sigma0, 1.0);
      EXPECT_GE(c.sigma1, 0.0);
      for (int k = 0; k < 10; ++k) EXPECT_LE(ms[k], c.sigma0 * xs[k] + c.sigma1 + 1e-9 * (1 + ms[k]));
    }
  });
}
