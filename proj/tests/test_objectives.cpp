#include <cmath>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>

#include "adalab/errors.hpp"
#include "adalab/objectives.hpp"
#include "support/generators.hpp"

using namespace adalab;
using Exact = boost::multiprecision::cpp_bin_float_50;

namespace {

std::vector<Objective> all_objectives() {
  std::vector<double> eig(10);
  for (int i = 0; i < 10; ++i) eig[i] = std::pow(10.0, i / 9.0);
  return {Objective::quadratic(eig, Vector(10)),
          Objective::quadratic({1.0, 10.0}, Vector({1.0, -2.0})),
          Objective::cosine_well(10, 2.0, 1.0),
          Objective::cosine_well(3, 0.5, 3.0),
          make_synthetic_logistic(200, 5, 0.1, 1.0, 7),
          make_synthetic_logistic(50, 3, 0.2, 0.1, 8)};
}

// Root of x = a b sin(b x) on (0, pi/b) in 50-digit arithmetic, by Newton.
Exact cosine_root(double a, double b) {
  using boost::multiprecision::cos;
  using boost::multiprecision::sin;
  const Exact A = a, B = b;
  Exact x = Exact(3) / B;
  for (int k = 0; k < 100; ++k) x -= (x - A * B * sin(B * x)) / (1 - A * B * B * cos(B * x));
  return x;
}

}  // namespace

TEST(Eval, QuadraticIdentity) {
  const auto q = Objective::quadratic({1.0, 1.0}, Vector(2));
  EXPECT_EQ(q.eval(Vector({3.0, 4.0})), 12.5);
}

TEST(Eval, CosineWellAtOrigin) {
  EXPECT_EQ(Objective::cosine_well(1, 2.0, 1.0).eval(Vector(1)), 4.0);
}

TEST(Eval, CosineWellInfimum) {
  using boost::multiprecision::cos;
  const Exact x = cosine_root(2.0, 1.0);
  EXPECT_NEAR(static_cast<double>(x), 1.8955, 1e-4);
  const Exact h = x * x / 2 + 2 * (1 + cos(x));
  for (std::size_t d : {1u, 10u}) {
    const auto c = Objective::cosine_well(d, 2.0, 1.0);
    EXPECT_NEAR(c.declared_gstar(), static_cast<double>(h) * d, 1e-12 * d);
    EXPECT_NEAR(c.eval(Vector(d, static_cast<double>(x))), c.declared_gstar(), 1e-12 * d);
  }
}

TEST(Eval, CosineWellInfimumOtherParameters) {
  using boost::multiprecision::cos;
  const Exact x = cosine_root(0.5, 3.0);
  const Exact h = x * x / 2 + Exact(0.5) * (1 + cos(3 * x));
  EXPECT_NEAR(Objective::cosine_well(1, 0.5, 3.0).declared_gstar(), static_cast<double>(h), 1e-12);
}

TEST(Eval, DimensionMismatchIsUsageError) {
  const auto q = Objective::quadratic({1.0, 1.0}, Vector(2));
  EXPECT_THROW(q.eval(Vector(3)), UsageError);
  EXPECT_THROW(q.grad(Vector(1)), UsageError);
}

TEST(Grad, QuadraticIdentity) {
  const auto q = Objective::quadratic({1.0, 1.0}, Vector(2));
  const Vector g = q.grad(Vector({3.0, 4.0}));
  EXPECT_EQ(g[0], 3.0);
  EXPECT_EQ(g[1], 4.0);
}

TEST(Grad, CosineWellOriginIsCritical) {
  const Vector g = Objective::cosine_well(4, 2.0, 1.0).grad(Vector(4));
  for (double x : g) EXPECT_EQ(x, 0.0);
}

TEST(Grad, CosineWellComponentFormula) {
  const auto c = Objective::cosine_well(2, 2.0, 1.5);
  const Vector x({0.7, -2.1});
  const Vector g = c.grad(x);
  for (int i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(g[i], x[i] - 2.0 * 1.5 * std::sin(1.5 * x[i]));
}

TEST(Grad, MatchesCentralDifferences) {
  for (const auto& obj : all_objectives()) {
    gen::for_all(20, 21, [&](gen::Gen& g) {
      const Vector x = sample_in_ball(obj.reference_point(), 5.0, g.rng());
      const Vector grad = obj.grad(x);
      const double h = 1e-5;
      Vector fd(x.dim());
      for (std::size_t i = 0; i < x.dim(); ++i) {
        Vector xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        fd[i] = (obj.eval(xp) - obj.eval(xm)) / (2 * h);
      }
      EXPECT_LE(distance(fd, grad), 1e-6 * std::max(norm(grad), 1.0));
    });
  }
}

TEST(CertifySmoothness, QuadraticTwoEigenvalues) {
  RngStream rng(31, 0);
  const auto c = certify_smoothness(Objective::quadratic({1.0, 10.0}, Vector(2)), rng, 10'000, 10.0);
  EXPECT_GT(c.L_hat, 9.0);
  EXPECT_LE(c.L_hat, 10.0);
  EXPECT_TRUE(c.pass);
}

TEST(CertifySmoothness, CosineWell) {
  RngStream rng(32, 0);
  const auto c = certify_smoothness(Objective::cosine_well(10, 2.0, 1.0), rng, 10'000, 10.0);
  EXPECT_LE(c.L_hat, 3.0);
  EXPECT_TRUE(c.pass);
}

TEST(CertifySmoothness, IsotropicQuadraticIsExactlyOne) {
  RngStream rng(33, 0);
  const auto c = certify_smoothness(Objective::quadratic({1.0, 1.0, 1.0}, Vector(3)), rng, 1000, 10.0);
  EXPECT_EQ(c.L_hat, 1.0);
}

TEST(CertifySmoothness, WrongDeclaredLFails) {
  auto c = Objective::cosine_well(10, 2.0, 1.0);
  c.override_declared_L(0.1);
  RngStream rng(34, 0);
  const auto cert = certify_smoothness(c, rng, 10'000, 10.0);
  EXPECT_GT(cert.L_hat, 1.0);
  EXPECT_FALSE(cert.pass);
}

TEST(CertifySmoothness, BadArgumentsAreUsageErrors) {
  RngStream rng(35, 0);
  const auto q = Objective::quadratic({1.0}, Vector(1));
  EXPECT_THROW(certify_smoothness(q, rng, 0, 1.0), UsageError);
  EXPECT_THROW(certify_smoothness(q, rng, 10, 0.0), UsageError);
}

TEST(ObjectiveProperties, NonNegativeAboveInfimum) {
  for (const auto& obj : all_objectives()) {
    EXPECT_GE(obj.declared_gstar(), 0.0);
    gen::for_all(200, 22, [&](gen::Gen& g) {
      const Vector x = sample_in_ball(obj.reference_point(), 10.0, g.rng());
      EXPECT_GE(obj.eval(x), obj.declared_gstar() - 1e-12);
    });
  }
}

TEST(ObjectiveProperties, GradientBoundedBySuboptimality) {
  for (const auto& obj : all_objectives()) {
    gen::for_all(1000, 23, [&](gen::Gen& g) {
      const Vector x = sample_in_ball(obj.reference_point(), 10.0, g.rng());
      const Vector grad = obj.grad(x);
      EXPECT_LE(dot(grad, grad), 2 * obj.declared_L() * (obj.eval(x) - obj.declared_gstar()) + 1e-9);
    });
  }
}

TEST(ObjectiveProperties, DescentLemma) {
  for (const auto& obj : all_objectives()) {
    gen::for_all(1000, 24, [&](gen::Gen& g) {
      const Vector x = sample_in_ball(obj.reference_point(), 10.0, g.rng());
      const Vector y = sample_in_ball(obj.reference_point(), 10.0, g.rng());
      const Vector dx = y - x;
      const double bound = obj.eval(x) + dot(obj.grad(x), dx) + obj.declared_L() / 2 * dot(dx, dx);
      EXPECT_LE(obj.eval(y), bound + 1e-9 * (1 + std::abs(obj.eval(x))));
    });
  }
}

TEST(ObjectiveProperties, LipschitzGradientOnPairs) {
  for (const auto& obj : all_objectives()) {
    gen::for_all(500, 25, [&](gen::Gen& g) {
      const Vector x = sample_in_ball(obj.reference_point(), 10.0, g.rng());
      const Vector y = sample_in_ball(obj.reference_point(), 10.0, g.rng());
      EXPECT_LE(distance(obj.grad(x), obj.grad(y)), obj.declared_L() * distance(x, y) * (1 + 1e-9));
    });
  }
}

TEST(CosineWell, OriginIsNonMinimizingCritical) {
  const double a = 2.0, b = 1.0;
  const auto c = Objective::cosine_well(2, a, b);
  // Hessian diagonal by differencing the analytic gradient.
  const double h = 1e-6;
  const double hess = (c.grad(Vector({h, 0.0}))[0] - c.grad(Vector({-h, 0.0}))[0]) / (2 * h);
  EXPECT_NEAR(hess, 1 - a * b * b, 1e-6);
  EXPECT_LT(hess, 0.0);
  // Mixed-sign critical point: minimum in one coordinate, maximum in the other.
  const double xs = static_cast<double>(cosine_root(a, b));
  EXPECT_NEAR(norm(c.grad(Vector({xs, 0.0}))), 0.0, 1e-12);
  EXPECT_EQ(c.declared_L(), 1 + a * b * b);
}

TEST(Logistic, DeclaredConstants) {
  const auto obj = make_synthetic_logistic(200, 5, 0.1, 1.0, 7);
  const auto* s = obj.spec_if<LogisticL2Spec>();
  ASSERT_NE(s, nullptr);
  double max_row = 0.0;
  for (std::size_t j = 0; j < s->samples; ++j) {
    double r = 0.0;
    for (std::size_t i = 0; i < s->dim; ++i) r += s->features[j * s->dim + i] * s->features[j * s->dim + i];
    max_row = std::max(max_row, r);
  }
  EXPECT_DOUBLE_EQ(obj.declared_L(), 0.25 * max_row + 1.0);
  EXPECT_LE(norm(obj.grad(obj.reference_point())), 1e-10);
  EXPECT_DOUBLE_EQ(obj.declared_gstar(), obj.eval(obj.reference_point()));
  EXPECT_TRUE(obj.is_finite_sum());
  EXPECT_EQ(obj.sample_count(), 200u);
}

TEST(Logistic, SameSeedSameData) {
  const auto a = make_synthetic_logistic(30, 4, 0.1, 0.5, 99);
  const auto b = make_synthetic_logistic(30, 4, 0.1, 0.5, 99);
  EXPECT_EQ(a.spec_if<LogisticL2Spec>()->features, b.spec_if<LogisticL2Spec>()->features);
  EXPECT_EQ(a.spec_if<LogisticL2Spec>()->labels, b.spec_if<LogisticL2Spec>()->labels);
}

TEST(Logistic, FullSumOfSampleGradientsIsGradient) {
  const auto obj = make_synthetic_logistic(40, 3, 0.1, 0.3, 5);
  gen::for_all(20, 26, [&](gen::Gen& g) {
    const Vector x = g.vector(3, 2.0);
    Vector acc(3);
    for (std::size_t j = 0; j < 40; ++j) obj.add_sample_grad(j, x, 1.0 / 40, acc);
    EXPECT_LE(distance(acc, obj.grad(x)), 1e-12 * std::max(1.0, norm(obj.grad(x))));
  });
}

TEST(ObjectiveConstruction, InvalidSpecsAreUsageErrors) {
  EXPECT_THROW(Objective::quadratic({}, Vector(0)), UsageError);
  EXPECT_THROW(Objective::quadratic({1.0, -1.0}, Vector(2)), UsageError);
  EXPECT_THROW(Objective::quadratic({1.0}, Vector(2)), UsageError);
  EXPECT_THROW(Objective::cosine_well(0, 2.0, 1.0), UsageError);
  EXPECT_THROW(Objective::cosine_well(2, -1.0, 1.0), UsageError);
  EXPECT_THROW(make_synthetic_logistic(10, 2, 0.6, 1.0, 1), UsageError);
  EXPECT_THROW(Objective::logistic_l2(1, 1, {1.0}, {0.5}, 1.0), UsageError);
}
