#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "adalab/compensated.hpp"
#include "adalab/errors.hpp"
#include "adalab/objectives.hpp"
#include "adalab/optimizers.hpp"
#include "adalab/oracles.hpp"
#include "support/generators.hpp"

using namespace adalab;

// --- AdaGrad-Norm -------------------------------------------------------------

TEST(AdaGradStep, ZeroGradientIsFixedPoint) {
  auto s = adagrad_init(Vector({2.0, -1.0}), 1.0, 3.0);
  const auto t = adagrad_step(s, Vector(2));
  EXPECT_EQ(t.theta[0], 2.0);
  EXPECT_EQ(t.theta[1], -1.0);
  EXPECT_EQ(t.S.value(), 3.0);
}

TEST(AdaGradStep, SingleSubstitution) {
  const auto t = adagrad_step(adagrad_init(Vector({2.0}), 1.0, 1.0), Vector({2.0}));
  EXPECT_EQ(t.S.value(), 5.0);
  EXPECT_DOUBLE_EQ(t.theta[0], 2.0 - 2.0 / std::sqrt(5.0));
  EXPECT_NEAR(t.theta[0], 1.10557, 1e-5);
  EXPECT_EQ(t.n, 1u);
}

TEST(AdaGradStep, TwoNoiselessStepsMatchReferenceRecurrence) {
  // theta' = theta - g / sqrt(S'), S' = S + g^2, g = theta (lambda = 1).
  double th = 2.0, S = 1.0;
  for (int k = 0; k < 2; ++k) {
    S += th * th;
    th -= th / std::sqrt(S);
  }
  const auto q = Objective::quadratic({1.0}, Vector(1));
  auto s = adagrad_init(Vector({2.0}), 1.0, 1.0);
  for (int k = 0; k < 2; ++k) s = adagrad_step(std::move(s), q.grad(s.theta));
  EXPECT_NEAR(s.theta[0], th, 1e-12);
  EXPECT_NEAR(s.S.value(), S, 1e-12);
}

TEST(AdaGradStep, NonFiniteGradientAborts) {
  auto s = adagrad_init(Vector({1.0}), 1.0, 1.0);
  EXPECT_THROW((void)adagrad_step(s, Vector({NAN})), TrajectoryAborted);
  try {
    (void)adagrad_step(s, Vector({INFINITY}));
  } catch (const TrajectoryAborted& e) {
    EXPECT_EQ(e.step(), 1u);
    EXPECT_NE(std::string(e.what()).find("S=1"), std::string::npos);
  }
}

TEST(AdaGradStep, InvalidInitIsUsageError) {
  EXPECT_THROW(adagrad_init(Vector({1.0}), 0.0, 1.0), UsageError);
  EXPECT_THROW(adagrad_init(Vector({1.0}), 1.0, 0.0), UsageError);
}

TEST(AdaGradProperties, StateInvariantsAlongRandomRuns) {
  gen::for_all(30, 61, [](gen::Gen& g) {
    const std::size_t d = g.integer(1, 8);
    const double alpha0 = g.log_uniform(0.01, 10.0);
    const double S0 = g.log_uniform(1e-3, 10.0);
    auto s = adagrad_init(g.vector(d, 5.0), alpha0, S0);
    CompensatedScalar reference(S0);
    for (int k = 0; k < 500; ++k) {
      const Vector G = g.coin() ? g.vector(d, g.log_uniform(1e-3, 1e3)) : Vector(d);
      const auto before = s;
      s = adagrad_step(std::move(s), G);
      reference.add(dot(G, G));
      EXPECT_GE(s.S.value(), before.S.value());
      if (norm(G) > 0) {
        EXPECT_GT(s.S.value(), before.S.value());
      }
      EXPECT_EQ(s.S.value(), reference.value());
      EXPECT_LE(distance(s.theta, before.theta), alpha0 * (1 + 1e-12));
    }
  });
}

TEST(AdaGradProperties, PureFunctionOfStateAndGradient) {
  gen::for_all(50, 62, [](gen::Gen& g) {
    const auto s = adagrad_init(g.vector(3, 2.0), 0.5, 2.0);
    const Vector G = g.vector(3, 1.0);
    const auto a = adagrad_step(s, G);
    const auto b = adagrad_step(s, G);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.theta[i], b.theta[i]);
    EXPECT_EQ(a.S.value(), b.S.value());
  });
}

TEST(EffectiveStepsize, AdaGradUsesCurrentS) {
  auto s = adagrad_init(Vector({0.0}), 1.0, 4.0);
  EXPECT_EQ(effective_stepsize(s), 0.5);
}

// --- RMSProp ------------------------------------------------------------------

TEST(RmsPropSchedule, SecondStepSpotValues) {
  EXPECT_EQ(rmsprop_beta(2, 0.9), 0.5);
  EXPECT_EQ(rmsprop_alpha(2), 1.0 / std::sqrt(2.0));
  EXPECT_EQ(rmsprop_beta(1, 0.9), 0.9);
  EXPECT_EQ(rmsprop_beta(10, 0.9), 0.9);
  EXPECT_THROW(rmsprop_beta(0, 0.9), UsageError);
  EXPECT_EQ(rmsprop_r1(0.9), std::min(0.9, 1.0 - 0.9));
}

TEST(RmsPropStep, ZeroGradientDecaysV) {
  auto s = rmsprop_init(Vector({1.0, 2.0}), 0.3, 1e-8, 0.9);
  for (std::uint64_t t = 1; t <= 5; ++t) {
    const double v_before = s.v[0];
    s = rmsprop_step(std::move(s), Vector(2));
    EXPECT_EQ(s.theta[0], 1.0);
    EXPECT_EQ(s.theta[1], 2.0);
    EXPECT_EQ(s.v[0], rmsprop_beta(t, 0.9) * v_before);
    EXPECT_GT(s.v[0], 0.0);
  }
}

TEST(RmsPropStep, FirstStepSubstitution) {
  auto s = rmsprop_init(Vector({1.0}), 1.0, 1e-8, 0.5);
  s = rmsprop_step(std::move(s), Vector({3.0}));
  EXPECT_EQ(s.v[0], 5.0);
  EXPECT_DOUBLE_EQ(s.theta[0], 1.0 - 3.0 / (std::sqrt(5.0) + 1e-8));
}

TEST(RmsPropStep, EffectiveStepsizeSubstitution) {
  RmsPropState s = rmsprop_init(Vector({0.0}), 0.81, 0.1, 0.9);
  s.t = 4;
  EXPECT_DOUBLE_EQ(effective_stepsize(s)[0], 0.5);
}

TEST(RmsPropStep, NonFiniteGradientAborts) {
  auto s = rmsprop_init(Vector({1.0}), 1e-6, 1e-8, 0.9);
  EXPECT_THROW((void)rmsprop_step(s, Vector({NAN})), TrajectoryAborted);
}

TEST(RmsPropStep, InvalidInitIsUsageError) {
  EXPECT_THROW(rmsprop_init(Vector({1.0}), 0.0, 1e-8, 0.9), UsageError);
  EXPECT_THROW(rmsprop_init(Vector({1.0}), 1e-6, 0.0, 0.9), UsageError);
  EXPECT_THROW(rmsprop_init(Vector({1.0}), 1e-6, 1e-8, 1.0), UsageError);
}

// Properties 1 and 2 and the t v monotonicity on random runs, checked
// against an independently kept running sum S_{t,i}.
TEST(RmsPropProperties, StepsizeAndMomentInvariants) {
  const auto obj = Objective::quadratic({1.0, 3.0, 10.0}, Vector(3));
  for (auto oracle : {Oracle::additive_gaussian(1.0, 3),
                      Oracle::multiplicative(0.5, MultiplierDistribution::Rademacher)}) {
    gen::for_all(10, 63, [&](gen::Gen& g) {
      const double beta1 = g.uniform(0.05, 0.95);
      auto s = rmsprop_init(g.vector(3, 3.0), 1e-6, 1e-8, beta1);
      const double r1 = rmsprop_r1(beta1);
      std::vector<CompensatedScalar> S(3, CompensatedScalar(1e-6));
      for (std::uint64_t t = 1; t <= 10'000; ++t) {
        const Vector G = sample(oracle, obj, s.theta, g.rng());
        const Vector eta_before = effective_stepsize(s);
        const Vector v_before = s.v;
        s = rmsprop_step(std::move(s), G);
        const Vector eta = effective_stepsize(s);
        for (std::size_t i = 0; i < 3; ++i) {
          S[i].add(G[i] * G[i]);
          const double td = static_cast<double>(t);
          ASSERT_GT(s.v[i], 0.0);
          ASSERT_GE(td * s.v[i], r1 * S[i].value() * (1 - 1e-9)) << "t=" << t;
          if (t >= 2) {
            ASSERT_LE(eta[i], eta_before[i] * (1 + 1e-9)) << "t=" << t;
            ASSERT_GE(td * s.v[i], (td - 1) * v_before[i] * (1 - 1e-9)) << "t=" << t;
          }
        }
      }
    });
  }
}

// --- SGD ----------------------------------------------------------------------

TEST(SgdStep, RobbinsMonroSchedule) {
  RobbinsMonro rm{1.0, 0.0};
  EXPECT_EQ(rm(4), 0.25);
  SgdState s = sgd_init(Vector({1.0}), rm);
  s.n = 3;
  EXPECT_EQ(effective_stepsize(s), 0.25);
}

TEST(SgdStep, ZeroGradientLeavesThetaUnchanged) {
  const auto s = sgd_step(sgd_init(Vector({1.5, -2.0}), {1.0, 0.0}), Vector(2));
  EXPECT_EQ(s.theta[0], 1.5);
  EXPECT_EQ(s.theta[1], -2.0);
}

TEST(SgdStep, ThreeNoiselessStepsMatchHandRecurrence) {
  // lambda = 2: theta <- theta - (1/(n+1)) 2 theta
  double th = 3.0;
  for (int n = 1; n <= 3; ++n) th -= 1.0 / (n + 1.0) * 2.0 * th;
  const auto q = Objective::quadratic({2.0}, Vector(1));
  auto s = sgd_init(Vector({3.0}), {1.0, 1.0});
  for (int k = 0; k < 3; ++k) s = sgd_step(std::move(s), q.grad(s.theta));
  EXPECT_NEAR(s.theta[0], th, 1e-12);
}

TEST(SgdStep, InvalidScheduleIsUsageError) {
  EXPECT_THROW(sgd_init(Vector({1.0}), {0.0, 0.0}), UsageError);
  EXPECT_THROW(sgd_init(Vector({1.0}), {1.0, -1.0}), UsageError);
}
