#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "adalab/compensated.hpp"
#include "adalab/errors.hpp"
#include "adalab/vector.hpp"

namespace adalab {

// All steppers take the state by value and return the successor, so
// `s = adagrad_step(std::move(s), g)` reuses the buffers. They are pure:
// the output depends only on (state, G).

namespace detail {

template <class Describe>
void require_finite_gradient(const Vector& theta, const Vector& g, std::uint64_t step,
                             Describe&& describe_extra) {
  require_same_dim(theta, g, "optimizer step");
  if (!all_finite(g)) {
    throw TrajectoryAborted(step,
                            "theta=" + to_string(theta) + " G=" + to_string(g) + describe_extra());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// AdaGrad-Norm
// ---------------------------------------------------------------------------

struct AdaGradNormState {
  Vector theta;
  CompensatedScalar S;  // S_n; S_0 before the first step
  std::uint64_t n = 0;  // completed steps
  double alpha0 = 1.0;
  double S0 = 1.0;
};

inline AdaGradNormState adagrad_init(Vector theta, double alpha0, double S0) {
  if (!(alpha0 > 0.0)) throw UsageError("adagrad_norm: alpha0 must be positive");
  if (!(S0 > 0.0)) throw UsageError("adagrad_norm: S0 must be positive");
  if (!all_finite(theta)) throw UsageError("adagrad_norm: non-finite initial point");
  return {std::move(theta), CompensatedScalar(S0), 0, alpha0, S0};
}

/// S_n = S_{n-1} + |G|^2, then theta -= alpha0 G / sqrt(S_n). The current
/// gradient enters the divisor before it is used.
[[nodiscard]] inline AdaGradNormState adagrad_step(AdaGradNormState s, const Vector& g) {
  detail::require_finite_gradient(s.theta, g, s.n + 1,
                                  [&] { return " S=" + format_double(s.S.value()); });
  s.S.add(dot(g, g));
  const double eta = s.alpha0 / std::sqrt(s.S.value());
  axpy(-eta, g, s.theta);
  ++s.n;
  return s;
}

/// alpha0 / sqrt(S_n): an upper bound on the multiplier the next draw gets.
inline double effective_stepsize(const AdaGradNormState& s) {
  return s.alpha0 / std::sqrt(s.S.value());
}

// ---------------------------------------------------------------------------
// RMSProp with alpha_t = 1/sqrt(t), beta_1 given, beta_t = 1 - 1/t (t >= 2)
// ---------------------------------------------------------------------------

struct RmsPropState {
  Vector theta;
  Vector v;             // v_t, initialised to v_init in every coordinate
  std::uint64_t t = 0;  // completed steps; the next step produces index t+1
  double v_init = 1e-6;
  double eps = 1e-8;
  double beta1 = 0.9;
};

inline RmsPropState rmsprop_init(Vector theta, double v_init, double eps, double beta1) {
  if (!(v_init > 0.0)) throw UsageError("rmsprop: v_init must be positive");
  if (!(eps > 0.0)) throw UsageError("rmsprop: eps must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw UsageError("rmsprop: beta1 must lie in (0, 1)");
  if (!all_finite(theta)) throw UsageError("rmsprop: non-finite initial point");
  Vector v(theta.dim(), v_init);
  return {std::move(theta), std::move(v), 0, v_init, eps, beta1};
}

inline double rmsprop_beta(std::uint64_t t, double beta1) {
  if (t == 0) throw UsageError("rmsprop_beta: step index starts at 1");
  return t == 1 ? beta1 : 1.0 - 1.0 / static_cast<double>(t);
}

inline double rmsprop_alpha(std::uint64_t t) {
  if (t == 0) throw UsageError("rmsprop_alpha: step index starts at 1");
  return 1.0 / std::sqrt(static_cast<double>(t));
}

/// r1 = min(beta1, 1 - beta1); t v_t >= r1 (v + sum_k G_k^2) per coordinate.
inline double rmsprop_r1(double beta1) { return std::min(beta1, 1.0 - beta1); }

[[nodiscard]] inline RmsPropState rmsprop_step(RmsPropState s, const Vector& g) {
  const std::uint64_t t = s.t + 1;
  detail::require_finite_gradient(s.theta, g, t, [&] { return " v=" + to_string(s.v); });
  const double beta = rmsprop_beta(t, s.beta1);
  const double alpha = rmsprop_alpha(t);
  for (std::size_t i = 0; i < g.dim(); ++i) {
    s.v[i] = beta * s.v[i] + (1.0 - beta) * g[i] * g[i];
    s.theta[i] -= alpha * g[i] / (std::sqrt(s.v[i]) + s.eps);
  }
  s.t = t;
  return s;
}

/// eta_{t,i} = alpha_t / (sqrt(v_{t,i}) + eps) for the current t; at t = 0
/// the global rate is taken as 1.
inline Vector effective_stepsize(const RmsPropState& s) {
  const double alpha = s.t == 0 ? 1.0 : rmsprop_alpha(s.t);
  Vector eta(s.v.dim());
  for (std::size_t i = 0; i < eta.dim(); ++i) eta[i] = alpha / (std::sqrt(s.v[i]) + s.eps);
  return eta;
}

// ---------------------------------------------------------------------------
// SGD baseline with a Robbins-Monro schedule
// ---------------------------------------------------------------------------

/// alpha_n = c / (n + offset), n = 1, 2, ...
struct RobbinsMonro {
  double c = 1.0;
  double offset = 0.0;

  double operator()(std::uint64_t n) const {
    const double denom = static_cast<double>(n) + offset;
    if (!(denom > 0.0)) throw UsageError("RobbinsMonro: n + offset must be positive");
    return c / denom;
  }
};

struct SgdState {
  Vector theta;
  std::uint64_t n = 0;
  RobbinsMonro schedule;
};

inline SgdState sgd_init(Vector theta, RobbinsMonro schedule) {
  if (!(schedule.c > 0.0)) throw UsageError("sgd: c must be positive");
  if (!(schedule.offset > -1.0)) throw UsageError("sgd: offset must exceed -1");
  if (!all_finite(theta)) throw UsageError("sgd: non-finite initial point");
  return {std::move(theta), 0, schedule};
}

[[nodiscard]] inline SgdState sgd_step(SgdState s, const Vector& g) {
  detail::require_finite_gradient(s.theta, g, s.n + 1, [] { return std::string(); });
  axpy(-s.schedule(s.n + 1), g, s.theta);
  ++s.n;
  return s;
}

/// Step size the next draw will get.
inline double effective_stepsize(const SgdState& s) { return s.schedule(s.n + 1); }

}  // namespace adalab
