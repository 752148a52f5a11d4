#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "adalab/experiment.hpp"
#include "adalab/objectives.hpp"
#include "adalab/oracles.hpp"
#include "adalab/rng.hpp"
#include "adalab/vector.hpp"

namespace adalab {

// Certification draws from its own seed so that its verdict depends only on
// the (objective, oracle) pair, not on the trajectory seed.
inline constexpr std::uint64_t kCertificationSeed = 0x0A11CE5;

struct CheckItem {
  std::string name;
  bool pass = false;
  Json detail;
};

struct Certification {
  std::vector<CheckItem> items;

  bool pass() const {
    return std::all_of(items.begin(), items.end(), [](const CheckItem& c) { return c.pass; });
  }

  Json to_json() const {
    Json j;
    j["pass"] = pass();
    Json checks = Json::array();
    for (const auto& c : items) checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    j["checks"] = checks;
    return j;
  }
};

struct CheckSettings {
  std::size_t fd_points = 20;
  double fd_step = 1e-5;
  double fd_tolerance = 1e-6;
  std::size_t smoothness_pairs = 10'000;
  double sample_radius = 10.0;
  std::size_t gradient_bound_samples = 1000;
  std::size_t descent_pairs = 1000;
  std::size_t probes = 10;
  std::size_t probe_draws = 10'000;
  double probe_s_min = 0.1;
  double probe_s_max = 10.0;
  double affine_relative_tolerance = 0.10;
  std::size_t near_critical_draws = 10'000;
  std::size_t unbiased_points = 5;
  std::size_t unbiased_draws = 100'000;
  double unbiased_z = 4.0;
};

/// Central differences: |fd - grad| <= tol * max(|grad|, 1) at random points.
inline CheckItem check_gradient_fd(const Objective& obj, RngStream& rng, const CheckSettings& s) {
  double worst = 0.0;
  for (std::size_t k = 0; k < s.fd_points; ++k) {
    Vector x = sample_in_ball(obj.reference_point(), s.sample_radius / 2.0, rng);
    const Vector g = obj.grad(x);
    Vector fd(x.dim());
    for (std::size_t i = 0; i < x.dim(); ++i) {
      Vector xp = x;
      Vector xm = x;
      xp[i] += s.fd_step;
      xm[i] -= s.fd_step;
      fd[i] = (obj.eval(xp) - obj.eval(xm)) / (2.0 * s.fd_step);
    }
    worst = std::max(worst, distance(fd, g) / std::max(norm(g), 1.0));
  }
  return {"gradient_finite_difference", worst <= s.fd_tolerance,
          {{"max_relative_error", worst}, {"tolerance", s.fd_tolerance}, {"points", s.fd_points}}};
}

inline CheckItem check_smoothness(const Objective& obj, RngStream& rng, const CheckSettings& s) {
  const SmoothnessCertificate c = certify_smoothness(obj, rng, s.smoothness_pairs, s.sample_radius);
  return {"smoothness", c.pass,
          {{"L_hat", c.L_hat}, {"declared_L", c.declared_L}, {"pairs", s.smoothness_pairs}}};
}

/// |grad g|^2 <= 2 L (g - g*) + 1e-9, which every L-smooth function with
/// global minimum g* satisfies.
inline CheckItem check_gradient_bound(const Objective& obj, RngStream& rng, const CheckSettings& s) {
  const double L = obj.declared_L();
  const double gstar = obj.declared_gstar();
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  for (std::size_t k = 0; k < s.gradient_bound_samples; ++k) {
    const Vector x = sample_in_ball(obj.reference_point(), s.sample_radius, rng);
    const Vector g = obj.grad(x);
    const double excess = dot(g, g) - 2.0 * L * (obj.eval(x) - gstar);
    worst = std::max(worst, excess);
    if (excess > 1e-9) ++violations;
  }
  return {"gradient_bound", violations == 0,
          {{"max_excess", worst}, {"violations", violations}, {"samples", s.gradient_bound_samples}}};
}

inline CheckItem check_descent_lemma(const Objective& obj, RngStream& rng, const CheckSettings& s) {
  const double L = obj.declared_L();
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
  for (std::size_t k = 0; k < s.descent_pairs; ++k) {
    const Vector x = sample_in_ball(obj.reference_point(), s.sample_radius, rng);
    const Vector y = sample_in_ball(obj.reference_point(), s.sample_radius, rng);
    const double gx = obj.eval(x);
    const Vector dx = y - x;
    const double bound = gx + dot(obj.grad(x), dx) + 0.5 * L * dot(dx, dx);
    const double excess = obj.eval(y) - bound;
    worst = std::max(worst, excess);
    if (excess > 1e-9 * (1.0 + std::abs(gx))) ++violations;
  }
  return {"descent_lemma", violations == 0,
          {{"max_excess", worst}, {"violations", violations}, {"pairs", s.descent_pairs}}};
}

/// Fitted constants must lie within the relative tolerance of the declared
/// ones. The intercept is compared on the scale max(sigma1, sigma0 x_min),
/// x_min the smallest probe |grad g|^2, so that a declared sigma1 = 0 is
/// matched by any intercept that is small next to the probed signal.
inline bool affine_within(const AffineFit& fit, AffineConstants declared, double rel, Json& detail) {
  const double x_min = *std::min_element(fit.probe_grad_sq.begin(), fit.probe_grad_sq.end());
  const double tol0 = rel * declared.sigma0;
  const double tol1 = rel * std::max(declared.sigma1, declared.sigma0 * x_min);
  const bool ok0 = std::abs(fit.sigma0_hat - declared.sigma0) <= tol0;
  const bool ok1 = std::abs(fit.sigma1_hat - declared.sigma1) <= tol1;
  detail["sigma0_hat"] = fit.sigma0_hat;
  detail["sigma1_hat"] = fit.sigma1_hat;
  detail["declared_sigma0"] = declared.sigma0;
  detail["declared_sigma1"] = declared.sigma1;
  detail["sigma0_tolerance"] = tol0;
  detail["sigma1_tolerance"] = tol1;
  detail["bound_holds"] = fit.pass;
  detail["max_violation_in_se"] = finite_or_null(fit.max_violation_in_se);
  return ok0 && ok1 && fit.pass;
}

inline CheckItem check_affine(const Problem& p, RngStream& rng, const CheckSettings& s,
                              bool coordinatewise) {
  const auto probes = radial_probes(p.objective.reference_point(), s.probes, s.probe_s_min,
                                    s.probe_s_max, rng);
  const AffineFit fit = coordinatewise
                            ? empirical_coordinate_affine_fit(p.oracle, p.objective, probes, s.probe_draws, rng)
                            : empirical_affine_fit(p.oracle, p.objective, probes, s.probe_draws, rng);
  const AffineConstants declared = coordinatewise ? p.oracle.declared_coordinate_constants()
                                                  : p.oracle.declared_norm_constants();
  Json detail;
  const bool ok = affine_within(fit, declared, s.affine_relative_tolerance, detail);
  detail["probes"] = s.probes;
  detail["draws"] = s.probe_draws;
  return {coordinatewise ? "coordinate_affine_variance" : "affine_variance", ok, detail};
}

inline CheckItem check_near_critical(const Problem& p, RngStream& rng, const CheckSettings& s) {
  try {
    const NearCriticalReport r =
        near_critical_check(p.oracle, p.objective, p.config.D0, s.near_critical_draws, rng);
    Json detail = {{"D0", p.config.D0},
                   {"D1_hat", r.D1_hat},
                   {"declared_bounded", r.declared_bounded},
                   {"points", r.points},
                   {"message", r.message}};
    detail["analytic_D1"] = r.analytic_D1 ? Json(*r.analytic_D1) : Json(nullptr);
    return {"near_critical_noise", r.pass, detail};
  } catch (const SearchFailure& e) {
    return {"near_critical_noise", false, {{"error", e.what()}}};
  }
}

/// Per-coordinate |mean G - grad g| within z standard errors at a few points.
inline CheckItem check_unbiased(const Problem& p, RngStream& rng, const CheckSettings& s) {
  double worst = 0.0;
  for (std::size_t k = 0; k < s.unbiased_points; ++k) {
    const Vector x = sample_in_ball(p.objective.reference_point(), s.sample_radius / 2.0, rng);
    const ConditionalEstimate est = estimate_conditional(p.oracle, p.objective, x, s.unbiased_draws, rng);
    const Vector g = p.objective.grad(x);
    for (std::size_t i = 0; i < g.dim(); ++i) {
      const double diff = std::abs(est.mean_G[i] - g[i]);
      const double floor = 1e-12 * (1.0 + std::abs(g[i]));
      const double z = est.se_G[i] > 0.0 ? diff / est.se_G[i] : (diff > floor ? INFINITY : 0.0);
      worst = std::max(worst, z);
    }
  }
  return {"unbiased", worst <= s.unbiased_z,
          {{"max_z", finite_or_null(worst)},
           {"z_limit", s.unbiased_z},
           {"points", s.unbiased_points},
           {"draws", s.unbiased_draws}}};
}

/// Empirical certification of the declared assumptions of one experiment.
inline Certification certify(const Problem& p, const CheckSettings& s = {}) {
  Certification c;
  std::uint64_t stream = 0;
  const auto next = [&] { return RngStream(kCertificationSeed, stream++); };
  {
    auto rng = next();
    c.items.push_back(check_gradient_fd(p.objective, rng, s));
  }
  {
    auto rng = next();
    c.items.push_back(check_smoothness(p.objective, rng, s));
  }
  {
    auto rng = next();
    c.items.push_back(check_gradient_bound(p.objective, rng, s));
  }
  {
    auto rng = next();
    c.items.push_back(check_descent_lemma(p.objective, rng, s));
  }
  {
    auto rng = next();
    c.items.push_back(check_affine(p, rng, s, false));
  }
  {
    // Only RMSProp consumes the coordinate-level constants.
    auto rng = next();
    if (std::holds_alternative<RmsPropConfig>(p.config.optimizer)) {
      c.items.push_back(check_affine(p, rng, s, true));
    }
  }
  {
    auto rng = next();
    c.items.push_back(check_near_critical(p, rng, s));
  }
  {
    auto rng = next();
    c.items.push_back(check_unbiased(p, rng, s));
  }
  return c;
}

}  // namespace adalab
