#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "adalab/compensated.hpp"
#include "adalab/errors.hpp"
#include "adalab/objectives.hpp"
#include "adalab/rng.hpp"
#include "adalab/vector.hpp"

namespace adalab {

enum class OracleKind { AdditiveGaussian, Multiplicative, MiniBatch };
enum class MultiplierDistribution { Rademacher, Gaussian };

inline std::string_view to_string(OracleKind kind) {
  switch (kind) {
    case OracleKind::AdditiveGaussian: return "additive_gaussian";
    case OracleKind::Multiplicative: return "multiplicative";
    case OracleKind::MiniBatch: return "mini_batch";
  }
  return "unknown";
}

inline std::string_view to_string(MultiplierDistribution d) {
  return d == MultiplierDistribution::Rademacher ? "rademacher" : "gaussian";
}

/// G = grad g + sigma z, z ~ N(0, I_d).
struct AdditiveGaussianParams {
  double sigma = 1.0;
  std::size_t dim = 1;  // sigma1 = sigma^2 dim is declared for this dimension
};

/// G = (1 + gamma u) grad g with E u = 0, E u^2 = 1.
struct MultiplicativeParams {
  double gamma = 0.5;
  MultiplierDistribution distribution = MultiplierDistribution::Rademacher;
};

/// Average of summand gradients over a uniformly drawn batch.
struct MiniBatchParams {
  std::size_t batch_size = 1;
  bool replacement = false;
};

/// Affine variance constants E[G_i^2] <= s0 (d_i g)^2 + s1, per coordinate.
struct AffineConstants {
  double sigma0 = 0.0;
  double sigma1 = 0.0;
};

/// Stochastic first-order oracle with its declared noise constants.
class Oracle {
 public:
  static Oracle additive_gaussian(double sigma, std::size_t dim) {
    if (!(sigma > 0.0)) throw UsageError("additive_gaussian: sigma must be positive");
    if (dim == 0) throw UsageError("additive_gaussian: dimension must be >= 1");
    Oracle o(OracleKind::AdditiveGaussian, AdditiveGaussianParams{sigma, dim});
    o.norm_ = {1.0, sigma * sigma * static_cast<double>(dim)};
    o.coord_ = {1.0, sigma * sigma};
    o.near_critical_bounded_ = false;
    o.coordinatewise_affine_ = true;
    return o;
  }

  static Oracle multiplicative(double gamma, MultiplierDistribution dist) {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
      throw UsageError("multiplicative: gamma must be >= 0");
    }
    Oracle o(OracleKind::Multiplicative, MultiplicativeParams{gamma, dist});
    o.norm_ = {1.0 + gamma * gamma, 0.0};
    o.coord_ = o.norm_;
    o.near_critical_bounded_ = dist == MultiplierDistribution::Rademacher || gamma == 0.0;
    o.coordinatewise_affine_ = true;
    return o;
  }

  /// Mini-batch constants have no clean closed form; callers supply fitted
  /// values (see fit_mini_batch_constants).
  static Oracle mini_batch(std::size_t batch_size, bool replacement, AffineConstants norm_level,
                           AffineConstants coordinate_level) {
    if (batch_size == 0) throw UsageError("mini_batch: batch_size must be >= 1");
    Oracle o(OracleKind::MiniBatch, MiniBatchParams{batch_size, replacement});
    o.norm_ = norm_level;
    o.coord_ = coordinate_level;
    o.near_critical_bounded_ = true;
    o.coordinatewise_affine_ = true;
    return o;
  }

  OracleKind kind() const noexcept { return kind_; }
  double declared_sigma0() const noexcept { return norm_.sigma0; }
  double declared_sigma1() const noexcept { return norm_.sigma1; }
  AffineConstants declared_norm_constants() const noexcept { return norm_; }
  AffineConstants declared_coordinate_constants() const noexcept { return coord_; }
  bool near_critical_bounded() const noexcept { return near_critical_bounded_; }
  bool coordinatewise_affine() const noexcept { return coordinatewise_affine_; }

  template <class T>
  const T* params_if() const noexcept {
    return std::get_if<T>(&params_);
  }

  /// Worst-case |G|^2 when |grad g|^2 < d0, if the oracle admits a closed form.
  std::optional<double> analytic_near_critical_bound(double d0) const {
    if (const auto* m = params_if<MultiplicativeParams>()) {
      if (m->gamma == 0.0) return d0;
      if (m->distribution == MultiplierDistribution::Rademacher) {
        return (1.0 + m->gamma) * (1.0 + m->gamma) * d0;
      }
    }
    return std::nullopt;
  }

  void check_compatible(const Objective& obj) const {
    if (const auto* ag = params_if<AdditiveGaussianParams>(); ag && ag->dim != obj.dim()) {
      throw UsageError("additive_gaussian: oracle declared for dimension " + std::to_string(ag->dim) +
                       ", objective has " + std::to_string(obj.dim()));
    }
    if (const auto* mb = params_if<MiniBatchParams>()) {
      if (!obj.is_finite_sum()) {
        throw UsageError("mini_batch oracle requires a finite-sum objective, got " +
                         std::string(to_string(obj.kind())));
      }
      if (!mb->replacement && mb->batch_size > obj.sample_count()) {
        throw UsageError("mini_batch: batch_size exceeds sample count without replacement");
      }
    }
  }

  /// One draw given the exact gradient at x. The additive and multiplicative
  /// oracles only need `true_grad`; the mini-batch oracle ignores it.
  void sample_into(const Objective& obj, const Vector& x, const Vector& true_grad, RngStream& rng,
                   Vector& out) const {
    if (out.dim() != x.dim()) out = Vector(x.dim());
    std::visit([&](const auto& p) { sample_impl(p, obj, x, true_grad, rng, out); }, params_);
  }

 private:
  using Params = std::variant<AdditiveGaussianParams, MultiplicativeParams, MiniBatchParams>;

  Oracle(OracleKind kind, Params params) : kind_(kind), params_(params) {}

  static void sample_impl(const AdditiveGaussianParams& p, const Objective&, const Vector&,
                          const Vector& g, RngStream& rng, Vector& out) {
    for (std::size_t i = 0; i < g.dim(); ++i) out[i] = g[i] + p.sigma * rng.normal();
  }

  static void sample_impl(const MultiplicativeParams& p, const Objective&, const Vector&,
                          const Vector& g, RngStream& rng, Vector& out) {
    const double u =
        p.distribution == MultiplierDistribution::Rademacher ? rng.rademacher() : rng.normal();
    const double factor = 1.0 + p.gamma * u;
    for (std::size_t i = 0; i < g.dim(); ++i) out[i] = factor * g[i];
  }

  static void sample_impl(const MiniBatchParams& p, const Objective& obj, const Vector& x,
                          const Vector&, RngStream& rng, Vector& out) {
    const std::size_t n = obj.sample_count();
    for (double& v : out) v = 0.0;
    const double w = 1.0 / static_cast<double>(p.batch_size);
    if (p.replacement) {
      for (std::size_t k = 0; k < p.batch_size; ++k) {
        obj.add_sample_grad(static_cast<std::size_t>(rng.uniform_index(n)), x, w, out);
      }
      return;
    }
    if (p.batch_size == n) {
      for (std::size_t j = 0; j < n; ++j) obj.add_sample_grad(j, x, w, out);
      return;
    }
    std::vector<std::size_t> chosen;
    chosen.reserve(p.batch_size);
    if (4 * p.batch_size <= n) {
      // Small batch: redraw on collision.
      while (chosen.size() < p.batch_size) {
        const auto r = static_cast<std::size_t>(rng.uniform_index(n));
        if (std::find(chosen.begin(), chosen.end(), r) == chosen.end()) chosen.push_back(r);
      }
    } else {
      // Partial Fisher-Yates over the index set.
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (std::size_t k = 0; k < p.batch_size; ++k) {
        const auto r = k + static_cast<std::size_t>(rng.uniform_index(n - k));
        std::swap(idx[k], idx[r]);
        chosen.push_back(idx[k]);
      }
    }
    for (std::size_t j : chosen) obj.add_sample_grad(j, x, w, out);
  }

  OracleKind kind_;
  Params params_;
  AffineConstants norm_;
  AffineConstants coord_;
  bool near_critical_bounded_ = false;
  bool coordinatewise_affine_ = false;
};

/// One stochastic gradient at x.
inline Vector sample(const Oracle& oracle, const Objective& obj, const Vector& x, RngStream& rng) {
  oracle.check_compatible(obj);
  const Vector g = obj.grad(x);
  Vector out(x.dim());
  oracle.sample_into(obj, x, g, rng, out);
  return out;
}

struct AffineFit {
  double sigma0_hat = 0.0;
  double sigma1_hat = 0.0;
  /// max over probes of (mean |G|^2 - declared bound) / declared bound
  double max_violation = 0.0;
  /// max over probes of (mean |G|^2 - declared bound) / standard error
  double max_violation_in_se = 0.0;
  bool pass = false;
  std::vector<double> probe_grad_sq;
  std::vector<double> probe_mean;
  std::vector<double> probe_se;
};

namespace detail {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Weighted least squares of y on x. Falls back to equal weights when any
/// weight is unavailable (a zero standard error).
inline LineFit weighted_line_fit(std::span<const double> x, std::span<const double> y,
                                 std::span<const double> se) {
  bool use_weights = true;
  for (double s : se) {
    if (!(s > 0.0)) use_weights = false;
  }
  NeumaierSum<double> sw, sx, sy;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double w = use_weights ? 1.0 / (se[k] * se[k]) : 1.0;
    sw += w;
    sx += w * x[k];
    sy += w * y[k];
  }
  const double mx = sx.value() / sw.value();
  const double my = sy.value() / sw.value();
  NeumaierSum<double> sxx, sxy;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double w = use_weights ? 1.0 / (se[k] * se[k]) : 1.0;
    sxx += w * (x[k] - mx) * (x[k] - mx);
    sxy += w * (x[k] - mx) * (y[k] - my);
  }
  if (!(sxx.value() > 0.0)) throw DegenerateDesignError("affine fit: all probes share |grad g|^2");
  const double slope = sxy.value() / sxx.value();
  return {slope, my - slope * mx};
}

inline AffineFit finish_affine_fit(std::vector<double> xs, std::vector<double> means,
                                   std::vector<double> ses, AffineConstants declared) {
  const LineFit line = weighted_line_fit(xs, means, ses);
  AffineFit fit;
  fit.sigma0_hat = line.slope;
  fit.sigma1_hat = line.intercept;
  fit.max_violation = -std::numeric_limits<double>::infinity();
  fit.max_violation_in_se = -std::numeric_limits<double>::infinity();
  fit.pass = true;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double bound = declared.sigma0 * xs[k] + declared.sigma1;
    const double excess = means[k] - bound;
    if (bound > 0.0) fit.max_violation = std::max(fit.max_violation, excess / bound);
    if (ses[k] > 0.0) fit.max_violation_in_se = std::max(fit.max_violation_in_se, excess / ses[k]);
    const double slack = 3.0 * ses[k] + 1e-12 * std::max(1.0, bound);
    if (excess > slack) fit.pass = false;
  }
  fit.probe_grad_sq = std::move(xs);
  fit.probe_mean = std::move(means);
  fit.probe_se = std::move(ses);
  return fit;
}

inline void check_probe_design(std::span<const Vector> probes, std::size_t draws) {
  if (probes.size() < 8) throw UsageError("affine fit: need at least 8 probe points");
  if (draws < 1000) throw UsageError("affine fit: need at least 1000 draws per probe");
}

}  // namespace detail

/// Fits mean |G|^2 = s0 |grad g|^2 + s1 across probe points and certifies the
/// declared bound: every probe mean must stay within 3 Monte Carlo standard
/// errors of sigma0 |grad g|^2 + sigma1.
inline AffineFit empirical_affine_fit(const Oracle& oracle, const Objective& obj,
                                      std::span<const Vector> probes, std::size_t draws,
                                      RngStream& rng) {
  detail::check_probe_design(probes, draws);
  oracle.check_compatible(obj);
  std::vector<double> xs, means, ses;
  Vector g(obj.dim());
  Vector draw(obj.dim());
  for (const Vector& p : probes) {
    obj.grad_into(p, g);
    NeumaierSum<double> s1, s2;
    for (std::size_t k = 0; k < draws; ++k) {
      oracle.sample_into(obj, p, g, rng, draw);
      const double q = dot(draw, draw);
      s1 += q;
      s2 += q * q;
    }
    const double n = static_cast<double>(draws);
    const double mean = s1.value() / n;
    const double var = std::max(0.0, (s2.value() - n * mean * mean) / (n - 1.0));
    xs.push_back(dot(g, g));
    means.push_back(mean);
    ses.push_back(std::sqrt(var / n));
  }
  return detail::finish_affine_fit(std::move(xs), std::move(means), std::move(ses),
                                   oracle.declared_norm_constants());
}

/// Coordinate-wise version: pools (d_i g(p)^2, mean G_i^2) over every probe
/// and coordinate and checks against the declared per-coordinate constants.
inline AffineFit empirical_coordinate_affine_fit(const Oracle& oracle, const Objective& obj,
                                                 std::span<const Vector> probes, std::size_t draws,
                                                 RngStream& rng) {
  detail::check_probe_design(probes, draws);
  oracle.check_compatible(obj);
  const std::size_t d = obj.dim();
  std::vector<double> xs, means, ses;
  Vector g(d);
  Vector draw(d);
  for (const Vector& p : probes) {
    obj.grad_into(p, g);
    std::vector<NeumaierSum<double>> s1(d), s2(d);
    for (std::size_t k = 0; k < draws; ++k) {
      oracle.sample_into(obj, p, g, rng, draw);
      for (std::size_t i = 0; i < d; ++i) {
        const double q = draw[i] * draw[i];
        s1[i] += q;
        s2[i] += q * q;
      }
    }
    const double n = static_cast<double>(draws);
    for (std::size_t i = 0; i < d; ++i) {
      const double mean = s1[i].value() / n;
      const double var = std::max(0.0, (s2[i].value() - n * mean * mean) / (n - 1.0));
      xs.push_back(g[i] * g[i]);
      means.push_back(mean);
      ses.push_back(std::sqrt(var / n));
    }
  }
  return detail::finish_affine_fit(std::move(xs), std::move(means), std::move(ses),
                                   oracle.declared_coordinate_constants());
}

/// Probe points x_k = center + s_k u along one random unit direction u, with
/// s_k log-spaced on [s_min, s_max].
inline std::vector<Vector> radial_probes(const Vector& center, std::size_t count, double s_min,
                                         double s_max, RngStream& rng) {
  if (count < 2) throw UsageError("radial_probes: need at least two probes");
  Vector dir = standard_normal(rng, center.dim());
  const double n = std::sqrt(dot(dir, dir));
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(count - 1);
    const double s = s_min * std::pow(s_max / s_min, t);
    Vector p = center;
    axpy(s / n, dir, p);
    out.push_back(std::move(p));
  }
  return out;
}

struct NearCriticalReport {
  double D1_hat = 0.0;
  bool pass = false;
  bool declared_bounded = false;
  std::optional<double> analytic_D1;
  std::size_t points = 0;
  std::string message;
};

/// Looks for points with |grad g|^2 < d0 by deterministic gradient descent
/// (step 1/L) from random starts, then records the largest |G|^2 drawn there.
/// A bounded oracle with a closed-form D1 must stay below it; an unbounded
/// oracle is reported, never failed.
inline NearCriticalReport near_critical_check(const Oracle& oracle, const Objective& obj, double d0,
                                              std::size_t draws, RngStream& rng,
                                              std::size_t starts = 4,
                                              std::size_t max_iterations = 1'000'000) {
  if (!(d0 > 0.0)) throw UsageError("near_critical_check: D0 must be positive");
  if (draws == 0) throw UsageError("near_critical_check: draws must be >= 1");
  oracle.check_compatible(obj);
  const std::size_t d = obj.dim();
  const double step = 1.0 / obj.declared_L();
  std::vector<Vector> points;
  Vector g(d);
  for (std::size_t s = 0; s < starts; ++s) {
    Vector x = obj.reference_point();
    Vector jitter = standard_normal(rng, d);
    axpy(3.0, jitter, x);
    bool found = false;
    for (std::size_t it = 0; it < max_iterations; ++it) {
      obj.grad_into(x, g);
      if (dot(g, g) < d0) {
        found = true;
        break;
      }
      axpy(-step, g, x);
    }
    if (found) points.push_back(std::move(x));
  }
  if (points.empty()) {
    throw SearchFailure("near_critical_check: no point with |grad g|^2 < D0 within budget");
  }

  NearCriticalReport report;
  report.points = points.size();
  report.declared_bounded = oracle.near_critical_bounded();
  report.analytic_D1 = oracle.analytic_near_critical_bound(d0);
  const std::size_t per_point = std::max<std::size_t>(1, draws / points.size());
  Vector draw(d);
  for (const Vector& p : points) {
    obj.grad_into(p, g);
    for (std::size_t k = 0; k < per_point; ++k) {
      oracle.sample_into(obj, p, g, rng, draw);
      report.D1_hat = std::max(report.D1_hat, dot(draw, draw));
    }
  }
  if (!report.declared_bounded) {
    report.pass = true;
    report.message = "assumption not satisfied; asymptotic theorems not certified for this oracle";
  } else if (report.analytic_D1) {
    report.pass = report.D1_hat <= *report.analytic_D1;
    report.message = report.pass ? "bounded near critical points"
                                  : "observed |G|^2 exceeds the analytic bound";
  } else {
    report.pass = std::isfinite(report.D1_hat);
    report.message = "bounded near critical points (no closed-form D1; observed maximum reported)";
  }
  return report;
}

enum class EnvelopeLift { Slope, Intercept };

/// Declared constants for a mini-batch oracle, fitted on start: the fitted
/// line, raised until every probe mean lies under it. Slope lifting keeps the
/// fitted intercept (tight near critical points) and suits norm-level data;
/// intercept lifting suits pooled coordinate data, whose coordinates have
/// different noise floors. sigma0 is never below 1 since E|G|^2 >= |grad g|^2.
inline AffineConstants envelope_constants(const AffineFit& fit,
                                          EnvelopeLift lift = EnvelopeLift::Slope) {
  AffineConstants c;
  c.sigma0 = std::max(1.0, fit.sigma0_hat);
  c.sigma1 = std::max(0.0, fit.sigma1_hat);
  for (std::size_t k = 0; k < fit.probe_grad_sq.size(); ++k) {
    const double x = fit.probe_grad_sq[k];
    const double m = fit.probe_mean[k];
    if (lift == EnvelopeLift::Intercept) {
      c.sigma1 = std::max(c.sigma1, m - c.sigma0 * x);
    } else if (x > 0.0) {
      c.sigma0 = std::max(c.sigma0, (m - c.sigma1) / x);
    }
  }
  return c;
}

}  // namespace adalab
