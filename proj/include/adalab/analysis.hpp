#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "adalab/compensated.hpp"
#include "adalab/errors.hpp"
#include "adalab/telemetry.hpp"

namespace adalab {

enum class Metric { S_T, SupG, AvgGradSq, MinGradSq, FinalGradSq, InvSqrtSPartial, VDrift };

inline constexpr std::array<Metric, 7> kAllMetrics = {
    Metric::S_T,         Metric::SupG,            Metric::AvgGradSq, Metric::MinGradSq,
    Metric::FinalGradSq, Metric::InvSqrtSPartial, Metric::VDrift};

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::S_T: return "S_T";
    case Metric::SupG: return "sup_g";
    case Metric::AvgGradSq: return "avg_grad_sq";
    case Metric::MinGradSq: return "min_grad_sq";
    case Metric::FinalGradSq: return "final_grad_sq";
    case Metric::InvSqrtSPartial: return "invsqrtS_partial";
    case Metric::VDrift: return "v_drift";
  }
  return "unknown";
}

inline double metric_value(const HorizonValues& h, Metric m) {
  switch (m) {
    case Metric::S_T: return h.S_T;
    case Metric::SupG: return h.sup_g;
    case Metric::AvgGradSq: return h.avg_grad_sq;
    case Metric::MinGradSq: return h.min_grad_sq;
    case Metric::FinalGradSq: return h.final_grad_sq;
    case Metric::InvSqrtSPartial: return h.invsqrtS_partial;
    case Metric::VDrift: return h.v_drift;
  }
  return 0.0;
}

inline constexpr std::array<double, 4> kQuantileLevels = {0.5, 0.75, 0.9, 0.95};

struct MetricStats {
  double mean = 0.0;
  double sd = 0.0;
  std::optional<double> se;  // undefined for a single seed
  std::array<double, 4> quantiles{};
};

/// Linear-interpolation quantile (type 7) of an unsorted sample.
inline double quantile(std::vector<double> values, double level) {
  if (values.empty()) throw UsageError("quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double pos = level * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

/// Mean via compensated summation over the sorted sample, so the result is
/// independent of seed order.
inline MetricStats summarize(std::span<const double> values) {
  if (values.empty()) throw UsageError("summarize: empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  NeumaierSum<double> sum;
  for (double x : sorted) sum += x;
  const double n = static_cast<double>(sorted.size());
  MetricStats s;
  s.mean = sum.value() / n;
  if (sorted.size() > 1) {
    NeumaierSum<double> ss;
    for (double x : sorted) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss.value() / (n - 1.0));
    s.se = s.sd / std::sqrt(n);
  }
  for (std::size_t k = 0; k < kQuantileLevels.size(); ++k) {
    s.quantiles[k] = quantile(sorted, kQuantileLevels[k]);
  }
  return s;
}

/// Per-seed horizon values of one trajectory plus the fingerprint of the
/// configuration that produced it.
struct TrajectoryOutput {
  std::string config_fingerprint;
  std::uint64_t seed_index = 0;
  std::vector<HorizonValues> horizons;
};

/// Metric arrays across seeds at one horizon.
struct Checkpoint {
  std::uint64_t T = 0;
  std::vector<HorizonValues> per_seed;

  std::vector<double> values(Metric m) const {
    std::vector<double> out;
    out.reserve(per_seed.size());
    for (const auto& h : per_seed) out.push_back(metric_value(h, m));
    return out;
  }

  std::size_t seeds() const noexcept { return per_seed.size(); }
  MetricStats stats(Metric m) const { return summarize(values(m)); }
};

inline std::vector<Checkpoint> aggregate(std::span<const TrajectoryOutput> outputs,
                                         std::span<const std::uint64_t> horizons) {
  if (outputs.empty()) throw UsageError("aggregate: no trajectories");
  for (const auto& o : outputs) {
    if (o.config_fingerprint != outputs.front().config_fingerprint) {
      throw UsageError("aggregate: trajectories come from different configurations (seed " +
                       std::to_string(o.seed_index) + ")");
    }
  }
  std::vector<Checkpoint> out;
  for (std::uint64_t T : horizons) {
    Checkpoint cp;
    cp.T = T;
    for (const auto& o : outputs) {
      const auto it = std::find_if(o.horizons.begin(), o.horizons.end(),
                                   [&](const HorizonValues& h) { return h.T == T; });
      if (it == o.horizons.end()) {
        throw UsageError("aggregate: seed " + std::to_string(o.seed_index) +
                         " has no values at horizon " + std::to_string(T));
      }
      cp.per_seed.push_back(*it);
    }
    out.push_back(std::move(cp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Regression helpers
// ---------------------------------------------------------------------------

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

inline LinearFit ordinary_least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("least squares: need >= 2 points");
  const double n = static_cast<double>(x.size());
  NeumaierSum<double> sx, sy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx.value() / n;
  const double my = sy.value() / n;
  NeumaierSum<double> sxx, sxy, syy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx.value() > 0.0)) throw DegenerateDesignError("least squares: constant regressor");
  LinearFit fit;
  fit.slope = sxy.value() / sxx.value();
  fit.intercept = my - fit.slope * mx;
  if (syy.value() > 0.0) {
    NeumaierSum<double> sse;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - (fit.intercept + fit.slope * x[i]);
      sse += e * e;
    }
    fit.r_squared = std::clamp(1.0 - sse.value() / syy.value(), 0.0, 1.0);
  } else {
    fit.r_squared = 1.0;
  }
  return fit;
}

struct RateFit {
  double exponent_hat = 0.0;
  double constant_hat = 0.0;
  double r_squared = 0.0;
  bool log_corrected = false;
};

namespace detail {

inline void check_horizon_grid(std::span<const double> horizons) {
  if (horizons.size() < 3) throw UsageError("rate fit: need at least 3 horizons");
  const auto [lo, hi] = std::minmax_element(horizons.begin(), horizons.end());
  if (!(*lo > 0.0) || *hi / *lo < 100.0 * (1.0 - 1e-12)) {
    throw UsageError("rate fit: horizons must span at least two decades");
  }
}

}  // namespace detail

/// Fits metric(T) ~ C T^p by least squares on log axes. With log_corrected
/// the metric is divided by ln T first, so C ln T / sqrt(T) gives p = -0.5.
inline RateFit fit_power_law(std::span<const double> horizons, std::span<const double> metric,
                             bool log_corrected) {
  detail::check_horizon_grid(horizons);
  if (metric.size() != horizons.size()) throw UsageError("rate fit: size mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    double m = metric[i];
    if (log_corrected) m /= std::log(horizons[i]);
    if (!(m > 0.0) || !std::isfinite(m)) throw DomainError("rate fit: metric must be positive");
    lx.push_back(std::log(horizons[i]));
    ly.push_back(std::log(m));
  }
  const LinearFit f = ordinary_least_squares(lx, ly);
  return {f.slope, std::exp(f.intercept), f.r_squared, log_corrected};
}

inline RateFit fit_rate(std::span<const Checkpoint> checkpoints, Metric metric,
                        bool log_corrected) {
  std::vector<double> t, m;
  for (const auto& cp : checkpoints) {
    t.push_back(static_cast<double>(cp.T));
    m.push_back(cp.stats(metric).mean);
  }
  return fit_power_law(t, m, log_corrected);
}

/// Least squares of mean S_T against T on linear axes.
inline LinearFit linear_growth_check(std::span<const Checkpoint> checkpoints) {
  if (checkpoints.size() < 3) throw UsageError("linear growth: need at least 3 horizons");
  std::vector<double> t, s;
  for (const auto& cp : checkpoints) {
    t.push_back(static_cast<double>(cp.T));
    s.push_back(cp.stats(Metric::S_T).mean);
  }
  return ordinary_least_squares(t, s);
}

struct HighProbResult {
  double empirical_exceed_fraction = 0.0;
  double markov_bound = 0.0;
  double allowed_fraction = 0.0;
  bool pass = false;
};

/// Markov-type tail check on a nonnegative sample: the fraction of values
/// above mean/delta must not exceed delta + 2 sqrt(delta (1 - delta) / M).
inline HighProbResult high_prob_check(std::span<const double> values, double delta) {
  if (values.size() < 50) throw UsageError("high_prob_check: need at least 50 seeds");
  if (!(delta > 0.0 && delta <= 1.0)) throw UsageError("high_prob_check: delta must lie in (0, 1]");
  const MetricStats s = summarize(values);
  const double m = static_cast<double>(values.size());
  HighProbResult r;
  r.markov_bound = s.mean / delta;
  std::size_t exceed = 0;
  for (double x : values) {
    if (x > r.markov_bound) ++exceed;
  }
  r.empirical_exceed_fraction = static_cast<double>(exceed) / m;
  r.allowed_fraction = delta + 2.0 * std::sqrt(delta * (1.0 - delta) / m);
  r.pass = r.empirical_exceed_fraction <= r.allowed_fraction;
  return r;
}

inline HighProbResult high_prob_check(const Checkpoint& cp, Metric metric, double delta) {
  return high_prob_check(cp.values(metric), delta);
}

/// Mean and standard error of the per-seed change x_b - x_a between two
/// checkpoints of the same ensemble. SE is zero for a single seed.
struct PairedChange {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double mean_change = 0.0;
  double se_change = 0.0;
};

inline PairedChange paired_change(const Checkpoint& a, const Checkpoint& b, Metric metric) {
  if (a.seeds() != b.seeds()) throw UsageError("paired_change: seed counts differ");
  const auto va = a.values(metric);
  const auto vb = b.values(metric);
  std::vector<double> diff(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) diff[i] = vb[i] - va[i];
  const MetricStats d = summarize(diff);
  return {summarize(va).mean, summarize(vb).mean, d.mean, d.se.value_or(0.0)};
}

struct DecayReport {
  bool monotone = false;
  bool below_threshold = false;
  bool pass = false;
  std::vector<double> means;
  std::vector<double> slacks;
  std::string text;
};

/// Mean-square decay: the mean metric must not rise between consecutive
/// checkpoints by more than 2 SE of the per-seed change, and the last mean
/// must be below `threshold`. `means` / `slacks` give the series directly.
inline DecayReport msc_decay_check(std::span<const double> means, std::span<const double> slacks,
                                   double threshold) {
  if (means.size() < 3) throw UsageError("msc_decay_check: need at least 3 horizons");
  if (slacks.size() + 1 != means.size()) throw UsageError("msc_decay_check: slack size mismatch");
  DecayReport r;
  r.means.assign(means.begin(), means.end());
  r.slacks.assign(slacks.begin(), slacks.end());
  r.monotone = true;
  std::ostringstream text;
  for (std::size_t k = 0; k + 1 < means.size(); ++k) {
    const bool ok = means[k + 1] - means[k] <= 2.0 * slacks[k];
    if (!ok) r.monotone = false;
    text << "step " << k << "->" << k + 1 << ": " << means[k] << " -> " << means[k + 1]
         << " (slack 2x" << slacks[k] << ") " << (ok ? "ok" : "RISE") << "\n";
  }
  r.below_threshold = means.back() < threshold;
  text << "final " << means.back() << (r.below_threshold ? " < " : " >= ") << threshold << "\n";
  r.pass = r.monotone && r.below_threshold;
  r.text = text.str();
  return r;
}

inline DecayReport msc_decay_check(std::span<const Checkpoint> checkpoints, double threshold,
                                   Metric metric = Metric::FinalGradSq) {
  std::vector<double> means, slacks;
  for (const auto& cp : checkpoints) means.push_back(cp.stats(metric).mean);
  for (std::size_t k = 0; k + 1 < checkpoints.size(); ++k) {
    slacks.push_back(paired_change(checkpoints[k], checkpoints[k + 1], metric).se_change);
  }
  return msc_decay_check(means, slacks, threshold);
}

struct PlateauResult {
  double relative_increase = 0.0;
  double relative_slack = 0.0;
  bool pass = false;
};

/// Stability plateau: (mean_b - mean_a) / mean_a < rel_tol + 2 SE / mean_a.
inline PlateauResult stability_plateau_check(const Checkpoint& a, const Checkpoint& b,
                                             double rel_tol, Metric metric = Metric::SupG) {
  const PairedChange c = paired_change(a, b, metric);
  if (!(c.mean_a > 0.0)) throw DomainError("stability plateau: reference mean must be positive");
  PlateauResult r;
  r.relative_increase = c.mean_change / c.mean_a;
  r.relative_slack = 2.0 * c.se_change / c.mean_a;
  r.pass = r.relative_increase < rel_tol + r.relative_slack;
  return r;
}

struct RatioResult {
  double ratio = 0.0;
  bool pass = false;
};

/// Growth of the mean partial sum of 1/sqrt(S_n) between two horizons.
inline RatioResult divergence_check(const Checkpoint& a, const Checkpoint& b, double min_ratio) {
  const double ma = a.stats(Metric::InvSqrtSPartial).mean;
  const double mb = b.stats(Metric::InvSqrtSPartial).mean;
  if (!(ma > 0.0)) throw DomainError("divergence check: reference mean must be positive");
  RatioResult r;
  r.ratio = mb / ma;
  r.pass = r.ratio >= min_ratio;
  return r;
}

struct FractionResult {
  double fraction = 0.0;
  bool pass = false;
};

/// Fraction of seeds whose RMSProp relative v drift at this checkpoint is at
/// most `tolerance`; passes when the fraction reaches `min_fraction`.
inline FractionResult v_drift_check(const Checkpoint& cp, double tolerance, double min_fraction) {
  const auto vals = cp.values(Metric::VDrift);
  std::size_t ok = 0;
  for (double x : vals) {
    if (x <= tolerance) ++ok;
  }
  FractionResult r;
  r.fraction = vals.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(vals.size());
  r.pass = r.fraction >= min_fraction;
  return r;
}

}  // namespace adalab
