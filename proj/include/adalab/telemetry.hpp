#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adalab/compensated.hpp"
#include "adalab/errors.hpp"
#include "adalab/objectives.hpp"
#include "adalab/optimizers.hpp"
#include "adalab/oracles.hpp"
#include "adalab/rng.hpp"
#include "adalab/vector.hpp"

namespace adalab {

/// Per-step telemetry. For AdaGrad-Norm: zeta = |grad g(theta_n)|^2 / sqrt(S_{n-1}),
/// gamma = |G_n|^2 / S_n, ghat = g + (sigma0 alpha0 / 2) zeta.
struct StepRow {
  std::uint64_t n = 0;
  double g = 0.0;
  double grad_sq = 0.0;
  double S_prev = 0.0;
  double S = 0.0;
  double zeta = 0.0;
  double gamma = 0.0;
  double ghat = 0.0;
  double step_norm = 0.0;
  double invsqrtS_partial = 0.0;
  double running_sup_g = 0.0;
};

inline constexpr const char* kStepCsvHeader =
    "n,g,grad_sq,S_prev,S,zeta,gamma,ghat,step_norm,invsqrtS_partial,running_sup_g";

inline std::string to_csv_line(const StepRow& r) {
  std::string out = std::to_string(r.n);
  for (double x : {r.g, r.grad_sq, r.S_prev, r.S, r.zeta, r.gamma, r.ghat, r.step_norm,
                   r.invsqrtS_partial, r.running_sup_g}) {
    out += ',';
    out += format_double(x);
  }
  return out;
}

/// Declared constants the Lyapunov function and its decrease bound depend on.
struct LyapunovParams {
  double sigma0 = 0.0;
  double sigma1 = 0.0;
  double alpha0 = 1.0;
  double S0 = 1.0;
  double L = 1.0;
};

/// C_{Gamma,1} = alpha0 sigma1 / (2 sqrt(S0)) + L alpha0^2 / 2
inline double c_gamma1(const LyapunovParams& p) {
  return p.alpha0 * p.sigma1 / (2.0 * std::sqrt(p.S0)) + p.L * p.alpha0 * p.alpha0 / 2.0;
}

/// C_{Gamma,2} = sigma0 (2 sigma0 + 1) alpha0^3 L^2 / 2
inline double c_gamma2(const LyapunovParams& p) {
  return p.sigma0 * (2.0 * p.sigma0 + 1.0) * p.alpha0 * p.alpha0 * p.alpha0 * p.L * p.L / 2.0;
}

/// h(x) = alpha0 sqrt(2L) (1 + sigma0 L / (2 sqrt(S0))) sqrt(x)
///        + (1 + sigma0 alpha0 L / (2 sqrt(S0))) L alpha0^2 / 2,
/// the bound on one-step growth of ghat.
inline double adjacency_bound(const LyapunovParams& p, double ghat) {
  const double rs0 = std::sqrt(p.S0);
  return p.alpha0 * std::sqrt(2.0 * p.L) * (1.0 + p.sigma0 * p.L / (2.0 * rs0)) *
             std::sqrt(std::max(0.0, ghat)) +
         (1.0 + p.sigma0 * p.alpha0 * p.L / (2.0 * rs0)) * p.L * p.alpha0 * p.alpha0 / 2.0;
}

inline double adagrad_ghat(const LyapunovParams& p, double g, double zeta) {
  return g + p.sigma0 * p.alpha0 / 2.0 * zeta;
}

/// Row fields that do not depend on history, from one AdaGrad-Norm step.
inline StepRow adagrad_row(const LyapunovParams& p, std::uint64_t n, double g, double grad_sq,
                           double S_prev, double S, double draw_sq, double step_norm) {
  StepRow r;
  r.n = n;
  r.g = g;
  r.grad_sq = grad_sq;
  r.S_prev = S_prev;
  r.S = S;
  r.zeta = grad_sq / std::sqrt(S_prev);
  r.gamma = draw_sq / S;
  r.ghat = adagrad_ghat(p, g, r.zeta);
  r.step_norm = step_norm;
  r.invsqrtS_partial = 1.0 / std::sqrt(S);
  r.running_sup_g = g;
  return r;
}

/// Telemetry for a single AdaGrad-Norm step. Evaluates the exact gradient at
/// the pre-step point. The running fields cover this step only; use
/// TrajectoryRecorder for whole trajectories.
inline StepRow record_step(const LyapunovParams& p, const Objective& obj,
                           const AdaGradNormState& before, const AdaGradNormState& after,
                           const Vector& draw) {
  require_same_dim(before.theta, draw, "record_step");
  require_same_dim(after.theta, draw, "record_step");
  if (after.n != before.n + 1) throw UsageError("record_step: states are not one step apart");
  const Vector grad = obj.grad(before.theta);
  return adagrad_row(p, after.n, obj.eval(before.theta), dot(grad, grad), before.S.value(),
                     after.S.value(), dot(draw, draw), distance(after.theta, before.theta));
}

/// ghat_t = g + sum_i zeta_i(t) + (sigma1 / 2) sum_i eta_{t-1,i}, with
/// zeta_i(t) = (d_i g(theta_t))^2 eta_{t-1,i}.
struct RmsPropLyapunov {
  double zeta = 0.0;
  double ghat = 0.0;
};

inline RmsPropLyapunov rmsprop_lyapunov(double g, const Vector& grad, const Vector& eta_prev,
                                        double coordinate_sigma1) {
  require_same_dim(grad, eta_prev, "rmsprop_lyapunov");
  double zeta = 0.0;
  double eta_sum = 0.0;
  for (std::size_t i = 0; i < grad.dim(); ++i) {
    zeta += grad[i] * grad[i] * eta_prev[i];
    eta_sum += eta_prev[i];
  }
  return {zeta, g + zeta + coordinate_sigma1 / 2.0 * eta_sum};
}

// ---------------------------------------------------------------------------
// Stopping-time excursions
// ---------------------------------------------------------------------------

/// One (tau_{3i-2}, tau_{3i-1}, tau_{3i}) triple, 1-based step indices.
/// An open triple was cut at the series end: missing indices equal the
/// series length.
struct Excursion {
  std::uint64_t enter = 0;
  std::uint64_t exit_band = 0;
  std::uint64_t settle = 0;
  bool open = false;

  friend bool operator==(const Excursion&, const Excursion&) = default;
};

struct ExcursionLog {
  double delta0 = 0.0;
  std::vector<Excursion> triples;
  /// Number of triples with tau_{3i-1} < tau_{3i}: excursions that left the
  /// band (Delta0, 2 Delta0] upward before settling.
  std::uint64_t overshoot_count = 0;
};

/// Streaming form of segment_excursions: feed ghat values in order.
///   enter:     first k after the previous settle with ghat > Delta0
///   exit_band: first k >= enter with ghat <= Delta0 or ghat > 2 Delta0
///   settle:    first k >= exit_band with ghat <= Delta0
class ExcursionSegmenter {
 public:
  explicit ExcursionSegmenter(double delta0) {
    if (!(delta0 > 0.0)) throw UsageError("excursions: delta0 must be positive");
    log_.delta0 = delta0;
  }

  void push(double ghat) {
    ++k_;
    const double d0 = log_.delta0;
    if (phase_ == Phase::Below) {
      if (!(ghat > d0)) return;
      current_ = Excursion{k_, 0, 0, false};
      phase_ = Phase::InBand;
    }
    if (phase_ == Phase::InBand) {
      if (!(ghat <= d0 || ghat > 2.0 * d0)) return;
      current_.exit_band = k_;
      phase_ = Phase::Returning;
    }
    if (phase_ == Phase::Returning && ghat <= d0) {
      current_.settle = k_;
      close(current_);
      phase_ = Phase::Below;
    }
  }

  /// Log including any excursion still open at the current length.
  ExcursionLog finish() const {
    ExcursionLog out = log_;
    if (phase_ != Phase::Below) {
      Excursion e = current_;
      if (phase_ == Phase::InBand) e.exit_band = k_;
      e.settle = k_;
      e.open = true;
      if (e.exit_band < e.settle) ++out.overshoot_count;
      out.triples.push_back(e);
    }
    return out;
  }

  std::uint64_t length() const noexcept { return k_; }

 private:
  enum class Phase { Below, InBand, Returning };

  void close(const Excursion& e) {
    if (e.exit_band < e.settle) ++log_.overshoot_count;
    log_.triples.push_back(e);
  }

  ExcursionLog log_;
  Phase phase_ = Phase::Below;
  Excursion current_;
  std::uint64_t k_ = 0;
};

inline ExcursionLog segment_excursions(std::span<const double> ghat_series, double delta0) {
  ExcursionSegmenter seg(delta0);
  for (double x : ghat_series) {
    if (!std::isfinite(x)) throw DomainError("segment_excursions: non-finite value");
    seg.push(x);
  }
  return seg.finish();
}

// ---------------------------------------------------------------------------
// Replicate estimator for conditional moments at a fixed point
// ---------------------------------------------------------------------------

struct ConditionalEstimate {
  Vector mean_G;
  Vector se_G;
  double mean_normsq_G = 0.0;
  double se_normsq_G = 0.0;
};

/// Monte Carlo estimates of E[G | theta] and E[|G|^2 | theta]. Use an rng
/// stream that the trajectory itself never touches.
inline ConditionalEstimate estimate_conditional(const Oracle& oracle, const Objective& obj,
                                                const Vector& theta, std::size_t replicates,
                                                RngStream& rng) {
  if (replicates < 100) throw UsageError("estimate_conditional: need at least 100 replicates");
  oracle.check_compatible(obj);
  const std::size_t d = obj.dim();
  const Vector g = obj.grad(theta);
  Vector draw(d);
  std::vector<NeumaierSum<double>> s1(d), s2(d);
  NeumaierSum<double> q1, q2;
  for (std::size_t k = 0; k < replicates; ++k) {
    oracle.sample_into(obj, theta, g, rng, draw);
    for (std::size_t i = 0; i < d; ++i) {
      s1[i] += draw[i];
      s2[i] += draw[i] * draw[i];
    }
    const double q = dot(draw, draw);
    q1 += q;
    q2 += q * q;
  }
  const double n = static_cast<double>(replicates);
  ConditionalEstimate est{Vector(d), Vector(d), 0.0, 0.0};
  for (std::size_t i = 0; i < d; ++i) {
    const double m = s1[i].value() / n;
    const double var = std::max(0.0, (s2[i].value() - n * m * m) / (n - 1.0));
    est.mean_G[i] = m;
    est.se_G[i] = std::sqrt(var / n);
  }
  est.mean_normsq_G = q1.value() / n;
  const double qvar =
      std::max(0.0, (q2.value() - n * est.mean_normsq_G * est.mean_normsq_G) / (n - 1.0));
  est.se_normsq_G = std::sqrt(qvar / n);
  return est;
}

// ---------------------------------------------------------------------------
// Whole-trajectory recorder
// ---------------------------------------------------------------------------

/// Mean and standard error of a stream of values (Welford).
class RunningMoments {
 public:
  void push(double x) {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }
  std::uint64_t count() const noexcept { return count_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept {
    return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
  }
  double standard_error() const noexcept {
    return count_ > 1 ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0;
  }

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Per-seed metric values captured when the step index reaches a horizon T.
struct HorizonValues {
  std::uint64_t T = 0;
  double S_T = 0.0;
  double sup_g = 0.0;
  double avg_grad_sq = 0.0;    // (1/T) sum_{n<=T} |grad g(theta_n)|^2
  double min_grad_sq = 0.0;    // min_{n<=T} |grad g(theta_n)|^2
  double final_grad_sq = 0.0;  // |grad g(theta_T)|^2
  double invsqrtS_partial = 0.0;
  double v_drift = std::numeric_limits<double>::quiet_NaN();  // RMSProp only
};

struct RecordPolicy {
  std::uint64_t stride = 1;
  std::uint64_t dense_prefix = 0;
  std::vector<std::uint64_t> horizons;  // ascending

  bool keeps(std::uint64_t n) const {
    if (n <= dense_prefix) return true;
    if (stride != 0 && n % stride == 0) return true;
    return std::binary_search(horizons.begin(), horizons.end(), n);
  }
};

/// Counts of per-step invariant violations observed along a trajectory.
struct InvariantCounters {
  std::uint64_t gamma_out_of_range = 0;
  std::uint64_t step_exceeds_alpha0 = 0;
  std::uint64_t adjacency_violations = 0;
  double max_adjacency_excess = -std::numeric_limits<double>::infinity();
  std::uint64_t eta_increases = 0;          // RMSProp, per coordinate-step
  std::uint64_t property2_violations = 0;   // RMSProp, per coordinate-step
  std::uint64_t tv_decreases = 0;           // RMSProp, per coordinate-step
  double min_property2_ratio = std::numeric_limits<double>::infinity();

  std::uint64_t total() const {
    return gamma_out_of_range + step_exceeds_alpha0 + adjacency_violations + eta_increases +
           property2_violations + tv_decreases;
  }
};

/// Aggregate form of the AdaGrad-Norm sufficient-decrease inequality:
/// residual r_n = ghat_{n+1} - ghat_n + (alpha0/4) zeta(n) - C1 Gamma_n
/// - C2 Gamma_n / sqrt(S_n); pass when mean(r) <= 3 SE(r).
struct SufficientDecreaseSummary {
  std::uint64_t count = 0;
  double mean = 0.0;
  double se = 0.0;
  bool pass = true;
};

/// Consumes one StepRow per step (history-free fields filled by the caller),
/// maintains the running fields and horizon metrics, keeps rows per the
/// policy and checks the AdaGrad-Norm per-step invariants when enabled.
class TrajectoryRecorder {
 public:
  TrajectoryRecorder(RecordPolicy policy, std::optional<double> delta0,
                     std::optional<LyapunovParams> adagrad_params)
      : policy_(std::move(policy)), adagrad_(adagrad_params) {
    if (delta0) segmenter_.emplace(*delta0);
  }

  /// Completes `row` (invsqrtS_partial, running_sup_g) and returns it.
  const StepRow& push(StepRow row) {
    partial_.add(1.0 / std::sqrt(row.S));
    sup_g_ = std::max(sup_g_, row.g);
    grad_sq_sum_.add(row.grad_sq);
    min_grad_sq_ = std::min(min_grad_sq_, row.grad_sq);
    row.invsqrtS_partial = partial_.value();
    row.running_sup_g = sup_g_;

    if (row.gamma < 0.0 || row.gamma > 1.0) ++counters_.gamma_out_of_range;
    if (adagrad_) {
      if (row.step_norm > adagrad_->alpha0 * (1.0 + 1e-12)) ++counters_.step_exceeds_alpha0;
      if (last_) {
        const StepRow& prev = *last_;
        const double increment = row.ghat - prev.ghat;
        const double excess = increment - adjacency_bound(*adagrad_, prev.ghat);
        counters_.max_adjacency_excess = std::max(counters_.max_adjacency_excess, excess);
        if (excess > 1e-9) ++counters_.adjacency_violations;
        const double residual = increment + adagrad_->alpha0 / 4.0 * prev.zeta -
                                c_gamma1(*adagrad_) * prev.gamma -
                                c_gamma2(*adagrad_) * prev.gamma / std::sqrt(prev.S);
        residual_.push(residual);
      }
    }
    if (segmenter_) segmenter_->push(row.ghat);
    if (std::binary_search(policy_.horizons.begin(), policy_.horizons.end(), row.n)) {
      HorizonValues h;
      h.T = row.n;
      h.S_T = row.S;
      h.sup_g = sup_g_;
      h.avg_grad_sq = grad_sq_sum_.value() / static_cast<double>(row.n);
      h.min_grad_sq = min_grad_sq_;
      h.final_grad_sq = row.grad_sq;
      h.invsqrtS_partial = row.invsqrtS_partial;
      horizons_.push_back(h);
    }
    last_ = row;
    if (policy_.keeps(row.n)) rows_.push_back(row);
    return *last_;
  }

  InvariantCounters& counters() noexcept { return counters_; }
  const InvariantCounters& counters() const noexcept { return counters_; }
  const std::vector<StepRow>& rows() const noexcept { return rows_; }
  std::vector<HorizonValues>& horizons() noexcept { return horizons_; }
  const std::vector<HorizonValues>& horizons() const noexcept { return horizons_; }

  std::optional<ExcursionLog> excursions() const {
    if (!segmenter_) return std::nullopt;
    return segmenter_->finish();
  }

  std::optional<SufficientDecreaseSummary> sufficient_decrease() const {
    if (!adagrad_) return std::nullopt;
    SufficientDecreaseSummary s;
    s.count = residual_.count();
    s.mean = residual_.mean();
    s.se = residual_.standard_error();
    s.pass = s.mean <= 3.0 * s.se;
    return s;
  }

 private:
  RecordPolicy policy_;
  std::optional<LyapunovParams> adagrad_;
  std::optional<ExcursionSegmenter> segmenter_;
  NeumaierSum<double> partial_;
  NeumaierSum<double> grad_sq_sum_;
  double sup_g_ = -std::numeric_limits<double>::infinity();
  double min_grad_sq_ = std::numeric_limits<double>::infinity();
  std::optional<StepRow> last_;
  std::vector<StepRow> rows_;
  std::vector<HorizonValues> horizons_;
  InvariantCounters counters_;
  RunningMoments residual_;
};

}  // namespace adalab
