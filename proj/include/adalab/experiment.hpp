#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "adalab/analysis.hpp"
#include "adalab/config.hpp"
#include "adalab/errors.hpp"
#include "adalab/objectives.hpp"
#include "adalab/optimizers.hpp"
#include "adalab/oracles.hpp"
#include "adalab/rng.hpp"
#include "adalab/telemetry.hpp"
#include "adalab/vector.hpp"

namespace adalab {

inline constexpr const char* kToolName = "adalab";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutputDirEnv = "ADALAB_OUTPUT_DIR";

// Stream layout under one base seed: trajectories use their seed index,
// replicate estimators seed index + 2^32, and run-level helpers live above.
inline constexpr std::uint64_t kReplicateStreamOffset = 1ULL << 32;
inline constexpr std::uint64_t kPilotStream = 1ULL << 33;
inline constexpr std::uint64_t kFitStream = (1ULL << 33) + 1;
inline constexpr std::uint64_t kPilotLength = 10'000;

// ---------------------------------------------------------------------------
// Problem resolution
// ---------------------------------------------------------------------------

inline Objective build_objective(const ObjectiveConfig& c) {
  Objective obj = std::visit(
      [](const auto& s) -> Objective {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, QuadraticConfig>) {
          return Objective::quadratic(s.eigenvalues, Vector(s.minimizer));
        } else if constexpr (std::is_same_v<S, CosineWellConfig>) {
          return Objective::cosine_well(s.dim, s.amplitude, s.frequency);
        } else {
          return make_synthetic_logistic(s.samples, s.dim, s.label_noise, s.ridge, s.data_seed);
        }
      },
      c.spec);
  if (c.declared_L) obj.override_declared_L(*c.declared_L);
  return obj;
}

/// Declared constants for a mini-batch oracle: the envelope of an empirical
/// fit over radial probes along several random directions about the
/// objective's reference point.
inline std::pair<AffineConstants, AffineConstants> fit_mini_batch_constants(
    const Objective& obj, std::size_t batch_size, bool replacement, RngStream& rng,
    std::size_t directions = 3, std::size_t probes_per_direction = 10,
    std::size_t draws = 100'000) {
  const Oracle provisional = Oracle::mini_batch(batch_size, replacement, {}, {});
  std::vector<Vector> points;
  for (std::size_t k = 0; k < directions; ++k) {
    auto line = radial_probes(obj.reference_point(), probes_per_direction, 0.1, 10.0, rng);
    points.insert(points.end(), line.begin(), line.end());
  }
  const AffineFit norm = empirical_affine_fit(provisional, obj, points, draws, rng);
  const AffineFit coord = empirical_coordinate_affine_fit(provisional, obj, points, draws, rng);
  return {envelope_constants(norm), envelope_constants(coord, EnvelopeLift::Intercept)};
}

inline Oracle build_oracle(const OracleConfig& c, const Objective& obj, std::uint64_t base_seed) {
  return std::visit(
      [&](const auto& s) -> Oracle {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, AdditiveGaussianConfig>) {
          return Oracle::additive_gaussian(s.sigma, obj.dim());
        } else if constexpr (std::is_same_v<S, MultiplicativeConfig>) {
          return Oracle::multiplicative(s.gamma, s.distribution);
        } else {
          if (s.norm) return Oracle::mini_batch(s.batch_size, s.replacement, *s.norm, *s.coordinate);
          RngStream rng(base_seed, kFitStream);
          const auto [norm, coord] = fit_mini_batch_constants(obj, s.batch_size, s.replacement, rng);
          return Oracle::mini_batch(s.batch_size, s.replacement, norm, coord);
        }
      },
      c);
}

struct Problem {
  ExperimentConfig config;
  Objective objective;
  Oracle oracle;
  Vector theta1;
  bool mini_batch_fitted = false;
};

inline Problem resolve_problem(const ExperimentConfig& cfg) {
  Objective obj = build_objective(cfg.objective);
  Oracle oracle = build_oracle(cfg.oracle, obj, cfg.base_seed);
  oracle.check_compatible(obj);
  const auto* mb = std::get_if<MiniBatchConfig>(&cfg.oracle);
  return {cfg, std::move(obj), std::move(oracle), Vector(cfg.initial_point), mb && !mb->norm};
}

inline std::optional<LyapunovParams> adagrad_lyapunov_params(const Problem& p) {
  const auto* a = std::get_if<AdaGradNormConfig>(&p.config.optimizer);
  if (!a) return std::nullopt;
  LyapunovParams lp;
  lp.sigma0 = p.oracle.declared_sigma0();
  lp.sigma1 = p.oracle.declared_sigma1();
  lp.alpha0 = a->alpha0;
  lp.S0 = a->S0;
  lp.L = p.objective.declared_L();
  return lp;
}

// ---------------------------------------------------------------------------
// Trajectory simulation
// ---------------------------------------------------------------------------

struct AbortInfo {
  std::uint64_t step = 0;
  std::string message;
};

/// Drives one optimizer along one RNG stream; step() returns a StepRow whose
/// running fields are still unset. The exact gradient at theta_n is evaluated
/// every step and the oracle reuses it.
class Simulator {
 public:
  Simulator(const Problem& p, RngStream rng) : p_(p), rng_(std::move(rng)) {
    const std::size_t d = p.objective.dim();
    grad_ = Vector(d);
    draw_ = Vector(d);
    before_ = Vector(d);
    std::visit(
        [&](const auto& o) {
          using O = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<O, AdaGradNormConfig>) {
            state_ = adagrad_init(p.theta1, o.alpha0, o.S0);
            lyap_ = *adagrad_lyapunov_params(p);
          } else if constexpr (std::is_same_v<O, RmsPropConfig>) {
            state_ = rmsprop_init(p.theta1, o.v_init, o.eps, o.beta1);
            r1_ = rmsprop_r1(o.beta1);
            coord_sigma1_ = p.oracle.declared_coordinate_constants().sigma1;
            S_coord_.assign(d, CompensatedScalar(o.v_init));
            eta_ = effective_stepsize(std::get<RmsPropState>(state_));
            eta_prev_ = Vector(d);
            v_prev_ = Vector(d);
          } else {
            state_ = sgd_init(p.theta1, RobbinsMonro{o.c, o.offset});
            sgd_S_ = CompensatedScalar(o.S0);
          }
        },
        p.config.optimizer);
  }

  const Vector& theta() const {
    return std::visit([](const auto& s) -> const Vector& { return s.theta; }, state_);
  }

  /// RMSProp second-moment vector, if this simulator runs RMSProp.
  const Vector* v() const {
    const auto* s = std::get_if<RmsPropState>(&state_);
    return s ? &s->v : nullptr;
  }

  InvariantCounters& counters() noexcept { return counters_; }

  StepRow step() {
    const Vector& x = theta();
    p_.objective.grad_into(x, grad_);
    const double g = p_.objective.eval(x);
    const double grad_sq = dot(grad_, grad_);
    if (!std::isfinite(g) || !std::isfinite(grad_sq)) {
      throw TrajectoryAborted(step_index() + 1, "non-finite objective at theta=" + to_string(x));
    }
    p_.oracle.sample_into(p_.objective, x, grad_, rng_, draw_);
    before_ = x;
    StepRow row = std::visit([&](auto& s) { return advance(s, g, grad_sq); }, state_);
    if (!all_finite(theta())) {
      throw TrajectoryAborted(row.n, "non-finite iterate after step, G=" + to_string(draw_));
    }
    return row;
  }

  std::uint64_t step_index() const {
    return std::visit(
        [](const auto& s) -> std::uint64_t {
          if constexpr (std::is_same_v<std::decay_t<decltype(s)>, RmsPropState>) {
            return s.t;
          } else {
            return s.n;
          }
        },
        state_);
  }

 private:
  StepRow advance(AdaGradNormState& s, double g, double grad_sq) {
    const double S_prev = s.S.value();
    s = adagrad_step(std::move(s), draw_);
    return adagrad_row(lyap_, s.n, g, grad_sq, S_prev, s.S.value(), dot(draw_, draw_),
                       distance(before_, s.theta));
  }

  StepRow advance(RmsPropState& s, double g, double grad_sq) {
    const std::size_t d = s.v.dim();
    std::swap(eta_prev_, eta_);
    for (std::size_t i = 0; i < d; ++i) v_prev_[i] = s.v[i];
    const Vector& eta_prev = eta_prev_;
    const Vector& v_prev = v_prev_;
    const double S_prev = sum_of(v_prev);
    s = rmsprop_step(std::move(s), draw_);
    const std::uint64_t t = s.t;
    const double beta = rmsprop_beta(t, s.beta1);
    const double alpha = rmsprop_alpha(t);
    for (std::size_t i = 0; i < d; ++i) eta_[i] = alpha / (std::sqrt(s.v[i]) + s.eps);
    const Vector& eta = eta_;

    StepRow row;
    row.n = t;
    row.g = g;
    row.grad_sq = grad_sq;
    row.S_prev = S_prev;
    row.S = sum_of(s.v);
    const RmsPropLyapunov ly = rmsprop_lyapunov(g, grad_, eta_prev, coord_sigma1_);
    row.zeta = ly.zeta;
    row.ghat = ly.ghat;
    double gamma = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      gamma = std::max(gamma, (1.0 - beta) * draw_[i] * draw_[i] / s.v[i]);
    }
    row.gamma = gamma;
    row.step_norm = distance(before_, s.theta);

    const double td = static_cast<double>(t);
    for (std::size_t i = 0; i < d; ++i) {
      S_coord_[i].add(draw_[i] * draw_[i]);
      if (t >= 2) {
        if (eta[i] > eta_prev[i] * (1.0 + 1e-9)) ++counters_.eta_increases;
        if (td * s.v[i] < (td - 1.0) * v_prev[i] * (1.0 - 1e-9)) ++counters_.tv_decreases;
      }
      const double ratio = td * s.v[i] / (r1_ * S_coord_[i].value());
      counters_.min_property2_ratio = std::min(counters_.min_property2_ratio, ratio);
      if (ratio < 1.0 - 1e-9) ++counters_.property2_violations;
    }
    return row;
  }

  StepRow advance(SgdState& s, double g, double grad_sq) {
    const double alpha = effective_stepsize(s);
    const double S_prev = sgd_S_.value();
    const double draw_sq = dot(draw_, draw_);
    s = sgd_step(std::move(s), draw_);
    sgd_S_.add(draw_sq);
    StepRow row;
    row.n = s.n;
    row.g = g;
    row.grad_sq = grad_sq;
    row.S_prev = S_prev;
    row.S = sgd_S_.value();
    row.zeta = grad_sq * alpha;
    row.gamma = draw_sq / row.S;
    row.ghat = g;
    row.step_norm = distance(before_, s.theta);
    return row;
  }

  static double sum_of(const Vector& v) {
    NeumaierSum<double> acc;
    for (double x : v) acc += x;
    return acc.value();
  }

  const Problem& p_;
  RngStream rng_;
  std::variant<AdaGradNormState, RmsPropState, SgdState> state_;
  LyapunovParams lyap_;
  double r1_ = 0.0;
  double coord_sigma1_ = 0.0;
  std::vector<CompensatedScalar> S_coord_;
  CompensatedScalar sgd_S_;
  Vector grad_, draw_, before_;
  Vector eta_, eta_prev_, v_prev_;  // RMSProp scratch
  InvariantCounters counters_;
};

struct Delta0Resolution {
  double value = 0.0;
  std::string source;
};

/// Δ0 from the configured value, or the configured percentile of ĝ along a
/// pilot trajectory on its own stream. A pilot that sits at ĝ = 0 for most
/// of its length falls back to its smallest positive ĝ.
inline Delta0Resolution resolve_delta0(const Problem& p) {
  const auto& cfg = p.config;
  if (cfg.delta0.value) return {*cfg.delta0.value, "config"};
  Simulator sim(p, RngStream(cfg.base_seed, kPilotStream));
  const std::uint64_t n = std::min(cfg.T, kPilotLength);
  std::vector<double> series;
  series.reserve(n);
  try {
    for (std::uint64_t k = 0; k < n; ++k) series.push_back(sim.step().ghat);
  } catch (const TrajectoryAborted&) {
  }
  if (series.empty()) throw ConfigError("delta0: pilot trajectory aborted on its first step");
  const std::string source = "pilot percentile " + format_double(cfg.delta0.percentile) +
                             " over " + std::to_string(series.size()) + " steps";
  const double d0 = quantile(series, cfg.delta0.percentile / 100.0);
  if (d0 > 0.0) return {d0, source};
  double smallest = std::numeric_limits<double>::infinity();
  for (double x : series) {
    if (x > 0.0) smallest = std::min(smallest, x);
  }
  if (!std::isfinite(smallest)) {
    throw ConfigError("delta0: pilot never left ghat = 0; set delta0 explicitly");
  }
  return {smallest, source + " (non-positive; smallest positive pilot value used)"};
}

struct ReplicateCheck {
  std::uint64_t n = 0;
  double max_mean_z = 0.0;  // max_i |mean G_i - d_i g| / SE_i
  double mean_normsq = 0.0;
  double se_normsq = 0.0;
  double affine_bound = 0.0;
  bool pass = false;
};

struct TrajectoryResult {
  std::uint64_t seed_index = 0;
  std::uint64_t steps = 0;
  std::vector<HorizonValues> horizons;
  InvariantCounters counters;
  std::optional<ExcursionLog> excursions;
  std::optional<SufficientDecreaseSummary> sufficient_decrease;
  std::vector<ReplicateCheck> replicate_checks;
  std::optional<AbortInfo> abort;
};

struct TrajectoryRun {
  TrajectoryResult result;
  std::vector<StepRow> rows;
};

inline ReplicateCheck replicate_check(const Problem& p, const Vector& theta, std::uint64_t n,
                                      std::size_t replicates, RngStream& rng) {
  const ConditionalEstimate est = estimate_conditional(p.oracle, p.objective, theta, replicates, rng);
  const Vector g = p.objective.grad(theta);
  ReplicateCheck c;
  c.n = n;
  for (std::size_t i = 0; i < g.dim(); ++i) {
    const double diff = std::abs(est.mean_G[i] - g[i]);
    const double z = est.se_G[i] > 0.0 ? diff / est.se_G[i] : (diff > 1e-12 * (1.0 + std::abs(g[i])) ? INFINITY : 0.0);
    c.max_mean_z = std::max(c.max_mean_z, z);
  }
  c.mean_normsq = est.mean_normsq_G;
  c.se_normsq = est.se_normsq_G;
  c.affine_bound = p.oracle.declared_sigma0() * dot(g, g) + p.oracle.declared_sigma1();
  const bool unbiased = c.max_mean_z <= 4.0;
  const bool affine = c.mean_normsq <= c.affine_bound + 3.0 * c.se_normsq + 1e-12 * (1.0 + c.affine_bound);
  c.pass = unbiased && affine;
  return c;
}

inline TrajectoryRun run_trajectory(const Problem& p, std::uint64_t seed_index,
                                    std::optional<double> delta0) {
  const auto& cfg = p.config;
  RecordPolicy policy{cfg.record_stride, cfg.dense_prefix, cfg.horizons};
  TrajectoryRecorder recorder(policy, delta0, adagrad_lyapunov_params(p));
  Simulator sim(p, RngStream(cfg.base_seed, seed_index));
  RngStream replicate_rng(cfg.base_seed, seed_index + kReplicateStreamOffset);

  // v snapshots at floor(T/2) for every horizon T (RMSProp drift metric).
  std::map<std::uint64_t, Vector> v_half;
  const bool rms = sim.v() != nullptr;
  if (rms) {
    for (std::uint64_t h : cfg.horizons) v_half.emplace(h / 2, Vector());
    if (auto it = v_half.find(0); it != v_half.end()) it->second = *sim.v();
  }

  TrajectoryRun run;
  run.result.seed_index = seed_index;
  std::vector<StepRow> extra;
  try {
    for (std::uint64_t n = 1; n <= cfg.T; ++n) {
      const bool replicate_here =
          cfg.replicates > 0 &&
          std::binary_search(cfg.horizons.begin(), cfg.horizons.end(), n);
      if (replicate_here) {
        run.result.replicate_checks.push_back(
            replicate_check(p, sim.theta(), n, cfg.replicates, replicate_rng));
      }
      const StepRow& row = recorder.push(sim.step());
      run.result.steps = n;
      if (rms) {
        const Vector& v = *sim.v();
        if (auto it = v_half.find(n); it != v_half.end()) it->second = v;
        if (!recorder.horizons().empty() && recorder.horizons().back().T == n) {
          const Vector& half = v_half.at(n / 2);
          recorder.horizons().back().v_drift = distance(v, half) / norm(v);
        }
      }
      if (n == cfg.T && !policy.keeps(n)) extra.push_back(row);
    }
  } catch (const TrajectoryAborted& e) {
    run.result.abort = AbortInfo{e.step(), e.what()};
  } catch (const DomainError& e) {
    run.result.abort = AbortInfo{run.result.steps + 1, e.what()};
  }
  run.rows = recorder.rows();
  run.rows.insert(run.rows.end(), extra.begin(), extra.end());
  run.result.horizons = recorder.horizons();
  run.result.counters = recorder.counters();
  const InvariantCounters& sc = sim.counters();
  run.result.counters.eta_increases += sc.eta_increases;
  run.result.counters.tv_decreases += sc.tv_decreases;
  run.result.counters.property2_violations += sc.property2_violations;
  run.result.counters.min_property2_ratio = sc.min_property2_ratio;
  run.result.excursions = recorder.excursions();
  run.result.sufficient_decrease = recorder.sufficient_decrease();
  return run;
}

// ---------------------------------------------------------------------------
// Ensemble execution and outputs
// ---------------------------------------------------------------------------

inline std::string seed_file_name(std::uint64_t seed_index) {
  std::string digits = std::to_string(seed_index);
  if (digits.size() < 5) digits.insert(0, 5 - digits.size(), '0');
  return "traj_" + digits + ".csv";
}

inline void write_trajectory_csv(const std::filesystem::path& path,
                                 const std::vector<StepRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << kStepCsvHeader << '\n';
  for (const auto& r : rows) out << to_csv_line(r) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

struct ResolvedConstants {
  double L = 0.0;
  double gstar = 0.0;
  AffineConstants norm;
  AffineConstants coordinate;
  std::optional<double> r1;
  std::optional<double> c_gamma1;
  std::optional<double> c_gamma2;
  double delta0 = 0.0;
};

inline ResolvedConstants resolve_constants(const Problem& p, double delta0) {
  ResolvedConstants c;
  c.L = p.objective.declared_L();
  c.gstar = p.objective.declared_gstar();
  c.norm = p.oracle.declared_norm_constants();
  c.coordinate = p.oracle.declared_coordinate_constants();
  if (const auto* r = std::get_if<RmsPropConfig>(&p.config.optimizer)) c.r1 = rmsprop_r1(r->beta1);
  if (const auto lp = adagrad_lyapunov_params(p)) {
    c.c_gamma1 = c_gamma1(*lp);
    c.c_gamma2 = c_gamma2(*lp);
  }
  c.delta0 = delta0;
  return c;
}

inline Json horizon_json(const HorizonValues& h) {
  Json j = {{"T", h.T},
            {"S_T", h.S_T},
            {"sup_g", h.sup_g},
            {"avg_grad_sq", h.avg_grad_sq},
            {"min_grad_sq", h.min_grad_sq},
            {"final_grad_sq", h.final_grad_sq},
            {"invsqrtS_partial", h.invsqrtS_partial}};
  j["v_drift"] = std::isnan(h.v_drift) ? Json(nullptr) : Json(h.v_drift);
  return j;
}

inline HorizonValues horizon_from_json(const Json& j) {
  HorizonValues h;
  h.T = j.at("T").get<std::uint64_t>();
  h.S_T = j.at("S_T").get<double>();
  h.sup_g = j.at("sup_g").get<double>();
  h.avg_grad_sq = j.at("avg_grad_sq").get<double>();
  h.min_grad_sq = j.at("min_grad_sq").get<double>();
  h.final_grad_sq = j.at("final_grad_sq").get<double>();
  h.invsqrtS_partial = j.at("invsqrtS_partial").get<double>();
  const Json& v = j.at("v_drift");
  h.v_drift = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  return h;
}

/// Largest number of excursion triples written per seed; the counts are
/// always complete.
inline constexpr std::size_t kMaxTriplesPerSeed = 1000;

inline Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json trajectory_json(const TrajectoryResult& r) {
  Json j;
  j["seed_index"] = r.seed_index;
  j["csv"] = seed_file_name(r.seed_index);
  j["steps"] = r.steps;
  j["status"] = r.abort ? "aborted" : "ok";
  if (r.abort) j["abort"] = {{"step", r.abort->step}, {"message", r.abort->message}};
  Json hs = Json::array();
  for (const auto& h : r.horizons) hs.push_back(horizon_json(h));
  j["horizons"] = hs;
  const auto& c = r.counters;
  j["invariants"] = {{"gamma_out_of_range", c.gamma_out_of_range},
                     {"step_exceeds_alpha0", c.step_exceeds_alpha0},
                     {"adjacency_violations", c.adjacency_violations},
                     {"max_adjacency_excess", finite_or_null(c.max_adjacency_excess)},
                     {"eta_increases", c.eta_increases},
                     {"tv_decreases", c.tv_decreases},
                     {"property2_violations", c.property2_violations},
                     {"min_property2_ratio", finite_or_null(c.min_property2_ratio)}};
  if (r.sufficient_decrease) {
    const auto& s = *r.sufficient_decrease;
    j["sufficient_decrease"] = {
        {"count", s.count}, {"mean", s.mean}, {"se", s.se}, {"pass", s.pass}};
  }
  if (r.excursions) {
    const auto& e = *r.excursions;
    Json triples = Json::array();
    for (std::size_t k = 0; k < e.triples.size() && k < kMaxTriplesPerSeed; ++k) {
      const auto& t = e.triples[k];
      Json row = {t.enter, t.exit_band, t.settle};
      if (t.open) row.push_back("open");
      triples.push_back(row);
    }
    j["excursions"] = {{"count", e.triples.size()},
                       {"overshoot_count", e.overshoot_count},
                       {"triples", triples},
                       {"truncated", e.triples.size() > kMaxTriplesPerSeed}};
  }
  if (!r.replicate_checks.empty()) {
    Json reps = Json::array();
    for (const auto& c2 : r.replicate_checks) {
      reps.push_back({{"n", c2.n},
                      {"max_mean_z", finite_or_null(c2.max_mean_z)},
                      {"mean_normsq", c2.mean_normsq},
                      {"se_normsq", c2.se_normsq},
                      {"affine_bound", c2.affine_bound},
                      {"pass", c2.pass}});
    }
    j["replicate_checks"] = reps;
  }
  return j;
}

struct RunOptions {
  std::optional<unsigned> jobs;
  bool quiet = true;
  std::optional<std::string> output_dir;  // overrides config and environment
  bool record_timing = false;             // adds wall-clock seconds to the manifest
  std::function<void(const std::string&)> log;
};

struct RunSummary {
  std::filesystem::path output_dir;
  std::uint64_t seeds = 0;
  std::uint64_t aborted = 0;
  ResolvedConstants constants;
  Json manifest;
};

inline unsigned default_jobs() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

/// Which results of the analysis rely on the oracle's noise staying bounded
/// near critical points, and whether this run certifies them.
inline Json theorem_coverage(const Problem& p) {
  const bool bounded = p.oracle.near_critical_bounded();
  Json j;
  j["independent_of_near_critical_bound"] = {"sufficient_decrease", "stability_sup_g",
                                             "expected_S_linear_growth", "step_size_divergence",
                                             "average_gradient_rate", "high_probability_rate"};
  j["near_critical_dependent"] = {"almost_sure_convergence", "mean_square_convergence"};
  j["near_critical_dependent_certified"] = bounded;
  if (!bounded) {
    j["note"] = "assumption not satisfied; asymptotic theorems not certified for this oracle";
  }
  return j;
}

inline Json build_manifest(const Problem& p, const ResolvedConstants& c, const std::string& delta0_source,
                           const std::optional<std::string>& dir_override,
                           const std::vector<TrajectoryResult>& results) {
  Json m;
  m["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  m["config"] = p.config.to_json(true);
  m["config_fingerprint"] = config_fingerprint(p.config);
  if (dir_override) m["output_dir_override"] = *dir_override;
  Json r;
  r["L"] = c.L;
  r["gstar"] = c.gstar;
  r["sigma0"] = c.norm.sigma0;
  r["sigma1"] = c.norm.sigma1;
  r["coordinate_sigma0"] = c.coordinate.sigma0;
  r["coordinate_sigma1"] = c.coordinate.sigma1;
  r["noise_constants_source"] = p.mini_batch_fitted ? "fit-on-start" : "declared";
  if (c.r1) r["r1"] = *c.r1;
  if (c.c_gamma1) r["C_gamma1"] = *c.c_gamma1;
  if (c.c_gamma2) r["C_gamma2"] = *c.c_gamma2;
  r["delta0"] = c.delta0;
  r["delta0_source"] = delta0_source;
  m["resolved"] = r;
  m["assumptions"] = {{"smooth", true},
                      {"lower_bounded", true},
                      {"coercive", p.objective.coercive()},
                      {"not_asymptotically_flat", p.objective.nonflat()},
                      {"affine_noise_variance", true},
                      {"coordinate_affine_noise_variance", p.oracle.coordinatewise_affine()},
                      {"bounded_near_critical_points", p.oracle.near_critical_bounded()},
                      {"empirically_certified", false}};
  m["theorems"] = theorem_coverage(p);
  std::uint64_t aborted = 0;
  Json seeds = Json::array();
  for (const auto& t : results) {
    if (t.abort) ++aborted;
    seeds.push_back(trajectory_json(t));
  }
  m["aborted"] = aborted;
  m["trajectories"] = seeds;
  return m;
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

/// Runs every seed of the ensemble on a pool of worker threads, writing one
/// CSV per seed and a manifest. Outputs do not depend on the worker count.
inline RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  const auto say = [&](const std::string& s) {
    if (!opts.quiet && opts.log) opts.log(s);
  };
  std::optional<std::string> dir_override;
  std::string dir = cfg.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
    dir = env;
    dir_override = dir;
  }
  if (opts.output_dir) {
    dir = *opts.output_dir;
    dir_override = dir;
  }

  const auto started = std::chrono::steady_clock::now();
  const Problem problem = resolve_problem(cfg);
  const Delta0Resolution d0 = resolve_delta0(problem);
  const double delta0 = d0.value;
  const std::string& delta0_source = d0.source;
  const ResolvedConstants constants = resolve_constants(problem, delta0);

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());

  const unsigned jobs = std::max(1u, std::min<unsigned>(opts.jobs.value_or(cfg.jobs.value_or(default_jobs())),
                                                        static_cast<unsigned>(cfg.seed_count)));
  say("running " + std::to_string(cfg.seed_count) + " seeds x " + std::to_string(cfg.T) +
      " steps on " + std::to_string(jobs) + " worker(s)");

  std::vector<TrajectoryResult> results(cfg.seed_count);
  std::atomic<std::uint64_t> next{0};
  std::mutex log_mutex;
  std::vector<std::uint64_t> completion_log;
  std::optional<std::string> io_failure;

  const auto worker = [&] {
    for (;;) {
      const std::uint64_t i = next.fetch_add(1);
      if (i >= cfg.seed_count) return;
      TrajectoryRun run = run_trajectory(problem, i, delta0);
      try {
        write_trajectory_csv(std::filesystem::path(dir) / seed_file_name(i), run.rows);
      } catch (const IoError& e) {
        std::lock_guard lock(log_mutex);
        if (!io_failure) io_failure = e.what();
      }
      results[i] = std::move(run.result);
      std::lock_guard lock(log_mutex);
      completion_log.push_back(i);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < jobs; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (io_failure) throw IoError(*io_failure);

  RunSummary summary;
  summary.output_dir = dir;
  summary.seeds = cfg.seed_count;
  summary.constants = constants;
  summary.manifest = build_manifest(problem, constants, delta0_source, dir_override, results);
  summary.aborted = summary.manifest["aborted"].get<std::uint64_t>();
  if (opts.record_timing) {
    summary.manifest["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }
  write_json(std::filesystem::path(dir) / "manifest.json", summary.manifest);
  say("wrote " + std::to_string(cfg.seed_count) + " trajectories to " + dir);
  return summary;
}

}  // namespace adalab
