#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "adalab/analysis.hpp"
#include "adalab/config.hpp"
#include "adalab/errors.hpp"
#include "adalab/experiment.hpp"
#include "adalab/optimizers.hpp"
#include "adalab/telemetry.hpp"

namespace adalab {

// Verdict thresholds.
inline constexpr double kSlopeBand = 0.2;             // A1: slope within (1 +- band) sigma1
inline constexpr double kLinearR2 = 0.999;            // A1
inline constexpr double kRateLow = -0.7;              // A2
inline constexpr double kRateHigh = -0.45;            // A2
inline constexpr double kRateR2 = 0.98;               // A2
inline constexpr double kPlateauTolerance = 0.05;     // A3
inline constexpr double kDivergenceRatio = 2.5;       // A5
inline constexpr double kHighProbHorizon = 10'000.0;  // A6
inline constexpr double kVDriftTolerance = 0.05;      // A8
inline constexpr double kVDriftFraction = 0.95;       // A8
inline constexpr double kMaxAbortFraction = 0.01;

/// One seed's manifest entry plus the horizon rows read back from its CSV.
struct SeedRecord {
  std::uint64_t seed_index = 0;
  bool aborted = false;
  std::vector<HorizonValues> horizons;
  InvariantCounters counters;
  std::optional<SufficientDecreaseSummary> sufficient_decrease;
};

struct RunData {
  std::filesystem::path dir;
  Json manifest;
  ExperimentConfig config;
  std::string fingerprint;
  std::vector<SeedRecord> seeds;

  std::uint64_t aborted() const {
    std::uint64_t n = 0;
    for (const auto& s : seeds) n += s.aborted ? 1 : 0;
    return n;
  }
};

namespace detail {

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline double parse_csv_double(std::string_view field, const std::string& where) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), x);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw IoError(where + ": cannot parse '" + std::string(field) + "'");
  }
  return x;
}

inline StepRow parse_csv_row(const std::string& line, const std::string& where) {
  std::vector<std::string_view> f;
  std::string_view rest(line);
  for (;;) {
    const auto comma = rest.find(',');
    f.push_back(rest.substr(0, comma));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (f.size() != 11) throw IoError(where + ": expected 11 fields, found " + std::to_string(f.size()));
  StepRow r;
  const auto [ptr, ec] = std::from_chars(f[0].data(), f[0].data() + f[0].size(), r.n);
  if (ec != std::errc() || ptr != f[0].data() + f[0].size()) {
    throw IoError(where + ": bad step index '" + std::string(f[0]) + "'");
  }
  double* fields[] = {&r.g,    &r.grad_sq,   &r.S_prev,    &r.S,
                      &r.zeta, &r.gamma,     &r.ghat,      &r.step_norm,
                      &r.invsqrtS_partial, &r.running_sup_g};
  for (std::size_t k = 0; k < 10; ++k) *fields[k] = parse_csv_double(f[k + 1], where);
  return r;
}

/// Rows of a trajectory CSV at the requested step indices.
inline std::map<std::uint64_t, StepRow> read_csv_rows(const std::filesystem::path& path,
                                                      const std::vector<std::uint64_t>& wanted) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kStepCsvHeader) {
    throw IoError("'" + path.string() + "': missing or unexpected header");
  }
  std::map<std::uint64_t, StepRow> out;
  std::uint64_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    std::uint64_t n = 0;
    std::from_chars(line.data(), line.data() + comma, n);
    if (!std::binary_search(wanted.begin(), wanted.end(), n)) continue;
    out.emplace(n, parse_csv_row(line, path.string() + ":" + std::to_string(line_no)));
  }
  return out;
}

inline InvariantCounters counters_from_json(const Json& j) {
  InvariantCounters c;
  c.gamma_out_of_range = j.at("gamma_out_of_range").get<std::uint64_t>();
  c.step_exceeds_alpha0 = j.at("step_exceeds_alpha0").get<std::uint64_t>();
  c.adjacency_violations = j.at("adjacency_violations").get<std::uint64_t>();
  c.eta_increases = j.at("eta_increases").get<std::uint64_t>();
  c.tv_decreases = j.at("tv_decreases").get<std::uint64_t>();
  c.property2_violations = j.at("property2_violations").get<std::uint64_t>();
  const Json& r = j.at("min_property2_ratio");
  if (!r.is_null()) c.min_property2_ratio = r.get<double>();
  const Json& a = j.at("max_adjacency_excess");
  if (!a.is_null()) c.max_adjacency_excess = a.get<double>();
  return c;
}

}  // namespace detail

/// Loads a run directory: the manifest, then every seed's CSV, whose horizon
/// rows must agree exactly with the manifest values.
inline RunData load_run(const std::filesystem::path& dir) {
  RunData run;
  run.dir = dir;
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) {
    throw IoError("'" + dir.string() + "' has no manifest.json");
  }
  run.manifest = detail::read_json_file(manifest_path);
  try {
    run.config = parse_config(run.manifest.at("config"));
    run.fingerprint = run.manifest.at("config_fingerprint").get<std::string>();
  } catch (const Json::exception& e) {
    throw IoError("manifest: " + std::string(e.what()));
  }
  if (run.fingerprint != config_fingerprint(run.config)) {
    throw IoError("manifest: config echo does not match its fingerprint");
  }

  std::map<std::uint64_t, const Json*> entries;
  for (const Json& t : run.manifest.at("trajectories")) {
    entries[t.at("seed_index").get<std::uint64_t>()] = &t;
  }
  std::vector<std::uint64_t> missing;
  for (std::uint64_t i = 0; i < run.config.seed_count; ++i) {
    if (!entries.contains(i) || !std::filesystem::exists(dir / seed_file_name(i))) {
      missing.push_back(i);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (std::uint64_t i : missing) {
      list += (list.empty() ? "" : ", ") + std::to_string(i) + " (" + seed_file_name(i) + ")";
    }
    throw IoError("missing outputs for " + std::to_string(missing.size()) + " seed(s): " + list);
  }

  for (std::uint64_t i = 0; i < run.config.seed_count; ++i) {
    const Json& t = *entries.at(i);
    SeedRecord s;
    s.seed_index = i;
    s.aborted = t.at("status").get<std::string>() != "ok";
    for (const Json& h : t.at("horizons")) s.horizons.push_back(horizon_from_json(h));
    s.counters = detail::counters_from_json(t.at("invariants"));
    if (t.contains("sufficient_decrease")) {
      const Json& sd = t.at("sufficient_decrease");
      s.sufficient_decrease = SufficientDecreaseSummary{
          sd.at("count").get<std::uint64_t>(), sd.at("mean").get<double>(),
          sd.at("se").get<double>(), sd.at("pass").get<bool>()};
    }

    std::vector<std::uint64_t> wanted;
    for (const auto& h : s.horizons) wanted.push_back(h.T);
    const auto path = dir / seed_file_name(i);
    const auto rows = detail::read_csv_rows(path, wanted);
    for (const auto& h : s.horizons) {
      const auto it = rows.find(h.T);
      if (it == rows.end()) {
        throw IoError("'" + path.string() + "' has no row for horizon " + std::to_string(h.T));
      }
      const StepRow& r = it->second;
      if (r.S != h.S_T || r.running_sup_g != h.sup_g || r.grad_sq != h.final_grad_sq ||
          r.invsqrtS_partial != h.invsqrtS_partial) {
        throw IoError("'" + path.string() + "' disagrees with the manifest at n=" +
                      std::to_string(h.T));
      }
    }
    if (!s.aborted && s.horizons.size() != run.config.horizons.size()) {
      throw IoError("manifest: seed " + std::to_string(i) + " is missing horizon values");
    }
    run.seeds.push_back(std::move(s));
  }
  return run;
}

inline std::vector<Checkpoint> checkpoints_of(const RunData& run) {
  std::vector<TrajectoryOutput> outputs;
  for (const auto& s : run.seeds) {
    if (!s.aborted) outputs.push_back({run.fingerprint, s.seed_index, s.horizons});
  }
  if (outputs.empty()) return {};
  return aggregate(outputs, run.config.horizons);
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

enum class Verdict { Pass, Fail, NotApplicable };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "FAIL";
    case Verdict::NotApplicable: return "n/a";
  }
  return "?";
}

struct CriterionResult {
  std::string id;
  std::string title;
  Verdict verdict = Verdict::NotApplicable;
  std::string detail;
  Json data = Json::object();
};

namespace detail {

inline std::string fmt(double x, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << x;
  return s.str();
}

inline const Checkpoint* find_checkpoint(const std::vector<Checkpoint>& cps, std::uint64_t T) {
  for (const auto& cp : cps) {
    if (cp.T == T) return &cp;
  }
  return nullptr;
}

/// Last checkpoint together with the one a decade earlier, if both exist.
inline std::optional<std::pair<const Checkpoint*, const Checkpoint*>> last_decade(
    const std::vector<Checkpoint>& cps) {
  if (cps.empty() || cps.back().T % 10 != 0) return std::nullopt;
  const Checkpoint* a = find_checkpoint(cps, cps.back().T / 10);
  if (!a) return std::nullopt;
  return std::make_pair(a, &cps.back());
}

inline CriterionResult na(std::string id, std::string title, std::string why) {
  return {std::move(id), std::move(title), Verdict::NotApplicable, std::move(why), Json::object()};
}

inline Verdict verdict_of(bool pass) { return pass ? Verdict::Pass : Verdict::Fail; }

inline bool noiseless_oracle(const OracleConfig& o) {
  if (const auto* a = std::get_if<AdditiveGaussianConfig>(&o)) return a->sigma == 0.0;
  if (const auto* m = std::get_if<MultiplicativeConfig>(&o)) return m->gamma == 0.0;
  return false;
}

}  // namespace detail

inline CriterionResult verdict_linear_growth(const RunData& run, const std::vector<Checkpoint>& cps) {
  const std::string title = "linear growth of E[S_T]";
  if (!std::holds_alternative<AdaGradNormConfig>(run.config.optimizer)) {
    return detail::na("A1", title, "AdaGrad-Norm runs only");
  }
  if (!std::holds_alternative<AdditiveGaussianConfig>(run.config.oracle)) {
    return detail::na("A1", title, "needs an oracle whose sigma1 is the exact noise floor");
  }
  std::vector<Checkpoint> tail;
  for (const auto& cp : cps) {
    if (cp.T >= 1000) tail.push_back(cp);
  }
  if (tail.size() < 3) return detail::na("A1", title, "needs 3 horizons >= 1e3");
  const double sigma1 = run.manifest.at("resolved").at("sigma1").get<double>();
  const LinearFit f = linear_growth_check(tail);
  const double lo = (1.0 - kSlopeBand) * sigma1;
  const double hi = (1.0 + kSlopeBand) * sigma1;
  const bool pass = f.r_squared >= kLinearR2 && f.slope >= lo && f.slope <= hi;
  return {"A1", title, detail::verdict_of(pass),
          "slope " + detail::fmt(f.slope) + " in [" + detail::fmt(lo) + ", " + detail::fmt(hi) +
              "], r2 " + detail::fmt(f.r_squared, 6) + " >= " + detail::fmt(kLinearR2),
          {{"slope", f.slope}, {"intercept", f.intercept}, {"r_squared", f.r_squared},
           {"band", {lo, hi}}}};
}

inline CriterionResult verdict_rate(const RunData& run, const std::vector<Checkpoint>& cps) {
  const std::string title = "near-optimal rate of A(T)";
  if (!std::holds_alternative<AdaGradNormConfig>(run.config.optimizer)) {
    return detail::na("A2", title, "AdaGrad-Norm runs only");
  }
  if (detail::noiseless_oracle(run.config.oracle)) {
    return detail::na("A2", title, "noiseless oracle converges linearly; the band is for noisy runs");
  }
  try {
    const RateFit f = fit_rate(cps, Metric::AvgGradSq, true);
    const bool pass = f.exponent_hat >= kRateLow && f.exponent_hat <= kRateHigh && f.r_squared >= kRateR2;
    return {"A2", title, detail::verdict_of(pass),
            "exponent " + detail::fmt(f.exponent_hat) + " in [" + detail::fmt(kRateLow) + ", " +
                detail::fmt(kRateHigh) + "], r2 " + detail::fmt(f.r_squared) + " >= " +
                detail::fmt(kRateR2),
            {{"exponent_hat", f.exponent_hat}, {"constant_hat", f.constant_hat},
             {"r_squared", f.r_squared}, {"log_corrected", true}}};
  } catch (const UsageError& e) {
    return detail::na("A2", title, e.what());
  } catch (const DomainError& e) {
    return {"A2", title, Verdict::Fail, e.what(), Json::object()};
  }
}

inline CriterionResult verdict_plateau(const RunData& run, const std::vector<Checkpoint>& cps) {
  const std::string title = "stability plateau of E[sup g]";
  if (!std::holds_alternative<AdaGradNormConfig>(run.config.optimizer)) {
    return detail::na("A3", title, "AdaGrad-Norm runs only");
  }
  const auto pair = detail::last_decade(cps);
  if (!pair) return detail::na("A3", title, "needs horizons T and 10T");
  try {
    const PlateauResult r = stability_plateau_check(*pair->first, *pair->second, kPlateauTolerance);
    return {"A3", title, detail::verdict_of(r.pass),
            "rise " + detail::fmt(r.relative_increase) + " < " + detail::fmt(kPlateauTolerance) +
                " + " + detail::fmt(r.relative_slack) + " (T " + std::to_string(pair->first->T) +
                " -> " + std::to_string(pair->second->T) + ")",
            {{"relative_increase", r.relative_increase}, {"relative_slack", r.relative_slack}}};
  } catch (const DomainError& e) {
    return {"A3", title, Verdict::Fail, e.what(), Json::object()};
  }
}

inline CriterionResult verdict_msc(const RunData& run, const std::vector<Checkpoint>& cps) {
  const std::string title = "mean-square decay of |grad g(theta_T)|^2";
  if (!std::holds_alternative<AdaGradNormConfig>(run.config.optimizer)) {
    return detail::na("A4", title, "AdaGrad-Norm runs only");
  }
  if (cps.size() < 3) return detail::na("A4", title, "needs 3 horizons");
  const DecayReport r = msc_decay_check(cps, run.config.msc_threshold);
  std::string d = std::string(r.monotone ? "non-increasing" : "rises") + " within 2 SE, final " +
                  detail::fmt(r.means.back()) + (r.below_threshold ? " < " : " >= ") +
                  detail::fmt(run.config.msc_threshold);
  return {"A4", title, detail::verdict_of(r.pass), d,
          {{"means", r.means}, {"slacks", r.slacks}, {"monotone", r.monotone},
           {"below_threshold", r.below_threshold}}};
}

inline CriterionResult verdict_divergence(const RunData& run, const std::vector<Checkpoint>& cps) {
  const std::string title = "divergence of sum 1/sqrt(S_n)";
  if (!std::holds_alternative<AdaGradNormConfig>(run.config.optimizer)) {
    return detail::na("A5", title, "AdaGrad-Norm runs only");
  }
  const auto pair = detail::last_decade(cps);
  if (!pair) return detail::na("A5", title, "needs horizons T and 10T");
  const RatioResult r = divergence_check(*pair->first, *pair->second, kDivergenceRatio);
  return {"A5", title, detail::verdict_of(r.pass),
          "ratio " + detail::fmt(r.ratio) + " >= " + detail::fmt(kDivergenceRatio),
          {{"ratio", r.ratio}}};
}

inline CriterionResult verdict_high_prob(const RunData& run, const std::vector<Checkpoint>& cps) {
  const std::string title = "high-probability bound on A(T)";
  if (!std::holds_alternative<AdaGradNormConfig>(run.config.optimizer)) {
    return detail::na("A6", title, "AdaGrad-Norm runs only");
  }
  if (cps.empty()) return detail::na("A6", title, "no checkpoints");
  const Checkpoint* cp = detail::find_checkpoint(cps, static_cast<std::uint64_t>(kHighProbHorizon));
  if (!cp) cp = &cps.back();
  if (cp->seeds() < 50) return detail::na("A6", title, "needs >= 50 seeds");
  bool pass = true;
  std::string d;
  Json data = Json::array();
  for (double delta : {0.1, 0.25}) {
    const HighProbResult r = high_prob_check(*cp, Metric::AvgGradSq, delta);
    pass = pass && r.pass;
    d += (d.empty() ? "" : "; ") + std::string("delta ") + detail::fmt(delta) + ": " +
         detail::fmt(r.empirical_exceed_fraction) + " <= " + detail::fmt(r.allowed_fraction);
    data.push_back({{"delta", delta}, {"exceed_fraction", r.empirical_exceed_fraction},
                    {"allowed_fraction", r.allowed_fraction}, {"markov_bound", r.markov_bound}});
  }
  return {"A6", title, detail::verdict_of(pass), d + " at T=" + std::to_string(cp->T),
          {{"T", cp->T}, {"checks", data}}};
}

inline CriterionResult verdict_rmsprop_invariants(const RunData& run) {
  const std::string title = "RMSProp stepsize and moment properties";
  const auto* r = std::get_if<RmsPropConfig>(&run.config.optimizer);
  if (!r) return detail::na("A7", title, "RMSProp runs only");
  std::uint64_t eta = 0, tv = 0, p2 = 0;
  double min_ratio = INFINITY;
  for (const auto& s : run.seeds) {
    eta += s.counters.eta_increases;
    tv += s.counters.tv_decreases;
    p2 += s.counters.property2_violations;
    min_ratio = std::min(min_ratio, s.counters.min_property2_ratio);
  }
  const double beta2 = rmsprop_beta(2, r->beta1);
  const double alpha2 = rmsprop_alpha(2);
  const bool spot = beta2 == 0.5 && alpha2 == 1.0 / std::sqrt(2.0);
  const bool pass = eta == 0 && tv == 0 && p2 == 0 && spot;
  return {"A7", title, detail::verdict_of(pass),
          "eta increases " + std::to_string(eta) + ", t*v decreases " + std::to_string(tv) +
              ", property-2 violations " + std::to_string(p2) + " (min ratio " +
              detail::fmt(min_ratio, 12) + "), beta_2=" + detail::fmt(beta2) +
              " alpha_2=" + detail::fmt(alpha2, 17),
          {{"eta_increases", eta}, {"tv_decreases", tv}, {"property2_violations", p2},
           {"min_property2_ratio", finite_or_null(min_ratio)}, {"beta2", beta2}, {"alpha2", alpha2}}};
}

inline CriterionResult verdict_v_drift(const RunData& run, const std::vector<Checkpoint>& cps) {
  const std::string title = "RMSProp v convergence proxy";
  if (!std::holds_alternative<RmsPropConfig>(run.config.optimizer)) {
    return detail::na("A8", title, "RMSProp runs only");
  }
  if (cps.empty()) return detail::na("A8", title, "no checkpoints");
  const FractionResult r = v_drift_check(cps.back(), kVDriftTolerance, kVDriftFraction);
  return {"A8", title, detail::verdict_of(r.pass),
          "fraction with drift <= " + detail::fmt(kVDriftTolerance) + ": " + detail::fmt(r.fraction) +
              " >= " + detail::fmt(kVDriftFraction) + " at T=" + std::to_string(cps.back().T),
          {{"fraction", r.fraction}, {"T", cps.back().T},
           {"median_drift", cps.back().stats(Metric::VDrift).quantiles[0]}}};
}

inline CriterionResult verdict_sufficient_decrease(const RunData& run) {
  const std::string title = "aggregate sufficient decrease";
  if (!std::holds_alternative<AdaGradNormConfig>(run.config.optimizer)) {
    return detail::na("A9", title, "AdaGrad-Norm runs only");
  }
  std::uint64_t checked = 0, failed = 0;
  double worst = -INFINITY;
  for (const auto& s : run.seeds) {
    if (s.aborted || !s.sufficient_decrease) continue;
    ++checked;
    const auto& sd = *s.sufficient_decrease;
    if (!sd.pass) ++failed;
    if (sd.se > 0.0) worst = std::max(worst, sd.mean / sd.se);
  }
  return {"A9", title, detail::verdict_of(checked > 0 && failed == 0),
          std::to_string(failed) + " of " + std::to_string(checked) +
              " seeds with mean residual > 3 SE (largest mean/SE " + detail::fmt(worst) + ")",
          {{"seeds_checked", checked}, {"seeds_failed", failed}, {"max_mean_over_se", finite_or_null(worst)}}};
}

inline CriterionResult verdict_step_invariants(const RunData& run) {
  std::uint64_t gamma = 0, step = 0, adjacency = 0;
  double worst = -INFINITY;
  for (const auto& s : run.seeds) {
    gamma += s.counters.gamma_out_of_range;
    step += s.counters.step_exceeds_alpha0;
    adjacency += s.counters.adjacency_violations;
    worst = std::max(worst, s.counters.max_adjacency_excess);
  }
  std::string d = "Gamma outside [0,1]: " + std::to_string(gamma);
  if (std::holds_alternative<AdaGradNormConfig>(run.config.optimizer)) {
    d += ", step > alpha0: " + std::to_string(step) + ", adjacency violations: " +
         std::to_string(adjacency) + " (max excess " + detail::fmt(worst) + ")";
  }
  return {"INV", "per-step invariants", detail::verdict_of(gamma + step + adjacency == 0), d,
          {{"gamma_out_of_range", gamma}, {"step_exceeds_alpha0", step},
           {"adjacency_violations", adjacency}, {"max_adjacency_excess", finite_or_null(worst)}}};
}

inline CriterionResult verdict_aborts(const RunData& run) {
  const std::uint64_t n = run.aborted();
  const double frac = static_cast<double>(n) / static_cast<double>(run.seeds.size());
  return {"ABORT", "aborted trajectories", detail::verdict_of(frac <= kMaxAbortFraction),
          std::to_string(n) + " of " + std::to_string(run.seeds.size()) + " aborted (limit " +
              detail::fmt(100.0 * kMaxAbortFraction) + "%)",
          {{"aborted", n}, {"fraction", frac}}};
}

struct Report {
  std::vector<Checkpoint> checkpoints;
  std::vector<CriterionResult> verdicts;
  Json summary;

  bool pass() const {
    for (const auto& v : verdicts) {
      if (v.verdict == Verdict::Fail) return false;
    }
    return true;
  }
};

inline std::vector<CriterionResult> evaluate_verdicts(const RunData& run,
                                                      const std::vector<Checkpoint>& cps) {
  std::vector<CriterionResult> out;
  out.push_back(verdict_aborts(run));
  if (cps.empty()) return out;
  out.push_back(verdict_linear_growth(run, cps));
  out.push_back(verdict_rate(run, cps));
  out.push_back(verdict_plateau(run, cps));
  out.push_back(verdict_msc(run, cps));
  out.push_back(verdict_divergence(run, cps));
  out.push_back(verdict_high_prob(run, cps));
  out.push_back(verdict_rmsprop_invariants(run));
  out.push_back(verdict_v_drift(run, cps));
  out.push_back(verdict_sufficient_decrease(run));
  out.push_back(verdict_step_invariants(run));
  return out;
}

inline Json stats_json(const MetricStats& s) {
  Json q = Json::object();
  for (std::size_t k = 0; k < kQuantileLevels.size(); ++k) {
    q["p" + std::to_string(static_cast<int>(std::lround(kQuantileLevels[k] * 100)))] =
        finite_or_null(s.quantiles[k]);
  }
  return {{"mean", finite_or_null(s.mean)},
          {"sd", finite_or_null(s.sd)},
          {"se", s.se ? finite_or_null(*s.se) : Json(nullptr)},
          {"quantiles", q}};
}

inline bool metric_applies(const RunData& run, Metric m) {
  return m != Metric::VDrift || std::holds_alternative<RmsPropConfig>(run.config.optimizer);
}

inline Report build_report(const RunData& run) {
  Report rep;
  rep.checkpoints = checkpoints_of(run);
  rep.verdicts = evaluate_verdicts(run, rep.checkpoints);

  Json s;
  s["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  s["config_fingerprint"] = run.fingerprint;
  s["name"] = run.config.name;
  s["seeds"] = run.seeds.size();
  s["aborted"] = run.aborted();
  Json cps = Json::array();
  for (const auto& cp : rep.checkpoints) {
    Json metrics = Json::object();
    for (Metric m : kAllMetrics) {
      if (metric_applies(run, m)) metrics[std::string(to_string(m))] = stats_json(cp.stats(m));
    }
    cps.push_back({{"T", cp.T}, {"seeds", cp.seeds()}, {"metrics", metrics}});
  }
  s["checkpoints"] = cps;

  Json fits = Json::object();
  for (bool corrected : {false, true}) {
    try {
      const RateFit f = fit_rate(rep.checkpoints, Metric::AvgGradSq, corrected);
      fits[corrected ? "avg_grad_sq_log_corrected" : "avg_grad_sq"] = {
          {"exponent_hat", f.exponent_hat}, {"constant_hat", f.constant_hat},
          {"r_squared", f.r_squared}};
    } catch (const std::exception&) {
      fits[corrected ? "avg_grad_sq_log_corrected" : "avg_grad_sq"] = nullptr;
    }
  }
  try {
    const LinearFit f = linear_growth_check(rep.checkpoints);
    fits["S_T_linear"] = {{"slope", f.slope}, {"intercept", f.intercept}, {"r_squared", f.r_squared}};
  } catch (const std::exception&) {
    fits["S_T_linear"] = nullptr;
  }
  s["fits"] = fits;

  Json verdicts = Json::array();
  for (const auto& v : rep.verdicts) {
    verdicts.push_back({{"id", v.id}, {"title", v.title}, {"verdict", to_string(v.verdict)},
                        {"detail", v.detail}, {"data", v.data}});
  }
  s["verdicts"] = verdicts;
  s["pass"] = rep.pass();
  rep.summary = s;
  return rep;
}

/// Flat table for plotting: one row per (horizon, metric).
inline void write_table_csv(const std::filesystem::path& path, const RunData& run, const Report& rep) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "T,metric,seeds,mean,sd,se,q50,q75,q90,q95\n";
  for (const auto& cp : rep.checkpoints) {
    for (Metric m : kAllMetrics) {
      if (!metric_applies(run, m)) continue;
      const MetricStats st = cp.stats(m);
      out << cp.T << ',' << to_string(m) << ',' << cp.seeds() << ',' << format_double(st.mean) << ','
          << format_double(st.sd) << ',' << (st.se ? format_double(*st.se) : "");
      for (double q : st.quantiles) out << ',' << format_double(q);
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void print_verdicts(std::ostream& os, const Report& rep) {
  for (const auto& v : rep.verdicts) {
    std::string id = v.id;
    id.resize(6, ' ');
    std::string verdict(to_string(v.verdict));
    verdict.resize(5, ' ');
    os << id << verdict << v.title << ": " << v.detail << '\n';
  }
  os << (rep.pass() ? "overall: pass" : "overall: FAIL") << '\n';
}

/// Reads a run directory, writes summary.json and table.csv next to it and
/// returns the report.
inline Report report_directory(const std::filesystem::path& dir) {
  const RunData run = load_run(dir);
  Report rep = build_report(run);
  write_json(dir / "summary.json", rep.summary);
  write_table_csv(dir / "table.csv", run, rep);
  return rep;
}

}  // namespace adalab
