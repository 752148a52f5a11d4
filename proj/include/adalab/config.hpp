#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "adalab/errors.hpp"
#include "adalab/objectives.hpp"
#include "adalab/optimizers.hpp"
#include "adalab/oracles.hpp"
#include "adalab/vector.hpp"

namespace adalab {

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::json;

struct QuadraticConfig {
  std::size_t dim = 0;
  std::vector<double> eigenvalues;
  std::vector<double> minimizer;
};

struct CosineWellConfig {
  std::size_t dim = 0;
  double amplitude = 0.0;
  double frequency = 0.0;
};

struct LogisticConfig {
  std::size_t samples = 0;
  std::size_t dim = 0;
  double label_noise = 0.1;
  double ridge = 0.1;
  std::uint64_t data_seed = 0;
};

struct ObjectiveConfig {
  std::variant<QuadraticConfig, CosineWellConfig, LogisticConfig> spec;
  std::optional<double> declared_L;

  std::size_t dim() const {
    return std::visit([](const auto& s) { return s.dim; }, spec);
  }
};

struct AdditiveGaussianConfig {
  double sigma = 1.0;
};

struct MultiplicativeConfig {
  double gamma = 0.5;
  MultiplierDistribution distribution = MultiplierDistribution::Rademacher;
};

/// Without declared constants the runner fits them on start.
struct MiniBatchConfig {
  std::size_t batch_size = 1;
  bool replacement = false;
  std::optional<AffineConstants> norm;
  std::optional<AffineConstants> coordinate;
};

using OracleConfig = std::variant<AdditiveGaussianConfig, MultiplicativeConfig, MiniBatchConfig>;

struct AdaGradNormConfig {
  double alpha0 = 1.0;
  double S0 = 1.0;
};

struct RmsPropConfig {
  double beta1 = 0.9;
  double eps = 1e-8;
  double v_init = 1e-6;
};

struct SgdConfig {
  double c = 1.0;
  double offset = 0.0;
  double S0 = 1.0;  // only seeds the diagnostic S column
};

using OptimizerConfig = std::variant<AdaGradNormConfig, RmsPropConfig, SgdConfig>;

/// Δ0 for excursion segmentation: a fixed value or a percentile of ĝ over
/// a pilot trajectory.
struct Delta0Config {
  std::optional<double> value;
  double percentile = 90.0;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string name;
  ObjectiveConfig objective;
  std::vector<double> initial_point;
  OracleConfig oracle;
  OptimizerConfig optimizer;
  std::uint64_t T = 0;
  std::vector<std::uint64_t> horizons;
  std::uint64_t seed_count = 1;
  std::uint64_t base_seed = 0;
  std::uint64_t record_stride = 1;
  std::uint64_t dense_prefix = 0;
  Delta0Config delta0;
  double msc_threshold = 0.05;
  std::uint64_t replicates = 0;
  double D0 = 1e-2;
  std::string output_dir = "out";
  std::optional<unsigned> jobs;

  /// Canonical JSON form. The worker count is never echoed since it cannot
  /// change any output; the output directory is optional.
  Json to_json(bool include_output_dir = true) const;
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

/// Walks one JSON object, tracking which keys were read so that leftovers
/// can be reported with their full path.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const Json& at(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(path_ + "." + key + ": required field missing");
    used_.insert(key);
    return j_.at(key);
  }

  std::string child(const std::string& key) const { return path_ + "." + key; }

  double number(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_number()) throw ConfigError(child(key) + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(child(key) + ": must be finite");
    return x;
  }

  double number(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
  }

  double positive(const std::string& key) {
    const double x = number(key);
    if (!(x > 0.0)) throw ConfigError(child(key) + ": must be positive");
    return x;
  }

  double positive(const std::string& key, double fallback) {
    return has(key) ? positive(key) : fallback;
  }

  std::uint64_t count(const std::string& key) {
    const Json& v = at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    if (v.is_number_float()) {
      const double x = v.get<double>();
      if (x >= 0.0 && x == std::floor(x) && x < 1.8e19) return static_cast<std::uint64_t>(x);
    }
    throw ConfigError(child(key) + ": expected a non-negative integer");
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback) {
    return has(key) ? count(key) : fallback;
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const Json& v = at(key);
    if (!v.is_boolean()) throw ConfigError(child(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_string()) throw ConfigError(child(key) + ": expected a string");
    return v.get<std::string>();
  }

  std::string string(const std::string& key, std::string fallback) {
    return has(key) ? string(key) : fallback;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.contains(key)) throw ConfigError(path_ + "." + key + ": unknown field");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline std::vector<double> number_list(const Json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + ": expected a list of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) {
      throw ConfigError(path + "[" + std::to_string(i) + "]: expected a number");
    }
    out.push_back(v[i].get<double>());
    if (!std::isfinite(out.back())) {
      throw ConfigError(path + "[" + std::to_string(i) + "]: must be finite");
    }
  }
  return out;
}

inline std::pair<double, double> range_pair(const Json& v, const std::string& path) {
  const auto r = number_list(v, path);
  if (r.size() != 2) throw ConfigError(path + ": expected [low, high]");
  return {r[0], r[1]};
}

/// A vector of length `dim` written as a list, {"fill": x},
/// {"linspace": [a, b]} or {"logspace": [a, b]} (geometric spacing).
inline std::vector<double> vector_spec(const Json& v, std::size_t dim, const std::string& path) {
  std::vector<double> out;
  if (v.is_array()) {
    out = number_list(v, path);
  } else {
    ObjectReader r(v, path);
    if (r.has("fill")) {
      out.assign(dim, r.number("fill"));
    } else if (r.has("linspace")) {
      const auto [a, b] = range_pair(r.at("linspace"), r.child("linspace"));
      for (std::size_t i = 0; i < dim; ++i) {
        const double t = dim == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(dim - 1);
        out.push_back(a + t * (b - a));
      }
    } else if (r.has("logspace")) {
      const auto [a, b] = range_pair(r.at("logspace"), r.child("logspace"));
      if (!(a > 0.0 && b > 0.0)) throw ConfigError(r.child("logspace") + ": bounds must be positive");
      for (std::size_t i = 0; i < dim; ++i) {
        const double t = dim == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(dim - 1);
        out.push_back(a * std::pow(b / a, t));
      }
    } else {
      throw ConfigError(path + ": expected a list or one of fill / linspace / logspace");
    }
    r.finish();
  }
  if (out.size() != dim) {
    throw ConfigError(path + ": expected " + std::to_string(dim) + " entries, got " +
                      std::to_string(out.size()));
  }
  return out;
}

inline ObjectiveConfig parse_objective(const Json& j) {
  ObjectReader r(j, "objective");
  const std::string type = r.string("type");
  ObjectiveConfig out;
  if (type == "quadratic") {
    QuadraticConfig q;
    q.dim = r.count("dim");
    if (q.dim == 0) throw ConfigError("objective.dim: must be >= 1");
    q.eigenvalues = vector_spec(r.at("eigenvalues"), q.dim, "objective.eigenvalues");
    for (double e : q.eigenvalues) {
      if (!(e > 0.0)) throw ConfigError("objective.eigenvalues: must be positive");
    }
    q.minimizer = r.has("minimizer") ? vector_spec(r.at("minimizer"), q.dim, "objective.minimizer")
                                     : std::vector<double>(q.dim, 0.0);
    out.spec = q;
  } else if (type == "cosine_well") {
    CosineWellConfig c;
    c.dim = r.count("dim");
    if (c.dim == 0) throw ConfigError("objective.dim: must be >= 1");
    c.amplitude = r.positive("amplitude");
    c.frequency = r.positive("frequency");
    out.spec = c;
  } else if (type == "logistic_l2") {
    LogisticConfig l;
    l.samples = r.count("samples");
    l.dim = r.count("dim");
    if (l.samples == 0 || l.dim == 0) throw ConfigError("objective: samples and dim must be >= 1");
    l.label_noise = r.number("label_noise", 0.1);
    if (l.label_noise < 0.0 || l.label_noise > 0.5) {
      throw ConfigError("objective.label_noise: must lie in [0, 0.5]");
    }
    l.ridge = r.positive("ridge", 0.1);
    l.data_seed = r.count("data_seed", 0);
    out.spec = l;
  } else {
    throw ConfigError("objective.type: unknown objective '" + type +
                      "' (expected quadratic, cosine_well or logistic_l2)");
  }
  if (r.has("declared_L")) out.declared_L = r.positive("declared_L");
  r.finish();
  return out;
}

inline AffineConstants affine_pair(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  AffineConstants c;
  c.sigma0 = r.number("sigma0");
  c.sigma1 = r.number("sigma1");
  if (c.sigma0 < 0.0 || c.sigma1 < 0.0) throw ConfigError(path + ": constants must be >= 0");
  r.finish();
  return c;
}

inline OracleConfig parse_oracle(const Json& j) {
  ObjectReader r(j, "oracle");
  const std::string type = r.string("type");
  OracleConfig out;
  if (type == "additive_gaussian") {
    out = AdditiveGaussianConfig{r.positive("sigma")};
  } else if (type == "multiplicative") {
    MultiplicativeConfig m;
    m.gamma = r.number("gamma");
    if (m.gamma < 0.0) throw ConfigError("oracle.gamma: must be >= 0");
    const std::string dist = r.string("distribution", "rademacher");
    if (dist == "rademacher") {
      m.distribution = MultiplierDistribution::Rademacher;
    } else if (dist == "gaussian") {
      m.distribution = MultiplierDistribution::Gaussian;
    } else {
      throw ConfigError("oracle.distribution: expected rademacher or gaussian");
    }
    out = m;
  } else if (type == "mini_batch") {
    MiniBatchConfig b;
    b.batch_size = r.count("batch_size");
    if (b.batch_size == 0) throw ConfigError("oracle.batch_size: must be >= 1");
    b.replacement = r.boolean("replacement", false);
    if (r.has("norm")) b.norm = affine_pair(r.at("norm"), "oracle.norm");
    if (r.has("coordinate")) b.coordinate = affine_pair(r.at("coordinate"), "oracle.coordinate");
    if (b.norm.has_value() != b.coordinate.has_value()) {
      throw ConfigError("oracle: give both norm and coordinate constants, or neither");
    }
    out = b;
  } else {
    throw ConfigError("oracle.type: unknown oracle '" + type +
                      "' (expected additive_gaussian, multiplicative or mini_batch)");
  }
  r.finish();
  return out;
}

inline OptimizerConfig parse_optimizer(const Json& j) {
  ObjectReader r(j, "optimizer");
  const std::string type = r.string("type");
  OptimizerConfig out;
  if (type == "adagrad_norm") {
    out = AdaGradNormConfig{r.positive("alpha0", 1.0), r.positive("S0", 1.0)};
  } else if (type == "rmsprop") {
    RmsPropConfig c;
    c.beta1 = r.number("beta1", 0.9);
    if (!(c.beta1 > 0.0 && c.beta1 < 1.0)) throw ConfigError("optimizer.beta1: must lie in (0, 1)");
    c.eps = r.positive("eps", 1e-8);
    c.v_init = r.positive("v_init", 1e-6);
    out = c;
  } else if (type == "sgd") {
    SgdConfig c;
    c.c = r.positive("c", 1.0);
    c.offset = r.number("offset", 0.0);
    if (!(c.offset > -1.0)) throw ConfigError("optimizer.offset: must exceed -1");
    c.S0 = r.positive("S0", 1.0);
    out = c;
  } else {
    throw ConfigError("optimizer.type: unknown optimizer '" + type +
                      "' (expected adagrad_norm, rmsprop or sgd)");
  }
  r.finish();
  return out;
}

inline Delta0Config parse_delta0(const Json& v) {
  Delta0Config d;
  if (v.is_number()) {
    d.value = v.get<double>();
    if (!(*d.value > 0.0) || !std::isfinite(*d.value)) throw ConfigError("delta0: must be positive");
    return d;
  }
  const std::string prefix = "auto-percentile:";
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s.rfind(prefix, 0) == 0) {
      try {
        std::size_t used = 0;
        d.percentile = std::stod(s.substr(prefix.size()), &used);
        if (used == s.size() - prefix.size() && d.percentile > 0.0 && d.percentile <= 100.0) {
          return d;
        }
      } catch (const std::exception&) {
      }
    }
  }
  throw ConfigError("delta0: expected a positive number or \"auto-percentile:p\" with p in (0, 100]");
}

}  // namespace detail

inline ExperimentConfig parse_config(const Json& j) {
  detail::ObjectReader r(j, "config");
  ExperimentConfig c;
  const auto version = r.count("schema_version");
  if (version != kSchemaVersion) {
    throw ConfigError("config.schema_version: unsupported version " + std::to_string(version) +
                      " (this build reads " + std::to_string(kSchemaVersion) + ")");
  }
  c.name = r.string("name", "");
  c.objective = detail::parse_objective(r.at("objective"));
  const std::size_t dim = c.objective.dim();
  c.initial_point = detail::vector_spec(r.at("initial_point"), dim, "config.initial_point");
  c.oracle = detail::parse_oracle(r.at("oracle"));
  c.optimizer = detail::parse_optimizer(r.at("optimizer"));
  c.T = r.count("T");
  if (c.T == 0) throw ConfigError("config.T: must be >= 1");
  if (r.has("horizons")) {
    const Json& h = r.at("horizons");
    if (!h.is_array() || h.empty()) throw ConfigError("config.horizons: expected a non-empty list");
    for (std::size_t i = 0; i < h.size(); ++i) {
      const std::string p = "config.horizons[" + std::to_string(i) + "]";
      double x = h[i].is_number() ? h[i].get<double>() : -1.0;
      if (!(x >= 1.0) || x != std::floor(x)) throw ConfigError(p + ": expected a positive integer");
      const auto t = static_cast<std::uint64_t>(x);
      if (t > c.T) throw ConfigError(p + ": exceeds T");
      if (!c.horizons.empty() && t <= c.horizons.back()) {
        throw ConfigError(p + ": horizons must be strictly increasing");
      }
      c.horizons.push_back(t);
    }
  } else {
    c.horizons = {c.T};
  }
  {
    detail::ObjectReader s(r.at("seeds"), "config.seeds");
    c.seed_count = s.count("count");
    if (c.seed_count == 0) throw ConfigError("config.seeds.count: must be >= 1");
    c.base_seed = s.count("base_seed", 0);
    s.finish();
  }
  c.record_stride = r.count("record_stride", 1);
  c.dense_prefix = r.count("dense_prefix", 0);
  if (r.has("delta0")) c.delta0 = detail::parse_delta0(r.at("delta0"));
  c.msc_threshold = r.positive("msc_threshold", 0.05);
  c.replicates = r.count("replicates", 0);
  if (c.replicates != 0 && c.replicates < 100) {
    throw ConfigError("config.replicates: must be 0 (off) or >= 100");
  }
  c.D0 = r.positive("D0", 1e-2);
  c.output_dir = r.string("output_dir", "out");
  if (r.has("jobs")) {
    const auto jobs = r.count("jobs");
    if (jobs == 0) throw ConfigError("config.jobs: must be >= 1");
    c.jobs = static_cast<unsigned>(jobs);
  }
  r.finish();

  if (const auto* mb = std::get_if<MiniBatchConfig>(&c.oracle)) {
    const auto* l = std::get_if<LogisticConfig>(&c.objective.spec);
    if (!l) throw ConfigError("oracle: mini_batch requires the logistic_l2 objective");
    if (!mb->replacement && mb->batch_size > l->samples) {
      throw ConfigError("oracle.batch_size: exceeds objective.samples without replacement");
    }
  }
  return c;
}

/// Parses config text; syntax errors carry line and column.
inline ExperimentConfig parse_config_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("syntax error at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Canonical serialization
// ---------------------------------------------------------------------------

inline Json ExperimentConfig::to_json(bool include_output_dir) const {
  Json j;
  j["schema_version"] = schema_version;
  if (!name.empty()) j["name"] = name;

  Json o;
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, QuadraticConfig>) {
          o["type"] = "quadratic";
          o["dim"] = s.dim;
          o["eigenvalues"] = s.eigenvalues;
          o["minimizer"] = s.minimizer;
        } else if constexpr (std::is_same_v<S, CosineWellConfig>) {
          o["type"] = "cosine_well";
          o["dim"] = s.dim;
          o["amplitude"] = s.amplitude;
          o["frequency"] = s.frequency;
        } else {
          o["type"] = "logistic_l2";
          o["samples"] = s.samples;
          o["dim"] = s.dim;
          o["label_noise"] = s.label_noise;
          o["ridge"] = s.ridge;
          o["data_seed"] = s.data_seed;
        }
      },
      objective.spec);
  if (objective.declared_L) o["declared_L"] = *objective.declared_L;
  j["objective"] = o;
  j["initial_point"] = initial_point;

  Json orc;
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, AdditiveGaussianConfig>) {
          orc["type"] = "additive_gaussian";
          orc["sigma"] = s.sigma;
        } else if constexpr (std::is_same_v<S, MultiplicativeConfig>) {
          orc["type"] = "multiplicative";
          orc["gamma"] = s.gamma;
          orc["distribution"] = std::string(to_string(s.distribution));
        } else {
          orc["type"] = "mini_batch";
          orc["batch_size"] = s.batch_size;
          orc["replacement"] = s.replacement;
          if (s.norm) orc["norm"] = {{"sigma0", s.norm->sigma0}, {"sigma1", s.norm->sigma1}};
          if (s.coordinate) {
            orc["coordinate"] = {{"sigma0", s.coordinate->sigma0},
                                 {"sigma1", s.coordinate->sigma1}};
          }
        }
      },
      oracle);
  j["oracle"] = orc;

  Json opt;
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, AdaGradNormConfig>) {
          opt = {{"type", "adagrad_norm"}, {"alpha0", s.alpha0}, {"S0", s.S0}};
        } else if constexpr (std::is_same_v<S, RmsPropConfig>) {
          opt = {{"type", "rmsprop"}, {"beta1", s.beta1}, {"eps", s.eps}, {"v_init", s.v_init}};
        } else {
          opt = {{"type", "sgd"}, {"c", s.c}, {"offset", s.offset}, {"S0", s.S0}};
        }
      },
      optimizer);
  j["optimizer"] = opt;

  j["T"] = T;
  j["horizons"] = horizons;
  j["seeds"] = {{"count", seed_count}, {"base_seed", base_seed}};
  j["record_stride"] = record_stride;
  j["dense_prefix"] = dense_prefix;
  if (delta0.value) {
    j["delta0"] = *delta0.value;
  } else {
    j["delta0"] = "auto-percentile:" + format_double(delta0.percentile);
  }
  j["msc_threshold"] = msc_threshold;
  j["replicates"] = replicates;
  j["D0"] = D0;
  if (include_output_dir) j["output_dir"] = output_dir;
  return j;
}

/// FNV-1a over the canonical config text without the output directory; tags
/// per-seed outputs so that aggregation can refuse to mix runs.
inline std::string config_fingerprint(const ExperimentConfig& c) {
  const std::string text = c.to_json(false).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex;
  ss.width(16);
  ss.fill('0');
  ss << h;
  return ss.str();
}

}  // namespace adalab
