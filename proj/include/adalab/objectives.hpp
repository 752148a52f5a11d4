#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "adalab/errors.hpp"
#include "adalab/rng.hpp"
#include "adalab/vector.hpp"

namespace adalab {

enum class ObjectiveKind { Quadratic, CosineWell, LogisticL2 };

inline std::string_view to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::Quadratic: return "quadratic";
    case ObjectiveKind::CosineWell: return "cosine_well";
    case ObjectiveKind::LogisticL2: return "logistic_l2";
  }
  return "unknown";
}

/// g(x) = 1/2 sum_i lambda_i (x_i - x*_i)^2
struct QuadraticSpec {
  std::vector<double> eigenvalues;
  Vector minimizer;
};

/// g(x) = sum_i [x_i^2 / 2 + a (1 + cos(b x_i))]. Non-convex when a b^2 > 1:
/// the origin is then a local maximum in every coordinate and mixed-sign
/// critical points are saddles.
struct CosineWellSpec {
  std::size_t dim = 1;
  double amplitude = 2.0;
  double frequency = 1.0;
};

/// g(x) = (1/N) sum_j log(1 + exp(-y_j <a_j, x>)) + (ridge/2) |x|^2, with
/// features stored row-major.
struct LogisticL2Spec {
  std::size_t samples = 0;
  std::size_t dim = 0;
  std::vector<double> features;
  std::vector<double> labels;
  double ridge = 0.0;
};

namespace detail {

inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// h(x) = x^2/2 + a(1 + cos(b x)); returns min over x of h by bracketing the
/// sign changes of h'(x) = x - a b sin(b x) on [0, 2 sqrt(a) + 1] and
/// polishing each root with safeguarded Newton steps.
inline double cosine_well_coordinate_min(double a, double b) {
  const auto h = [&](double x) { return 0.5 * x * x + a * (1.0 + std::cos(b * x)); };
  const auto dh = [&](double x) { return x - a * b * std::sin(b * x); };
  const auto d2h = [&](double x) { return 1.0 - a * b * b * std::cos(b * x); };

  // h(x) >= x^2/2 and h(0) = 2a, so every minimizer satisfies |x| <= 2 sqrt(a).
  const double upper = 2.0 * std::sqrt(a) + 1.0;
  const std::size_t cells = std::max<std::size_t>(4096, static_cast<std::size_t>(64 * b * upper));
  double best = std::min(h(0.0), h(upper));
  double lo = 0.0;
  double f_lo = dh(lo);
  for (std::size_t k = 1; k <= cells; ++k) {
    const double hi = upper * static_cast<double>(k) / static_cast<double>(cells);
    const double f_hi = dh(hi);
    if ((f_lo < 0.0 && f_hi >= 0.0) || (f_lo > 0.0 && f_hi <= 0.0)) {
      double left = lo;
      double right = hi;
      const bool left_negative = f_lo < 0.0;
      for (int it = 0; it < 80 && right - left > 0.0; ++it) {
        const double mid = 0.5 * (left + right);
        if (mid == left || mid == right) break;
        if ((dh(mid) < 0.0) == left_negative) {
          left = mid;
        } else {
          right = mid;
        }
      }
      double x = 0.5 * (left + right);
      for (int it = 0; it < 3; ++it) {
        const double curvature = d2h(x);
        if (curvature == 0.0) break;
        const double next = x - dh(x) / curvature;
        if (!(next >= lo && next <= hi)) break;
        x = next;
      }
      best = std::min(best, h(x));
    }
    lo = hi;
    f_lo = f_hi;
  }
  return best;
}

/// Solves A x = rhs for symmetric positive definite A (row-major, n x n).
inline std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> rhs,
                                          std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) diag -= a[j * n + k] * a[j * n + k];
    if (!(diag > 0.0)) throw DomainError("cholesky_solve: matrix not positive definite");
    const double ljj = std::sqrt(diag);
    a[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / ljj;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = rhs[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * rhs[k];
    rhs[i] = s / a[i * n + i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = rhs[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= a[k * n + ii] * rhs[k];
    rhs[ii] = s / a[ii * n + ii];
  }
  return rhs;
}

}  // namespace detail

/// Smooth, non-negative, coercive test objective with analytic gradient and
/// declared constants (gradient Lipschitz bound L and infimum g*).
class Objective {
 public:
  static Objective quadratic(std::vector<double> eigenvalues, Vector minimizer) {
    if (eigenvalues.empty()) throw UsageError("quadratic: need at least one eigenvalue");
    if (eigenvalues.size() != minimizer.dim()) {
      throw UsageError("quadratic: eigenvalue count does not match minimizer dimension");
    }
    for (double l : eigenvalues) {
      if (!(l > 0.0) || !std::isfinite(l)) throw UsageError("quadratic: eigenvalues must be positive");
    }
    if (!all_finite(minimizer)) throw UsageError("quadratic: non-finite minimizer");
    const double l_max = *std::max_element(eigenvalues.begin(), eigenvalues.end());
    const std::size_t d = minimizer.dim();
    return Objective(ObjectiveKind::Quadratic, d,
                     QuadraticSpec{std::move(eigenvalues), std::move(minimizer)}, l_max, 0.0);
  }

  static Objective cosine_well(std::size_t dim, double amplitude, double frequency) {
    if (dim == 0) throw UsageError("cosine_well: dimension must be >= 1");
    if (!(amplitude > 0.0) || !(frequency > 0.0)) {
      throw UsageError("cosine_well: amplitude and frequency must be positive");
    }
    const double l = 1.0 + amplitude * frequency * frequency;
    const double gstar =
        static_cast<double>(dim) * detail::cosine_well_coordinate_min(amplitude, frequency);
    return Objective(ObjectiveKind::CosineWell, dim, CosineWellSpec{dim, amplitude, frequency}, l,
                     gstar);
  }

  /// The infimum is located by Newton's method (the ridge term makes the
  /// problem strongly convex) and stored as declared g*.
  static Objective logistic_l2(std::size_t samples, std::size_t dim, std::vector<double> features,
                               std::vector<double> labels, double ridge) {
    if (samples == 0 || dim == 0) throw UsageError("logistic_l2: empty data");
    if (features.size() != samples * dim || labels.size() != samples) {
      throw UsageError("logistic_l2: data shape mismatch");
    }
    if (!(ridge > 0.0)) throw UsageError("logistic_l2: ridge weight must be positive");
    for (double y : labels) {
      if (y != 1.0 && y != -1.0) throw UsageError("logistic_l2: labels must be +1 or -1");
    }
    double max_row_sq = 0.0;
    for (std::size_t j = 0; j < samples; ++j) {
      double r = 0.0;
      for (std::size_t i = 0; i < dim; ++i) r += features[j * dim + i] * features[j * dim + i];
      max_row_sq = std::max(max_row_sq, r);
    }
    Objective obj(ObjectiveKind::LogisticL2, dim,
                  LogisticL2Spec{samples, dim, std::move(features), std::move(labels), ridge},
                  0.25 * max_row_sq + ridge, 0.0);
    obj.reference_ = obj.newton_minimize();
    obj.gstar_ = obj.eval(obj.reference_);
    return obj;
  }

  ObjectiveKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  double declared_L() const noexcept { return declared_L_; }
  double declared_gstar() const noexcept { return gstar_; }
  bool coercive() const noexcept { return true; }
  /// |grad g| -> infinity as |x| -> infinity for all three families.
  bool nonflat() const noexcept { return true; }

  /// A point where the gradient is known to vanish or to be small: the
  /// minimizer for quadratic and logistic, the origin for the cosine well.
  const Vector& reference_point() const noexcept { return reference_; }

  template <class T>
  const T* spec_if() const noexcept {
    return std::get_if<T>(&spec_);
  }

  /// Replaces the declared Lipschitz constant. Only for exercising the
  /// certification path with a deliberately wrong value.
  void override_declared_L(double l) {
    if (!(l > 0.0)) throw UsageError("declared_L must be positive");
    declared_L_ = l;
  }

  double eval(const Vector& x) const {
    check_point(x);
    return std::visit([&](const auto& s) { return eval_impl(s, x); }, spec_);
  }

  Vector grad(const Vector& x) const {
    Vector out(dim_);
    grad_into(x, out);
    return out;
  }

  void grad_into(const Vector& x, Vector& out) const {
    check_point(x);
    if (out.dim() != dim_) out = Vector(dim_);
    std::visit([&](const auto& s) { grad_impl(s, x, out); }, spec_);
  }

  bool is_finite_sum() const noexcept { return kind_ == ObjectiveKind::LogisticL2; }

  std::size_t sample_count() const {
    const auto* s = spec_if<LogisticL2Spec>();
    if (s == nullptr) throw UsageError("objective is not a finite sum");
    return s->samples;
  }

  /// out += weight * grad of the j-th summand (ridge included, so the average
  /// of summand gradients is the full gradient).
  void add_sample_grad(std::size_t j, const Vector& x, double weight, Vector& out) const {
    const auto* s = spec_if<LogisticL2Spec>();
    if (s == nullptr) throw UsageError("objective is not a finite sum");
    const double* row = &s->features[j * dim_];
    double margin = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) margin += row[i] * x[i];
    const double y = s->labels[j];
    const double coef = -y * detail::sigmoid(-y * margin);
    for (std::size_t i = 0; i < dim_; ++i) out[i] += weight * (coef * row[i] + s->ridge * x[i]);
  }

 private:
  using Spec = std::variant<QuadraticSpec, CosineWellSpec, LogisticL2Spec>;

  Objective(ObjectiveKind kind, std::size_t dim, Spec spec, double l, double gstar)
      : kind_(kind), dim_(dim), spec_(std::move(spec)), declared_L_(l), gstar_(gstar) {
    if (const auto* q = std::get_if<QuadraticSpec>(&spec_)) {
      reference_ = q->minimizer;
    } else {
      reference_ = Vector(dim);
    }
  }

  void check_point(const Vector& x) const {
    if (x.dim() != dim_) {
      throw UsageError("objective: point has dimension " + std::to_string(x.dim()) +
                       ", expected " + std::to_string(dim_));
    }
  }

  static double eval_impl(const QuadraticSpec& s, const Vector& x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.dim(); ++i) {
      const double d = x[i] - s.minimizer[i];
      acc += s.eigenvalues[i] * d * d;
    }
    return 0.5 * acc;
  }

  static void grad_impl(const QuadraticSpec& s, const Vector& x, Vector& out) {
    for (std::size_t i = 0; i < x.dim(); ++i) out[i] = s.eigenvalues[i] * (x[i] - s.minimizer[i]);
  }

  static double eval_impl(const CosineWellSpec& s, const Vector& x) {
    double acc = 0.0;
    for (double xi : x) acc += 0.5 * xi * xi + s.amplitude * (1.0 + std::cos(s.frequency * xi));
    return acc;
  }

  static void grad_impl(const CosineWellSpec& s, const Vector& x, Vector& out) {
    const double ab = s.amplitude * s.frequency;
    for (std::size_t i = 0; i < x.dim(); ++i) out[i] = x[i] - ab * std::sin(s.frequency * x[i]);
  }

  static double eval_impl(const LogisticL2Spec& s, const Vector& x) {
    double loss = 0.0;
    for (std::size_t j = 0; j < s.samples; ++j) {
      const double* row = &s.features[j * s.dim];
      double margin = 0.0;
      for (std::size_t i = 0; i < s.dim; ++i) margin += row[i] * x[i];
      loss += detail::softplus(-s.labels[j] * margin);
    }
    double sq = 0.0;
    for (double xi : x) sq += xi * xi;
    return loss / static_cast<double>(s.samples) + 0.5 * s.ridge * sq;
  }

  static void grad_impl(const LogisticL2Spec& s, const Vector& x, Vector& out) {
    for (std::size_t i = 0; i < s.dim; ++i) out[i] = 0.0;
    for (std::size_t j = 0; j < s.samples; ++j) {
      const double* row = &s.features[j * s.dim];
      double margin = 0.0;
      for (std::size_t i = 0; i < s.dim; ++i) margin += row[i] * x[i];
      const double y = s.labels[j];
      const double coef = -y * detail::sigmoid(-y * margin);
      for (std::size_t i = 0; i < s.dim; ++i) out[i] += coef * row[i];
    }
    const double inv_n = 1.0 / static_cast<double>(s.samples);
    for (std::size_t i = 0; i < s.dim; ++i) out[i] = out[i] * inv_n + s.ridge * x[i];
  }

  Vector newton_minimize() const {
    const auto& s = std::get<LogisticL2Spec>(spec_);
    const std::size_t d = s.dim;
    Vector x(d);
    for (int it = 0; it < 100; ++it) {
      const Vector gr = grad(x);
      if (norm_sq(gr) < 1e-28) break;
      std::vector<double> hess(d * d, 0.0);
      for (std::size_t j = 0; j < s.samples; ++j) {
        const double* row = &s.features[j * d];
        double margin = 0.0;
        for (std::size_t i = 0; i < d; ++i) margin += row[i] * x[i];
        const double p = detail::sigmoid(s.labels[j] * margin);
        const double w = p * (1.0 - p);
        for (std::size_t a = 0; a < d; ++a) {
          for (std::size_t b = 0; b < d; ++b) hess[a * d + b] += w * row[a] * row[b];
        }
      }
      for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < d; ++b) hess[a * d + b] /= static_cast<double>(s.samples);
        hess[a * d + a] += s.ridge;
      }
      const std::vector<double> step = detail::cholesky_solve(
          std::move(hess), std::vector<double>(gr.begin(), gr.end()), d);
      for (std::size_t i = 0; i < d; ++i) x[i] -= step[i];
    }
    return x;
  }

  ObjectiveKind kind_;
  std::size_t dim_;
  Spec spec_;
  double declared_L_;
  double gstar_;
  Vector reference_;
};

/// Gaussian features, a planted unit-scale separator and labels flipped with
/// probability `label_noise`. Draws come from stream 0 of `seed`.
inline Objective make_synthetic_logistic(std::size_t samples, std::size_t dim, double label_noise,
                                         double ridge, std::uint64_t seed) {
  if (!(label_noise >= 0.0 && label_noise < 0.5)) {
    throw UsageError("synthetic logistic: label_noise must be in [0, 0.5)");
  }
  RngStream rng(seed, 0);
  std::vector<double> planted(dim);
  for (double& w : planted) w = rng.normal() / std::sqrt(static_cast<double>(dim));
  std::vector<double> features(samples * dim);
  std::vector<double> labels(samples);
  for (std::size_t j = 0; j < samples; ++j) {
    double margin = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double f = rng.normal();
      features[j * dim + i] = f;
      margin += f * planted[i];
    }
    double y = margin >= 0.0 ? 1.0 : -1.0;
    if (rng.uniform() < label_noise) y = -y;
    labels[j] = y;
  }
  return Objective::logistic_l2(samples, dim, std::move(features), std::move(labels), ridge);
}

/// Uniform point in the ball of `radius` around `center`.
inline Vector sample_in_ball(const Vector& center, double radius, RngStream& rng) {
  const std::size_t d = center.dim();
  Vector dir = standard_normal(rng, d);
  double n = std::sqrt(dot(dir, dir));
  while (n == 0.0) {
    rng.fill_normal(dir);
    n = std::sqrt(dot(dir, dir));
  }
  const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
  Vector out = center;
  axpy(r / n, dir, out);
  return out;
}

struct SmoothnessCertificate {
  double L_hat = 0.0;
  double declared_L = 0.0;
  bool pass = false;
};

/// Empirical Lipschitz constant of the gradient: the largest difference
/// quotient over `pairs` point pairs drawn uniformly from the ball of
/// `radius` about the origin. Passes when L_hat <= declared_L (1 + 1e-6).
inline SmoothnessCertificate certify_smoothness(const Objective& obj, RngStream& rng,
                                                std::size_t pairs, double radius) {
  if (pairs == 0) throw UsageError("certify_smoothness: pairs must be >= 1");
  if (!(radius > 0.0)) throw UsageError("certify_smoothness: radius must be positive");
  const Vector origin(obj.dim());
  double l_hat = 0.0;
  Vector gx(obj.dim());
  Vector gy(obj.dim());
  for (std::size_t k = 0; k < pairs; ++k) {
    Vector x = sample_in_ball(origin, radius, rng);
    Vector y = sample_in_ball(origin, radius, rng);
    double dist = distance(x, y);
    while (dist == 0.0) {
      y = sample_in_ball(origin, radius, rng);
      dist = distance(x, y);
    }
    obj.grad_into(x, gx);
    obj.grad_into(y, gy);
    l_hat = std::max(l_hat, distance(gx, gy) / dist);
  }
  return {l_hat, obj.declared_L(), l_hat <= obj.declared_L() * (1.0 + 1e-6)};
}

}  // namespace adalab
