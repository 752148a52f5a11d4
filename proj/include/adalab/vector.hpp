#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "adalab/errors.hpp"

namespace adalab {

/// Dense real vector of fixed dimension. Holds parameters, gradients and the
/// RMSProp second-moment estimate.
class Vector {
 public:
  Vector() = default;

  explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {
    if (dim == 0) throw UsageError("Vector: dimension must be >= 1");
  }

  Vector(std::initializer_list<double> values) : data_(values) {
    if (data_.empty()) throw UsageError("Vector: dimension must be >= 1");
  }

  explicit Vector(std::vector<double> values) : data_(std::move(values)) {
    if (data_.empty()) throw UsageError("Vector: dimension must be >= 1");
  }

  std::size_t dim() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }

  std::span<const double> components() const noexcept { return data_; }
  std::span<double> components() noexcept { return data_; }

  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }
  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> data_;
};

inline void require_same_dim(const Vector& a, const Vector& b, const char* what) {
  if (a.dim() != b.dim()) {
    throw UsageError(std::string(what) + ": dimension mismatch (" + std::to_string(a.dim()) +
                     " vs " + std::to_string(b.dim()) + ")");
  }
}

inline bool all_finite(const Vector& v) noexcept {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline double dot(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

/// Sum of squares. Exact whenever every partial sum is representable, which
/// covers integer-valued inputs below 2^26 in magnitude.
inline double norm_sq(const Vector& v) {
  if (!all_finite(v)) throw DomainError("norm_sq: non-finite component");
  return dot(v, v);
}

inline double norm(const Vector& v) { return std::sqrt(norm_sq(v)); }

inline Vector operator+(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "operator+");
  Vector out = a;
  for (std::size_t i = 0; i < out.dim(); ++i) out[i] += b[i];
  return out;
}

inline Vector operator-(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "operator-");
  Vector out = a;
  for (std::size_t i = 0; i < out.dim(); ++i) out[i] -= b[i];
  return out;
}

inline Vector operator*(double s, const Vector& v) {
  Vector out = v;
  for (double& x : out) x *= s;
  return out;
}

/// y += a * x
inline void axpy(double a, const Vector& x, Vector& y) {
  require_same_dim(x, y, "axpy");
  for (std::size_t i = 0; i < y.dim(); ++i) y[i] += a * x[i];
}

inline double distance(const Vector& a, const Vector& b) {
  require_same_dim(a, b, "distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Shortest decimal that round-trips to the same binary64 value.
inline std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string to_string(const Vector& v) {
  std::string out = "(";
  for (std::size_t i = 0; i < v.dim(); ++i) {
    if (i != 0) out += ", ";
    out += format_double(v[i]);
  }
  return out + ")";
}

}  // namespace adalab
