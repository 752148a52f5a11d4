#pragma once

#include <cmath>
#include <concepts>

#include "adalab/errors.hpp"

namespace adalab {

/// Neumaier's variant of Kahan summation. Unlike plain Kahan it stays
/// accurate when an addend is larger than the running sum, so the same type
/// serves signed reductions in the analysis code.
template <std::floating_point T>
class NeumaierSum {
 public:
  constexpr NeumaierSum() = default;
  constexpr explicit NeumaierSum(T initial) : sum_(initial) {}

  constexpr void add(T x) {
    const T t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      compensation_ += (sum_ - t) + x;
    } else {
      compensation_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  constexpr NeumaierSum& operator+=(T x) {
    add(x);
    return *this;
  }

  constexpr T value() const { return sum_ + compensation_; }
  constexpr T sum() const { return sum_; }
  constexpr T compensation() const { return compensation_; }

 private:
  T sum_ = T{0};
  T compensation_ = T{0};
};

/// Non-negative running total with compensated rounding. Holds the AdaGrad
/// accumulator S_n and the per-coordinate RMSProp totals.
class CompensatedScalar {
 public:
  CompensatedScalar() = default;

  explicit CompensatedScalar(double initial) {
    check_addend(initial);
    acc_.add(initial);
  }

  /// Adds x >= 0. Throws DomainError for negative or non-finite input.
  void add(double x) {
    check_addend(x);
    acc_.add(x);
  }

  double value() const { return acc_.value(); }
  double sum() const { return acc_.sum(); }
  double compensation() const { return acc_.compensation(); }

 private:
  static void check_addend(double x) {
    if (!std::isfinite(x)) throw DomainError("CompensatedScalar: non-finite addend");
    if (x < 0.0) throw DomainError("CompensatedScalar: negative addend");
  }

  NeumaierSum<double> acc_;
};

[[nodiscard]] inline CompensatedScalar accumulate(CompensatedScalar acc, double x) {
  acc.add(x);
  return acc;
}

}  // namespace adalab
