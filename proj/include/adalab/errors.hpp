#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace adalab {

/// Bad numeric input: negative addend, non-finite component, non-positive
/// metric in a log fit.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Caller broke a contract: dimension mismatch, incompatible oracle, too few
/// horizons.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateDesignError : public UsageError {
 public:
  using UsageError::UsageError;
};

class SearchFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by a stepper when the stochastic gradient is not finite. Carries the
/// step index being produced and a printable snapshot of the state.
class TrajectoryAborted : public std::runtime_error {
 public:
  TrajectoryAborted(std::uint64_t step, std::string snapshot)
      : std::runtime_error("trajectory aborted at step " + std::to_string(step) +
                           ": non-finite stochastic gradient; state " + snapshot),
        step_(step),
        snapshot_(std::move(snapshot)) {}

  std::uint64_t step() const noexcept { return step_; }
  const std::string& snapshot() const noexcept { return snapshot_; }

 private:
  std::uint64_t step_;
  std::string snapshot_;
};

}  // namespace adalab
