#pragma once

// Shared vocabulary: state containers, seed records and the error hierarchy.

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsm {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogTwoPi = 1.83787706640934548356;

// ---------------------------------------------------------------------------
// Errors. Numerical failures map to CLI exit code 3, configuration problems
// to exit code 2.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class SimulationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DensityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class CapabilityError : public Error {
 public:
  using Error::Error;
};

class DegenerateDenominatorError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class RewardError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ParameterSelectionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ContaminationError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class IntegrationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DomainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ExpansionRegimeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class EnvelopeError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// ---------------------------------------------------------------------------

/// Identifies a family of per-path random streams. Two records are equal iff
/// they generate the same trajectories.
struct SeedRecord {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  friend bool operator==(const SeedRecord&, const SeedRecord&) = default;
};

/// Read-only view of `count` points in R^dim stored contiguously, row-major.
class StateView {
 public:
  StateView() = default;
  StateView(std::span<const double> data, std::size_t count, std::size_t dim)
      : data_(data), count_(count), dim_(dim) {}

  std::size_t count() const { return count_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> point(std::size_t n) const { return data_.subspan(n * dim_, dim_); }
  double operator()(std::size_t n, std::size_t i) const { return data_[n * dim_ + i]; }

 private:
  std::span<const double> data_;
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
};

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return std::sqrt(s);
}

inline double norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

inline bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

/// Scratch buffer for the kernel sweeps. Aligned so that Eigen never peels
/// leading elements into its scalar path: the vectorised and scalar exp can
/// differ in the last bit, and a row must come out the same whichever buffer
/// computed it.
using Scratch = std::vector<double, Eigen::aligned_allocator<double>>;

namespace detail {

// Sums in a fixed order (four interleaved partial sums) so the result does
// not depend on how the buffer happens to be aligned. Eigen's .sum() peels
// to an aligned boundary first, which makes the same row sum differently
// from two different buffers.
inline double ordered_sum(const double* x, std::size_t n) {
  double a[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a[0] += x[i];
    a[1] += x[i + 1];
    a[2] += x[i + 2];
    a[3] += x[i + 3];
  }
  for (; i < n; ++i) a[i & 3] += x[i];
  return (a[0] + a[1]) + (a[2] + a[3]);
}

inline double ordered_dot(const double* x, const double* y, std::size_t n) {
  double a[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a[0] += x[i] * y[i];
    a[1] += x[i + 1] * y[i + 1];
    a[2] += x[i + 2] * y[i + 2];
    a[3] += x[i + 3] * y[i + 3];
  }
  for (; i < n; ++i) a[i & 3] += x[i] * y[i];
  return (a[0] + a[1]) + (a[2] + a[3]);
}

}  // namespace detail

}  // namespace wsm
