#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ldpinf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

inline constexpr const char* kVersion = "0.3.0";

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: configuration files, flags, schema mismatches.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent data (CSV rows, unknown categories, empty groups).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Solver failures: non-PD Hessians, divergent stochastic estimates, singular matrices.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// splitmix64 finalizer over (root, stream); used to derive independent
/// per-record and per-repeat seeds from one root seed.
inline std::uint64_t mix_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Writes a warning line to stderr unless warnings are silenced.
void warn(const std::string& message);
void set_warnings_enabled(bool enabled);

}  // namespace ldpinf
