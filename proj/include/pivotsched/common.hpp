#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pivotsched {

// Invalid physical or numerical parameters (non-positive Ks, theta_r >= theta_s, ...).
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Mismatched dimensions between coupled objects (soil map vs grid, schedule vs ring count, ...).
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed input files; message carries file and line context.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Integration failure: non-finite state, or step control driven below its floor.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Closed-loop scheduling failure (no feasible decision, inconsistent horizon setup).
struct SchedulingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix. Small convenience type; no linear algebra beyond what
// the solvers here actually need.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw ShapeError("Matrix: negative dimension");
  }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  std::span<double> row(int r) { return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }
};

constexpr double kSecondsPerDay = 86400.0;

// Atmospheric forcing over one day: rainfall rate and reference
// evapotranspiration, both in m/s.
struct Forcing {
  double rain = 0.0;
  double pet = 0.0;
};

// 1 mm/day expressed as m/s.
constexpr double kMmPerDayToMetersPerSecond = 1.0e-3 / kSecondsPerDay;

// FNV-1a over bytes; used to stamp outputs with the configuration they came from.
inline uint64_t fnv1a64(std::span<const char> bytes) {
  uint64_t h = 1469598103934665603ull;
  for (char b : bytes) {
    h ^= static_cast<unsigned char>(b);
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(std::span<const char>(s.data(), s.size())); }

}  // namespace pivotsched
