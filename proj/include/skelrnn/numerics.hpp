#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "skelrnn/errors.hpp"

namespace skelrnn {

using Vector = std::vector<double>;

// ---------------------------------------------------------------------------
// Matrix: dense row-major double matrix. Plain storage, no view tricks.
// ---------------------------------------------------------------------------

class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {
    if (rows < 0 || cols < 0) {
      throw DimensionError("Matrix: negative shape " + std::to_string(rows) + "x" +
                           std::to_string(cols));
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  const double* row(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// ---------------------------------------------------------------------------
// Dense kernels
// ---------------------------------------------------------------------------

/// y = m * v
inline Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols() != static_cast<int>(v.size())) {
    throw DimensionError("matvec: matrix " + shape_of(m) + " vs vector length " +
                         std::to_string(v.size()));
  }
  Vector y(static_cast<std::size_t>(m.rows()), 0.0);
  for (int r = 0; r < m.rows(); ++r) {
    const double* row = m.row(r);
    double acc = 0.0;
    for (int c = 0; c < m.cols(); ++c) acc += row[c] * v[c];
    y[r] = acc;
  }
  return y;
}

/// y = m^T * v
inline Vector matvec_transposed(const Matrix& m, const Vector& v) {
  if (m.rows() != static_cast<int>(v.size())) {
    throw DimensionError("matvec_transposed: matrix " + shape_of(m) + " vs vector length " +
                         std::to_string(v.size()));
  }
  Vector y(static_cast<std::size_t>(m.cols()), 0.0);
  for (int r = 0; r < m.rows(); ++r) {
    const double* row = m.row(r);
    const double s = v[r];
    for (int c = 0; c < m.cols(); ++c) y[c] += row[c] * s;
  }
  return y;
}

inline Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

/// m += a * b^T
inline void add_outer(Matrix& m, const Vector& a, const Vector& b) {
  if (m.rows() != static_cast<int>(a.size()) || m.cols() != static_cast<int>(b.size())) {
    throw DimensionError("add_outer: matrix " + shape_of(m) + " vs outer " +
                         std::to_string(a.size()) + "x" + std::to_string(b.size()));
  }
  for (int r = 0; r < m.rows(); ++r) {
    double* row = m.row(r);
    const double s = a[r];
    for (int c = 0; c < m.cols(); ++c) row[c] += s * b[c];
  }
}

// ---------------------------------------------------------------------------
// Small vector helpers
// ---------------------------------------------------------------------------

inline void add_inplace(Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw DimensionError("add_inplace: lengths " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

inline Vector concat(const std::vector<Vector>& parts) {
  std::size_t total = 0;
  for (const Vector& p : parts) total += p.size();
  Vector out;
  out.reserve(total);
  for (const Vector& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline Vector slice(const Vector& v, std::size_t begin, std::size_t len) {
  if (begin + len > v.size()) {
    throw DimensionError("slice: [" + std::to_string(begin) + ", " + std::to_string(begin + len) +
                         ") out of vector length " + std::to_string(v.size()));
  }
  return Vector(v.begin() + begin, v.begin() + begin + len);
}

// ---------------------------------------------------------------------------
// Scalar nonlinearities and their vector forms
// ---------------------------------------------------------------------------

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vector sigmoid(Vector v) {
  for (double& x : v) x = sigmoid(x);
  return v;
}

inline Vector tanh(Vector v) {
  for (double& x : v) x = std::tanh(x);
  return v;
}

/// Stable softmax: shifts by the max entry before exponentiating.
inline Vector softmax(Vector v) {
  double mx = -HUGE_VAL;
  for (double x : v) mx = std::max(mx, x);
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x /= sum;
  return v;
}

/// -ln(probs[label]), with probs[label] clamped to >= 1e-30 before the log.
inline double cross_entropy(const Vector& probs, int label) {
  if (label < 0 || label >= static_cast<int>(probs.size())) {
    throw DimensionError("cross_entropy: label " + std::to_string(label) +
                         " out of range for " + std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-30));
}

// ---------------------------------------------------------------------------
// Rng: SplitMix64 stream.
//
// Uniform doubles take the top 53 bits of the mixed state; normals come from
// Box-Muller with a cached spare; integer draws use 128-bit multiply-shift.
// Single-owner by contract: parallel work derives child streams via child().
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// Deterministic child stream for (seed, lane) so parallel lanes never
  /// share one generator.
  static Rng child(std::uint64_t seed, std::uint64_t lane) {
    return Rng(mix(seed ^ mix(lane + 0x9E3779B97F4A7C15ull)));
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Integer in [lo, hi).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo >= hi) {
      throw DimensionError("uniform_int: empty range [" + std::to_string(lo) + ", " +
                           std::to_string(hi) + ")");
    }
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo);
    const auto wide = static_cast<unsigned __int128>(next_u64()) * span;
    return lo + static_cast<std::int64_t>(static_cast<std::uint64_t>(wide >> 64));
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace skelrnn
