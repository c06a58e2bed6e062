#pragma once

#include <cmath>

namespace skelrnn {

// ---------------------------------------------------------------------------
// Vec3 / Mat3: just enough 3D algebra for skeleton work.
// ---------------------------------------------------------------------------

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline bool finite(const Vec3& a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

/// Row-major 3x3 matrix.
struct Mat3 {
  double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

  double operator()(int r, int c) const { return m[r * 3 + c]; }
  double& operator()(int r, int c) { return m[r * 3 + c]; }

  Vec3 apply(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  /// M^T v, i.e. the inverse rotation for orthonormal M.
  Vec3 apply_transposed(const Vec3& v) const {
    return {m[0] * v.x + m[3] * v.y + m[6] * v.z, m[1] * v.x + m[4] * v.y + m[7] * v.z,
            m[2] * v.x + m[5] * v.y + m[8] * v.z};
  }

  Mat3 transposed() const {
    Mat3 t;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) t(r, c) = (*this)(c, r);
    return t;
  }

  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }

  static Mat3 from_columns(const Vec3& a, const Vec3& b, const Vec3& c) {
    Mat3 r;
    r(0, 0) = a.x; r(1, 0) = a.y; r(2, 0) = a.z;
    r(0, 1) = b.x; r(1, 1) = b.y; r(2, 1) = b.z;
    r(0, 2) = c.x; r(1, 2) = c.y; r(2, 2) = c.z;
    return r;
  }
};

inline Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += a(i, k) * b(k, j);
      r(i, j) = acc;
    }
  return r;
}

inline Mat3 rotation_about_x(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 r;
  r(0, 0) = 1; r(0, 1) = 0; r(0, 2) = 0;
  r(1, 0) = 0; r(1, 1) = c; r(1, 2) = -s;
  r(2, 0) = 0; r(2, 1) = s; r(2, 2) = c;
  return r;
}

inline Mat3 rotation_about_y(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 r;
  r(0, 0) = c;  r(0, 1) = 0; r(0, 2) = s;
  r(1, 0) = 0;  r(1, 1) = 1; r(1, 2) = 0;
  r(2, 0) = -s; r(2, 1) = 0; r(2, 2) = c;
  return r;
}

inline Mat3 rotation_about_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 r;
  r(0, 0) = c; r(0, 1) = -s; r(0, 2) = 0;
  r(1, 0) = s; r(1, 1) = c;  r(1, 2) = 0;
  r(2, 0) = 0; r(2, 1) = 0;  r(2, 2) = 1;
  return r;
}

/// Rotation by angle about an arbitrary unit axis (Rodrigues).
inline Mat3 rotation_about_axis(const Vec3& unit_axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double t = 1.0 - c;
  const double ux = unit_axis.x, uy = unit_axis.y, uz = unit_axis.z;
  Mat3 r;
  r(0, 0) = c + ux * ux * t;
  r(0, 1) = ux * uy * t - uz * s;
  r(0, 2) = ux * uz * t + uy * s;
  r(1, 0) = uy * ux * t + uz * s;
  r(1, 1) = c + uy * uy * t;
  r(1, 2) = uy * uz * t - ux * s;
  r(2, 0) = uz * ux * t - uy * s;
  r(2, 1) = uz * uy * t + ux * s;
  r(2, 2) = c + uz * uz * t;
  return r;
}

}  // namespace skelrnn
