#pragma once
// Reference implementations used to cross-check library results. Everything
// here is written independently of the code paths it checks: matrix inversion
// is plain Gauss-Jordan, rotations come from the Rodrigues formula, and areas
// from quadrature, so agreement is evidence rather than tautology.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>

namespace testutil {

using Mat4 = std::array<double, 16>;
using Vec4 = std::array<double, 4>;

inline Mat4 mat4_identity() {
  Mat4 m{};
  m[0] = m[5] = m[10] = m[15] = 1.0;
  return m;
}

inline Mat4 mat4_mul(const Mat4& a, const Mat4& b) {
  Mat4 out{};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += a[r * 4 + k] * b[k * 4 + c];
      out[r * 4 + c] = s;
    }
  return out;
}

inline Vec4 mat4_apply(const Mat4& m, const Vec4& v) {
  Vec4 out{};
  for (int r = 0; r < 4; ++r) {
    double s = 0.0;
    for (int k = 0; k < 4; ++k) s += m[r * 4 + k] * v[k];
    out[r] = s;
  }
  return out;
}

// Gauss-Jordan elimination with partial pivoting. Returns false on a
// (numerically) singular matrix.
inline bool invert4x4(const Mat4& in, Mat4& out) {
  double a[4][8];
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) a[r][c] = in[r * 4 + c];
    for (int c = 4; c < 8; ++c) a[r][c] = (c - 4 == r) ? 1.0 : 0.0;
  }
  for (int col = 0; col < 4; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-12) return false;
    if (pivot != col)
      for (int c = 0; c < 8; ++c) std::swap(a[pivot][c], a[col][c]);
    const double inv = 1.0 / a[col][col];
    for (int c = 0; c < 8; ++c) a[col][c] *= inv;
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (int c = 0; c < 8; ++c) a[r][c] -= f * a[col][c];
    }
  }
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out[r * 4 + c] = a[r][c + 4];
  return true;
}

// Homogeneous pinhole K: u = f*x/z + cx, v = f*y/z + cy, third row passes
// depth through.
inline Mat4 pinhole4(double f, double cx, double cy) {
  Mat4 m = mat4_identity();
  m[0] = f;
  m[2] = cx;
  m[5] = f;
  m[6] = cy;
  return m;
}

inline Mat4 translate4(double x, double y, double z) {
  Mat4 m = mat4_identity();
  m[3] = x;
  m[7] = y;
  m[11] = z;
  return m;
}

// Rodrigues rotation about the (normalized) axis, embedded in a 4x4.
inline Mat4 rotation_about_axis(double ax, double ay, double az, double angle) {
  const double n = std::sqrt(ax * ax + ay * ay + az * az);
  ax /= n;
  ay /= n;
  az /= n;
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  Mat4 m = mat4_identity();
  m[0] = t * ax * ax + c;
  m[1] = t * ax * ay - s * az;
  m[2] = t * ax * az + s * ay;
  m[4] = t * ax * ay + s * az;
  m[5] = t * ay * ay + c;
  m[6] = t * ay * az - s * ax;
  m[8] = t * ax * az - s * ay;
  m[9] = t * ay * az + s * ax;
  m[10] = t * az * az + c;
  return m;
}

// Disk-rectangle intersection area by midpoint-rule quadrature over x strips.
inline double disk_rect_area_quadrature(double radius, double x0, double x1, double y0, double y1,
                                        int strips = 200000) {
  const double lo = std::max(x0, -radius), hi = std::min(x1, radius);
  if (!(hi > lo)) return 0.0;
  const double w = (hi - lo) / strips;
  double area = 0.0;
  for (int k = 0; k < strips; ++k) {
    const double x = lo + (k + 0.5) * w;
    const double half = std::sqrt(std::max(0.0, radius * radius - x * x));
    const double ylo = std::max(y0, -half), yhi = std::min(y1, half);
    if (yhi > ylo) area += (yhi - ylo) * w;
  }
  return area;
}

}  // namespace testutil
