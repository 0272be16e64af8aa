#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

namespace pbev {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Snap tolerance for bin indexing, in bin units. Coordinates reconstructed
// from bin indices land within ~5e-13 bins of the exact lattice point, so a
// plain floor() would sort them into the wrong cell roughly half the time.
// Anything inside this window is treated as sitting exactly on the boundary
// and belongs to the upper cell, matching the half-open cell convention.
inline constexpr double kBinSnapEps = 1e-12;

// Normalizes an angle to (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

// floor() with boundary snapping, see kBinSnapEps.
inline std::int64_t snapped_floor(double t) {
  const double n = std::nearbyint(t);
  if (std::abs(t - n) < kBinSnapEps) return static_cast<std::int64_t>(n);
  return static_cast<std::int64_t>(std::floor(t));
}

// Euclidean modulus, result in [0, n).
inline int wrap_index(int i, int n) {
  const int m = i % n;
  return m < 0 ? m + n : m;
}

inline Eigen::Matrix2d rotation2d(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

// Homogeneous 4x4 yaw about +z.
inline Eigen::Matrix4d yaw4d(double angle) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<2, 2>() = rotation2d(angle);
  return m;
}

// Numerically stable logistic function.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace pbev
