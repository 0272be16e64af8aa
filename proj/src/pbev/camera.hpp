#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pbev/types.hpp"

namespace pbev {

// Points closer to the image plane than this (in meters of depth) are
// treated as behind the camera.
inline constexpr double kDepthEps = 1e-6;

// Pinhole camera. `intrinsics` is a 4x4 homogeneous K whose third row passes
// metric depth through unchanged; `extrinsics` is the rigid transform taking
// ego-frame points to camera-frame points.
struct CameraModel {
  Eigen::Matrix4d intrinsics = Eigen::Matrix4d::Identity();
  Eigen::Matrix4d extrinsics = Eigen::Matrix4d::Identity();
  int width = 0;
  int height = 0;

  // Throws ConfigError on malformed K, a non-rigid T, or a non-positive
  // image size.
  void validate() const;

  // K for focal length f and principal point (cx, cy), square pixels.
  static Eigen::Matrix4d pinhole(double f, double cx, double cy);
};

// T^-1 * K^-1, the matrix applied to [u*d, v*d, d, 1] to recover the
// ego-frame point. Throws DomainError if K is singular.
Eigen::Matrix4d unprojection_matrix(const CameraModel& cam);

// Lifts a pixel with depth to an ego-frame point. Throws DomainError when
// d <= kDepthEps.
CartPoint3 unproject_pixel(const PixelDepth& p, const CameraModel& cam);

// Projects an ego-frame point to a pixel with depth. Throws DomainError when
// the point's camera depth is <= kDepthEps.
PixelDepth project_point(const CartPoint3& p, const CameraModel& cam);

// Fixed set of (pixel, depth) sample points shared by every camera: one node
// per (depth bin, feature row, feature column). Pixel coordinates are the
// centers of stride x stride feature cells. Component-major storage:
// component c of node (k, i, j) lives at ((c * n_depth + k) * height + i) * width + j
// with components (u, v, d).
struct FrustumLattice {
  std::vector<double> points;
  std::vector<double> depth_bins;
  int n_depth = 0;
  int height = 0;
  int width = 0;

  std::int64_t nodes_per_camera() const {
    return static_cast<std::int64_t>(n_depth) * height * width;
  }
  double u(int k, int i, int j) const { return points[node_offset(0, k, i, j)]; }
  double v(int k, int i, int j) const { return points[node_offset(1, k, i, j)]; }
  double d(int k, int i, int j) const { return points[node_offset(2, k, i, j)]; }

  std::size_t node_offset(int c, int k, int i, int j) const {
    return ((static_cast<std::size_t>(c) * n_depth + k) * height + i) * width + j;
  }
};

// Depth bins at 1 m spacing covering [1, 60).
std::vector<double> default_depth_bins();

// Builds the lattice for a feature grid of the given shape: node (k, i, j)
// has u = (j + 0.5) * stride, v = (i + 0.5) * stride, d = depth_bins[k].
// Throws ConfigError on a non-positive shape or stride, or depth bins that
// are empty, non-finite, non-positive, or not strictly increasing.
FrustumLattice generate_frustum(int feature_height, int feature_width, double stride,
                                std::span<const double> depth_bins);

// Axis-aligned image-plane box plus the projected 3D center. The hull is
// clipped to the image; the center is not.
struct BBox2D {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
  double center_u = 0.0, center_v = 0.0;
};

// Projects the eight corners of a 3D box and returns the clipped axis-aligned
// hull of the corners in front of the camera. Returns nullopt when no corner
// is in front of the camera, when the clipped hull has no area, or when the
// box center itself is behind the camera.
std::optional<BBox2D> project_box3d_to_bbox2d(const BoxCart& box, const CameraModel& cam);

// Camera rig serialization: a JSON array of objects with keys "K" (16 values,
// row-major), "T" (16 values, row-major), "width", "height". Every camera is
// validated on load; any violation throws ConfigError naming the camera.
std::vector<CameraModel> rig_from_json(const std::string& text);
std::string rig_to_json(std::span<const CameraModel> rig);

}  // namespace pbev
