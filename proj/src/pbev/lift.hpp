#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pbev/types.hpp"

namespace pbev {

// Per-pixel depth distributions are accepted when they sum to one within
// this tolerance (strict mode) and are renormalized otherwise.
inline constexpr double kDepthSumTol = 1e-6;

// Dense (channels, rows, cols) array of doubles. The shape is fixed at
// construction; from_data() additionally guarantees every entry is finite.
class FeatureMap {
 public:
  FeatureMap() = default;

  // Zero-initialized map. Throws ConfigError on a non-positive shape.
  FeatureMap(int channels, int rows, int cols);

  // Takes ownership of data (size must be channels*rows*cols) and rejects
  // non-finite entries with ConfigError.
  static FeatureMap from_data(int channels, int rows, int cols, std::vector<double> data);

  int channels() const { return channels_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  double at(int c, int a, int b) const { return data_[offset(c, a, b)]; }
  double& at(int c, int a, int b) { return data_[offset(c, a, b)]; }
  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  bool same_shape(const FeatureMap& other) const {
    return channels_ == other.channels_ && rows_ == other.rows_ && cols_ == other.cols_;
  }

  std::size_t offset(int c, int a, int b) const {
    return (static_cast<std::size_t>(c) * rows_ + a) * cols_ + b;
  }

 private:
  int channels_ = 0, rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

enum class DepthNormalization {
  kNormalize,  // rescale each pixel's weights to sum to one
  kStrict,     // reject when any pixel is off by more than kDepthSumTol
};

// Categorical depth distribution per feature pixel, shape (n_depth, rows,
// cols). Entries are non-negative and each pixel's column sums to one.
class DepthDistribution {
 public:
  DepthDistribution() = default;

  // Takes ownership of weights (size n_depth*rows*cols). Throws ConfigError
  // on negative or non-finite weights, on an all-zero pixel in kNormalize
  // mode, or on a pixel sum outside kDepthSumTol in kStrict mode.
  DepthDistribution(int n_depth, int rows, int cols, std::vector<double> weights,
                    DepthNormalization mode = DepthNormalization::kNormalize);

  int n_depth() const { return n_depth_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double at(int k, int i, int j) const {
    return weights_[(static_cast<std::size_t>(k) * rows_ + i) * cols_ + j];
  }
  std::span<const double> values() const { return weights_; }

 private:
  int n_depth_ = 0, rows_ = 0, cols_ = 0;
  std::vector<double> weights_;
};

// Per-camera feature values on the frustum lattice, shape (channels,
// n_depth, rows, cols). Flat node index order matches FrustumLattice:
// node = (k * rows + i) * cols + j.
struct FrustumFeatures {
  int channels = 0;
  int n_depth = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  std::int64_t nodes_per_camera() const {
    return static_cast<std::int64_t>(n_depth) * rows * cols;
  }
  double at(int c, int k, int i, int j) const {
    return data[((static_cast<std::size_t>(c) * n_depth + k) * rows + i) * cols + j];
  }
  double value(int c, std::int64_t node) const {
    return data[static_cast<std::size_t>(c) * nodes_per_camera() + node];
  }
};

// Outer product of image features and depth weights:
// out[c, k, i, j] = image[c, i, j] * depth[k, i, j]. Image and depth must
// agree on (rows, cols); ConfigError otherwise. Conserves per-pixel feature
// mass exactly when the depth weights sum to one.
FrustumFeatures lift_features(const FeatureMap& image, const DepthDistribution& depth);

}  // namespace pbev
